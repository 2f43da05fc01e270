fn main() {
    std::process::exit(roadlab::cli::run(std::env::args_os()));
}
