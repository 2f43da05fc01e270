//! Finite-difference verification of [`backward`].

use alloc::string::String;
use alloc::vec::Vec;

use super::{backward, forward_train, ModelParams, NetError, NetworkConfig};
use crate::numerics::{Rng, Tensor};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Scalar parameters compared.
    pub checked: usize,
    /// Probes skipped because a perturbation crossed a LeakyReLU kink.
    pub skipped: usize,
    /// Largest relative error (absolute where both sides are below 1e-6).
    pub max_error: f64,
    /// Parameter holding `max_error`, as `name[index]`.
    pub worst: String,
}

/// Checks every trainable scalar of `params` on the loss `Σ r·f(x)`.
///
/// Each derivative is a Richardson-extrapolated central difference with
/// steps `h` and `h/2`. Probes whose perturbation flips the sign of any
/// activation input are skipped.
pub fn gradient_check(
    params: &ModelParams<f64>,
    x: &Tensor<f64>,
    upstream: &Tensor<f64>,
    h: f64,
) -> Result<GradCheck, NetError> {
    let eval = |p: &ModelParams<f64>| -> Result<(f64, Vec<bool>), NetError> {
        let mut p = p.clone();
        let (y, cache) = forward_train(&mut p, x)?;
        let loss = y.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum();
        Ok((loss, cache.activation_signs()))
    };
    let mut base = params.clone();
    let (_, cache) = forward_train(&mut base, x)?;
    let grads = backward(params, &cache, upstream)?;

    let names = params.trainable_names();
    let mut probe = params.clone();
    let mut report = GradCheck {
        checked: 0,
        skipped: 0,
        max_error: 0.0,
        worst: String::new(),
    };
    for (t, (name, analytic)) in names.iter().zip(&grads.tensors).enumerate() {
        for i in 0..analytic.len() {
            let orig = probe.trainable()[t].data()[i];
            let mut quotient = |step: f64| -> Result<Option<f64>, NetError> {
                probe.trainable_mut()[t].data_mut()[i] = orig + step;
                let (up, up_signs) = eval(&probe)?;
                probe.trainable_mut()[t].data_mut()[i] = orig - step;
                let (down, down_signs) = eval(&probe)?;
                probe.trainable_mut()[t].data_mut()[i] = orig;
                Ok((up_signs == down_signs).then(|| (up - down) / (2.0 * step)))
            };
            let (Some(coarse), Some(fine)) = (quotient(h)?, quotient(h / 2.0)?) else {
                report.skipped += 1;
                continue;
            };
            report.checked += 1;
            let numeric = (4.0 * fine - coarse) / 3.0;
            let a = analytic.data()[i];
            let scale = a.abs().max(numeric.abs());
            // Biases feeding a batch norm have an exactly zero gradient.
            let err = if scale > 1e-6 { (a - numeric).abs() / scale } else { (a - numeric).abs() };
            if err >= report.max_error {
                report.max_error = err;
                report.worst = alloc::format!("{name}[{i}]");
            }
        }
    }
    Ok(report)
}

/// [`gradient_check`] on freshly initialized parameters, uniform inputs and
/// Gaussian upstream weights drawn from `seed`, with `h = 1e-3`.
///
/// Batches below two are rejected: batch normalization of a single sample
/// has identically zero output and nothing to check.
pub fn gradient_check_seeded(config: &NetworkConfig, batch: usize, seed: u64) -> Result<GradCheck, NetError> {
    if batch < 2 {
        return Err(NetError::Config("gradient check needs a batch of at least two"));
    }
    let mut rng = Rng::new(seed);
    let params = ModelParams::<f64>::init(config, &mut rng)?;
    let dims = config.input_dims(batch);
    let len = dims.iter().product();
    let x = Tensor::from_vec(&dims, (0..len).map(|_| rng.uniform()).collect())
        .map_err(|_| NetError::Config("input dims"))?;
    let r = (0..batch).map(|_| rng.normal()).collect();
    let upstream = Tensor::from_vec(&[batch, 1], r).map_err(|_| NetError::Config("upstream dims"))?;
    gradient_check(&params, &x, &upstream, 1e-3)
}
