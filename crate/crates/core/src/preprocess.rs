//! Sensor frame → network input.
//!
//! A frame is cropped to a 66-row × 258-column window, reduced to the
//! configured channels and scaled from `u8` to `[0, 1]` by dividing by 255.
//! Camera frames are first resampled (bilinear) to the LiDAR image size.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::datalog::{Modality, SensorFrame, CHANNEL_AMBIENT, CHANNEL_DEPTH, CHANNEL_INTENSITY};
use crate::numerics::{Rng, Tensor};

pub const DEPTH_MAX_M: f64 = 50.0;
pub const OUT_WIDTH: usize = 258;
pub const OUT_HEIGHT: usize = 66;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocError {
    #[error("depth {0} m is outside the encodable domain")]
    Domain(f64),
    #[error("crop window rows {row}..{row_end}, cols {col}..{col_end} exceeds {height}×{width} frame")]
    Geometry {
        row: i64,
        col: i64,
        row_end: i64,
        col_end: i64,
        height: usize,
        width: usize,
    },
    #[error("channel mode {mode} cannot be applied to a {channels}-channel {modality} frame")]
    ChannelMismatch {
        mode: ChannelMode,
        modality: Modality,
        channels: usize,
    },
    #[error("{0:?} is not a permutation of (0, 1, 2)")]
    BadPermutation([usize; 3]),
    #[error("unknown channel mode `{0}`")]
    UnknownMode(alloc::string::String),
}

/// Depth in meters → `u8`: 0 m maps to 255 and 50 m to 0, linearly; anything
/// beyond 50 m is 0. Rounds half away from zero.
pub fn encode_depth(d: f64) -> Result<u8, PreprocError> {
    encode_depth_with(d, DEPTH_MAX_M)
}

pub fn encode_depth_with(d: f64, depth_max: f64) -> Result<u8, PreprocError> {
    if d.is_nan() || d < 0.0 {
        return Err(PreprocError::Domain(d));
    }
    if d > depth_max {
        return Ok(0);
    }
    Ok(libm::round(255.0 * (1.0 - d / depth_max)) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// All three LiDAR channels.
    Three,
    Intensity,
    Depth,
    Ambient,
    /// Three camera channels.
    Rgb,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Three | ChannelMode::Rgb => 3,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Three => "three",
            ChannelMode::Intensity => "intensity",
            ChannelMode::Depth => "depth",
            ChannelMode::Ambient => "ambient",
            ChannelMode::Rgb => "rgb",
        }
    }

    fn lidar_channel(self) -> Option<usize> {
        match self {
            ChannelMode::Intensity => Some(CHANNEL_INTENSITY),
            ChannelMode::Depth => Some(CHANNEL_DEPTH),
            ChannelMode::Ambient => Some(CHANNEL_AMBIENT),
            _ => None,
        }
    }

    pub fn modality(self) -> Modality {
        match self {
            ChannelMode::Rgb => Modality::Camera,
            _ => Modality::Lidar,
        }
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelMode {
    type Err = PreprocError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "three" => ChannelMode::Three,
            "intensity" => ChannelMode::Intensity,
            "depth" => ChannelMode::Depth,
            "ambient" => ChannelMode::Ambient,
            "rgb" => ChannelMode::Rgb,
            _ => return Err(PreprocError::UnknownMode(s.into())),
        })
    }
}

/// Input corruptions used to reproduce deployment mistakes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    None,
    /// Output channel `i` takes source channel `perm[i]`; `[2, 1, 0]` turns
    /// RGB into BGR.
    ChannelPermute([usize; 3]),
    /// Crop window moved by `dx` columns and `dy` rows.
    CropShift { dx: i32, dy: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocConfig {
    pub depth_max: f64,
    pub out_width: usize,
    pub out_height: usize,
    /// Top-left corner of the crop as (row, col).
    pub crop_origin: (usize, usize),
    /// Frame size (height, width) the crop is defined on. Camera frames of a
    /// different size are resampled to it first.
    pub source_size: (usize, usize),
    pub channel_mode: ChannelMode,
    pub degradation: Degradation,
}

impl PreprocConfig {
    /// Centered crop on a frame of the given size.
    pub fn centered(source_size: (usize, usize), channel_mode: ChannelMode) -> Result<Self, PreprocError> {
        let (h, w) = source_size;
        let cfg = Self {
            depth_max: DEPTH_MAX_M,
            out_width: OUT_WIDTH,
            out_height: OUT_HEIGHT,
            crop_origin: (h.saturating_sub(OUT_HEIGHT) / 2, w.saturating_sub(OUT_WIDTH) / 2),
            source_size,
            channel_mode,
            degradation: Degradation::None,
        };
        cfg.window(0, 0)?;
        Ok(cfg)
    }

    pub fn channels(&self) -> usize {
        self.channel_mode.channels()
    }

    /// Crop window after an extra shift, checked against `source_size`.
    fn window(&self, dx: i64, dy: i64) -> Result<(usize, usize), PreprocError> {
        let row = self.crop_origin.0 as i64 + dy;
        let col = self.crop_origin.1 as i64 + dx;
        let (height, width) = self.source_size;
        let row_end = row + self.out_height as i64;
        let col_end = col + self.out_width as i64;
        if row < 0 || col < 0 || row_end > height as i64 || col_end > width as i64 {
            return Err(PreprocError::Geometry {
                row,
                col,
                row_end,
                col_end,
                height,
                width,
            });
        }
        Ok((row as usize, col as usize))
    }

    fn effective_window(&self) -> Result<(usize, usize), PreprocError> {
        match self.degradation {
            Degradation::CropShift { dx, dy } => self.window(dx as i64, dy as i64),
            _ => self.window(0, 0),
        }
    }
}

/// Config with the crop origin moved `dx` columns right and `dy` rows down.
pub fn shift_crop(cfg: &PreprocConfig, dx: i32, dy: i32) -> Result<PreprocConfig, PreprocError> {
    let (row, col) = cfg.window(dx as i64, dy as i64)?;
    Ok(PreprocConfig {
        crop_origin: (row, col),
        ..*cfg
    })
}

fn check_permutation(perm: [usize; 3]) -> Result<(), PreprocError> {
    let mut seen = [false; 3];
    for &p in &perm {
        if p > 2 || seen[p] {
            return Err(PreprocError::BadPermutation(perm));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Bilinear resampling of an H×W×C image with pixel centers at half-integer
/// coordinates.
pub fn resize_bilinear(pixels: &Tensor<u8>, out_h: usize, out_w: usize) -> Tensor<u8> {
    let (h, w, c) = (pixels.dims()[0], pixels.dims()[1], pixels.dims()[2]);
    let src = pixels.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let coord = |o: usize, scale: f64, n: usize| {
        let f = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    };
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, sy, h);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, sx, w);
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch] as f64;
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(libm::round(v).clamp(0.0, 255.0) as u8);
            }
        }
    }
    Tensor::from_vec(&[out_h, out_w, c], out).expect("resize output shape")
}

/// Crop and channel selection, still in `u8`: output is C×66×258 with
/// channels first.
pub fn prepare_input_u8(frame: &SensorFrame, cfg: &PreprocConfig) -> Result<Tensor<u8>, PreprocError> {
    let mismatch = || PreprocError::ChannelMismatch {
        mode: cfg.channel_mode,
        modality: frame.modality,
        channels: frame.channels(),
    };
    if cfg.channel_mode.modality() != frame.modality {
        return Err(mismatch());
    }

    let resized;
    let pixels = if frame.modality == Modality::Camera
        && (frame.height(), frame.width()) != cfg.source_size
    {
        resized = resize_bilinear(&frame.pixels, cfg.source_size.0, cfg.source_size.1);
        &resized
    } else {
        &frame.pixels
    };
    let (h, w, c) = (pixels.dims()[0], pixels.dims()[1], pixels.dims()[2]);
    if (h, w) != cfg.source_size {
        return Err(PreprocError::Geometry {
            row: 0,
            col: 0,
            row_end: cfg.source_size.0 as i64,
            col_end: cfg.source_size.1 as i64,
            height: h,
            width: w,
        });
    }

    // Source channel feeding each output channel.
    let mut order = [0usize, 1, 2];
    if let Degradation::ChannelPermute(perm) = cfg.degradation {
        check_permutation(perm)?;
        if c != 3 {
            return Err(mismatch());
        }
        order = perm;
    }
    let selected: Vec<usize> = match cfg.channel_mode.lidar_channel() {
        Some(ch) if c == 3 => alloc::vec![order[ch]],
        Some(_) if c == 1 => alloc::vec![0],
        None if c == 3 => order.to_vec(),
        _ => return Err(mismatch()),
    };

    let (row0, col0) = cfg.effective_window()?;
    let (oh, ow) = (cfg.out_height, cfg.out_width);
    let src = pixels.data();
    let mut out = Vec::with_capacity(selected.len() * oh * ow);
    for &ch in &selected {
        for r in 0..oh {
            let base = ((row0 + r) * w + col0) * c + ch;
            out.extend((0..ow).map(|x| src[base + x * c]));
        }
    }
    Ok(Tensor::from_vec(&[selected.len(), oh, ow], out).expect("crop shape"))
}

/// `u8` → `[0, 1]`.
pub fn to_unit(t: &Tensor<u8>) -> Tensor<f32> {
    t.map(|v| v as f32 / 255.0)
}

/// Network input C×66×258 in `[0, 1]`.
pub fn prepare_input(frame: &SensorFrame, cfg: &PreprocConfig) -> Result<Tensor<f32>, PreprocError> {
    prepare_input_u8(frame, cfg).map(|t| to_unit(&t))
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` and clamps back
/// to `[0, 1]`.
pub fn add_input_noise(t: &mut Tensor<f32>, sigma: f64, rng: &mut Rng) {
    if sigma <= 0.0 {
        return;
    }
    for v in t.data_mut() {
        *v = (*v as f64 + sigma * rng.normal()).clamp(0.0, 1.0) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lidar_frame(h: usize, w: usize) -> SensorFrame {
        let data = (0..h * w * 3).map(|i| (i % 251) as u8).collect();
        SensorFrame::new(0.0, Modality::Lidar, Tensor::from_vec(&[h, w, 3], data).unwrap()).unwrap()
    }

    #[test]
    fn depth_encoding_values() {
        assert_eq!(encode_depth(0.0), Ok(255));
        assert_eq!(encode_depth(10.0), Ok(204));
        assert_eq!(encode_depth(20.0), Ok(153));
        assert_eq!(encode_depth(50.0), Ok(0));
        assert_eq!(encode_depth(60.0), Ok(0));
        // 255·(1 − 0.1/50) = 254.49
        assert_eq!(encode_depth(0.1), Ok(254));
        // 255·(1 − 25/50) = 127.5 exactly; ties round away from zero
        assert_eq!(encode_depth(25.0), Ok(128));
        assert!(matches!(encode_depth(-0.01), Err(PreprocError::Domain(_))));
        assert!(encode_depth(f64::NAN).is_err());
    }

    #[test]
    fn identity_crop_scales_to_unit_range() {
        let frame = lidar_frame(66, 258);
        let cfg = PreprocConfig::centered((66, 258), ChannelMode::Three).unwrap();
        assert_eq!(cfg.crop_origin, (0, 0));
        let t = prepare_input(&frame, &cfg).unwrap();
        assert_eq!(t.dims(), &[3, 66, 258]);
        for ch in 0..3 {
            for r in [0, 31, 65] {
                for x in [0, 100, 257] {
                    let want = frame.pixel(r, x, ch) as f32 / 255.0;
                    assert_eq!(t.get(&[ch, r, x]), want);
                }
            }
        }
    }

    #[test]
    fn single_channel_modes_select_storage_channel() {
        let frame = lidar_frame(70, 266);
        for (mode, ch) in [
            (ChannelMode::Intensity, 0),
            (ChannelMode::Depth, 1),
            (ChannelMode::Ambient, 2),
        ] {
            let cfg = PreprocConfig::centered((70, 266), mode).unwrap();
            let t = prepare_input_u8(&frame, &cfg).unwrap();
            assert_eq!(t.dims(), &[1, 66, 258]);
            assert_eq!(t.get(&[0, 5, 7]), frame.pixel(2 + 5, 4 + 7, ch));
        }
    }

    #[test]
    fn bgr_permutation_swaps_first_and_last() {
        let data = (0..66 * 258 * 3).map(|i| (i % 3) as u8 * 100).collect();
        let frame = SensorFrame::new(0.0, Modality::Camera, Tensor::from_vec(&[66, 258, 3], data).unwrap()).unwrap();
        let mut cfg = PreprocConfig::centered((66, 258), ChannelMode::Rgb).unwrap();
        cfg.degradation = Degradation::ChannelPermute([2, 1, 0]);
        let t = prepare_input_u8(&frame, &cfg).unwrap();
        assert_eq!(t.get(&[0, 0, 0]), 200);
        assert_eq!(t.get(&[1, 0, 0]), 100);
        assert_eq!(t.get(&[2, 0, 0]), 0);
    }

    #[test]
    fn permutation_must_be_valid() {
        let frame = lidar_frame(66, 258);
        let mut cfg = PreprocConfig::centered((66, 258), ChannelMode::Three).unwrap();
        cfg.degradation = Degradation::ChannelPermute([0, 0, 1]);
        assert!(matches!(
            prepare_input(&frame, &cfg),
            Err(PreprocError::BadPermutation(_))
        ));
    }

    #[test]
    fn modality_mismatch_is_rejected() {
        let frame = lidar_frame(66, 258);
        let cfg = PreprocConfig::centered((66, 258), ChannelMode::Rgb).unwrap();
        assert!(matches!(
            prepare_input(&frame, &cfg),
            Err(PreprocError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn shift_crop_moves_origin_within_margin() {
        let cfg = PreprocConfig::centered((70, 266), ChannelMode::Three).unwrap();
        assert_eq!(cfg.crop_origin, (2, 4));
        assert_eq!(shift_crop(&cfg, 0, 0).unwrap(), cfg);
        assert_eq!(shift_crop(&cfg, 1, 0).unwrap().crop_origin, (2, 5));
        assert_eq!(shift_crop(&cfg, -4, 2).unwrap().crop_origin, (4, 0));
        assert!(matches!(shift_crop(&cfg, 5, 0), Err(PreprocError::Geometry { .. })));
        assert!(matches!(shift_crop(&cfg, 0, -3), Err(PreprocError::Geometry { .. })));
    }

    #[test]
    fn crop_shift_degradation_reads_shifted_window() {
        let frame = lidar_frame(70, 266);
        let mut cfg = PreprocConfig::centered((70, 266), ChannelMode::Intensity).unwrap();
        let base = prepare_input_u8(&frame, &cfg).unwrap();
        cfg.degradation = Degradation::CropShift { dx: 1, dy: 0 };
        let shifted = prepare_input_u8(&frame, &cfg).unwrap();
        assert_eq!(shifted.get(&[0, 3, 10]), base.get(&[0, 3, 11]));
        cfg.degradation = Degradation::CropShift { dx: 9, dy: 0 };
        assert!(prepare_input_u8(&frame, &cfg).is_err());
    }

    #[test]
    fn camera_frames_are_downscaled_first() {
        let data = vec![80u8; 132 * 516 * 3];
        let frame = SensorFrame::new(0.0, Modality::Camera, Tensor::from_vec(&[132, 516, 3], data).unwrap()).unwrap();
        let cfg = PreprocConfig::centered((66, 258), ChannelMode::Rgb).unwrap();
        let t = prepare_input_u8(&frame, &cfg).unwrap();
        assert_eq!(t.dims(), &[3, 66, 258]);
        assert!(t.data().iter().all(|&v| v == 80));
    }

    #[test]
    fn bilinear_halving_averages_pairs() {
        let data = vec![0u8, 100, 200, 50];
        let img = Tensor::from_vec(&[1, 4, 1], data).unwrap();
        // centers of the two output pixels land between source pixels 0|1 and 2|3
        assert_eq!(resize_bilinear(&img, 1, 2).data(), &[50, 125]);
    }

    #[test]
    fn noise_keeps_unit_range() {
        let mut t = Tensor::from_vec(&[4], vec![0.0f32, 0.5, 1.0, 0.2]).unwrap();
        add_input_noise(&mut t, 0.5, &mut Rng::new(1));
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mut u = Tensor::from_vec(&[2], vec![0.3f32, 0.7]).unwrap();
        add_input_noise(&mut u, 0.0, &mut Rng::new(1));
        assert_eq!(u.data(), &[0.3, 0.7]);
    }
}
