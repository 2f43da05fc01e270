use alloc::vec;
use alloc::vec::Vec;

use super::NetError;
use crate::preprocess::{OUT_HEIGHT, OUT_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize) -> Self {
        Self {
            filters,
            kernel,
            stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub convs: Vec<ConvSpec>,
    /// Dense layer widths; the last must be 1.
    pub dense: Vec<usize>,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

/// Resolved shape of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn out_area(&self) -> usize {
        self.out_height * self.out_width
    }
}

impl NetworkConfig {
    /// The layer stack used for every driving model, on 66×258 inputs.
    pub fn pilotnet(input_channels: usize) -> Self {
        Self {
            input_channels,
            input_height: OUT_HEIGHT,
            input_width: OUT_WIDTH,
            convs: vec![
                ConvSpec::new(24, 5, 2),
                ConvSpec::new(24, 5, 2),
                ConvSpec::new(24, 5, 2),
                ConvSpec::new(48, 5, 2),
                ConvSpec::new(64, 3, 1),
            ],
            dense: vec![100, 50, 10, 1],
            leaky_slope: 0.01,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// Same layer kinds and kernel/stride pattern on a 12×20 input with
    /// narrow layers; small enough for exhaustive finite-difference checks.
    pub fn shrunken(input_channels: usize) -> Self {
        Self {
            input_height: 12,
            input_width: 20,
            convs: vec![
                ConvSpec::new(4, 5, 2),
                ConvSpec::new(4, 5, 2),
                ConvSpec::new(4, 5, 2),
                ConvSpec::new(6, 5, 2),
                ConvSpec::new(8, 3, 1),
            ],
            dense: vec![12, 8, 4, 1],
            ..Self::pilotnet(input_channels)
        }
    }

    /// Reduced-width stack for 18×66 inputs, used by quick studies.
    pub fn compact(input_channels: usize) -> Self {
        Self {
            input_height: 18,
            input_width: 66,
            convs: vec![
                ConvSpec::new(8, 5, 2),
                ConvSpec::new(12, 5, 2),
                ConvSpec::new(16, 5, 2),
                ConvSpec::new(24, 5, 2),
                ConvSpec::new(32, 3, 1),
            ],
            dense: vec![50, 20, 8, 1],
            ..Self::pilotnet(input_channels)
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return Err(NetError::Config("input extents must be positive"));
        }
        if self.convs.is_empty() {
            return Err(NetError::Config("at least one convolution is required"));
        }
        if self.convs.iter().any(|c| c.filters == 0 || c.kernel == 0 || c.stride == 0) {
            return Err(NetError::Config("convolution filters, kernel and stride must be positive"));
        }
        if self.dense.last() != Some(&1) || self.dense.contains(&0) {
            return Err(NetError::Config("dense widths must be positive and end in 1"));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(NetError::Config("leaky slope must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return Err(NetError::Config("bad batch-norm momentum or epsilon"));
        }
        Ok(())
    }

    /// Per-layer shapes: `out = ⌊(in − k)/s⌋ + 1` with `k` clamped to `in`.
    pub fn geometry(&self) -> Result<Vec<ConvGeometry>, NetError> {
        self.validate()?;
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        let mut out = Vec::with_capacity(self.convs.len());
        for (layer, spec) in self.convs.iter().enumerate() {
            let kh = spec.kernel.min(h);
            let kw = spec.kernel.min(w);
            if kh == 0 || kw == 0 {
                return Err(NetError::Geometry {
                    layer,
                    height: h,
                    width: w,
                });
            }
            let g = ConvGeometry {
                in_channels: c,
                in_height: h,
                in_width: w,
                filters: spec.filters,
                kernel_h: kh,
                kernel_w: kw,
                stride: spec.stride,
                out_height: (h - kh) / spec.stride + 1,
                out_width: (w - kw) / spec.stride + 1,
            };
            (c, h, w) = (g.filters, g.out_height, g.out_width);
            out.push(g);
        }
        Ok(out)
    }

    pub fn flatten_width(&self) -> Result<usize, NetError> {
        let g = self.geometry()?;
        let last = g.last().expect("validated non-empty");
        Ok(last.filters * last.out_area())
    }

    pub fn dense_has_bn(&self, j: usize) -> bool {
        j + 2 < self.dense.len()
    }

    pub fn dense_has_activation(&self, j: usize) -> bool {
        j + 1 < self.dense.len()
    }

    pub fn input_dims(&self, batch: usize) -> [usize; 4] {
        [batch, self.input_channels, self.input_height, self.input_width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spatial_chain_and_flatten() {
        let cfg = NetworkConfig::pilotnet(3);
        let chain: Vec<(usize, usize)> = cfg
            .geometry()
            .unwrap()
            .iter()
            .map(|g| (g.out_height, g.out_width))
            .collect();
        assert_eq!(chain, [(31, 127), (14, 62), (5, 29), (1, 13), (1, 11)]);
        let last = cfg.geometry().unwrap()[4];
        assert_eq!((last.kernel_h, last.kernel_w), (1, 3));
        assert_eq!(cfg.flatten_width().unwrap(), 704);
    }

    #[test]
    fn unclamped_layers_keep_printed_kernels() {
        let g = NetworkConfig::pilotnet(1).geometry().unwrap();
        for layer in &g[..4] {
            assert_eq!((layer.kernel_h, layer.kernel_w), (5, 5));
        }
        assert_eq!(g[0].patch_len(), 25);
    }

    #[test]
    fn batchnorm_placement() {
        let cfg = NetworkConfig::pilotnet(3);
        let bn: Vec<bool> = (0..4).map(|j| cfg.dense_has_bn(j)).collect();
        let act: Vec<bool> = (0..4).map(|j| cfg.dense_has_activation(j)).collect();
        assert_eq!(bn, [true, true, false, false]);
        assert_eq!(act, [true, true, true, false]);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = NetworkConfig::pilotnet(3);
        cfg.dense = vec![10, 2];
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::pilotnet(3);
        cfg.convs[0].stride = 0;
        assert!(cfg.geometry().is_err());
    }
}
