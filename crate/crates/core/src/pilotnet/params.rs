use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{NetError, NetworkConfig};
use crate::numerics::{Real, Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Real> BatchNorm<T> {
    fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::ONE),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::ONE),
        }
    }

    fn cast<U: Real>(&self) -> BatchNorm<U> {
        BatchNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Real> {
    /// (filters, in_channels, kernel_h, kernel_w) with clamped kernels.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T: Real> {
    /// (out, in).
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub bn: Option<BatchNorm<T>>,
}

/// Weights and normalization statistics of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub config: NetworkConfig,
    pub convs: Vec<ConvLayer<T>>,
    pub dense: Vec<DenseLayer<T>>,
}

fn kaiming<T: Real>(dims: &[usize], fan_in: usize, slope: f64, rng: &mut Rng) -> Tensor<T> {
    let std = libm::sqrt(2.0 / (1.0 + slope * slope)) / libm::sqrt(fan_in as f64);
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| T::from_f64(std * rng.normal())).collect())
        .expect("init dims")
}

impl<T: Real> ModelParams<T> {
    /// Fan-in scaled normal weights (He init with the LeakyReLU gain), zero
    /// biases, identity batch norms. Draws layer by layer in network order.
    pub fn init(config: &NetworkConfig, rng: &mut Rng) -> Result<Self, NetError> {
        let geometry = config.geometry()?;
        let slope = config.leaky_slope;
        let convs = geometry
            .iter()
            .map(|g| ConvLayer {
                weight: kaiming(
                    &[g.filters, g.in_channels, g.kernel_h, g.kernel_w],
                    g.patch_len(),
                    slope,
                    rng,
                ),
                bias: Tensor::zeros(&[g.filters]),
                bn: BatchNorm::new(g.filters),
            })
            .collect();
        let mut fan_in = config.flatten_width()?;
        let mut dense = Vec::with_capacity(config.dense.len());
        for (j, &width) in config.dense.iter().enumerate() {
            dense.push(DenseLayer {
                weight: kaiming(&[width, fan_in], fan_in, slope, rng),
                bias: Tensor::zeros(&[width]),
                bn: config.dense_has_bn(j).then(|| BatchNorm::new(width)),
            });
            fan_in = width;
        }
        Ok(Self {
            config: config.clone(),
            convs,
            dense,
        })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvLayer {
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                    bn: c.bn.cast(),
                })
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|d| DenseLayer {
                    weight: d.weight.cast(),
                    bias: d.bias.cast(),
                    bn: d.bn.as_ref().map(BatchNorm::cast),
                })
                .collect(),
        }
    }

    /// Every tensor with its checkpoint name, trainable ones and running
    /// statistics alike, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            let p = format!("conv{}", i + 1);
            out.push((format!("{p}.weight"), &c.weight));
            out.push((format!("{p}.bias"), &c.bias));
            push_bn(&mut out, &p, &c.bn);
        }
        for (j, d) in self.dense.iter().enumerate() {
            let p = format!("fc{}", j + 1);
            out.push((format!("{p}.weight"), &d.weight));
            out.push((format!("{p}.bias"), &d.bias));
            if let Some(bn) = &d.bn {
                push_bn(&mut out, &p, bn);
            }
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::named_tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.extend([&mut c.weight, &mut c.bias]);
            let bn = &mut c.bn;
            out.extend([&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var]);
        }
        for d in &mut self.dense {
            out.extend([&mut d.weight, &mut d.bias]);
            if let Some(bn) = &mut d.bn {
                out.extend([&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var]);
            }
        }
        out
    }

    /// Parameters the optimizer updates, in gradient order.
    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.extend([&c.weight, &c.bias, &c.bn.gamma, &c.bn.beta]);
        }
        for d in &self.dense {
            out.extend([&d.weight, &d.bias]);
            if let Some(bn) = &d.bn {
                out.extend([&bn.gamma, &bn.beta]);
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.extend([&mut c.weight, &mut c.bias, &mut c.bn.gamma, &mut c.bn.beta]);
        }
        for d in &mut self.dense {
            out.extend([&mut d.weight, &mut d.bias]);
            if let Some(bn) = &mut d.bn {
                out.extend([&mut bn.gamma, &mut bn.beta]);
            }
        }
        out
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.named_tensors()
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| !n.ends_with("running_mean") && !n.ends_with("running_var"))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }
}

fn push_bn<'a, T: Real>(out: &mut Vec<(String, &'a Tensor<T>)>, prefix: &str, bn: &'a BatchNorm<T>) {
    out.push((format!("{prefix}.bn.gamma"), &bn.gamma));
    out.push((format!("{prefix}.bn.beta"), &bn.beta));
    out.push((format!("{prefix}.bn.running_mean"), &bn.running_mean));
    out.push((format!("{prefix}.bn.running_var"), &bn.running_var));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv1_weight_extents() {
        for c in [1, 3] {
            let p = ModelParams::<f32>::init(&NetworkConfig::pilotnet(c), &mut Rng::new(0)).unwrap();
            assert_eq!(p.convs[0].weight.dims(), &[24, c, 5, 5]);
            assert_eq!(p.convs[4].weight.dims(), &[64, 48, 1, 3]);
            assert_eq!(p.dense[0].weight.dims(), &[100, 704]);
            assert_eq!(p.dense[3].weight.dims(), &[1, 10]);
        }
    }

    #[test]
    fn same_seed_identical_params() {
        let cfg = NetworkConfig::pilotnet(3);
        let a = ModelParams::<f32>::init(&cfg, &mut Rng::new(42)).unwrap();
        let b = ModelParams::<f32>::init(&cfg, &mut Rng::new(42)).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::<f32>::init(&cfg, &mut Rng::new(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_zero_and_batchnorm_identity() {
        let p = ModelParams::<f32>::init(&NetworkConfig::pilotnet(3), &mut Rng::new(1)).unwrap();
        for c in &p.convs {
            assert!(c.bias.data().iter().all(|&b| b == 0.0));
            assert!(c.bn.gamma.data().iter().all(|&g| g == 1.0));
            assert!(c.bn.beta.data().iter().all(|&b| b == 0.0));
            assert!(c.bn.running_var.data().iter().all(|&v| v == 1.0));
        }
        assert!(p.dense[2].bn.is_none() && p.dense[3].bn.is_none());
    }

    #[test]
    fn conv1_mean_within_three_sigma_over_seeds() {
        // Each weight ~ N(0, s²) with s = gain/√fan_in, so the mean of n
        // weights has standard deviation s/√n.
        let cfg = NetworkConfig::pilotnet(3);
        let fan_in = 75.0;
        let s = libm::sqrt(2.0 / (1.0 + 0.01 * 0.01)) / libm::sqrt(fan_in);
        for seed in 0..10 {
            let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(seed)).unwrap();
            let w = &p.convs[0].weight;
            let bound = 3.0 * s / libm::sqrt(w.len() as f64);
            assert!(w.mean().abs() < bound, "seed {seed}: mean {} bound {bound}", w.mean());
            let var = w.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / w.len() as f64;
            assert!((var / (s * s) - 1.0).abs() < 0.15, "seed {seed}: var ratio {}", var / (s * s));
        }
    }

    #[test]
    fn names_and_orders_line_up() {
        let mut p = ModelParams::<f32>::init(&NetworkConfig::shrunken(3), &mut Rng::new(0)).unwrap();
        let names = p.trainable_names();
        assert_eq!(names.len(), p.trainable().len());
        assert_eq!(names[0], "conv1.weight");
        assert_eq!(names[3], "conv1.bn.beta");
        assert_eq!(names.last().unwrap(), "fc4.bias");
        let all = p.named_tensors().len();
        assert_eq!(p.tensors_mut().len(), all);
        // 5 conv layers and 2 dense layers carry running statistics
        assert_eq!(all - names.len(), 2 * (5 + 2));
    }
}
