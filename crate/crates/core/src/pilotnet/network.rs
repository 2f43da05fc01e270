use alloc::vec;
use alloc::vec::Vec;

use super::layers::{self, BnCache, BnStats};
use super::{ConvGeometry, ModelParams, NetError, NetworkConfig};
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated, activations cached.
    Train,
    /// Running statistics, nothing cached.
    Eval,
}

struct ConvCache<T> {
    input: Vec<T>,
    bn: BnCache<T>,
    pre_activation: Vec<T>,
}

struct DenseCache<T> {
    input: Vec<T>,
    bn: Option<BnCache<T>>,
    pre_activation: Option<Vec<T>>,
}

/// Activations kept by a train-mode forward pass for [`backward`].
pub struct ForwardCache<T: Real> {
    batch: usize,
    geometry: Vec<ConvGeometry>,
    conv: Vec<ConvCache<T>>,
    dense: Vec<DenseCache<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Sign pattern of every LeakyReLU input in the pass.
    pub fn activation_signs(&self) -> Vec<bool> {
        let conv = self.conv.iter().flat_map(|c| c.pre_activation.iter());
        let dense = self.dense.iter().filter_map(|d| d.pre_activation.as_ref()).flatten();
        conv.chain(dense).map(|z| z.to_f64() > 0.0).collect()
    }
}

/// Parameter gradients in [`ModelParams::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real = f32> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

fn check_input<T: Real>(cfg: &NetworkConfig, input: &Tensor<T>) -> Result<usize, NetError> {
    let d = input.dims();
    let ok = d.len() == 4 && d[1..] == cfg.input_dims(d[0])[1..];
    if !ok {
        return Err(NetError::Shape {
            expected: cfg.input_dims(d.first().copied().unwrap_or(1)).to_vec(),
            actual: d.to_vec(),
        });
    }
    Ok(d[0])
}

struct Forward<T: Real> {
    output: Tensor<T>,
    cache: Option<ForwardCache<T>>,
    stats: Vec<BnStats>,
}

fn run<T: Real>(params: &ModelParams<T>, input: &Tensor<T>, mode: Mode) -> Result<Forward<T>, NetError> {
    let cfg = &params.config;
    let n = check_input(cfg, input)?;
    let geometry = cfg.geometry()?;
    let train = mode == Mode::Train;
    let slope = T::from_f64(cfg.leaky_slope);
    let eps = cfg.bn_eps;
    let mut stats = Vec::new();
    let mut conv_cache = Vec::new();
    let mut dense_cache = Vec::new();

    let mut x = layers::nchw_to_channel_major(n, cfg.input_channels, cfg.input_height * cfg.input_width, input.data());
    for (g, layer) in geometry.iter().zip(&params.convs) {
        let q = n * g.out_area();
        let cols = layers::im2col(g, n, &x);
        let z = layers::affine(g.filters, g.patch_len(), q, layer.weight.data(), layer.bias.data(), &cols);
        drop(cols);
        let bn = &layer.bn;
        let mut y = if train {
            let (y, cache, s) = layers::batchnorm_train(g.filters, q, &z, bn.gamma.data(), bn.beta.data(), eps);
            stats.push(s);
            conv_cache.push(ConvCache {
                input: core::mem::take(&mut x),
                bn: cache,
                pre_activation: Vec::new(),
            });
            y
        } else {
            let mut y = z;
            layers::batchnorm_eval(q, &mut y, bn.gamma.data(), bn.beta.data(), bn.running_mean.data(), bn.running_var.data(), eps);
            y
        };
        if let Some(c) = conv_cache.last_mut().filter(|_| train) {
            c.pre_activation = y.clone();
        }
        layers::leaky_relu(&mut y, slope);
        x = y;
    }

    let last = geometry.last().expect("validated non-empty");
    let mut width = last.filters * last.out_area();
    let mut h = layers::flatten(n, last.filters, last.out_area(), &x);
    for (j, layer) in params.dense.iter().enumerate() {
        let out = cfg.dense[j];
        let mut z = layers::affine(out, width, n, layer.weight.data(), layer.bias.data(), &h);
        let mut bn_cache = None;
        if let Some(bn) = &layer.bn {
            if train {
                let (y, cache, s) = layers::batchnorm_train(out, n, &z, bn.gamma.data(), bn.beta.data(), eps);
                stats.push(s);
                bn_cache = Some(cache);
                z = y;
            } else {
                layers::batchnorm_eval(n, &mut z, bn.gamma.data(), bn.beta.data(), bn.running_mean.data(), bn.running_var.data(), eps);
            }
        }
        let mut pre_activation = None;
        if cfg.dense_has_activation(j) {
            if train {
                pre_activation = Some(z.clone());
            }
            layers::leaky_relu(&mut z, slope);
        }
        if train {
            dense_cache.push(DenseCache {
                input: core::mem::take(&mut h),
                bn: bn_cache,
                pre_activation,
            });
        }
        h = z;
        width = out;
    }

    let output = Tensor::from_vec(&[n, 1], h).expect("final width is 1");
    let cache = train.then(|| ForwardCache {
        batch: n,
        geometry,
        conv: conv_cache,
        dense: dense_cache,
    });
    Ok(Forward { output, cache, stats })
}

fn update_running<T: Real>(params: &mut ModelParams<T>, stats: &[BnStats], count: &[usize]) {
    let momentum = params.config.bn_momentum;
    let bns = params
        .convs
        .iter_mut()
        .map(|c| &mut c.bn)
        .chain(params.dense.iter_mut().filter_map(|d| d.bn.as_mut()));
    for ((bn, s), &m) in bns.zip(stats).zip(count) {
        let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
        for (rm, &mean) in bn.running_mean.data_mut().iter_mut().zip(&s.mean) {
            *rm = T::from_f64((1.0 - momentum) * rm.to_f64() + momentum * mean);
        }
        for (rv, &var) in bn.running_var.data_mut().iter_mut().zip(&s.var) {
            *rv = T::from_f64((1.0 - momentum) * rv.to_f64() + momentum * var * unbias);
        }
    }
}

/// Train-mode forward: normalizes with batch statistics, folds them into the
/// running statistics and returns the cache [`backward`] needs.
pub fn forward_train<T: Real>(
    params: &mut ModelParams<T>,
    input: &Tensor<T>,
) -> Result<(Tensor<T>, ForwardCache<T>), NetError> {
    let f = run(params, input, Mode::Train)?;
    let cache = f.cache.expect("train mode caches");
    let count: Vec<usize> = cache
        .geometry
        .iter()
        .map(|g| cache.batch * g.out_area())
        .chain(cache.dense.iter().filter(|d| d.bn.is_some()).map(|_| cache.batch))
        .collect();
    update_running(params, &f.stats, &count);
    Ok((f.output, cache))
}

/// Eval-mode forward: `N×C×H×W` in, `N×1` steering degrees out.
pub fn predict<T: Real>(params: &ModelParams<T>, input: &Tensor<T>) -> Result<Tensor<T>, NetError> {
    Ok(run(params, input, Mode::Eval)?.output)
}

/// Gradients of `Σ upstream·output` with respect to every trainable tensor.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    upstream: &Tensor<T>,
) -> Result<Gradients<T>, NetError> {
    let n = cache.batch;
    if upstream.dims() != [n, 1] {
        return Err(NetError::Shape {
            expected: vec![n, 1],
            actual: upstream.dims().to_vec(),
        });
    }
    let cfg = &params.config;
    let slope = T::from_f64(cfg.leaky_slope);
    let mut dense_grads = Vec::new();
    let mut dy = upstream.data().to_vec();
    let mut width_out = 1;
    for (j, (layer, c)) in params.dense.iter().zip(&cache.dense).enumerate().rev() {
        let width_in = layer.weight.dims()[1];
        if let Some(z) = &c.pre_activation {
            layers::leaky_relu_backward(z, &mut dy, slope);
        }
        let mut bn_grads = None;
        if let (Some(bn), Some(bc)) = (&layer.bn, &c.bn) {
            let (dx, dg, db) = layers::batchnorm_backward(n, bc, bn.gamma.data(), &dy);
            dy = dx;
            bn_grads = Some((dg, db));
        }
        let g = layers::affine_backward(width_out, width_in, n, layer.weight.data(), &c.input, &dy, true);
        let mut ts = vec![
            Tensor::from_vec(layer.weight.dims(), g.weight).expect("weight grad"),
            Tensor::from_vec(layer.bias.dims(), g.bias).expect("bias grad"),
        ];
        if let Some((dg, db)) = bn_grads {
            ts.push(Tensor::from_vec(&[width_out], dg).expect("gamma grad"));
            ts.push(Tensor::from_vec(&[width_out], db).expect("beta grad"));
        }
        dense_grads.push(ts);
        dy = g.input.expect("requested");
        width_out = width_in;
        debug_assert!(j < cfg.dense.len());
    }

    let last = cache.geometry.last().expect("non-empty");
    dy = layers::unflatten(n, last.filters, last.out_area(), &dy);
    let mut conv_grads = Vec::new();
    for (i, ((layer, c), g)) in params.convs.iter().zip(&cache.conv).zip(&cache.geometry).enumerate().rev() {
        let q = n * g.out_area();
        layers::leaky_relu_backward(&c.pre_activation, &mut dy, slope);
        let (dz, dg, db) = layers::batchnorm_backward(q, &c.bn, layer.bn.gamma.data(), &dy);
        let cols = layers::im2col(g, n, &c.input);
        let ag = layers::affine_backward(g.filters, g.patch_len(), q, layer.weight.data(), &cols, &dz, i > 0);
        drop(cols);
        conv_grads.push([
            Tensor::from_vec(layer.weight.dims(), ag.weight).expect("weight grad"),
            Tensor::from_vec(&[g.filters], ag.bias).expect("bias grad"),
            Tensor::from_vec(&[g.filters], dg).expect("gamma grad"),
            Tensor::from_vec(&[g.filters], db).expect("beta grad"),
        ]);
        if let Some(dcols) = ag.input {
            dy = layers::col2im(g, n, &dcols);
        }
    }

    let tensors = conv_grads
        .into_iter()
        .rev()
        .flatten()
        .chain(dense_grads.into_iter().rev().flatten())
        .collect();
    Ok(Gradients { tensors })
}

/// Parameters plus the cache of the most recent train-mode pass.
pub struct Network<T: Real = f32> {
    pub params: ModelParams<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Real> Network<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        Self { params, cache: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NetError> {
        match mode {
            Mode::Train => {
                let (out, cache) = forward_train(&mut self.params, input)?;
                self.cache = Some(cache);
                Ok(out)
            }
            Mode::Eval => {
                self.cache = None;
                predict(&self.params, input)
            }
        }
    }

    /// Consumes the cached activations of the last train-mode forward.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Gradients<T>, NetError> {
        let cache = self.cache.take().ok_or(NetError::NoCache)?;
        backward(&self.params, &cache, upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random_input<T: Real>(cfg: &NetworkConfig, n: usize, rng: &mut Rng) -> Tensor<T> {
        let dims = cfg.input_dims(n);
        let len = dims.iter().product();
        Tensor::from_vec(&dims, (0..len).map(|_| T::from_f64(rng.uniform())).collect()).unwrap()
    }

    #[test]
    fn batch_of_two_gives_two_outputs() {
        let cfg = NetworkConfig::pilotnet(3);
        let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(0)).unwrap();
        let x = random_input(&cfg, 2, &mut Rng::new(1));
        assert_eq!(predict(&p, &x).unwrap().dims(), &[2, 1]);
    }

    #[test]
    fn zero_input_gives_zero_output_in_eval() {
        let cfg = NetworkConfig::pilotnet(1);
        let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(9)).unwrap();
        let x = Tensor::zeros(&cfg.input_dims(1));
        assert_eq!(predict(&p, &x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn wrong_channel_count_is_a_shape_error() {
        let cfg = NetworkConfig::shrunken(3);
        let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(&[1, 1, 12, 20]);
        assert!(matches!(predict(&p, &x), Err(NetError::Shape { .. })));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let cfg = NetworkConfig::shrunken(1);
        let mut net = Network::new(ModelParams::<f32>::init(&cfg, &mut Rng::new(0)).unwrap());
        assert!(matches!(net.backward(&Tensor::zeros(&[1, 1])), Err(NetError::NoCache)));
        let x = random_input(&cfg, 2, &mut Rng::new(1));
        net.forward(&x, Mode::Eval).unwrap();
        assert!(matches!(net.backward(&Tensor::zeros(&[2, 1])), Err(NetError::NoCache)));
        net.forward(&x, Mode::Train).unwrap();
        assert!(net.backward(&Tensor::zeros(&[2, 1])).is_ok());
        assert!(matches!(net.backward(&Tensor::zeros(&[2, 1])), Err(NetError::NoCache)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = NetworkConfig::shrunken(3);
        let mut p = ModelParams::<f64>::init(&cfg, &mut Rng::new(2)).unwrap();
        let x = random_input(&cfg, 4, &mut Rng::new(3));
        let (_, cache) = forward_train(&mut p, &x).unwrap();
        let g = backward(&p, &cache, &Tensor::zeros(&[4, 1])).unwrap();
        assert_eq!(g.tensors.len(), p.trainable().len());
        for t in &g.tensors {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_shapes_mirror_parameters() {
        let cfg = NetworkConfig::pilotnet(3);
        let mut p = ModelParams::<f32>::init(&cfg, &mut Rng::new(2)).unwrap();
        let x = random_input(&cfg, 2, &mut Rng::new(3));
        let (_, cache) = forward_train(&mut p, &x).unwrap();
        let g = backward(&p, &cache, &Tensor::full(&[2, 1], 1.0)).unwrap();
        for (gt, pt) in g.tensors.iter().zip(p.trainable()) {
            assert_eq!(gt.dims(), pt.dims());
        }
    }

    fn check_composed(batch: usize, seed: u64) {
        let report = super::super::gradient_check_seeded(&NetworkConfig::shrunken(3), batch, seed).unwrap();
        assert!(report.max_error < 1e-4, "{report:?}");
        assert!(report.skipped < report.checked, "{report:?}");
    }

    #[test]
    fn composed_gradients_match_finite_differences() {
        // With one sample the 1×1 maps of the deeper layers hold a single
        // value per channel and batch normalization zeroes them out, so the
        // check runs on small batches.
        check_composed(4, 0);
        check_composed(8, 1);
        check_composed(16, 2);
    }

    #[test]
    fn train_mode_updates_running_statistics() {
        let cfg = NetworkConfig::shrunken(1);
        let mut p = ModelParams::<f64>::init(&cfg, &mut Rng::new(5)).unwrap();
        let x = random_input::<f64>(&cfg, 8, &mut Rng::new(6));
        let before = p.convs[0].bn.running_var.clone();
        forward_train(&mut p, &x).unwrap();
        assert_ne!(before, p.convs[0].bn.running_var);
        assert!(p.convs.iter().all(|c| c.bn.running_var.data().iter().all(|&v| v > 0.0)));
    }

    #[test]
    fn eval_forward_is_pure() {
        let cfg = NetworkConfig::shrunken(3);
        let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(5)).unwrap();
        let x = random_input::<f32>(&cfg, 3, &mut Rng::new(6));
        let a = predict(&p, &x).unwrap();
        let b = predict(&p, &x).unwrap();
        assert_eq!(a, b);
    }
}
