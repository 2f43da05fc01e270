//! L1-loss training with decoupled weight decay and early stopping on
//! validation MAE.

use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{Real, Rng, Tensor};
use crate::pilotnet::{backward, forward_train, predict, Gradients, ModelParams, NetError, NetworkConfig};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [self.lr, self.epsilon].iter().all(|v| v.is_finite() && *v > 0.0);
        let betas = [self.beta1, self.beta2].iter().all(|b| (0.0..1.0).contains(b));
        if !positive || !betas || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(TrainError::Config("optimizer hyperparameters out of range"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(TrainError::Config("batch size, epochs and patience must be positive"));
        }
        if self.patience >= self.max_epochs {
            return Err(TrainError::Config("patience must be below max_epochs"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("prediction extents {pred:?} differ from target extents {target:?}")]
    Extents { pred: Vec<usize>, target: Vec<usize> },
    #[error("non-finite gradient at optimizer step {step}")]
    NonFinite { step: u64 },
    #[error("optimizer state does not match the parameters")]
    StateMismatch,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Mean absolute error in degrees.
pub fn mae_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64, TrainError> {
    check_extents(pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p.to_f64() - t.to_f64()).abs())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Subgradient of [`mae_loss`]: `sign(pred − target)/N`, zero on ties.
pub fn mae_loss_grad<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>, TrainError> {
    check_extents(pred, target)?;
    let scale = 1.0 / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p.to_f64() - t.to_f64();
            T::from_f64(if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            })
        })
        .collect();
    Ok(Tensor::from_vec(pred.dims(), data).expect("same extents"))
}

fn check_extents<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(), TrainError> {
    if pred.dims() != target.dims() {
        return Err(TrainError::Extents {
            pred: pred.dims().to_vec(),
            target: target.dims().to_vec(),
        });
    }
    Ok(())
}

/// First and second moments per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Real = f32> {
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.trainable().iter().map(|t| Tensor::zeros(t.dims())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One AdamW update of a flat parameter slice at (already incremented) step `step`:
/// `w ← w·(1 − lr·wd) − lr·m̂/(√v̂ + ε)`.
pub fn adamw_update<T: Real>(w: &mut [T], g: &[T], m: &mut [T], v: &mut [T], step: u64, cfg: &TrainConfig) {
    let bc1 = 1.0 - libm::pow(cfg.beta1, step as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, step as f64);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for i in 0..w.len() {
        let gi = g[i].to_f64();
        let mi = cfg.beta1 * m[i].to_f64() + (1.0 - cfg.beta1) * gi;
        let vi = cfg.beta2 * v[i].to_f64() + (1.0 - cfg.beta2) * gi * gi;
        m[i] = T::from_f64(mi);
        v[i] = T::from_f64(vi);
        let update = (mi / bc1) / (libm::sqrt(vi / bc2) + cfg.epsilon);
        w[i] = T::from_f64(w[i].to_f64() * decay - cfg.lr * update);
    }
}

/// Applies one optimizer step to every trainable tensor. Gradients are
/// checked before anything is mutated, so a rejected step leaves both the
/// parameters and the state untouched.
pub fn adamw_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let shapes_match = {
        let trainable = params.trainable();
        trainable.len() == grads.tensors.len()
            && trainable.len() == state.first.len()
            && trainable.iter().zip(&grads.tensors).all(|(p, g)| p.dims() == g.dims())
    };
    if !shapes_match {
        return Err(TrainError::StateMismatch);
    }
    if !grads.all_finite() {
        return Err(TrainError::NonFinite { step: state.step + 1 });
    }
    state.step += 1;
    let step = state.step;
    for (((w, g), m), v) in params
        .trainable_mut()
        .into_iter()
        .zip(&grads.tensors)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        adamw_update(w.data_mut(), g.data(), m.data_mut(), v.data_mut(), step, cfg);
    }
    Ok(())
}

/// Patience counter over validation losses; strict `<` is an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    /// 1-based epoch of the best loss, 0 before any observation.
    pub best_epoch: usize,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the validation loss of `epoch`; returns whether it improved.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

/// Samples stored as raw `u8` planes (`C×H×W` each) with steering labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    sample_dims: [usize; 3],
    pixels: Vec<u8>,
    labels: Vec<f32>,
}

impl Dataset {
    pub fn new(sample_dims: [usize; 3]) -> Self {
        Self {
            sample_dims,
            pixels: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn sample_dims(&self) -> [usize; 3] {
        self.sample_dims
    }

    pub fn sample_len(&self) -> usize {
        self.sample_dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, pixels: &[u8], label: f32) -> Result<(), TrainError> {
        if pixels.len() != self.sample_len() {
            return Err(TrainError::Config("sample does not match dataset extents"));
        }
        self.pixels.extend_from_slice(pixels);
        self.labels.push(label);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<(), TrainError> {
        if other.sample_dims != self.sample_dims {
            return Err(TrainError::Config("datasets have different extents"));
        }
        self.pixels.extend_from_slice(&other.pixels);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn pixels(&self, index: usize) -> &[u8] {
        let n = self.sample_len();
        &self.pixels[index * n..(index + 1) * n]
    }

    pub fn label(&self, index: usize) -> f32 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[f32] {
        &self.labels
    }

    /// Inputs scaled to [0, 1] as `N×C×H×W` and labels as `N×1`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let [c, h, w] = self.sample_dims;
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend(self.pixels(i).iter().map(|&p| f32::from(p) / 255.0));
        }
        let x = Tensor::from_vec(&[indices.len(), c, h, w], data).expect("batch extents");
        let y = Tensor::from_vec(&[indices.len(), 1], indices.iter().map(|&i| self.labels[i]).collect())
            .expect("label extents");
        (x, y)
    }
}

/// Eval-mode MAE over a whole dataset, in chunks of `chunk` samples.
pub fn evaluate_mae(params: &ModelParams<f32>, data: &Dataset, chunk: usize) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Config("empty evaluation set"));
    }
    let mut total = 0.0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for part in indices.chunks(chunk.max(1)) {
        let (x, y) = data.batch(part);
        total += mae_loss(&predict(params, &x)?, &y)? * part.len() as f64;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub best: ModelParams<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Trains from a fresh initialization and keeps the parameters of the
/// epoch with the lowest validation MAE.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if val_set.is_empty() {
        return Err(TrainError::Config("empty validation split"));
    }
    let chunk = cfg.batch_size.max(64);
    train_with(train_set, net, cfg, |_, p| evaluate_mae(p, val_set, chunk), |_| {})
}

/// [`train`] with a caller-supplied validation loss and an epoch observer.
pub fn train_with<V, O>(
    train_set: &Dataset,
    net: &NetworkConfig,
    cfg: &TrainConfig,
    mut validate: V,
    mut observe: O,
) -> Result<TrainOutcome, TrainError>
where
    V: FnMut(usize, &ModelParams<f32>) -> Result<f64, TrainError>,
    O: FnMut(&EpochRecord),
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("empty training split"));
    }
    let [c, h, w] = train_set.sample_dims();
    if [c, h, w] != [net.input_channels, net.input_height, net.input_width] {
        return Err(TrainError::Net(NetError::Shape {
            expected: net.input_dims(1)[1..].to_vec(),
            actual: vec![c, h, w],
        }));
    }
    let mut params = ModelParams::<f32>::init(net, &mut Rng::derive(cfg.seed, STREAM_INIT))?;
    let mut state = OptimizerState::new(&params);
    let mut shuffle = Rng::derive(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        shuffle.shuffle(&mut order);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            // A lone trailing sample gives batch normalization nothing to
            // normalize against.
            if batch.len() < 2 && seen > 0 {
                continue;
            }
            let (x, y) = train_set.batch(batch);
            let (pred, cache) = forward_train(&mut params, &x)?;
            loss_sum += mae_loss(&pred, &y)? * batch.len() as f64;
            seen += batch.len();
            let upstream = mae_loss_grad(&pred, &y)?;
            let grads = backward(&params, &cache, &upstream)?;
            adamw_step(&mut params, &grads, &mut state, cfg)?;
        }
        let val_mae = validate(epoch, &params)?;
        let record = EpochRecord {
            epoch,
            train_mae: loss_sum / seen as f64,
            val_mae,
        };
        observe(&record);
        history.push(record);
        if stopper.observe(epoch, val_mae) {
            best = params.clone();
        }
        if stopper.should_stop() {
            return Ok(TrainOutcome {
                best,
                best_epoch: stopper.best_epoch,
                history,
                stopped_early: true,
            });
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch: stopper.best_epoch,
        history,
        stopped_early: false,
    })
}
