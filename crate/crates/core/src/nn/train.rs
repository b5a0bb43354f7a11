use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Normalization};
use super::mlp::{mse, sign, Activation, Mlp};
use super::real::Real;
use super::NnError;
use crate::geometry::Vec3;
use crate::prelude::*;
use crate::rng::stage_rng;
use crate::robot::{RavenStateRecord, RECORD_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateMode {
    /// Use `learning_rate` throughout.
    Fixed,
    /// Multiply the rate by `auto_scale_factor` whenever the validation loss
    /// has not improved for `auto_scale_patience` epochs, up to
    /// `max_learning_rate`.
    #[default]
    AutoScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub learning_rate_mode: LearningRateMode,
    pub auto_scale_factor: f64,
    pub auto_scale_patience: usize,
    pub max_learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Stop after this many epochs without a validation improvement; 0 never stops early.
    pub early_stopping_patience: usize,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            hidden: vec![600, 500, 400],
            activation: Activation::Sigmoid,
            learning_rate: 1e-8,
            learning_rate_mode: LearningRateMode::AutoScale,
            auto_scale_factor: 1000.0,
            auto_scale_patience: 200,
            max_learning_rate: 1e-3,
            epochs: 10_000,
            batch_size: 1024,
            l1: 5e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            early_stopping_patience: 400,
            bn_momentum: super::mlp::DEFAULT_BN_MOMENTUM,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let positive = [self.learning_rate, self.max_learning_rate, self.beta1, self.beta2, self.adam_eps];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(NnError::InvalidConfig("rates and Adam moments must be positive, moments below one"));
        }
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(NnError::InvalidConfig("need at least one epoch and a batch of two"));
        }
        if !(self.l1 >= 0.0) {
            return Err(NnError::InvalidConfig("l1 rate must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(NnError::InvalidConfig("hidden layers need at least one unit"));
        }
        if self.learning_rate_mode == LearningRateMode::AutoScale && !(self.auto_scale_factor > 1.0) {
            return Err(NnError::InvalidConfig("auto-scale factor must exceed one"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(NnError::InvalidConfig("batch-norm momentum must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![RECORD_LEN];
        s.extend_from_slice(&self.hidden);
        s.push(3);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    /// Mean squared error on standardized labels, averaged over batches.
    pub train_loss: f64,
    pub val_loss: f64,
    /// 3D RMS of the residual error on the validation set, mm.
    pub val_rms_mm: f64,
    pub learning_rate: f64,
}

/// A network together with the feature and label scaling it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCorrector<T> {
    pub mlp: Mlp<T>,
    pub features: Normalization,
    pub labels: Normalization,
}

impl<T: Real> ErrorCorrector<T> {
    pub fn new(mlp: Mlp<T>, features: Normalization, labels: Normalization) -> Result<Self, NnError> {
        if features.dim() != mlp.inputs() || labels.dim() != mlp.outputs() || mlp.inputs() != RECORD_LEN {
            return Err(NnError::InvalidArchitecture);
        }
        Ok(Self { mlp, features, labels })
    }

    fn unscale(&self, out: &[T]) -> Vec<[f64; 3]> {
        out.chunks_exact(3)
            .map(|r| core::array::from_fn(|j| self.labels.invert(j, r[j].as_f64())))
            .collect()
    }

    /// Predicted error of each record, mm.
    pub fn predict_errors(&self, records: &[&RavenStateRecord]) -> Result<Vec<[f64; 3]>, NnError> {
        let mut x = vec![T::zero(); records.len() * RECORD_LEN];
        for (r, row) in records.iter().zip(x.chunks_exact_mut(RECORD_LEN)) {
            if r.values.len() != RECORD_LEN {
                return Err(NnError::ShapeMismatch {
                    expected: RECORD_LEN,
                    got: r.values.len(),
                });
            }
            self.features.apply_into(&r.values, row);
        }
        let out = self.mlp.predict(&x, records.len())?;
        Ok(self.unscale(&out))
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<[f64; 3]>, NnError> {
        let x = ds.feature_matrix::<T>(&self.features);
        Ok(self.unscale(&self.mlp.predict(&x, ds.len())?))
    }
}

/// Reported position plus the predicted error.
pub fn correct_position<T: Real>(model: &ErrorCorrector<T>, record: &RavenStateRecord) -> Result<Vec3, NnError> {
    let err = model.predict_errors(&[record])?[0];
    Ok(record.reported_position() + Vec3::from(err))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome<T> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: ErrorCorrector<T>,
    pub history: Vec<HistoryEntry>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: T,
}

impl<T: Real> Adam<T> {
    fn new(n: usize, cfg: &TrainingConfig) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: T::of(cfg.adam_eps),
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let step = lr * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t));
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let step = T::of(step);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + c1 * g;
            self.v[k] = b2 * self.v[k] + c2 * g * g;
            params[k] = params[k] - step * self.m[k] / (self.v[k].sqrt() + self.eps);
        }
    }
}

fn evaluate<T: Real>(mlp: &Mlp<T>, x: &[T], y: &[T], labels: &Normalization) -> Result<(f64, f64), NnError> {
    let n = y.len() / 3;
    let out = mlp.predict(x, n)?;
    let (loss, _) = mse(&out, y)?;
    let mut sq = 0.0;
    for (o, t) in out.chunks_exact(3).zip(y.chunks_exact(3)) {
        for j in 0..3 {
            let d = (o[j].as_f64() - t[j].as_f64()) * labels.std[j];
            sq += d * d;
        }
    }
    Ok((loss, (sq / n as f64).sqrt()))
}

pub fn train<T: Real>(train: &Dataset, val: &Dataset, cfg: &TrainingConfig) -> Result<TrainingOutcome<T>, NnError> {
    train_with(train, val, cfg, |_| {})
}

/// Minibatch Adam on mean squared error of standardized labels plus an L1
/// penalty on the weights. `observer` sees every epoch's history entry.
pub fn train_with<T: Real>(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainingConfig,
    mut observer: impl FnMut(&HistoryEntry),
) -> Result<TrainingOutcome<T>, NnError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if cfg.batch_size > train.len() {
        return Err(NnError::InvalidConfig("batch size exceeds the training set"));
    }
    let features = train.feature_stats()?;
    let labels = train.label_stats()?;
    let x_train = train.feature_matrix::<T>(&features);
    let y_train = train.label_matrix::<T>(&labels);
    let x_val = val.feature_matrix::<T>(&features);
    let y_val = val.label_matrix::<T>(&labels);

    let sizes = cfg.layer_sizes();
    let mut mlp = Mlp::<T>::new(&sizes, cfg.activation, &mut stage_rng(cfg.seed, "nn/init"))?;
    mlp.set_bn_momentum(cfg.bn_momentum);
    let mut adam = Adam::new(mlp.params().len(), cfg);
    let mut shuffle_rng = stage_rng(cfg.seed, "nn/shuffle");
    let weight_ranges: Vec<_> = mlp.weight_ranges().collect();
    let l1 = T::of(cfg.l1);

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = vec![T::zero(); cfg.batch_size * RECORD_LEN];
    let mut yb = vec![T::zero(); cfg.batch_size * 3];
    let mut lr = cfg.learning_rate;
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, mlp.clone());
    let mut since_best = 0usize;
    let mut since_scale = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            if b < 2 {
                continue;
            }
            for (r, &i) in chunk.iter().enumerate() {
                xb[r * RECORD_LEN..(r + 1) * RECORD_LEN].copy_from_slice(&x_train[i * RECORD_LEN..(i + 1) * RECORD_LEN]);
                yb[r * 3..(r + 1) * 3].copy_from_slice(&y_train[i * 3..(i + 1) * 3]);
            }
            let (xs, ys) = (&xb[..b * RECORD_LEN], &yb[..b * 3]);
            let cache = mlp.forward_train(xs, b)?;
            let (loss, d_out) = mse(&cache.output, ys)?;
            let mut grad = mlp.backward(xs, &cache, &d_out);
            if cfg.l1 > 0.0 {
                let p = mlp.params();
                for r in &weight_ranges {
                    for k in r.clone() {
                        grad[k] = grad[k] + l1 * sign(p[k]);
                    }
                }
            }
            adam.step(mlp.params_mut(), &grad, lr);
            mlp.update_running_stats(&cache);
            loss_sum += loss * b as f64;
            seen += b;
        }
        let train_loss = loss_sum / seen.max(1) as f64;
        let (val_loss, val_rms_mm) = evaluate(&mlp, &x_val, &y_val, &labels)?;
        let entry = HistoryEntry {
            epoch,
            train_loss,
            val_loss,
            val_rms_mm,
            learning_rate: lr,
        };
        history.push(entry);
        observer(&entry);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(NnError::NonFiniteLoss { epoch, history });
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, mlp.clone());
            since_best = 0;
            since_scale = 0;
        } else {
            since_best += 1;
            since_scale += 1;
        }
        if cfg.learning_rate_mode == LearningRateMode::AutoScale
            && since_scale >= cfg.auto_scale_patience
            && lr < cfg.max_learning_rate
        {
            lr = (lr * cfg.auto_scale_factor).min(cfg.max_learning_rate);
            since_scale = 0;
            since_best = 0;
        }
        if cfg.early_stopping_patience > 0 && since_best >= cfg.early_stopping_patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok(TrainingOutcome {
        model: ErrorCorrector::new(best.2, features, labels)?,
        history,
        best_epoch: best.1,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dataset::TrainingPair;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Random records whose label is `label(features)`, grouped into
    /// trajectories of 50.
    fn synthetic(n: usize, seed: u64, label: impl Fn(&[f64]) -> [f64; 3]) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let pairs = (0..n)
            .map(|i| {
                let mut record = RavenStateRecord::zeroed(i as f64);
                for v in record.values.iter_mut().take(20) {
                    *v = StandardNormal.sample(&mut rng);
                }
                record.values[0] = 100.0 + 30.0 * rng.random_range(-1.0..1.0);
                let error = label(&record.values);
                TrainingPair {
                    trajectory_id: (i / 50) as u32,
                    record,
                    error,
                }
            })
            .collect();
        Dataset::new(pairs).unwrap()
    }

    fn small_cfg() -> TrainingConfig {
        TrainingConfig {
            hidden: vec![32, 16],
            learning_rate: 3e-3,
            learning_rate_mode: LearningRateMode::Fixed,
            epochs: 40,
            batch_size: 128,
            early_stopping_patience: 0,
            bn_momentum: 0.9,
            ..TrainingConfig::default()
        }
    }

    fn linear(v: &[f64]) -> [f64; 3] {
        [
            0.5 * v[1] - 0.2 * v[2] + 0.01 * (v[0] - 100.0),
            v[3] + v[4],
            -0.3 * v[5] + 2.0,
        ]
    }

    fn label_variance(ds: &Dataset) -> f64 {
        let s = ds.label_stats().unwrap();
        s.std.iter().map(|v| v * v).sum::<f64>() / 3.0
    }

    #[test]
    fn learns_a_linear_target() {
        let tr = synthetic(10_000, 1, linear);
        let va = synthetic(1_000, 2, linear);
        let out = train::<f32>(&tr, &va, &small_cfg()).unwrap();
        let pred = out.model.predict_dataset(&va).unwrap();
        let mse = pred
            .iter()
            .zip(&va.pairs)
            .map(|(p, t)| (0..3).map(|j| (p[j] - t.error[j]).powi(2)).sum::<f64>() / 3.0)
            .sum::<f64>()
            / va.len() as f64;
        let var = label_variance(&va);
        assert!(mse < 0.01 * var, "mse {mse} vs label variance {var}");
        let last = out.history.last().unwrap();
        assert_eq!(out.history.len(), 40);
        assert!(last.val_rms_mm > 0.0);
    }

    #[test]
    fn zero_labels_give_near_zero_output() {
        let tr = synthetic(2_000, 3, |_| [0.0; 3]);
        let va = synthetic(500, 4, |_| [0.0; 3]);
        let out = train::<f32>(&tr, &va, &small_cfg()).unwrap();
        let pred = out.model.predict_dataset(&va).unwrap();
        let rms = (pred.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / pred.len() as f64).sqrt();
        assert!(rms < 0.05, "{rms}");
    }

    #[test]
    fn stronger_l1_shrinks_weights() {
        let tr = synthetic(1_000, 5, linear);
        let va = synthetic(200, 6, linear);
        let mut cfg = small_cfg();
        cfg.epochs = 15;
        cfg.l1 = 1e-4;
        let weak = train::<f64>(&tr, &va, &cfg).unwrap();
        cfg.l1 = 1e-2;
        let strong = train::<f64>(&tr, &va, &cfg).unwrap();
        assert!(strong.model.mlp.weight_l1() < weak.model.mlp.weight_l1());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let tr = synthetic(600, 7, linear);
        let va = synthetic(200, 8, linear);
        let mut cfg = small_cfg();
        cfg.epochs = 3;
        let a = train::<f32>(&tr, &va, &cfg).unwrap();
        let b = train::<f32>(&tr, &va, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 1;
        let c = train::<f32>(&tr, &va, &cfg).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn constant_offset_in_reported_position_is_absorbed() {
        let tr = synthetic(3_000, 9, linear);
        let va = synthetic(500, 10, linear);
        let shift = |ds: &Dataset, c: f64| {
            let mut d = ds.clone();
            for p in &mut d.pairs {
                p.record.values[0] += c;
                p.error[0] -= c;
            }
            d
        };
        let cfg = small_cfg();
        let base = train::<f64>(&tr, &va, &cfg).unwrap();
        let moved = train::<f64>(&shift(&tr, 7.0), &shift(&va, 7.0), &cfg).unwrap();
        let va_moved = shift(&va, 7.0);
        let p0 = base.model.predict_dataset(&va).unwrap();
        let p1 = moved.model.predict_dataset(&va_moved).unwrap();
        let final_rms = base.history[base.best_epoch - 1].val_rms_mm;
        for ((a, b), (r0, r1)) in p0.iter().zip(&p1).zip(va.pairs.iter().zip(&va_moved.pairs)) {
            // corrected position: reported + predicted error
            let c0 = r0.record.values[0] + a[0];
            let c1 = r1.record.values[0] + b[0];
            assert!((c0 - c1).abs() < 3.0 * final_rms, "{c0} {c1}");
        }
    }

    #[test]
    fn divergence_is_reported_with_history() {
        let tr = synthetic(500, 11, linear);
        let va = synthetic(100, 12, linear);
        let mut cfg = small_cfg();
        cfg.learning_rate = 1e30;
        cfg.max_learning_rate = 1e30;
        match train::<f32>(&tr, &va, &cfg) {
            Err(NnError::NonFiniteLoss { epoch, history }) => assert_eq!(history.len(), epoch),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
        }
    }

    #[test]
    fn correct_position_adds_prediction() {
        let tr = synthetic(300, 13, linear);
        let va = synthetic(100, 14, linear);
        let mut cfg = small_cfg();
        cfg.epochs = 1;
        let mut model = train::<f64>(&tr, &va, &cfg).unwrap().model;
        // zero network: output maps back to the label mean
        let sizes = model.mlp.sizes().to_vec();
        model.mlp = Mlp::zeros(&sizes, Activation::Sigmoid).unwrap();
        model.labels.mean = vec![0.0; 3];
        let rec = &va.pairs[0].record;
        assert_eq!(correct_position(&model, rec).unwrap(), rec.reported_position());
        model.labels.mean = vec![1.0, -2.0, 0.5];
        let got = correct_position(&model, rec).unwrap();
        assert_eq!(got, rec.reported_position() + Vec3::new(1.0, -2.0, 0.5));
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = TrainingConfig {
            batch_size: 1,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let tr = synthetic(100, 15, linear);
        assert!(matches!(
            train::<f32>(&tr, &tr, &TrainingConfig::default()),
            Err(NnError::InvalidConfig(_))
        ));
    }
}
