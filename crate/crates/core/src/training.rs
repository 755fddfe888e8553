//! Adam, the copy-task training loop and a finite-difference gradient checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::copy_task::{epoch_rng, generate_batch, metrics_from_logits, CopyTaskSpec};
use crate::error::{Error, Result};
use crate::model::{CopyModel, ModelKind};
use crate::tensor::{Parameter, Tensor};

/// Learning-rate halving on a plateau of a lower-is-better metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anneal {
    pub halving_factor: f64,
    /// Observations without improvement before the rate is scaled.
    pub patience: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Global gradient-norm clip. Off unless set.
    pub clip: Option<f64>,
    pub anneal: Option<Anneal>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            epochs: 2000,
            batch_size: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            clip: None,
            anneal: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Input(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Input(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Input("epochs and batch size must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Input(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Halves (or scales by `halving_factor`) the rate after `patience`
/// observations without improvement.
#[derive(Clone, Debug)]
pub struct Annealer {
    cfg: Anneal,
    best: f64,
    stale: usize,
}

impl Annealer {
    pub fn new(cfg: Anneal) -> Self {
        Self { cfg, best: f64::INFINITY, stale: 0 }
    }

    /// Returns the learning rate to use after observing `metric`.
    pub fn observe(&mut self, metric: f64, lr: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale >= self.cfg.patience.max(1) {
            self.stale = 0;
            lr * self.cfg.halving_factor
        } else {
            lr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy_recall: f64,
    pub accuracy_full: f64,
}

/// Adam with bias correction. Moments are kept per parameter tensor in the
/// order parameters are passed to [`Adam::update`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { learning_rate, beta1, beta2, epsilon, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    }

    /// Restores a saved optimizer.
    pub fn with_state(mut self, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::Input("first and second moment counts differ".into()));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.shape() != b.shape() {
                return Err(Error::shape(a.shape(), b.shape()));
            }
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(self)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    pub fn update(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if let Some(p) = params.iter().position(|p| !p.has_grad()) {
            return Err(Error::State(format!("parameter {p} has no gradient for this step")));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} tensors but received {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.shape() != p.shape() {
                return Err(Error::shape(m.shape(), p.shape()));
            }
            let grad = p.grad.data().to_vec();
            let value = p.value.data_mut();
            for (((w, g), mk), vk) in value.iter_mut().zip(&grad).zip(m.data_mut()).zip(v.data_mut()) {
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * g;
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * g * g;
                let m_hat = *mk / c1;
                let v_hat = *vk / c2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(params: &mut [&mut Parameter], max_norm: f64) -> f64 {
    let norm = params.iter().flat_map(|p| p.grad.data()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Training failure. The trainer's model stays at the last finite state.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error(transparent)]
    Other(#[from] Error),
}

/// Copy-task training state: one freshly sampled batch and one Adam step per epoch.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: CopyModel,
    pub optimizer: Adam,
    pub spec: CopyTaskSpec,
    pub config: TrainConfig,
    epoch: usize,
    annealer: Option<Annealer>,
}

impl Trainer {
    pub fn new(kind: ModelKind, hidden: usize, spec: CopyTaskSpec, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = CopyModel::new(kind, hidden, config.seed);
        Self::resume(model, Adam::from_config(&config), spec, config, 0)
    }

    /// Continues from a saved model and optimizer after `epochs_done` epochs.
    pub fn resume(
        model: CopyModel,
        optimizer: Adam,
        spec: CopyTaskSpec,
        config: TrainConfig,
        epochs_done: usize,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self { model, optimizer, spec, config, epoch: epochs_done, annealer: config.anneal.map(Annealer::new) })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn run_epoch(&mut self) -> std::result::Result<MetricsRecord, TrainError> {
        let epoch = self.epoch + 1;
        let mut rng = epoch_rng(self.config.seed, self.epoch as u64);
        let batch = generate_batch(self.spec, self.config.batch_size, &mut rng);
        self.model.zero_grad();
        let (loss, logits) = self.model.loss_and_grads(&batch.inputs, &batch.targets)?;
        let grads_finite = self.model.named_params().iter().all(|(_, p)| p.grad.is_finite());
        if !loss.is_finite() || !grads_finite {
            self.model.zero_grad();
            return Err(TrainError::Diverged { epoch, reason: format!("loss {loss}") });
        }
        let metrics = metrics_from_logits(&logits, &batch)?;
        let snapshot = (self.model.clone(), self.optimizer.clone());
        {
            let mut params = self.model.params_mut();
            if let Some(max_norm) = self.config.clip {
                clip_grad_norm(&mut params, max_norm);
            }
            self.optimizer.update(&mut params)?;
        }
        if !self.model.named_params().iter().all(|(_, p)| p.value.is_finite()) {
            (self.model, self.optimizer) = snapshot;
            return Err(TrainError::Diverged { epoch, reason: "non-finite parameters after update".into() });
        }
        if let Some(a) = self.annealer.as_mut() {
            self.optimizer.learning_rate = a.observe(loss, self.optimizer.learning_rate);
        }
        self.epoch = epoch;
        Ok(MetricsRecord {
            epoch,
            loss,
            accuracy_recall: metrics.accuracy_recall,
            accuracy_full: metrics.accuracy_full,
        })
    }

    /// Runs until `config.epochs` epochs are complete, reporting each record.
    pub fn run(
        &mut self,
        mut on_record: impl FnMut(&MetricsRecord),
    ) -> std::result::Result<Vec<MetricsRecord>, TrainError> {
        let mut records = Vec::with_capacity(self.config.epochs.saturating_sub(self.epoch));
        while self.epoch < self.config.epochs {
            let r = self.run_epoch()?;
            on_record(&r);
            records.push(r);
        }
        Ok(records)
    }
}

/// Trains a fresh copy-task model; returns every epoch record and the trainer.
pub fn train_copy_task(
    kind: ModelKind,
    hidden: usize,
    spec: CopyTaskSpec,
    config: TrainConfig,
) -> std::result::Result<(Vec<MetricsRecord>, Trainer), TrainError> {
    let mut trainer = Trainer::new(kind, hidden, spec, config)?;
    let records = trainer.run(|_| {})?;
    Ok((records, trainer))
}

/// A scalar function of a set of parameters with an analytic gradient.
pub trait Objective {
    fn value(&self) -> Result<f64>;
    /// Zeroes then populates every parameter gradient; returns the value.
    fn value_and_grads(&mut self) -> Result<f64>;
    fn named_params(&self) -> Vec<(String, &Parameter)>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;
}

/// Copy-model cross-entropy on a fixed sample.
pub struct CopyObjective {
    pub model: CopyModel,
    pub inputs: Tensor,
    pub targets: Vec<usize>,
}

impl Objective for CopyObjective {
    fn value(&self) -> Result<f64> {
        self.model.loss(&self.inputs, &self.targets)
    }

    fn value_and_grads(&mut self) -> Result<f64> {
        self.model.zero_grad();
        Ok(self.model.loss_and_grads(&self.inputs, &self.targets)?.0)
    }

    fn named_params(&self) -> Vec<(String, &Parameter)> {
        self.model.named_params()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.model.params_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckRow {
    pub name: String,
    pub count: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn flagged(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.flagged).map(|r| r.name.as_str()).collect()
    }
}

/// Overwrites every parameter with values uniform on `[-scale, scale)`.
///
/// Gradient checks use this: at small initial scales some gradients fall to
/// the finite-difference noise floor and relative errors stop being informative.
pub fn redraw_uniform(params: &mut [&mut Parameter], scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = scale * rng.gen_range(-1.0..1.0));
    }
}

/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares analytic gradients with central differences of step `h`.
pub fn grad_check(objective: &mut impl Objective, tolerance: f64, h: f64) -> Result<GradCheckReport> {
    objective.value_and_grads()?;
    let analytic: Vec<Tensor> = objective.named_params().iter().map(|(_, p)| p.grad.clone()).collect();
    compare_gradients(objective, &analytic, tolerance, h)
}

/// Like [`grad_check`] but against caller-supplied analytic gradients.
pub fn compare_gradients(
    objective: &mut impl Objective,
    analytic: &[Tensor],
    tolerance: f64,
    h: f64,
) -> Result<GradCheckReport> {
    let names: Vec<String> = objective.named_params().into_iter().map(|(n, _)| n).collect();
    if analytic.len() != names.len() {
        return Err(Error::shape(&[names.len()], &[analytic.len()]));
    }
    let mut rows = Vec::with_capacity(names.len());
    for (pi, (name, grad)) in names.into_iter().zip(analytic).enumerate() {
        let count = grad.len();
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for k in 0..count {
            let original = objective.params_mut()[pi].value.data()[k];
            objective.params_mut()[pi].value.data_mut()[k] = original + h;
            let plus = objective.value()?;
            objective.params_mut()[pi].value.data_mut()[k] = original - h;
            let minus = objective.value()?;
            objective.params_mut()[pi].value.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[k];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        rows.push(GradCheckRow {
            name,
            count,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            flagged: max_rel.is_nan() || max_rel >= tolerance,
        });
    }
    let max_rel_error = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { rows, max_rel_error, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new(Tensor::scalar(v));
        p.accumulate_grad(&Tensor::scalar(g)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = scalar_param(1.25, 0.0);
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        adam.update(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data()[0], 1.25);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.003, -2.5, 170.0] {
            let mut p = scalar_param(0.0, g);
            let mut adam = Adam::new(0.01, 0.9, 0.999, 1e-8);
            adam.update(&mut [&mut p]).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.value.data()[0] - expected).abs() < 1e-12);
            assert!((p.value.data()[0].abs() - 0.01).abs() < 1e-5);
        }
    }

    #[test]
    fn update_without_gradients_is_a_state_error() {
        let mut p = Parameter::zeros(&[2]);
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        assert!(matches!(adam.update(&mut [&mut p]), Err(Error::State(_))));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Parameter::new(Tensor::scalar(0.0));
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        for _ in 0..200 {
            let w = p.value.data()[0];
            p.zero_grad();
            p.accumulate_grad(&Tensor::scalar(2.0 * (w - 3.0))).unwrap();
            adam.update(&mut [&mut p]).unwrap();
        }
        assert!((p.value.data()[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn annealer_halves_after_patience() {
        let mut a = Annealer::new(Anneal { halving_factor: 0.5, patience: 2 });
        let mut lr = 1.0;
        lr = a.observe(3.0, lr);
        lr = a.observe(2.0, lr);
        assert_eq!(lr, 1.0);
        lr = a.observe(2.5, lr);
        assert_eq!(lr, 1.0);
        lr = a.observe(2.1, lr);
        assert_eq!(lr, 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut a = scalar_param(0.0, 3.0);
        let mut b = scalar_param(0.0, 4.0);
        let norm = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(norm, 5.0);
        assert!((a.grad.data()[0] - 0.6).abs() < 1e-15);
        assert!((b.grad.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
