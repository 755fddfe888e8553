//! The memory copy-task.
//!
//! Each sequence is `[payload L | blank T | delimiter | blank L]`. Targets are
//! blank everywhere except the final `L` steps, which must reproduce the
//! payload.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::cross_entropy;
use crate::quat::QuaternionVector;
use crate::tensor::Tensor;

pub const N_SYMBOLS: usize = 8;
pub const BLANK: usize = 8;
pub const DELIMITER: usize = 9;
pub const INPUT_CHANNELS: usize = 10;
pub const OUTPUT_CLASSES: usize = 9;
/// Input channels after zero-padding to whole quaternions.
pub const PADDED_CHANNELS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CopyTaskSpec {
    /// Payload length `L`.
    pub seq_len: usize,
    /// Blank delay `T`.
    pub blank_len: usize,
}

impl CopyTaskSpec {
    pub fn new(seq_len: usize, blank_len: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Input("copy-task payload length must be at least 1".into()));
        }
        Ok(Self { seq_len, blank_len })
    }

    /// `2L + T + 1`.
    pub fn total_steps(&self) -> usize {
        2 * self.seq_len + self.blank_len + 1
    }

    /// Index of the first recall step, `L + T + 1`.
    pub fn recall_start(&self) -> usize {
        self.seq_len + self.blank_len + 1
    }

    /// Input symbol indices (into the 10 input channels) for one payload.
    pub fn input_indices(&self, payload: &[usize]) -> Vec<usize> {
        let mut seq = Vec::with_capacity(self.total_steps());
        seq.extend_from_slice(payload);
        seq.extend(std::iter::repeat_n(BLANK, self.blank_len));
        seq.push(DELIMITER);
        seq.extend(std::iter::repeat_n(BLANK, self.seq_len));
        seq
    }

    /// Target class indices for one payload.
    pub fn target_indices(&self, payload: &[usize]) -> Vec<usize> {
        let mut seq = vec![BLANK; self.recall_start()];
        seq.extend_from_slice(payload);
        seq
    }
}

/// A batch of copy-task sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyBatch {
    pub spec: CopyTaskSpec,
    /// One-hot `[batch, steps, 10]`.
    pub inputs: Tensor,
    /// `batch × steps` class indices, row-major.
    pub targets: Vec<usize>,
    pub payloads: Vec<Vec<usize>>,
}

impl CopyBatch {
    pub fn from_payloads(spec: CopyTaskSpec, payloads: Vec<Vec<usize>>) -> Result<Self> {
        let steps = spec.total_steps();
        let mut inputs = Tensor::zeros(&[payloads.len(), steps, INPUT_CHANNELS]);
        let mut targets = Vec::with_capacity(payloads.len() * steps);
        for (b, payload) in payloads.iter().enumerate() {
            if payload.len() != spec.seq_len || payload.iter().any(|&s| s >= N_SYMBOLS) {
                return Err(Error::Input(format!("invalid payload {payload:?}")));
            }
            for (t, sym) in spec.input_indices(payload).into_iter().enumerate() {
                inputs.data_mut()[(b * steps + t) * INPUT_CHANNELS + sym] = 1.0;
            }
            targets.extend(spec.target_indices(payload));
        }
        Ok(Self { spec, inputs, targets, payloads })
    }

    pub fn batch_size(&self) -> usize {
        self.payloads.len()
    }

    pub fn steps(&self) -> usize {
        self.spec.total_steps()
    }
}

/// Samples `batch` sequences with payload symbols uniform on `0..8`.
pub fn generate_batch(spec: CopyTaskSpec, batch: usize, rng: &mut impl Rng) -> CopyBatch {
    let payloads = (0..batch).map(|_| (0..spec.seq_len).map(|_| rng.gen_range(0..N_SYMBOLS)).collect()).collect();
    CopyBatch::from_payloads(spec, payloads).expect("sampled payloads are valid")
}

/// Random stream for the batch of a given epoch; independent of every other epoch.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch + 1);
    rng
}

/// Zero-pads a 10-channel step to 12 reals and reads it as 3 split-layout quaternions.
pub fn pad_to_quaternions(channels: &[f64]) -> Result<QuaternionVector> {
    if channels.len() != INPUT_CHANNELS {
        return Err(Error::shape(&[INPUT_CHANNELS], &[channels.len()]));
    }
    let mut v = channels.to_vec();
    v.resize(PADDED_CHANNELS, 0.0);
    QuaternionVector::from_components(v)
}

pub fn unpad(v: &QuaternionVector) -> Vec<f64> {
    v.components()[..INPUT_CHANNELS].to_vec()
}

/// Anything producing `[batch, steps, classes]` logits for a copy batch.
pub trait SequenceClassifier {
    fn logits(&self, batch: &CopyBatch) -> Result<Tensor>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy_recall: f64,
    pub accuracy_full: f64,
}

/// Fraction of correct argmax predictions over the recall window and over all steps.
pub fn score_predictions(predictions: &[usize], batch: &CopyBatch) -> (f64, f64) {
    let steps = batch.steps();
    let start = batch.spec.recall_start();
    let (mut recall_hits, mut all_hits) = (0usize, 0usize);
    for (idx, (p, t)) in predictions.iter().zip(&batch.targets).enumerate() {
        if p == t {
            all_hits += 1;
            if idx % steps >= start {
                recall_hits += 1;
            }
        }
    }
    let n = batch.batch_size();
    (recall_hits as f64 / (n * batch.spec.seq_len) as f64, all_hits as f64 / (n * steps) as f64)
}

pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let classes = *logits.shape().last().expect("non-scalar logits");
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect()
}

/// Metrics from `[batch, steps, classes]` logits.
pub fn metrics_from_logits(logits: &Tensor, batch: &CopyBatch) -> Result<EvalMetrics> {
    let classes = *logits.shape().last().unwrap_or(&0);
    let expected = [batch.batch_size(), batch.steps(), OUTPUT_CLASSES];
    if logits.shape() != expected {
        return Err(Error::shape(&expected, logits.shape()));
    }
    let flat = logits.clone().reshape(&[batch.batch_size() * batch.steps(), classes])?;
    let loss = cross_entropy(&flat, &batch.targets)?;
    let (accuracy_recall, accuracy_full) = score_predictions(&argmax_rows(&flat), batch);
    Ok(EvalMetrics { loss, accuracy_recall, accuracy_full })
}

pub fn evaluate(model: &impl SequenceClassifier, batch: &CopyBatch) -> Result<EvalMetrics> {
    metrics_from_logits(&model.logits(batch)?, batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_layout() {
        let spec = CopyTaskSpec::new(2, 3).unwrap();
        assert_eq!(spec.input_indices(&[3, 7]), vec![3, 7, 8, 8, 8, 9, 8, 8]);
        assert_eq!(spec.target_indices(&[3, 7]), vec![8, 8, 8, 8, 8, 8, 3, 7]);
    }

    #[test]
    fn long_delay_length() {
        assert_eq!(CopyTaskSpec::new(10, 100).unwrap().total_steps(), 121);
    }

    #[test]
    fn zero_length_payload_rejected() {
        assert!(CopyTaskSpec::new(0, 5).is_err());
    }

    #[test]
    fn pad_symbol_zero() {
        let mut e0 = vec![0.0; 10];
        e0[0] = 1.0;
        let q = pad_to_quaternions(&e0).unwrap();
        assert_eq!(q.n_quats(), 3);
        assert_eq!(&q.components()[0..3], &[1.0, 0.0, 0.0]);
        assert!(q.components()[3..].iter().all(|&v| v == 0.0));
        assert_eq!(pad_to_quaternions(&[0.0; 10]).unwrap(), QuaternionVector::zeros(3));
        assert!(pad_to_quaternions(&[0.0; 9]).is_err());
    }

    #[test]
    fn pad_round_trip_for_every_channel() {
        for c in 0..INPUT_CHANNELS {
            let mut v = vec![0.0; INPUT_CHANNELS];
            v[c] = 1.0;
            let q = pad_to_quaternions(&v).unwrap();
            // channel c lands in quaternion c % 3, component c / 3
            let quat = q.get(c % 3).to_array();
            assert_eq!(quat[c / 3], 1.0);
            assert_eq!(unpad(&q), v);
        }
    }
}
