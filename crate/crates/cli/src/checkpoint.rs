//! Copy-task checkpoints: model weights, Adam moments and run metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use qrnn_core::copy_task::{CopyTaskSpec, INPUT_CHANNELS, OUTPUT_CLASSES};
use qrnn_core::training::{Adam, TrainConfig, Trainer};
use qrnn_core::{CopyModel, ModelKind, Tensor};

use crate::binfile::{read_framed, write_framed};
use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"QRNNCKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub quaternion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskHeader {
    pub seq_len: usize,
    pub blank_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHeader {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: String,
    pub quaternion: bool,
    pub hidden: usize,
    pub input_channels: usize,
    pub output_classes: usize,
    pub scalar: String,
    pub layout: String,
    pub endianness: String,
    pub seed: u64,
    pub epoch: usize,
    pub task: TaskHeader,
    pub training: TrainingHeader,
    pub optimizer_step: u64,
    pub tensors: Vec<TensorEntry>,
}

/// Parsed checkpoint contents.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer) -> Self {
        let model = &trainer.model;
        let kind = model.kind();
        let named = model.named_params();
        let mut entries = Vec::new();
        let mut tensors = Vec::new();
        for (name, p) in &named {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: p.shape().to_vec(),
                quaternion: kind.is_quaternion() && name.starts_with("cell."),
            });
            tensors.push(p.value.clone());
        }
        let opt = &trainer.optimizer;
        for (prefix, moments) in [("adam.m.", opt.first_moments()), ("adam.v.", opt.second_moments())] {
            for ((name, _), t) in named.iter().zip(moments) {
                entries.push(TensorEntry {
                    name: format!("{prefix}{name}"),
                    shape: t.shape().to_vec(),
                    quaternion: kind.is_quaternion() && name.starts_with("cell."),
                });
                tensors.push(t.clone());
            }
        }
        let cfg = &trainer.config;
        let header = CheckpointHeader {
            architecture: kind.to_string(),
            quaternion: kind.is_quaternion(),
            hidden: model.hidden_units(),
            input_channels: INPUT_CHANNELS,
            output_classes: OUTPUT_CLASSES,
            scalar: "f64".into(),
            layout: "split".into(),
            endianness: "little".into(),
            seed: cfg.seed,
            epoch: trainer.epoch(),
            task: TaskHeader { seq_len: trainer.spec.seq_len, blank_len: trainer.spec.blank_len },
            training: TrainingHeader {
                learning_rate: opt.learning_rate,
                batch_size: cfg.batch_size,
                beta1: opt.beta1,
                beta2: opt.beta2,
                epsilon: opt.epsilon,
                clip: cfg.clip,
            },
            optimizer_step: opt.step_count(),
            tensors: entries,
        };
        Self { header, tensors }
    }

    pub fn write_to(&self, w: impl Write) -> Result<(), CliError> {
        write_framed(w, MAGIC, &self.header, self.tensors.iter().flat_map(|t| t.data().iter().copied()))
    }

    pub fn read_from(r: impl Read) -> Result<Self, CliError> {
        let (header, payload): (CheckpointHeader, Vec<f64>) = read_framed(r, MAGIC)?;
        if header.scalar != "f64" || header.layout != "split" || header.endianness != "little" {
            return Err(CliError::Format(format!(
                "unsupported encoding {}/{}/{}",
                header.scalar, header.layout, header.endianness
            )));
        }
        let declared: usize = header.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if declared != payload.len() {
            return Err(CliError::Format(format!(
                "payload holds {} values but header declares {declared}",
                payload.len()
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        let mut offset = 0;
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            tensors.push(Tensor::new(&e.shape, payload[offset..offset + n].to_vec())?);
            offset += n;
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Rebuilds the trainer; `epochs` is the total epoch target.
    pub fn into_trainer(self, epochs: usize) -> Result<Trainer, CliError> {
        let h = &self.header;
        let kind: ModelKind = h.architecture.parse()?;
        let mut model = CopyModel::new(kind, h.hidden, 0);
        let n_params = model.named_params().len();
        let expected_tensors = if h.optimizer_step > 0 { 3 * n_params } else { n_params };
        if self.tensors.len() != expected_tensors {
            return Err(CliError::Format(format!(
                "checkpoint holds {} tensors, expected {expected_tensors}",
                self.tensors.len()
            )));
        }
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        for ((p, t), (entry, name)) in
            model.params_mut().into_iter().zip(&self.tensors).zip(h.tensors.iter().zip(&names))
        {
            if entry.name != *name || p.shape() != t.shape() {
                return Err(CliError::Format(format!("unexpected tensor '{}' {:?}", entry.name, entry.shape)));
            }
            p.value = t.clone();
        }
        let config = TrainConfig {
            learning_rate: h.training.learning_rate,
            epochs,
            batch_size: h.training.batch_size,
            beta1: h.training.beta1,
            beta2: h.training.beta2,
            epsilon: h.training.epsilon,
            seed: h.seed,
            clip: h.training.clip,
            anneal: None,
        };
        let (m, v) = if h.optimizer_step > 0 {
            (self.tensors[n_params..2 * n_params].to_vec(), self.tensors[2 * n_params..].to_vec())
        } else {
            (Vec::new(), Vec::new())
        };
        let optimizer = Adam::from_config(&config).with_state(h.optimizer_step, m, v)?;
        let spec = CopyTaskSpec::new(h.task.seq_len, h.task.blank_len)?;
        Ok(Trainer::resume(model, optimizer, spec, config, h.epoch)?)
    }
}
