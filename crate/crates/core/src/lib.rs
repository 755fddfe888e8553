//! Quaternion long short-term memory networks built on a small reverse-mode
//! autodiff engine, with a real-valued LSTM baseline, the memory copy-task,
//! parameter accounting and acoustic quaternion features.

pub mod autodiff;
pub mod copy_task;
pub mod error;
pub mod features;
pub mod layers;
pub mod loss;
pub mod model;
pub mod quat;
pub mod recurrent;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{CopyModel, ModelKind};
pub use quat::{hamilton_product, pack_split, unpack_split, Quaternion, QuaternionVector};
pub use tensor::{Parameter, Tensor};
