//! Dynamic-filter FFT token mixers and the MetaFormer backbones built on them.

// Casts to f64 are no-ops in the default build but not under `f32`.
#![allow(clippy::unnecessary_cast)]

pub mod analysis;
pub mod autograd;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod mixers;
pub mod model;
pub mod oracle;
pub mod param;
pub mod rng;
pub mod spectral;
pub mod tensor;

pub use autograd::{Gradients, Tape, Var};
pub use error::{CheckpointError, Error, Result};
pub use param::{Builder, Init, Initializer, ParamId, ParamKind, ParamStore, Parameter};
pub use tensor::{ComplexTensor, Cplx, Real, Tensor};
