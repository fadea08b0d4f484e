//! Gradient-descent training of small tanh networks viewed as a discrete-time
//! dynamical system.
//!
//! The crate covers the minimal two-neuron model (loss, analytic derivatives,
//! the gradient-descent map and its Jacobian), Lyapunov spectra split into
//! longitudinal and transverse parts, destination maps over planes of
//! initializations, uncertainty-exponent estimation, and a bias-free
//! multilayer analog trained with mini-batch SGD.
//!
//! Everything is deterministic: identical inputs give bitwise-identical
//! outputs, independent of the number of workers used for sweeps.

pub mod basin;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod formats;
pub mod hexfloat;
pub mod linalg;
pub mod lyapunov;
pub mod mlp;
pub mod model;
pub mod parallel;
pub mod seed;
pub mod stats;
pub mod symmetry;
pub mod uncertainty;

pub use error::{Error, Result};
pub use model::{Dataset, ModelConfig, ParamVec};
