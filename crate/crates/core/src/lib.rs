//! Rumor detection with a learned stance-selection policy.
//!
//! A CNN-and-attention detector classifies a thread's veracity from its
//! source post and comments. A BiLSTM policy decides, per comment, whether
//! the detector also sees that comment's weak stance label. The detector is
//! trained by cross-entropy and the policy by REINFORCE, on alternating
//! mini-batches.

pub mod agent;
pub mod audit;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod rng;
pub mod sweep;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
