//! Multi-input ciphertext multiplication for RNS-CKKS.

pub mod context;
pub mod cost;
pub mod error;
pub mod keys;
pub mod mult;
pub mod ntt;
pub mod oracle;
pub mod plan;
pub mod poly;
pub mod rescale;
pub mod switch;
pub mod zq;

pub use context::{build_context, Context};
pub use error::{Error, Result};
