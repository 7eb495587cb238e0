//! Spatio-temporal weather forecasting with attention-weighted
//! convolutional LSTMs.

pub mod autograd;
pub mod checkpoint;
pub mod datastore;
pub mod error;
pub mod flowfield;
pub mod interpolate;
pub mod nets;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
