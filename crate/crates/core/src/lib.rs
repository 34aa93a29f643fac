pub mod channels;
pub mod classical;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod minsuff;
pub mod opspace;
pub mod products;
pub mod random;
pub mod structure;
pub mod suite;

pub use error::{Error, ErrorClass, Result};
