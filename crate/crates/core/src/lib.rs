pub mod error;
pub mod maps;
pub mod monotone;
pub mod numerics;
pub mod positivity;
pub mod random;
pub mod suite;
pub mod tracial;
pub mod verdict;

pub use error::{Error, Result};
