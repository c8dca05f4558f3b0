//! Joint audio-visual speech enhancement and CTC phone recognition.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod losses;
pub mod matrix;
pub mod net;
pub mod phones;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use phones::{PhoneInventory, PhoneSequence};
