//! Dense f64 tensors with tape-based reverse-mode autodiff, an Adam
//! optimizer, checkpoint serialization, and finite-difference gradient
//! checking. Deliberately small: only the operations the joint prediction
//! network needs, each with a hand-written backward rule.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
