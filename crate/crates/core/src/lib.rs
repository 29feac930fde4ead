//! High-precision simulation of optimistic no-regret dynamics (OFTRL and
//! OOMD) in two-player zero-sum matrix games, with tools to locate the
//! stage structure of a run on the hard 2x2 instance, verify regularizer
//! assumptions and check the duplication lift.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod games;
pub mod io;
pub mod numerics;
pub mod regularizers;

pub use error::{Error, Result};
pub use games::{MatrixGame, SimplexPoint};
pub use numerics::{Context, Real, Tolerance};
pub use regularizers::RegularizerKind;
