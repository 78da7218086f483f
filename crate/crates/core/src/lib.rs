//! Numerical workbench for the harmonic Petersson trace formula at
//! prime-power level and the second and third moments of central L-values.

pub mod analytic;
pub mod arith;
pub mod error;
pub mod moments;
pub mod numkernel;
pub mod oldbasis;
pub mod summation;
pub mod trace;

pub use error::{Error, Result};
pub use numkernel::ComplexValue;
pub use summation::CompensatedSum;
pub use trace::{BoundedValue, TraceFormula, TraceParams};
