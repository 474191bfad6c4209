//! Block counting processes and fixation lines of Λ-coalescents, and the
//! Ornstein–Uhlenbeck type processes that arise as their scaling limits.

pub mod acceptance;
pub mod diagnostics;
pub mod error;
pub mod limit;
pub mod measures;
pub mod quad;
pub mod rates;
pub mod simulate;
pub mod specfun;
pub mod testfn;

pub use error::{Error, Result};
pub use measures::{assumption_a_params, dust_decompose, levy_density, LimitParams, MeasureSpec, SignedDust};
