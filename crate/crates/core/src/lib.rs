//! Control capacities of scalar systems driven through a memoryless
//! multiplicative actuation channel `X[n+1] = a (X[n] + B[n] U[n])`.
//!
//! * [`distributions`]: laws of the gain `B`, sampling and singular-aware expectations.
//! * [`capacity`]: Shannon, zero-error and η-th moment control capacities.
//! * [`side_info`]: capacities when the controller observes which cell `B` fell in.
//! * [`simulate`]: Monte Carlo checks of stabilizability, the strong converse,
//!   additive-noise robustness and the exact scaling identity.
//! * [`carryfree`]: bit-level carry-free models over GF(2).

pub mod capacity;
pub mod carryfree;
pub mod distributions;
pub mod error;
pub mod side_info;
pub mod simulate;

pub use distributions::{ActuationDistribution, Cell, DistributionKind, Moments, SupportInfo};
pub use error::{Error, Result};
