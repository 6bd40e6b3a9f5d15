//! Closed geodesics on complete surfaces through a penalized loop energy.
//!
//! The crate is organised bottom-up:
//!
//! * [`metric`]: chart metrics, curvature and the geodesic flow, plus the model zoo;
//! * [`loops`]: discrete loops, their energy, gradient and Hessian;
//! * [`penalty`]: basepoint penalties and the genuine/penalized dichotomy;
//! * [`variational`]: preconditioned descent, sweepout minimax and penalty continuation;
//! * [`jacobi`]: Jacobi fields, monodromy, conjugate points;
//! * [`morse`]: second variation, index and nullity, iteration inequalities.

// `!(a < b)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops follow the tensor formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod jacobi;
pub mod loops;
pub mod metric;
pub mod morse;
pub mod ode;
pub mod penalty;
pub mod variational;

pub use error::{Error, Result};
pub use loops::{DiscreteLoop, LoopRecord, LoopTangent};
pub use metric::{ChartPoint, ChartSpec, MetricChart, TangentVector};
pub use penalty::{CriticalCase, PenaltySchedule};
