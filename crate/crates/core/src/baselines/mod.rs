//! Reference strategies the integrated approach is compared against.

mod cola;
mod drain;
mod flux;
mod potc;

pub use cola::{cola_allocate, cola_allocate_with, ColaOutcome, COLA_BISECTION_TOL};
pub use drain::{drain_evenly, drain_then_balance, DrainStep};
pub use flux::flux_rebalance;
pub use potc::PotcState;
