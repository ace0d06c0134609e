//! Cooperative planar manipulators carrying a shared payload with semi-active,
//! regenerative joints: closed-chain dynamics, impedance control with virtual
//! matching, energy accounting, passivity audits and gain optimization.

// `!(x > 0.0)` also rejects NaN; indexed loops follow the index notation of the equations.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod control;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod export;
pub mod kinematics;
pub mod optimize;
pub mod scenario;
pub mod sim;

pub use error::{CrmError, Result};
pub use optimize::ExecMode;
pub use scenario::ScenarioConfig;
pub use sim::{RolloutSummary, Simulation};
