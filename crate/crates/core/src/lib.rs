//! Online energy management for a community of HVAC nanogrids served by a public
//! monitoring entity (PME) with a battery.
//!
//! Every slot the PME posts a selling price, a buying price and a battery charge;
//! each nanogrid answers with its HVAC consumption. Both sides minimize a
//! Lyapunov drift-plus-penalty objective, which keeps indoor temperatures inside
//! the comfort band and the battery inside its limits without any forecast.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

// Checks are written `!(x > 0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod domain;
pub mod error;
pub mod nanogrid;
pub mod num;
pub mod pme;
pub mod scenario_io;
pub mod simulator;
pub mod stackelberg;

pub use error::{Error, Result};
pub use num::Scalar;

pub type NanogridParams = domain::NanogridParams<f64>;
pub type NanogridControl = domain::NanogridControl<f64>;
pub type PmeParams = domain::PmeParams<f64>;
pub type PmeControl = domain::PmeControl<f64>;
pub type Scenario = domain::Scenario<f64>;
pub type LeaderAction = domain::LeaderAction<f64>;
pub type FollowerAction = domain::FollowerAction<f64>;
pub type SlotState = domain::SlotState<f64>;
pub type GameConfig = stackelberg::GameConfig<f64>;
pub type Setup = simulator::Setup<f64>;
pub type Controls = simulator::Controls<f64>;
pub type RunReport = simulator::RunReport<f64>;
