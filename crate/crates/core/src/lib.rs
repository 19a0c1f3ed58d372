//! Twisted random multiplicative sums at desk scale.
//!
//! The crate samples Steinhaus and Rademacher random multiplicative
//! functions, evaluates the normalized sums `S_x`, the variance proxies
//! `U_x` and `T_{x,eps}`, builds finite Euler-product chaos densities and
//! their random variance `V`, and ships the deterministic analytic
//! ingredients (`rho_theta`, `C_eps`, Wirsing predictions) together with
//! brute-force identity oracles.

pub mod arith;
pub mod batch;
pub mod chaos;
pub mod engine;
pub mod error;
pub mod io;
pub mod multfn;
pub mod oracle;
pub mod scalar;
pub mod special;
pub mod stats;

pub use arith::SieveTables;
pub use engine::{CoefficientDraw, Engine, Model, SumSample};
pub use error::{Result, RmfError};
pub use multfn::{MultiplicativeSpec, ValueTable};
pub use scalar::Real;

pub type RhoTable64 = special::RhoTable<f64>;
pub type RhoTable32 = special::RhoTable<f32>;
pub type ChaosGrid64 = chaos::ChaosGrid<f64>;
pub type ChaosGrid32 = chaos::ChaosGrid<f32>;
pub type EmpiricalSample64 = stats::EmpiricalSample<f64>;
pub type EmpiricalSample32 = stats::EmpiricalSample<f32>;
