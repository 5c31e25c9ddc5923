//! Active slosh damping toolkit: tank plant model, uncertainty sampling,
//! pulse-test identification, frequency-domain analysis, robust
//! fixed-structure controller tuning, the runtime control architecture and a
//! closed-loop simulator.
//!
//! Numerical building blocks are generic over [`scalar::Scalar`]; the aliases
//! below fix the precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod architecture;
pub mod error;
pub mod freq;
pub mod lti;
pub mod ode;
pub mod plant;
pub mod scalar;
pub mod sim;
pub mod synthesis;
pub mod sysid;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type StateSpace = lti::StateSpace<f64>;
pub type StateSpaceF32 = lti::StateSpace<f32>;
pub type DiscreteSystem = lti::DiscreteSystem<f64>;
pub type DiscreteSystemF32 = lti::DiscreteSystem<f32>;
pub type PlantParams = plant::PlantParams<f64>;
pub type PlantParamsF32 = plant::PlantParams<f32>;
pub type FreqGrid = freq::FreqGrid<f64>;
pub type FreqGridF32 = freq::FreqGrid<f32>;
pub type WeightedLoop = freq::WeightedLoop<f64>;
pub type Architecture = architecture::Architecture<f64>;
pub type ArchitectureF32 = architecture::Architecture<f32>;
