//! Finite-population quasispecies: a Wright-Fisher chain whose fitness depends
//! only on the Hamming distance to a master sequence.
//!
//! * [`landscape`]: eventually constant fitness landscapes and the index set
//!   of fixed points.
//! * [`mutation`]: lumped mutation matrix, its Poisson limit and a
//!   genotype-level enumeration oracle.
//! * [`dynamics`]: mean maps `F` and `G`, closed-form fixed points,
//!   iteration and the sandwich maps.
//! * [`ldp`]: multinomial rate function, jump costs, quasipotential,
//!   `psi(a)` and the phase classifier.
//! * [`simulate`]: exact Monte Carlo of the occupancy chain and hitting
//!   times.
//! * [`stats`]: Cramér transform, exponential scaling fits, estimators.
//! * [`cli`]: the `quasispecies` command line.
//!
//! The deterministic modules are generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64`.

// Negated comparisons reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod landscape;
pub mod ldp;
pub mod mutation;
pub mod num;
pub mod simulate;
pub mod stats;

pub use num::Real;

pub type Landscape = landscape::FitnessLandscape<f64>;
pub type Params = mutation::MutationParams<f64>;
pub type MutationMatrix = mutation::LumpedMutationMatrix<f64>;
pub type Distribution = dynamics::ClassDistribution<f64>;
pub type FixedPoint = dynamics::FixedPoint<f64>;
pub type Grid = ldp::RateCostGrid<f64>;
pub type Quasipotential = ldp::QuasipotentialResult<f64>;

pub type Landscape32 = landscape::FitnessLandscape<f32>;
pub type Params32 = mutation::MutationParams<f32>;
pub type MutationMatrix32 = mutation::LumpedMutationMatrix<f32>;
pub type Distribution32 = dynamics::ClassDistribution<f32>;
