//! g-expectations on a binomial lattice, the g-capacities they induce,
//! and Choquet integrals against those capacities.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, with `F32*` variants for single precision.

pub mod bsde;
pub mod choquet;
pub mod claim;
pub mod closedform;
pub mod driver;
pub mod error;
pub mod lattice;
pub mod pde;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Driver = driver::DriverSpec<f64>;
pub type TimeFn = driver::TimeFunction<f64>;
pub type Claim = claim::TerminalClaim<f64>;
pub type Intervals = claim::IntervalSet<f64>;
pub type Lattice = lattice::LatticeGrid<f64>;
pub type Surface = bsde::SolutionSurface<f64>;
pub type Capacity = choquet::Capacity<f64>;
pub type Choquet = choquet::ChoquetResult<f64>;
pub type Gaps = choquet::AdditivityGaps<f64>;
pub type HeatSurface = pde::PdeSurface<f64>;

pub type F32Driver = driver::DriverSpec<f32>;
pub type F32Claim = claim::TerminalClaim<f32>;
pub type F32Lattice = lattice::LatticeGrid<f32>;
pub type F32Capacity = choquet::Capacity<f32>;
