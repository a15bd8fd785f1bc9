//! Numerical toolkit for sufficiency of jets relative to a singular set `Z`: the
//! Rabier function and its minor surrogate, sampled Lojasiewicz-type estimates, the
//! trivializing flow between two germs with equal jets on `Z`, and the perturbation
//! construction that breaks sufficiency when the estimate fails.

pub mod bl_construct;
pub mod error;
pub mod germ;
pub mod linmap;
pub mod lojasiewicz;
pub mod ode;
pub mod qmc;
pub mod trivializer;

pub use error::{Error, Result};
pub use germ::{Germ, GermFile, GermPair, PolyGermMap, ZSpec};
pub use linmap::{ComplexLinearMap, EquivalenceBand, LinearMap, MinorIndex};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
