//! Polynomial map germs, their jets, and the singular set `Z`.

mod coeff;
mod io;
mod map;
mod pair;
mod poly;
mod zspec;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linmap::LinearMap;

pub use coeff::Coeff;
pub use io::GermFile;
pub use map::{JetPoly, PolyGermMap, MAX_DEGREE};
pub use pair::{DifferenceBounds, GermPair, JetCheck, AUTO_Z_POINTS, JET_FLOAT_TOL};
pub use poly::{FloatPoly, Poly, Term};
pub use zspec::{AnalyticZ, ImplicitDef, ImplicitZ, SampledZ, ZPiece, ZSpec, ZSpecDef, SAMPLE_MEMBER_TOL};

/// Black-box smooth map `(R^n, 0) -> (R^m, 0)` seen through its first two derivatives.
pub trait Germ: Send + Sync {
    fn domain_dim(&self) -> usize;
    fn codomain_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<LinearMap>;
    /// Hessian of component `component` at `x`.
    fn hessian(&self, component: usize, x: &[f64]) -> Result<DMatrix<f64>>;
}
