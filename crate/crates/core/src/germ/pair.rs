use serde::Serialize;

use super::{Germ, PolyGermMap, ZSpec};
use crate::error::{Error, Result};
use crate::qmc::{self, norm};

/// Absolute tolerance on Taylor coefficients when either germ has float coefficients.
pub const JET_FLOAT_TOL: f64 = 1e-12;
/// Number of automatic validation points drawn from `Z` in the unit ball.
pub const AUTO_Z_POINTS: usize = 32;

/// Two realizations `f`, `f1` of a jet along `Z`.
#[derive(Debug, Clone)]
pub struct GermPair {
    pub f: PolyGermMap,
    pub f1: PolyGermMap,
    pub z: ZSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JetCheck {
    pub equal: bool,
    pub exact: bool,
    pub max_residual: f64,
    pub points_checked: usize,
    /// Radius of the smallest origin-centred ball holding every checked point.
    pub radius: f64,
    /// First point where the jets differ.
    pub witness: Option<Vec<f64>>,
}

/// Per-annulus suprema of `|P| / dist^k` and `|dP| / dist^(k-1)`, `P = f1 - f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceBounds {
    pub radii: Vec<f64>,
    pub value_ratio: Vec<f64>,
    pub gradient_ratio: Vec<f64>,
}

impl GermPair {
    pub fn new(f: PolyGermMap, f1: PolyGermMap, z: ZSpec) -> Result<Self> {
        if f.n() != f1.n() || f.m() != f1.m() || f.k() != f1.k() {
            return Err(Error::invalid(format!(
                "germs disagree on (n, m, k): ({}, {}, {}) vs ({}, {}, {})",
                f.n(),
                f.m(),
                f.k(),
                f1.n(),
                f1.m(),
                f1.k()
            )));
        }
        if z.dim() != f.n() {
            return Err(Error::DimensionMismatch { expected: f.n(), found: z.dim() });
        }
        Ok(GermPair { f, f1, z })
    }

    pub fn n(&self) -> usize {
        self.f.n()
    }

    pub fn k(&self) -> u32 {
        self.f.k()
    }

    /// `P = f1 - f`.
    pub fn difference(&self) -> Result<PolyGermMap> {
        self.f1.difference(&self.f)
    }

    /// Compares the `k`-jets of `f` and `f1` at `points` and at an automatic sample of `Z`.
    pub fn same_k_z_jet(&self, points: &[Vec<f64>], seed: u64) -> Result<JetCheck> {
        for p in points {
            if !self.z.contains(p)? {
                return Err(Error::invalid(format!("validation point {p:?} is not on Z")));
            }
        }
        let mut all = points.to_vec();
        all.extend(self.z.sample_in_ball(AUTO_Z_POINTS + 1, 1.0, seed)?);
        let exact = self.f.is_exact() && self.f1.is_exact();
        let k = self.k();
        let mut max_residual: f64 = 0.0;
        let mut witness = None;
        let mut equal = true;
        for a in &all {
            let jf = self.f.jet_at(a, k)?;
            let jf1 = self.f1.jet_at(a, k)?;
            let r = jf.max_residual(&jf1);
            let differs = if exact { jf != jf1 } else { r > JET_FLOAT_TOL };
            if differs && equal {
                equal = false;
                witness = Some(a.clone());
            }
            max_residual = max_residual.max(r);
        }
        Ok(JetCheck {
            equal,
            exact,
            max_residual,
            points_checked: all.len(),
            radius: all.iter().map(|p| norm(p)).fold(0.0, f64::max),
            witness,
        })
    }

    /// Sampled growth of `P` towards `Z` over shells `[r/2, r]` for each `r` in `radii`.
    pub fn difference_bounds(&self, radii: &[f64], samples: usize, seed: u64) -> Result<DifferenceBounds> {
        let p = self.difference()?;
        let k = self.k() as i32;
        let n = self.n();
        let unit = qmc::shell_points(n, samples, 0.5, 1.0, seed);
        let mut value_ratio = Vec::with_capacity(radii.len());
        let mut gradient_ratio = Vec::with_capacity(radii.len());
        for &r in radii {
            let (mut sv, mut sg) = (0.0f64, 0.0f64);
            for u in &unit {
                let x: Vec<f64> = u.iter().map(|v| v * r).collect();
                let d = self.z.distance(&x)?;
                if d < 1e-9 {
                    continue;
                }
                let val = norm(&p.eval(&x)?);
                let grad = p.jacobian(&x)?.spectral_norm();
                sv = sv.max(val / d.powi(k));
                sg = sg.max(grad / d.powi(k - 1));
            }
            value_ratio.push(sv);
            gradient_ratio.push(sg);
        }
        Ok(DifferenceBounds { radii: radii.to_vec(), value_ratio, gradient_ratio })
    }
}
