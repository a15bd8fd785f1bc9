use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Germ;
use crate::error::{Error, Result};
use crate::qmc::{self, distance, norm};

/// Closed-form singular sets. All of them are cones through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum AnalyticZ {
    /// `Z = {0}`.
    Origin,
    /// `Z = {x : x_i = 0 for every i in coords}`.
    Subspace { coords: Vec<usize> },
    /// `Z = {x : x_i = 0 for some i in coords}`.
    HyperplaneUnion { coords: Vec<usize> },
}

impl AnalyticZ {
    fn distance(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticZ::Origin => norm(x),
            AnalyticZ::Subspace { coords } => {
                // scaled so tiny coordinates do not underflow to an exact zero
                let scale = coords.iter().map(|&i| x[i].abs()).fold(0.0, f64::max);
                if scale == 0.0 {
                    0.0
                } else {
                    scale * coords.iter().map(|&i| (x[i] / scale).powi(2)).sum::<f64>().sqrt()
                }
            }
            AnalyticZ::HyperplaneUnion { coords } => {
                coords.iter().map(|&i| x[i].abs()).fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn project(&self, x: &mut [f64], pick: usize) {
        match self {
            AnalyticZ::Origin => x.iter_mut().for_each(|v| *v = 0.0),
            AnalyticZ::Subspace { coords } => coords.iter().for_each(|&i| x[i] = 0.0),
            AnalyticZ::HyperplaneUnion { coords } => x[coords[pick % coords.len()]] = 0.0,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let coords = match self {
            AnalyticZ::Origin => return Ok(()),
            AnalyticZ::Subspace { coords } | AnalyticZ::HyperplaneUnion { coords } => coords,
        };
        if coords.is_empty() {
            return Err(Error::invalid("analytic Z needs at least one coordinate"));
        }
        if let Some(&bad) = coords.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("coordinate {bad} out of range for n = {n}")));
        }
        Ok(())
    }
}

/// A generator piece of a sampled singular set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZPiece {
    Point(Vec<f64>),
    Segment { from: Vec<f64>, to: Vec<f64> },
}

impl ZPiece {
    fn dim(&self) -> usize {
        match self {
            ZPiece::Point(p) => p.len(),
            ZPiece::Segment { from, .. } => from.len(),
        }
    }

    fn exact_distance(&self, x: &[f64]) -> f64 {
        match self {
            ZPiece::Point(p) => distance(p, x),
            ZPiece::Segment { from, to } => {
                let d: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
                let len2: f64 = d.iter().map(|v| v * v).sum();
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (x.iter().zip(from).zip(&d).map(|((xi, a), di)| (xi - a) * di).sum::<f64>() / len2).clamp(0.0, 1.0)
                };
                let q: Vec<f64> = from.iter().zip(&d).map(|(a, di)| a + t * di).collect();
                distance(&q, x)
            }
        }
    }

    fn cloud(&self, resolution: usize) -> Vec<Vec<f64>> {
        match self {
            ZPiece::Point(p) => vec![p.clone()],
            ZPiece::Segment { from, to } => (0..=resolution)
                .map(|i| {
                    let t = i as f64 / resolution as f64;
                    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
                })
                .collect(),
        }
    }
}

/// Finite point cloud on `Z`, refined by doubling the segment resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledZ {
    pub pieces: Vec<ZPiece>,
    #[serde(default = "default_resolution")]
    pub base_resolution: usize,
}

fn default_resolution() -> usize {
    64
}

const SAMPLE_REL_STABLE: f64 = 1e-3;
const SAMPLE_MAX_LEVELS: u32 = 16;
/// Membership threshold for sampled sets (exact projection onto pieces).
pub const SAMPLE_MEMBER_TOL: f64 = 1e-12;

impl SampledZ {
    fn cloud_distance(&self, x: &[f64], resolution: usize) -> f64 {
        self.pieces
            .iter()
            .flat_map(|p| p.cloud(resolution))
            .map(|q| distance(&q, x))
            .fold(f64::INFINITY, f64::min)
    }

    fn distance(&self, x: &[f64]) -> Result<f64> {
        let mut res = self.base_resolution.max(1);
        let mut prev = self.cloud_distance(x, res);
        for _ in 0..SAMPLE_MAX_LEVELS {
            res *= 2;
            let next = self.cloud_distance(x, res);
            if (prev - next).abs() <= SAMPLE_REL_STABLE * next || prev == next {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::Convergence(format!(
            "sampled distance at {x:?} still moving after {SAMPLE_MAX_LEVELS} refinements (last {prev:e})"
        )))
    }

    fn exact_distance(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.exact_distance(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Serializable implicit-variant parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitDef {
    #[serde(default = "default_implicit_tol")]
    pub tolerance: f64,
}

fn default_implicit_tol() -> f64 {
    1e-10
}

impl Default for ImplicitDef {
    fn default() -> Self {
        ImplicitDef { tolerance: default_implicit_tol() }
    }
}

/// The `z` block of a germ file. Precedence when resolving: analytic, samples, implicit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZSpecDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticZ>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampledZ>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicit: Option<ImplicitDef>,
}

/// `Z = {x : nu(df(x)) <= tolerance}` located by descent on `nu(df)^2`.
#[derive(Clone)]
pub struct ImplicitZ {
    germ: Arc<dyn Germ>,
    tolerance: f64,
}

const DESCENT_MAX_ITER: usize = 4000;

/// Outcome of a local descent on `nu(df)^2`.
#[derive(Debug, Clone, PartialEq)]
enum Descent {
    Zero(Vec<f64>),
    Stationary { point: Vec<f64>, nu: f64 },
    Unfinished { point: Vec<f64>, nu: f64 },
}

impl ImplicitZ {
    fn nu_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.germ.jacobian(x)?.nu())
    }

    fn descend(&self, start: &[f64]) -> Result<Descent> {
        let n = start.len();
        let mut y = start.to_vec();
        let mut value = self.nu_at(&y)?.powi(2);
        let mut step: f64 = 1.0;
        for _ in 0..DESCENT_MAX_ITER {
            let nu = value.sqrt();
            if nu <= self.tolerance {
                return Ok(Descent::Zero(y));
            }
            let h = 1e-7 * norm(&y).max(1e-3);
            let mut grad = vec![0.0; n];
            for i in 0..n {
                let mut p = y.clone();
                let mut q = y.clone();
                p[i] += h;
                q[i] -= h;
                grad[i] = (self.nu_at(&p)?.powi(2) - self.nu_at(&q)?.powi(2)) / (2.0 * h);
            }
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm2.sqrt() <= 1e-14 {
                return Ok(Descent::Stationary { point: y, nu });
            }
            // Armijo backtracking, reusing the last accepted step
            step = (step * 4.0).min(1e6);
            loop {
                let trial: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                let tv = self.nu_at(&trial)?.powi(2);
                if tv <= value - 1e-4 * step * gnorm2 {
                    y = trial;
                    value = tv;
                    break;
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Ok(Descent::Stationary { point: y, nu });
                }
            }
        }
        let nu = value.sqrt();
        Ok(Descent::Unfinished { point: y, nu })
    }

    fn distance(&self, x: &[f64]) -> Result<f64> {
        if self.nu_at(x)? <= self.tolerance {
            return Ok(0.0);
        }
        // 0 lies in Z, so |x| is always an upper bound.
        let mut best = norm(x);
        let n = x.len();
        let mut starts = vec![x.to_vec()];
        for i in 0..n {
            for sign in [-1.0, 1.0] {
                for frac in [0.25, 0.5] {
                    let mut s = x.to_vec();
                    s[i] += sign * frac * best;
                    starts.push(s);
                }
            }
        }
        for (idx, s) in starts.iter().enumerate() {
            match self.descend(s)? {
                Descent::Zero(y) => best = best.min(distance(x, &y)),
                Descent::Unfinished { point, nu } if idx == 0 => {
                    return Err(Error::Convergence(format!(
                        "descent on nu(df)^2 from {x:?} stopped at {point:?} with nu = {nu:e} after {DESCENT_MAX_ITER} iterations"
                    )));
                }
                _ => {}
            }
        }
        Ok(best)
    }
}

/// Singular set `Z` with a computable distance.
#[derive(Clone)]
pub enum ZSpec {
    Analytic { n: usize, set: AnalyticZ },
    Samples { n: usize, set: SampledZ },
    Implicit(ImplicitZ),
}

impl fmt::Debug for ZSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZSpec::Analytic { n, set } => f.debug_struct("Analytic").field("n", n).field("set", set).finish(),
            ZSpec::Samples { n, set } => f.debug_struct("Samples").field("n", n).field("set", set).finish(),
            ZSpec::Implicit(z) => f.debug_struct("Implicit").field("tolerance", &z.tolerance).finish(),
        }
    }
}

impl ZSpec {
    pub fn origin(n: usize) -> Self {
        ZSpec::Analytic { n, set: AnalyticZ::Origin }
    }

    pub fn subspace(n: usize, coords: Vec<usize>) -> Result<Self> {
        let set = AnalyticZ::Subspace { coords };
        set.validate(n)?;
        Ok(ZSpec::Analytic { n, set })
    }

    pub fn hyperplane_union(n: usize, coords: Vec<usize>) -> Result<Self> {
        let set = AnalyticZ::HyperplaneUnion { coords };
        set.validate(n)?;
        Ok(ZSpec::Analytic { n, set })
    }

    pub fn sampled(n: usize, set: SampledZ) -> Result<Self> {
        if set.pieces.is_empty() {
            return Err(Error::invalid("sampled Z needs at least one piece"));
        }
        if let Some(p) = set.pieces.iter().find(|p| p.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: p.dim() });
        }
        if set.exact_distance(&vec![0.0; n]) > SAMPLE_MEMBER_TOL {
            return Err(Error::invalid("sampled Z must contain the origin"));
        }
        Ok(ZSpec::Samples { n, set })
    }

    pub fn implicit(germ: Arc<dyn Germ>, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::invalid("implicit tolerance must be positive"));
        }
        let z = ImplicitZ { germ, tolerance };
        let n = z.germ.domain_dim();
        if z.nu_at(&vec![0.0; n])? > tolerance {
            return Err(Error::invalid("nu(df(0)) exceeds the tolerance, so 0 is not in Z"));
        }
        Ok(ZSpec::Implicit(z))
    }

    /// Resolves a file block: analytic if present, else samples, else implicit (needs `germ`).
    pub fn resolve(def: &ZSpecDef, n: usize, germ: Option<Arc<dyn Germ>>) -> Result<Self> {
        if let Some(set) = &def.analytic {
            set.validate(n)?;
            return Ok(ZSpec::Analytic { n, set: set.clone() });
        }
        if let Some(set) = &def.samples {
            return Self::sampled(n, set.clone());
        }
        let imp = def.implicit.clone().unwrap_or_default();
        let germ = germ.ok_or_else(|| Error::invalid("implicit Z needs a germ"))?;
        if germ.domain_dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: germ.domain_dim() });
        }
        Self::implicit(germ, imp.tolerance)
    }

    pub fn to_def(&self) -> ZSpecDef {
        match self {
            ZSpec::Analytic { set, .. } => ZSpecDef { analytic: Some(set.clone()), ..Default::default() },
            ZSpec::Samples { set, .. } => ZSpecDef { samples: Some(set.clone()), ..Default::default() },
            ZSpec::Implicit(z) => ZSpecDef {
                implicit: Some(ImplicitDef { tolerance: z.tolerance }),
                ..Default::default()
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ZSpec::Analytic { n, .. } | ZSpec::Samples { n, .. } => *n,
            ZSpec::Implicit(z) => z.germ.domain_dim(),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    /// `dist(x, Z)`: exact for analytic sets, a converged cloud minimum for sampled sets,
    /// and the distance to the nearest located zero of `nu(df)` for implicit sets.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        match self {
            ZSpec::Analytic { set, .. } => Ok(set.distance(x)),
            ZSpec::Samples { set, .. } => set.distance(x),
            ZSpec::Implicit(z) => z.distance(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        Ok(match self {
            ZSpec::Analytic { set, .. } => set.distance(x) == 0.0,
            ZSpec::Samples { set, .. } => set.exact_distance(x) <= SAMPLE_MEMBER_TOL,
            ZSpec::Implicit(z) => z.nu_at(x)? <= z.tolerance,
        })
    }

    /// Whether membership and distance are exact (analytic variant).
    pub fn is_exact(&self) -> bool {
        matches!(self, ZSpec::Analytic { .. })
    }

    /// Up to `count` points of `Z` in the closed ball of `radius`, deterministic in `seed`.
    /// The origin is always first.
    pub fn sample_in_ball(&self, count: usize, radius: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let mut out = vec![vec![0.0; n]];
        if count <= 1 {
            return Ok(out);
        }
        match self {
            ZSpec::Analytic { set, .. } => {
                if matches!(set, AnalyticZ::Origin) {
                    return Ok(out);
                }
                for (i, mut p) in qmc::ball_points(n, count - 1, radius, seed).into_iter().enumerate() {
                    set.project(&mut p, i);
                    out.push(p);
                }
            }
            ZSpec::Samples { set, .. } => {
                let cloud: Vec<Vec<f64>> = set
                    .pieces
                    .iter()
                    .flat_map(|p| p.cloud(set.base_resolution.max(1)))
                    .filter(|q| norm(q) <= radius)
                    .collect();
                if !cloud.is_empty() {
                    let stride = (cloud.len() / (count - 1)).max(1);
                    out.extend(cloud.into_iter().step_by(stride).take(count - 1));
                }
            }
            ZSpec::Implicit(z) => {
                for s in qmc::ball_points(n, 4 * count, radius, seed) {
                    if out.len() >= count {
                        break;
                    }
                    if let Descent::Zero(y) = z.descend(&s)? {
                        if norm(&y) <= radius {
                            out.push(y);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::germ::PolyGermMap;

    #[test]
    fn analytic_distances() {
        let z = ZSpec::subspace(2, vec![0]).unwrap();
        assert_eq!(z.distance(&[0.3, -2.0]).unwrap(), 0.3);
        assert!(z.contains(&[0.0, 5.0]).unwrap());
        assert!(!z.contains(&[1e-300, 5.0]).unwrap());

        let o = ZSpec::origin(3);
        assert_eq!(o.distance(&[1.0, 2.0, 2.0]).unwrap(), 3.0);

        let cross = ZSpec::hyperplane_union(2, vec![0, 1]).unwrap();
        assert_eq!(cross.distance(&[0.2, -0.5]).unwrap(), 0.2);
        assert!(z.distance(&[1.0]).is_err());
        assert!(ZSpec::subspace(2, vec![2]).is_err());
    }

    #[test]
    fn sampled_axes() {
        let set = SampledZ {
            pieces: vec![
                ZPiece::Segment { from: vec![-1.0, 0.0], to: vec![1.0, 0.0] },
                ZPiece::Segment { from: vec![0.0, -1.0], to: vec![0.0, 1.0] },
            ],
            base_resolution: 10,
        };
        let z = ZSpec::sampled(2, set).unwrap();
        let d = z.distance(&[0.2, 0.5]).unwrap();
        assert!((d - 0.2).abs() <= 1e-3, "{d}");
        assert!(d >= 0.2);
        assert!(z.contains(&[0.0, 0.123]).unwrap());
    }

    #[test]
    fn sampled_requires_origin() {
        let set = SampledZ {
            pieces: vec![ZPiece::Point(vec![1.0, 0.0])],
            base_resolution: 4,
        };
        assert!(ZSpec::sampled(2, set).is_err());
    }

    #[test]
    fn implicit_matches_analytic_hyperplane() {
        let f = Arc::new(PolyGermMap::scalar(2, 2, &[(1, &[2, 0])]).unwrap());
        let z = ZSpec::implicit(f, 1e-10).unwrap();
        let d = z.distance(&[0.3, -2.0]).unwrap();
        assert!((d - 0.3).abs() < 1e-9, "{d}");
        assert!(z.contains(&[0.0, 0.7]).unwrap());
        let pts = z.sample_in_ball(8, 1.0, 3).unwrap();
        assert!(pts.len() > 1);
        for p in pts {
            assert!(p[0].abs() < 1e-9);
        }
    }

    #[test]
    fn implicit_requires_origin_in_z() {
        // x + x^2 is regular at the origin
        let f = Arc::new(PolyGermMap::scalar(1, 2, &[(1, &[1]), (1, &[2])]).unwrap());
        assert!(ZSpec::implicit(f, 1e-10).is_err());
    }

    #[test]
    fn resolve_precedence() {
        let def = ZSpecDef {
            analytic: Some(AnalyticZ::Origin),
            samples: Some(SampledZ { pieces: vec![ZPiece::Point(vec![0.0, 0.0])], base_resolution: 1 }),
            implicit: None,
        };
        assert!(matches!(ZSpec::resolve(&def, 2, None).unwrap(), ZSpec::Analytic { .. }));
        let def = ZSpecDef { analytic: None, ..def };
        assert!(matches!(ZSpec::resolve(&def, 2, None).unwrap(), ZSpec::Samples { .. }));
        assert!(ZSpec::resolve(&ZSpecDef::default(), 2, None).is_err());
    }

    #[test]
    fn samples_on_analytic_sets_are_members() {
        let z = ZSpec::hyperplane_union(3, vec![0, 2]).unwrap();
        let pts = z.sample_in_ball(40, 0.5, 9).unwrap();
        assert_eq!(pts.len(), 40);
        for p in &pts {
            assert!(z.contains(p).unwrap());
            assert!(norm(p) <= 0.5 + 1e-15);
        }
    }
}
