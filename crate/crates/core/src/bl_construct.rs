//! Perturbation `F` supported on disjoint balls `B_v` around points `a_v -> 0` off `Z`.
//!
//! Inside `B_v = {|x - a_v| <= dist(a_v, Z) / 4}`,
//! `F(x) = alpha((x - a_v) / d_v) (f(a_v) + <grad f(a_v), x - a_v> + lambda_v |x - a_v|^2 / 2)`,
//! and `F = 0` elsewhere. Then `f - F` and `f` agree to first order at every `a_v`, while
//! `Hess(f - F)(a_v) = Hess f(a_v) - lambda_v I` is nonsingular.

use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::germ::{Germ, PolyGermMap, ZSpec};
use crate::linmap::LinearMap;
use crate::lojasiewicz::ViolationSequence;
use crate::qmc::{self, norm};

pub const OUTER_RADIUS: f64 = 0.25;
pub const DEFAULT_INNER_RADIUS: f64 = 0.125;

/// `e^(-1/s)` for `s > 0`, else 0, with its first two derivatives.
fn g(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let e = (-1.0 / s).exp();
    if e == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let s2 = s * s;
    (e, e / s2, e * (1.0 / (s2 * s2) - 2.0 / (s2 * s)))
}

/// Radial `C^inf` bump: 1 on `|x| <= inner`, 0 on `|x| >= 1/4`, values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpFunction {
    pub inner: f64,
    pub outer: f64,
    /// Upper bound of `|alpha|`.
    pub bound: f64,
}

pub fn make_bump(inner: f64) -> Result<BumpFunction> {
    if !(inner > 0.0 && inner < OUTER_RADIUS) {
        return Err(Error::invalid(format!("inner radius must lie in (0, {OUTER_RADIUS}), got {inner}")));
    }
    Ok(BumpFunction { inner, outer: OUTER_RADIUS, bound: 1.0 })
}

impl BumpFunction {
    /// Profile `S(r)` and its first two derivatives.
    pub fn profile(&self, r: f64) -> (f64, f64, f64) {
        if r <= self.inner {
            return (1.0, 0.0, 0.0);
        }
        if r >= self.outer {
            return (0.0, 0.0, 0.0);
        }
        let (u, du, ddu) = g(self.outer - r);
        let (v, dv, ddv) = g(r - self.inner);
        // u' = -g'(outer - r), u'' = g''(outer - r)
        let (u1, u2) = (-du, ddu);
        let (v1, v2) = (dv, ddv);
        let w = u + v;
        let s = u / w;
        let s1 = (u1 * v - u * v1) / (w * w);
        let s2 = (u2 * v - u * v2) / (w * w) - 2.0 * (u1 * v - u * v1) * (u1 + v1) / (w * w * w);
        (s, s1, s2)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile(norm(x)).0
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        let (_, s1, _) = self.profile(r);
        if s1 == 0.0 {
            return vec![0.0; x.len()];
        }
        x.iter().map(|v| s1 * v / r).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let r = norm(x);
        let (_, s1, s2) = self.profile(r);
        if s1 == 0.0 && s2 == 0.0 {
            return DMatrix::zeros(n, n);
        }
        DMatrix::from_fn(n, n, |i, j| {
            let xx = x[i] * x[j] / (r * r);
            let id = if i == j { 1.0 } else { 0.0 };
            s2 * xx + s1 / r * (id - xx)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub retries: usize,
    pub eigenvalues: Vec<f64>,
}

/// Relative closeness that counts as hitting a Hessian eigenvalue.
pub const EIGEN_COLLISION: f64 = 1e-8;
pub const LAMBDA_BUMP: f64 = 1.0 + 1e-3;
pub const MAX_LAMBDA_RETRIES: usize = 50;

fn collides(lambda: f64, eig: f64) -> bool {
    (lambda - eig).abs() <= EIGEN_COLLISION * lambda.abs().max(eig.abs())
}

/// Moves `lambda` off the spectrum of `hess` by repeated factors of `1 + 1e-3`.
pub fn avoid_eigenvalues(lambda: f64, hess: &DMatrix<f64>) -> Result<LambdaChoice> {
    let eigenvalues: Vec<f64> = SymmetricEigen::new(hess.clone()).eigenvalues.iter().copied().collect();
    let mut lambda = lambda;
    for retries in 0..=MAX_LAMBDA_RETRIES {
        match eigenvalues.iter().find(|&&e| collides(lambda, e)) {
            None => return Ok(LambdaChoice { lambda, retries, eigenvalues }),
            Some(&e) if retries == MAX_LAMBDA_RETRIES => {
                return Err(Error::Construction(format!(
                    "lambda {lambda:e} still within {EIGEN_COLLISION:e} of eigenvalue {e:e} after {MAX_LAMBDA_RETRIES} retries"
                )))
            }
            Some(_) => lambda *= LAMBDA_BUMP,
        }
    }
    unreachable!()
}

/// `lambda_v = dist(a_v, Z)^(k-1)`, moved off the Hessian spectrum of `f` at `a_v` if needed.
pub fn choose_lambdas(f: &dyn Germ, points: &[Vec<f64>], k: u32, z: &ZSpec) -> Result<Vec<LambdaChoice>> {
    if k < 2 {
        return Err(Error::invalid(format!("jet order must be > 1, got {k}")));
    }
    points
        .iter()
        .map(|a| {
            let d = z.distance(a)?;
            if d == 0.0 {
                return Err(Error::invalid(format!("point {a:?} lies on Z")));
            }
            avoid_eigenvalues(d.powi(k as i32 - 1), &f.hessian(0, a)?)
        })
        .collect()
}

/// Data of one ball `B_v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub dist: f64,
    pub lambda: f64,
    pub f_center: f64,
    pub grad_center: Vec<f64>,
}

impl Ball {
    pub fn radius(&self) -> f64 {
        self.dist * OUTER_RADIUS
    }
}

/// The assembled perturbation `F` (scalar germs only).
#[derive(Debug, Clone)]
pub struct PerturbationF {
    f: PolyGermMap,
    z: ZSpec,
    bump: BumpFunction,
    balls: Vec<Ball>,
}

pub const MIN_BALLS: usize = 3;
pub const MAX_BALLS: usize = 16;

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

/// `|a - b| > (r_a + r_b)` in exact arithmetic on the given doubles.
fn exactly_disjoint(a: &Ball, b: &Ball) -> bool {
    let mut d2 = BigRational::zero();
    for (x, y) in a.center.iter().zip(&b.center) {
        let diff = exact(*x) - exact(*y);
        d2 += &diff * &diff;
    }
    // radii are d / 4, so compare |a - b|^2 with ((d_a + d_b) / 4)^2
    let sum = (exact(a.dist) + exact(b.dist)) / BigRational::from_integer(4.into());
    d2 > &sum * &sum
}

pub fn assemble_f(
    f: &PolyGermMap,
    z: &ZSpec,
    seq: &ViolationSequence,
    lambdas: &[f64],
    bump: BumpFunction,
) -> Result<PerturbationF> {
    if f.m() != 1 {
        return Err(Error::invalid(format!("construction needs a scalar germ, got m = {}", f.m())));
    }
    let k = seq.k;
    if !(MIN_BALLS..=MAX_BALLS).contains(&seq.len()) {
        return Err(Error::invalid(format!(
            "need between {MIN_BALLS} and {MAX_BALLS} points, got {}",
            seq.len()
        )));
    }
    if lambdas.len() != seq.len() {
        return Err(Error::DimensionMismatch { expected: seq.len(), found: lambdas.len() });
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid("lambdas must be positive"));
    }
    if !f.jet_at(&vec![0.0; f.n()], k - 1)?.is_zero() {
        return Err(Error::invalid(format!("the {}-jet of f at 0 does not vanish", k - 1)));
    }
    let mut balls = Vec::with_capacity(seq.len());
    for (a, &lambda) in seq.points.iter().zip(lambdas) {
        let dist = z.distance(a)?;
        if dist == 0.0 {
            return Err(Error::invalid(format!("point {a:?} lies on Z")));
        }
        balls.push(Ball {
            center: a.clone(),
            dist,
            lambda,
            f_center: f.eval(a)?[0],
            grad_center: f.jacobian(a)?.to_rows().remove(0),
        });
    }
    for i in 0..balls.len() {
        for j in i + 1..balls.len() {
            if !exactly_disjoint(&balls[i], &balls[j]) {
                return Err(Error::Construction(format!("balls {} and {} overlap", i + 1, j + 1)));
            }
        }
    }
    Ok(PerturbationF { f: f.clone(), z: z.clone(), bump, balls })
}

impl PerturbationF {
    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn bump(&self) -> &BumpFunction {
        &self.bump
    }

    pub fn source(&self) -> &PolyGermMap {
        &self.f
    }

    fn ball_of(&self, x: &[f64]) -> Option<&Ball> {
        self.balls.iter().find(|b| qmc::distance(x, &b.center) < b.radius())
    }

    /// `F`, `grad F` and `Hess F` at `x`.
    pub fn eval_all(&self, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let n = self.f.n();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.len() });
        }
        let Some(b) = self.ball_of(x) else {
            return Ok((0.0, vec![0.0; n], DMatrix::zeros(n, n)));
        };
        let y: Vec<f64> = x.iter().zip(&b.center).map(|(p, c)| p - c).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v / b.dist).collect();
        let alpha = self.bump.value(&scaled);
        let d_alpha: Vec<f64> = self.bump.gradient(&scaled).into_iter().map(|v| v / b.dist).collect();
        let h_alpha = self.bump.hessian(&scaled) / (b.dist * b.dist);
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let q = b.f_center + b.grad_center.iter().zip(&y).map(|(g, v)| g * v).sum::<f64>() + 0.5 * b.lambda * y2;
        let dq: Vec<f64> = b.grad_center.iter().zip(&y).map(|(g, v)| g + b.lambda * v).collect();
        let value = alpha * q;
        let grad: Vec<f64> = (0..n).map(|i| q * d_alpha[i] + alpha * dq[i]).collect();
        let hess = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { alpha * b.lambda } else { 0.0 };
            q * h_alpha[(i, j)] + d_alpha[i] * dq[j] + dq[i] * d_alpha[j] + id
        });
        Ok((value, grad, hess))
    }

    /// `f - F` as a black-box germ.
    pub fn perturbed(&self) -> PerturbedGerm<'_> {
        PerturbedGerm { pf: self }
    }
}

impl Germ for PerturbationF {
    fn domain_dim(&self) -> usize {
        self.f.n()
    }

    fn codomain_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.eval_all(x)?.0])
    }

    fn jacobian(&self, x: &[f64]) -> Result<LinearMap> {
        let (_, g, _) = self.eval_all(x)?;
        LinearMap::new(1, g.len(), &g)
    }

    fn hessian(&self, component: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        if component != 0 {
            return Err(Error::invalid(format!("no component {component}")));
        }
        Ok(self.eval_all(x)?.2)
    }
}

/// `f - F`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedGerm<'a> {
    pf: &'a PerturbationF,
}

impl Germ for PerturbedGerm<'_> {
    fn domain_dim(&self) -> usize {
        self.pf.f.n()
    }

    fn codomain_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.pf.f.eval(x)?[0] - self.pf.eval_all(x)?.0])
    }

    fn jacobian(&self, x: &[f64]) -> Result<LinearMap> {
        let df = self.pf.f.jacobian(x)?.into_matrix();
        let (_, g, _) = self.pf.eval_all(x)?;
        LinearMap::from_matrix(df - DMatrix::from_row_slice(1, g.len(), &g))
    }

    fn hessian(&self, component: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.pf.f.hessian(component, x)? - self.pf.hessian(component, x)?)
    }
}

pub const VALUE_TOL: f64 = 1e-12;
pub const GRADIENT_TOL: f64 = 1e-10;
pub const HESSIAN_IDENTITY_TOL: f64 = 1e-10;
pub const DET_MARGIN: f64 = 1e-10;
/// Relative agreement of the assembled Hessian with central differences of the gradient.
pub const FD_HESSIAN_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallCheck {
    /// One-based index.
    pub nu: usize,
    pub center: Vec<f64>,
    pub dist: f64,
    pub lambda: f64,
    pub value_residual: f64,
    pub gradient_residual: f64,
    /// `|Hess(f - F)(a) - (Hess f(a) - lambda I)|`.
    pub hessian_identity_residual: f64,
    pub hessian_det: f64,
    /// `DET_MARGIN * max(|Hess|, lambda)^n`.
    pub det_threshold: f64,
    pub morse: bool,
    /// Relative central-difference error of `Hess F` at the centre and in the bump transition.
    pub fd_hessian_residual: f64,
    /// Sampled `max |F| / dist^k` over the ball.
    pub decay_ratio: f64,
    /// `2^k M (|f(a)| + |grad f(a)| d + lambda d^2 / 2) / d^k`.
    pub chain_bound: f64,
    pub lambda_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub k: u32,
    pub balls: Vec<BallCheck>,
    pub disjoint: bool,
    pub decay_decreasing: bool,
    pub lambda_ratio_decreasing: bool,
    pub samples_per_ball: usize,
    pub failures: Vec<String>,
    pub pass: bool,
}

impl ConstructionReport {
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(Error::Construction(self.failures.join("; ")))
        }
    }
}

fn fd_hessian(pf: &PerturbationF, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut p = x.to_vec();
        let mut q = x.to_vec();
        p[j] += h;
        q[j] -= h;
        let gp = pf.eval_all(&p)?.1;
        let gq = pf.eval_all(&q)?.1;
        for i in 0..n {
            out[(i, j)] = (gp[i] - gq[i]) / (2.0 * h);
        }
    }
    Ok(out)
}

fn check_ball(pf: &PerturbationF, idx: usize, k: u32, unit: &[Vec<f64>]) -> Result<BallCheck> {
    let b = &pf.balls[idx];
    let n = pf.f.n();
    let a = &b.center;
    let pg = pf.perturbed();
    let value_residual = pg.eval(a)?[0].abs();
    let gradient_residual = pg.jacobian(a)?.spectral_norm();
    let h = pg.hessian(0, a)?;
    let expected = pf.f.hessian(0, a)? - DMatrix::identity(n, n) * b.lambda;
    let hessian_identity_residual = (&h - &expected).norm();
    let hessian_det = h.determinant();
    let scale = h.norm().max(b.lambda);
    let det_threshold = DET_MARGIN * scale.powi(n as i32);

    // centre and a point inside the transition annulus of the bump
    let mut probe = a.clone();
    probe[0] += 0.5 * (pf.bump.inner + pf.bump.outer) * b.dist;
    let step = 1e-5 * b.dist;
    let mut fd_hessian_residual: f64 = 0.0;
    for x in [a.clone(), probe] {
        let exact_h = pf.eval_all(&x)?.2;
        let fd = fd_hessian(pf, &x, step)?;
        let denom = exact_h.norm().max(fd.norm()).max(f64::MIN_POSITIVE);
        fd_hessian_residual = fd_hessian_residual.max((&fd - &exact_h).norm() / denom);
    }

    let mut decay_ratio: f64 = 0.0;
    for u in unit {
        let x: Vec<f64> = a.iter().zip(u).map(|(c, v)| c + v * b.radius()).collect();
        let d = pf.z.distance(&x)?;
        let fx = pf.eval_all(&x)?.0;
        decay_ratio = decay_ratio.max(fx.abs() / d.powi(k as i32));
    }
    let grad_norm = norm(&b.grad_center);
    let chain_bound = 2f64.powi(k as i32) * pf.bump.bound
        * (b.f_center.abs() + grad_norm * b.dist + 0.5 * b.lambda.abs() * b.dist * b.dist)
        / b.dist.powi(k as i32);
    Ok(BallCheck {
        nu: idx + 1,
        center: a.clone(),
        dist: b.dist,
        lambda: b.lambda,
        value_residual,
        gradient_residual,
        hessian_identity_residual,
        hessian_det,
        det_threshold,
        morse: hessian_det.abs() >= det_threshold,
        fd_hessian_residual,
        decay_ratio,
        chain_bound,
        lambda_ratio: b.lambda / b.dist.powi(k as i32 - 2),
    })
}

/// Checks the identities at every centre, the Morse condition, and the decay of `F`.
pub fn verify_construction(pf: &PerturbationF, k: u32, samples_per_ball: usize, seed: u64) -> Result<ConstructionReport> {
    let unit = qmc::ball_points(pf.f.n(), samples_per_ball, 1.0, seed);
    let balls: Vec<BallCheck> = (0..pf.balls.len())
        .into_par_iter()
        .map(|i| check_ball(pf, i, k, &unit))
        .collect::<Result<_>>()?;
    let mut failures = Vec::new();
    for c in &balls {
        let nu = c.nu;
        if c.value_residual > VALUE_TOL {
            failures.push(format!("ball {nu}: |(f - F)(a)| = {:e}", c.value_residual));
        }
        if c.gradient_residual > GRADIENT_TOL {
            failures.push(format!("ball {nu}: |grad (f - F)(a)| = {:e}", c.gradient_residual));
        }
        if c.hessian_identity_residual > HESSIAN_IDENTITY_TOL {
            failures.push(format!("ball {nu}: Hessian identity off by {:e}", c.hessian_identity_residual));
        }
        if !c.morse {
            failures.push(format!("ball {nu}: det Hess = {:e} below {:e}", c.hessian_det, c.det_threshold));
        }
        if c.fd_hessian_residual > FD_HESSIAN_TOL {
            failures.push(format!("ball {nu}: finite-difference Hessian mismatch {:e}", c.fd_hessian_residual));
        }
        if c.decay_ratio > c.chain_bound {
            failures.push(format!("ball {nu}: decay ratio {:e} above chain bound {:e}", c.decay_ratio, c.chain_bound));
        }
    }
    let decay_decreasing = balls.windows(2).all(|w| w[1].decay_ratio < w[0].decay_ratio);
    if !decay_decreasing {
        failures.push("per-ball max |F| / dist^k is not strictly decreasing".into());
    }
    let lambda_ratio_decreasing = balls.windows(2).all(|w| w[1].lambda_ratio < w[0].lambda_ratio);
    if !lambda_ratio_decreasing {
        failures.push("lambda / dist^(k-2) is not strictly decreasing".into());
    }
    let disjoint = (0..pf.balls.len())
        .all(|i| (i + 1..pf.balls.len()).all(|j| exactly_disjoint(&pf.balls[i], &pf.balls[j])));
    if !disjoint {
        failures.push("balls overlap".into());
    }
    Ok(ConstructionReport {
        k,
        balls,
        disjoint,
        decay_decreasing,
        lambda_ratio_decreasing,
        samples_per_ball,
        pass: failures.is_empty(),
        failures,
    })
}

/// Keeps every `step`-th point, trying `step = 1, 2, ...` until the `r_1 / v` decay
/// holds on at least `min_len` points.
pub fn renormalize(seq: &ViolationSequence, min_len: usize) -> Option<ViolationSequence> {
    (1..=seq.len()).find_map(|step| {
        let pick = |v: &Vec<_>| v.iter().step_by(step).cloned().collect::<Vec<_>>();
        let thinned = ViolationSequence {
            k: seq.k,
            points: pick(&seq.points),
            distances: seq.distances.iter().step_by(step).copied().collect(),
            ratios: seq.ratios.iter().step_by(step).copied().collect(),
        };
        (thinned.len() >= min_len && thinned.ratios_decay() && thinned.distances_halve()).then_some(thinned)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x2y2() -> PolyGermMap {
        PolyGermMap::scalar(2, 4, &[(1, &[2, 2])]).unwrap()
    }

    fn cross() -> ZSpec {
        ZSpec::hyperplane_union(2, vec![0, 1]).unwrap()
    }

    fn diagonal(count: i32) -> Vec<Vec<f64>> {
        (1..=count).map(|v| vec![3f64.powi(-v), 3f64.powi(-v)]).collect()
    }

    fn assembled(count: i32) -> PerturbationF {
        let f = x2y2();
        let z = cross();
        let seq = ViolationSequence::from_points(&f, &z, 4, diagonal(count)).unwrap();
        let lambdas: Vec<f64> = choose_lambdas(&f, &seq.points, 4, &z).unwrap().iter().map(|c| c.lambda).collect();
        assemble_f(&f, &z, &seq, &lambdas, make_bump(DEFAULT_INNER_RADIUS).unwrap()).unwrap()
    }

    #[test]
    fn bump_values() {
        let b = make_bump(DEFAULT_INNER_RADIUS).unwrap();
        assert_eq!(b.value(&[0.0, 0.0]), 1.0);
        assert_eq!(b.value(&[0.3, 0.0]), 0.0);
        assert_eq!(b.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(b.hessian(&[0.0, 0.0]), DMatrix::zeros(2, 2));
        for i in 0..=200 {
            let r = i as f64 / 200.0 * 0.3;
            let v = b.value(&[r, 0.0]);
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(make_bump(0.3).is_err());
        assert!(make_bump(0.0).is_err());
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let b = make_bump(0.1).unwrap();
        let h = 1e-6;
        for r in [0.12, 0.16, 0.2, 0.24] {
            let (s, s1, s2) = b.profile(r);
            let (sp, s1p, _) = b.profile(r + h);
            let (sm, s1m, _) = b.profile(r - h);
            assert!((s1 - (sp - sm) / (2.0 * h)).abs() < 1e-5 * s1.abs().max(1.0), "r = {r}");
            assert!((s2 - (s1p - s1m) / (2.0 * h)).abs() < 1e-4 * s2.abs().max(1.0), "r = {r}");
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn lambda_defaults_and_collisions() {
        let f = x2y2();
        let z = cross();
        let pts = diagonal(3);
        let ls = choose_lambdas(&f, &pts, 4, &z).unwrap();
        for (v, c) in ls.iter().enumerate() {
            let expect = 3f64.powi(-3 * (v as i32 + 1));
            assert!((c.lambda - expect).abs() <= 1e-15 * expect);
            assert_eq!(c.retries, 0);
        }
        let hess = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 6.0]);
        let c = avoid_eigenvalues(2.0, &hess).unwrap();
        assert!((c.lambda - 2.002).abs() < 1e-12);
        assert_eq!(c.retries, 1);
    }

    #[test]
    fn identities_at_centres() {
        let pf = assembled(5);
        let rep = verify_construction(&pf, 4, 512, 1).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
        for c in &rep.balls {
            assert!(c.value_residual <= VALUE_TOL);
            assert!(c.gradient_residual <= GRADIENT_TOL);
        }
    }

    #[test]
    fn zero_outside_balls_and_near_z() {
        let pf = assembled(4);
        assert_eq!(pf.eval_all(&[0.5, -0.5]).unwrap().0, 0.0);
        // points of Z stay away from every ball, so F vanishes around them
        for zp in cross().sample_in_ball(40, 0.5, 2).unwrap() {
            for u in qmc::ball_points(2, 20, 1e-3, 4) {
                let x: Vec<f64> = zp.iter().zip(&u).map(|(a, b)| a + b).collect();
                assert_eq!(pf.eval_all(&x).unwrap().0, 0.0);
            }
        }
    }

    #[test]
    fn overlapping_balls_rejected() {
        let f = x2y2();
        let z = cross();
        let pts = vec![vec![0.3, 0.3], vec![0.29, 0.3], vec![0.01, 0.01]];
        let seq = ViolationSequence::from_points(&f, &z, 4, pts).unwrap();
        let res = assemble_f(&f, &z, &seq, &[1e-3, 1e-4, 1e-5], make_bump(0.125).unwrap());
        assert!(matches!(res, Err(Error::Construction(_))));
    }

    #[test]
    fn rejects_nonvanishing_low_jet() {
        let f = PolyGermMap::scalar(2, 4, &[(1, &[2, 0])]).unwrap();
        let z = ZSpec::subspace(2, vec![0]).unwrap();
        let seq = ViolationSequence::from_points(&f, &z, 4, vec![vec![0.1, 0.0], vec![0.01, 0.0], vec![0.001, 0.0]]).unwrap();
        assert!(assemble_f(&f, &z, &seq, &[1.0, 1.0, 1.0], make_bump(0.125).unwrap()).is_err());
    }

    #[test]
    fn renormalize_thins_slow_sequences() {
        let seq = ViolationSequence {
            k: 2,
            points: (0..8).map(|i| vec![4f64.powi(-i)]).collect(),
            distances: (0..8).map(|i| 4f64.powi(-i)).collect(),
            ratios: (0..8).map(|i| 1.0 / (1.0 + 0.6 * i as f64)).collect(),
        };
        assert!(!seq.ratios_decay());
        let thin = renormalize(&seq, 3).unwrap();
        assert!(thin.ratios_decay() && thin.len() >= 3);
    }
}
