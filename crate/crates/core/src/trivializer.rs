//! Trivializing vector field for the deformation `F(xi, x) = f(x) + xi P(x)`, `P = f1 - f`.
//!
//! On index sets `I` where the maximal minor `M_I` of `d_x F` is large against
//! `dist(x, Z)^(k-1)`, Cramer's rule solves `d_x F W^T = -P^T` in the `I` coordinates.
//! The local solutions are blended with a smooth partition of unity and integrated
//! over `t in [0, 1]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::germ::{Germ, GermPair, PolyGermMap, ZSpec};
use crate::linmap::{cofactor_det, LinearMap, MinorIndex};
use crate::lojasiewicz::{LojasiewiczReport, Verdict, DIST_FLOOR};
use crate::ode::{self, OdeOptions, StepStats};
use crate::qmc::{self, norm};

/// `F(xi, x) = f(x) + xi P(x)` on `|xi| < 2`.
#[derive(Debug, Clone)]
pub struct Deformation {
    f: PolyGermMap,
    p: PolyGermMap,
}

impl Deformation {
    /// Builds `F` after checking that `f` and `f1` share their `k`-jet along `Z`.
    pub fn new(pair: &GermPair, seed: u64) -> Result<Self> {
        let check = pair.same_k_z_jet(&[], seed)?;
        if !check.equal {
            return Err(Error::invalid(format!(
                "f and f1 have different {}-jets on Z (residual {:e} at {:?})",
                pair.k(),
                check.max_residual,
                check.witness
            )));
        }
        Ok(Deformation { f: pair.f.clone(), p: pair.difference()? })
    }

    pub fn f(&self) -> &PolyGermMap {
        &self.f
    }

    pub fn p(&self) -> &PolyGermMap {
        &self.p
    }

    pub fn eval(&self, xi: f64, x: &[f64]) -> Result<Vec<f64>> {
        let fx = self.f.eval(x)?;
        let px = self.p.eval(x)?;
        Ok(fx.iter().zip(&px).map(|(a, b)| a + xi * b).collect())
    }

    /// `d_x F(xi, x) = df(x) + xi dP(x)`.
    pub fn jacobian(&self, xi: f64, x: &[f64]) -> Result<LinearMap> {
        let df = self.f.jacobian(x)?.into_matrix();
        let dp = self.p.jacobian(x)?.into_matrix();
        LinearMap::from_matrix(df + dp * xi)
    }
}

/// Constants of the construction and the two ball radii `r0 < r1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivializationConstants {
    pub c: f64,
    pub c_prime: f64,
    pub c_double_prime: f64,
    pub u_radius: f64,
    pub r0: f64,
    pub r1: f64,
    pub m: usize,
    pub n: usize,
    pub k: u32,
}

/// `C'' = 2 m C sqrt(n) / (3 C')`.
pub fn c_double_prime(m: usize, n: usize, c: f64, c_prime: f64) -> f64 {
    2.0 * m as f64 * c * (n as f64).sqrt() / (3.0 * c_prime)
}

impl TrivializationConstants {
    pub fn from_parts(m: usize, n: usize, k: u32, c: f64, c_prime: f64, u_radius: f64) -> Result<Self> {
        if !(c > 0.0 && c_prime > 0.0 && u_radius > 0.0) {
            return Err(Error::invalid("C, C' and the working radius must be positive"));
        }
        let cpp = c_double_prime(m, n, c, c_prime);
        Ok(TrivializationConstants {
            c,
            c_prime,
            c_double_prime: cpp,
            u_radius,
            r0: u_radius * (-cpp).exp(),
            r1: u_radius,
            m,
            n,
            k,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationConfig {
    pub samples: usize,
    /// Number of midpoints of a uniform partition of `(-2, 2)`.
    pub xi_count: usize,
    pub seed: u64,
    /// Starting working radius; defaults to the outermost radius of the report.
    pub initial_radius: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { samples: 4096, xi_count: 16, seed: 0, initial_radius: None }
    }
}

const SHRINK: f64 = 1.0 - 1e-3;
const MAX_SHRINKS: usize = 10_000;
const MIN_RADIUS: f64 = 1e-8;

/// Largest sampled violation of `|P| <= C/3 dist^k`, `|dP| <= C/3 dist^(k-1)` in the ball.
fn worst_offender(def: &Deformation, z: &ZSpec, c: f64, k: i32, pts: &[Vec<f64>]) -> Result<Option<(Vec<f64>, f64)>> {
    let scored: Vec<Option<f64>> = pts
        .par_iter()
        .map(|x| {
            let d = z.distance(x)?;
            if d < DIST_FLOOR {
                return Ok(None);
            }
            let pv = norm(&def.p.eval(x)?);
            let dp = def.p.jacobian(x)?.spectral_norm();
            let bound = c / 3.0;
            let sev = (pv / (bound * d.powi(k))).max(dp / (bound * d.powi(k - 1)));
            Ok((sev > 1.0).then_some(sev))
        })
        .collect::<Result<_>>()?;
    let mut worst: Option<(Vec<f64>, f64)> = None;
    let mut nearest = f64::INFINITY;
    for (x, s) in pts.iter().zip(scored) {
        if let Some(sev) = s {
            nearest = nearest.min(norm(x));
            if worst.as_ref().is_none_or(|(_, w)| sev > *w) {
                worst = Some((x.clone(), sev));
            }
        }
    }
    // report the worst point, shrink past the nearest one
    Ok(worst.map(|(x, _)| (x, nearest)))
}

/// Shrinks the working ball until the perturbation bounds hold on the sample, then
/// measures `C'` over `xi in (-2, 2)` and derives `C''`, `r0`, `r1`.
pub fn calibrate_constants(
    def: &Deformation,
    z: &ZSpec,
    report: &LojasiewiczReport,
    cfg: &CalibrationConfig,
) -> Result<TrivializationConstants> {
    if report.verdict != Verdict::Holds {
        return Err(Error::invalid(format!(
            "calibration needs the condition to hold, verdict is {}",
            report.verdict
        )));
    }
    let n = def.f.n();
    let m = def.f.m();
    let k = report.k;
    if k != def.f.k() {
        return Err(Error::invalid(format!("report is for k = {k}, germ has k = {}", def.f.k())));
    }
    let c = report.c_hat;
    let mut radius = cfg
        .initial_radius
        .or_else(|| report.annuli.first().map(|a| a.outer_radius))
        .ok_or_else(|| Error::invalid("report has no annuli"))?;
    let unit = qmc::ball_points(n, cfg.samples, 1.0, cfg.seed);
    let mut shrinks = 0;
    loop {
        let pts: Vec<Vec<f64>> = unit.iter().map(|u| u.iter().map(|v| v * radius).collect()).collect();
        match worst_offender(def, z, c, k as i32, &pts)? {
            None => break,
            Some((point, nearest)) => {
                radius = nearest * SHRINK;
                shrinks += 1;
                if radius < MIN_RADIUS || shrinks > MAX_SHRINKS {
                    return Err(Error::Calibration {
                        message: format!("perturbation bounds fail on every radius down to {radius:e}"),
                        point,
                    });
                }
            }
        }
    }
    let xis: Vec<f64> = (0..cfg.xi_count)
        .map(|j| -2.0 + 4.0 * (j as f64 + 0.5) / cfg.xi_count as f64)
        .collect();
    let per_point: Vec<f64> = unit
        .par_iter()
        .map(|u| {
            let x: Vec<f64> = u.iter().map(|v| v * radius).collect();
            let d = z.distance(&x)?;
            if d < DIST_FLOOR {
                return Ok(f64::INFINITY);
            }
            let scale = d.powi(k as i32 - 1);
            let mut best = f64::INFINITY;
            for &xi in &xis {
                best = best.min(def.jacobian(xi, &x)?.g_prime() / scale);
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let c_prime = per_point.iter().copied().fold(f64::INFINITY, f64::min);
    if !(c_prime > 0.0 && c_prime.is_finite()) {
        return Err(Error::Calibration {
            message: format!("no positive lower bound for g'(d_x F) / dist^(k-1) (got {c_prime:e})"),
            point: vec![0.0; n],
        });
    }
    TrivializationConstants::from_parts(m, n, k, c, c_prime, radius)
}

/// Smoothstep of order 5 mapping `[1/2, 1]` onto `[0, 1]`; `C^2` at both ends.
pub fn ramp(s: f64) -> f64 {
    let t = ((s - 0.5) * 2.0).clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldDiagnostics {
    pub dist: f64,
    /// `|d_x F W^T + P^T|`.
    pub linear_residual: f64,
    pub p_norm: f64,
    /// `|W| / (C'' dist)`; zero on `Z`.
    pub field_ratio: f64,
    pub active: usize,
}

/// The blended Cramer field `W(xi, x)`.
#[derive(Debug, Clone)]
pub struct VectorField {
    def: Deformation,
    z: ZSpec,
    consts: TrivializationConstants,
    indices: Vec<MinorIndex>,
}

impl VectorField {
    pub fn new(def: Deformation, z: ZSpec, consts: TrivializationConstants) -> Result<Self> {
        let (m, n) = (def.f.m(), def.f.n());
        if consts.m != m || consts.n != n || z.dim() != n {
            return Err(Error::invalid("constants, germ and Z disagree on dimensions"));
        }
        Ok(VectorField { def, z, consts, indices: MinorIndex::all(m, n).collect() })
    }

    pub fn deformation(&self) -> &Deformation {
        &self.def
    }

    pub fn z(&self) -> &ZSpec {
        &self.z
    }

    pub fn constants(&self) -> &TrivializationConstants {
        &self.consts
    }

    pub fn eval(&self, xi: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_with_diagnostics(xi, x)?.0)
    }

    pub fn eval_with_diagnostics(&self, xi: f64, x: &[f64]) -> Result<(Vec<f64>, FieldDiagnostics)> {
        let n = self.consts.n;
        let m = self.consts.m;
        if self.z.contains(x)? {
            let diag = FieldDiagnostics { dist: 0.0, linear_residual: 0.0, p_norm: 0.0, field_ratio: 0.0, active: 0 };
            return Ok((vec![0.0; n], diag));
        }
        let dist = self.z.distance(x)?;
        let a = self.def.jacobian(xi, x)?;
        let p = self.def.p.eval(x)?;
        let threshold = self.consts.c_prime * dist.powi(self.consts.k as i32 - 1);
        let rows: Vec<usize> = (0..m).collect();
        let mut weighted: Vec<(f64, &[usize], f64)> = Vec::new();
        let mut total = 0.0;
        for idx in &self.indices {
            let cols = idx.cols();
            let ratio = a.minor_ratio_unchecked(cols);
            let w = ramp(ratio / threshold);
            if w > 0.0 {
                let minor = cofactor_det(a.matrix(), &rows, cols);
                weighted.push((w, cols, minor));
                total += w;
            }
        }
        if weighted.is_empty() {
            return Err(Error::CoveringViolated { xi, point: x.to_vec() });
        }
        let mut out = vec![0.0; n];
        for (w, cols, minor) in &weighted {
            let delta = w / total;
            for (l, &il) in cols.iter().enumerate() {
                let rest: Vec<usize> = cols.iter().copied().filter(|&c| c != il).collect();
                let mut num = 0.0;
                for (j, pj) in p.iter().enumerate() {
                    let sub_rows: Vec<usize> = (0..m).filter(|&r| r != j).collect();
                    let sub = cofactor_det(a.matrix(), &sub_rows, &rest);
                    let term = -pj * sub;
                    num += if (l + j) % 2 == 0 { term } else { -term };
                }
                out[il] += delta * num / minor;
            }
        }
        let residual: Vec<f64> = (0..m)
            .map(|r| (0..n).map(|c| a.get(r, c) * out[c]).sum::<f64>() + p[r])
            .collect();
        let diag = FieldDiagnostics {
            dist,
            linear_residual: norm(&residual),
            p_norm: norm(&p),
            field_ratio: norm(&out) / (self.consts.c_double_prime * dist),
            active: weighted.len(),
        };
        Ok((out, diag))
    }

    fn ode_options(&self, tol: f64) -> OdeOptions {
        OdeOptions::new(tol, 0.1 / self.consts.c_double_prime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConfig {
    pub tol: f64,
    pub checkpoints: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { tol: 1e-9, checkpoints: 16 }
    }
}

/// Worst field diagnostics seen during an integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FieldExtremes {
    pub max_field_ratio: f64,
    pub max_linear_residual: f64,
    /// Largest `residual / (1 + |P|)`.
    pub max_scaled_residual: f64,
    pub evaluations: usize,
}

impl FieldExtremes {
    fn record(&mut self, d: &FieldDiagnostics) {
        self.max_field_ratio = self.max_field_ratio.max(d.field_ratio);
        self.max_linear_residual = self.max_linear_residual.max(d.linear_residual);
        self.max_scaled_residual = self.max_scaled_residual.max(d.linear_residual / (1.0 + d.p_norm));
        self.evaluations += 1;
    }

    fn merge(&mut self, o: &FieldExtremes) {
        self.max_field_ratio = self.max_field_ratio.max(o.max_field_ratio);
        self.max_linear_residual = self.max_linear_residual.max(o.max_linear_residual);
        self.max_scaled_residual = self.max_scaled_residual.max(o.max_scaled_residual);
        self.evaluations += o.evaluations;
    }
}

/// Solution of `y' = W(t, y)` through `(t_from, y)` evaluated at `t_to` and at intermediate checkpoints.
fn solve(
    vf: &VectorField,
    t_from: f64,
    y: &[f64],
    t_to: f64,
    checkpoints: &[f64],
    tol: f64,
) -> Result<(ode::OdeSolution, FieldExtremes)> {
    let mut extremes = FieldExtremes::default();
    let r1 = vf.consts.r1;
    let sol = ode::integrate(
        |t, y| {
            let (w, d) = vf.eval_with_diagnostics(t, y)?;
            extremes.record(&d);
            Ok(w)
        },
        t_from,
        y,
        t_to,
        checkpoints,
        &vf.ode_options(tol),
        |t, y| {
            let r = norm(y);
            if r >= r1 {
                Err(Error::DomainExit { t, point: y.to_vec(), radius: r1 })
            } else {
                Ok(())
            }
        },
    )?;
    Ok((sol, extremes))
}

/// Forward trajectory `H(x0, t)` at `t = j / checkpoints`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub x0: Vec<f64>,
    pub on_z: bool,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub stats: StepStats,
    pub field: FieldExtremes,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().expect("trajectory has checkpoints")
    }
}

fn checkpoint_times(count: usize) -> Vec<f64> {
    (0..=count).map(|j| j as f64 / count as f64).collect()
}

/// `H(x0, t) = phi_(0, x0)(t)` for `t in [0, 1]`.
pub fn flow(vf: &VectorField, x0: &[f64], cfg: &FlowConfig) -> Result<Trajectory> {
    if x0.len() != vf.consts.n {
        return Err(Error::DimensionMismatch { expected: vf.consts.n, found: x0.len() });
    }
    if !(cfg.tol > 0.0) || cfg.checkpoints == 0 {
        return Err(Error::invalid("flow needs tol > 0 and at least one checkpoint"));
    }
    if norm(x0) >= vf.consts.r1 {
        return Err(Error::DomainExit { t: 0.0, point: x0.to_vec(), radius: vf.consts.r1 });
    }
    let times = checkpoint_times(cfg.checkpoints);
    let (sol, field) = solve(vf, 0.0, x0, 1.0, &times[1..], cfg.tol)?;
    let mut points = vec![x0.to_vec()];
    points.extend(sol.states);
    let distances = points.iter().map(|p| vf.z.distance(p)).collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        x0: x0.to_vec(),
        on_z: vf.z.contains(x0)?,
        times,
        points,
        distances,
        stats: sol.stats,
        field,
    })
}

/// `H~(y, t) = phi_(t, y)(0)`: flows `y` from time `t` back to 0.
pub fn flow_back(vf: &VectorField, y: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(y.to_vec());
    }
    let (sol, _) = solve(vf, t, y, 0.0, &[], tol)?;
    Ok(sol.states.into_iter().next().expect("final state"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub trajectory: Trajectory,
    /// `|F(t_j, H(x0, t_j)) - f(x0)|`.
    pub conservation: Vec<f64>,
    /// `|H~(H(x0, t_j), t_j) - x0|`.
    pub inverse: Vec<f64>,
    pub backward_field: FieldExtremes,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotopyResult {
    pub constants: TrivializationConstants,
    pub tol: f64,
    pub times: Vec<f64>,
    pub records: Vec<TrajectoryRecord>,
    pub max_conservation: f64,
    pub max_inverse: f64,
    /// Smallest `|H(x, 1) - H(x', 1)|` over distinct grid points.
    pub min_image_separation: f64,
    /// Largest start radius in the grid; every start inside it flowed to `t = 1`.
    pub safe_radius: f64,
    pub field: FieldExtremes,
    pub stats: StepStats,
}

impl IsotopyResult {
    /// `x0_*,t,H_*,conservation` for every stored checkpoint.
    pub fn to_csv(&self) -> String {
        let n = self.constants.n;
        let mut out = String::new();
        let head: Vec<String> = (0..n)
            .map(|i| format!("x0_{i}"))
            .chain(std::iter::once("t".into()))
            .chain((0..n).map(|i| format!("h_{i}")))
            .chain(std::iter::once("conservation".into()))
            .collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for rec in &self.records {
            let tr = &rec.trajectory;
            for (j, t) in tr.times.iter().enumerate() {
                let row: Vec<String> = tr
                    .x0
                    .iter()
                    .map(|v| v.to_string())
                    .chain(std::iter::once(t.to_string()))
                    .chain(tr.points[j].iter().map(|v| v.to_string()))
                    .chain(std::iter::once(rec.conservation[j].to_string()))
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }
}

fn record_for(vf: &VectorField, x0: &[f64], cfg: &FlowConfig) -> Result<TrajectoryRecord> {
    let trajectory = flow(vf, x0, cfg)?;
    let f0 = vf.def.f.eval(x0)?;
    let mut conservation = Vec::with_capacity(trajectory.times.len());
    let mut inverse = Vec::with_capacity(trajectory.times.len());
    let mut backward_field = FieldExtremes::default();
    for (t, h) in trajectory.times.iter().zip(&trajectory.points) {
        let ft = vf.def.eval(*t, h)?;
        conservation.push(qmc::distance(&ft, &f0));
        if *t == 0.0 {
            inverse.push(qmc::distance(h, x0));
            continue;
        }
        let (sol, fe) = solve(vf, *t, h, 0.0, &[], cfg.tol)?;
        backward_field.merge(&fe);
        inverse.push(qmc::distance(&sol.states[0], x0));
    }
    Ok(TrajectoryRecord { trajectory, conservation, inverse, backward_field })
}

pub const GRID_RADIUS_FACTOR: f64 = 2.0 / 3.0;

/// `count` start points in the ball of radius `2/3 U`: one eighth sampled on `Z`
/// (origin first), the rest quasi-uniform in the ball.
pub fn start_grid(vf: &VectorField, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::invalid("empty grid"));
    }
    let radius = GRID_RADIUS_FACTOR * vf.consts.u_radius;
    let on_z = vf.z.sample_in_ball((count / 8).max(1), radius, seed)?;
    let mut grid = qmc::ball_points(vf.consts.n, count - on_z.len(), radius, seed);
    grid.extend(on_z);
    Ok(grid)
}

/// Forward and backward flows over `grid`, with conservation and inverse residuals.
pub fn isotopy(vf: &VectorField, grid: &[Vec<f64>], cfg: &FlowConfig) -> Result<IsotopyResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    let records: Vec<TrajectoryRecord> = grid.par_iter().map(|x| record_for(vf, x, cfg)).collect::<Result<_>>()?;
    let mut field = FieldExtremes::default();
    let mut stats = StepStats::default();
    let (mut max_conservation, mut max_inverse) = (0.0f64, 0.0f64);
    for r in &records {
        field.merge(&r.trajectory.field);
        field.merge(&r.backward_field);
        stats.merge(&r.trajectory.stats);
        max_conservation = r.conservation.iter().copied().fold(max_conservation, f64::max);
        max_inverse = r.inverse.iter().copied().fold(max_inverse, f64::max);
    }
    let mut min_image_separation = f64::INFINITY;
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let (a, b) = (&records[i].trajectory, &records[j].trajectory);
            if a.x0 != b.x0 {
                min_image_separation = min_image_separation.min(qmc::distance(a.endpoint(), b.endpoint()));
            }
        }
    }
    Ok(IsotopyResult {
        constants: vf.consts.clone(),
        tol: cfg.tol,
        times: checkpoint_times(cfg.checkpoints),
        safe_radius: grid.iter().map(|x| norm(x)).fold(0.0, f64::max),
        records,
        max_conservation,
        max_inverse,
        min_image_separation,
        field,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallViolation {
    pub trajectory: usize,
    pub t: f64,
    pub dist: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallReport {
    pub eps: f64,
    pub checked: usize,
    pub violations: Vec<GronwallViolation>,
    pub pass: bool,
}

pub const GRONWALL_EPS: f64 = 0.05;

/// `dist(H(x,t), Z)` must stay within `dist(x, Z) e^(-+C'' t)` up to a factor `1 -+ eps`.
pub fn gronwall_check(result: &IsotopyResult, consts: &TrivializationConstants, eps: f64) -> GronwallReport {
    let cpp = consts.c_double_prime;
    let mut violations = Vec::new();
    let mut checked = 0;
    for (i, rec) in result.records.iter().enumerate() {
        let tr = &rec.trajectory;
        let d0 = tr.distances[0];
        for (t, d) in tr.times.iter().zip(&tr.distances) {
            checked += 1;
            let lower = d0 * (-cpp * t).exp() * (1.0 - eps);
            let upper = d0 * (cpp * t).exp() * (1.0 + eps);
            if *d < lower || *d > upper {
                violations.push(GronwallViolation { trajectory: i, t: *t, dist: *d, lower, upper });
            }
        }
    }
    GronwallReport { eps, checked, pass: violations.is_empty(), violations }
}
