//! Sampled checks of `nu(df(x)) >= C dist(x, Z)^(k-1)` near the origin.
//!
//! "As x -> 0" becomes a finite stack of shrinking annuli. Each annulus reuses the
//! same unit-shell point set scaled to its radius, so homogeneous germs produce
//! per-annulus minima that scale exactly with the radius.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::germ::{Germ, GermPair, ZSpec};
use crate::qmc;

/// Points closer than this to `Z` are left out of ratio statistics.
pub const DIST_FLOOR: f64 = 1e-9;
/// Minima must stay above this for a `holds` verdict.
pub const POSITIVE_FLOOR: f64 = 1e-12;
/// Largest per-step drop of the annulus minimum still counted as bounded below.
pub const HOLDS_STEP_FACTOR: f64 = 0.9;
/// Overall decay of the minima required for a `fails` verdict.
pub const FAILS_DECAY_FACTOR: f64 = 2.0;
pub const MIN_ANNULI: usize = 4;
pub const MIN_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateConfig {
    /// Outer radii, strictly decreasing. Annulus `j` is `[radii[j+1], radii[j]]`;
    /// the last one closes at half its outer radius.
    pub radii: Vec<f64>,
    pub samples_per_annulus: usize,
    pub seed: u64,
}

impl EstimateConfig {
    pub fn dyadic(outer: f64, annuli: usize, samples_per_annulus: usize, seed: u64) -> Self {
        EstimateConfig {
            radii: dyadic_radii(outer, annuli),
            samples_per_annulus,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.radii.len() < MIN_ANNULI {
            return Err(Error::invalid(format!("need at least {MIN_ANNULI} radii, got {}", self.radii.len())));
        }
        if !self.radii.iter().all(|r| r.is_finite() && *r > 0.0) || self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("radii must be positive and strictly decreasing"));
        }
        if self.samples_per_annulus < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "need at least {MIN_SAMPLES} samples per annulus, got {}",
                self.samples_per_annulus
            )));
        }
        Ok(())
    }

    fn inner(&self, j: usize) -> f64 {
        self.radii.get(j + 1).copied().unwrap_or(self.radii[j] / 2.0)
    }

    fn points(&self, n: usize, j: usize) -> Vec<Vec<f64>> {
        let outer = self.radii[j];
        qmc::shell_points(n, self.samples_per_annulus, self.inner(j) / outer, outer, self.seed)
    }
}

/// `outer, outer/2, outer/4, ...` (`count` values).
pub fn dyadic_radii(outer: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| outer / (1u64 << j) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Classifies a sequence of per-annulus minima, outermost first.
pub fn classify(minima: &[f64]) -> Verdict {
    if minima.len() < MIN_ANNULI {
        return Verdict::Inconclusive;
    }
    let floor = minima.iter().all(|&m| m > POSITIVE_FLOOR);
    if floor && minima.windows(2).all(|w| w[1] >= HOLDS_STEP_FACTOR * w[0]) {
        return Verdict::Holds;
    }
    let decreasing = minima.windows(2).all(|w| w[1] < w[0]);
    let last = *minima.last().unwrap();
    if decreasing && (last <= 0.0 || minima[0] / last >= FAILS_DECAY_FACTOR) {
        return Verdict::Fails;
    }
    Verdict::Inconclusive
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnulusStat {
    pub index: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub min_ratio: f64,
    pub argmin: Vec<f64>,
    /// Smallest `nu(df)` over the used samples.
    pub min_nu: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LojasiewiczReport {
    pub k: u32,
    pub c_hat: f64,
    pub fitted_exponent: Option<f64>,
    pub verdict: Verdict,
    pub annuli: Vec<AnnulusStat>,
    pub samples_per_annulus: usize,
    pub seed: u64,
}

impl LojasiewiczReport {
    pub fn minima(&self) -> Vec<f64> {
        self.annuli.iter().map(|a| a.min_ratio).collect()
    }

    /// `annulus,radius,min_ratio,x0,...` with one row per annulus.
    pub fn to_csv(&self) -> String {
        let n = self.annuli.first().map_or(0, |a| a.argmin.len());
        let mut out = String::from("annulus,radius,min_ratio");
        for i in 0..n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for a in &self.annuli {
            out.push_str(&format!("{},{},{}", a.index, a.outer_radius, a.min_ratio));
            for v in &a.argmin {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

struct Sample {
    x: Vec<f64>,
    dist: f64,
    nu: f64,
}

/// `nu(df(x))` and `dist(x, Z)` on every sample of annulus `j`, in sample order.
fn annulus_samples(f: &dyn Germ, z: &ZSpec, cfg: &EstimateConfig, j: usize) -> Result<Vec<Sample>> {
    cfg.points(f.domain_dim(), j)
        .into_par_iter()
        .map(|x| {
            let dist = z.distance(&x)?;
            let nu = f.jacobian(&x)?.nu();
            Ok(Sample { x, dist, nu })
        })
        .collect()
}

fn check_dims(f: &dyn Germ, z: &ZSpec) -> Result<()> {
    if f.domain_dim() != z.dim() {
        return Err(Error::DimensionMismatch { expected: f.domain_dim(), found: z.dim() });
    }
    Ok(())
}

/// Per-annulus infimum of `nu(df(x)) / dist(x, Z)^(k-1)` and the resulting verdict.
pub fn estimate_condition(f: &dyn Germ, z: &ZSpec, k: u32, cfg: &EstimateConfig) -> Result<LojasiewiczReport> {
    cfg.validate()?;
    check_dims(f, z)?;
    if k < 2 {
        return Err(Error::invalid(format!("jet order must be > 1, got {k}")));
    }
    let mut annuli = Vec::with_capacity(cfg.radii.len());
    for j in 0..cfg.radii.len() {
        let samples = annulus_samples(f, z, cfg, j)?;
        let mut best: Option<(f64, &Sample)> = None;
        let mut min_nu = f64::INFINITY;
        let mut used = 0;
        for s in &samples {
            if s.dist < DIST_FLOOR {
                continue;
            }
            used += 1;
            min_nu = min_nu.min(s.nu);
            let ratio = s.nu / s.dist.powi(k as i32 - 1);
            if best.is_none_or(|(b, _)| ratio < b) {
                best = Some((ratio, s));
            }
        }
        let (min_ratio, arg) = best.ok_or_else(|| {
            Error::invalid(format!("every sample of annulus {j} lies within {DIST_FLOOR:e} of Z"))
        })?;
        annuli.push(AnnulusStat {
            index: j,
            inner_radius: cfg.inner(j),
            outer_radius: cfg.radii[j],
            min_ratio,
            argmin: arg.x.clone(),
            min_nu,
            used,
            excluded: samples.len() - used,
        });
    }
    let minima: Vec<f64> = annuli.iter().map(|a| a.min_ratio).collect();
    let min_nu: Vec<f64> = annuli.iter().map(|a| a.min_nu).collect();
    Ok(LojasiewiczReport {
        k,
        c_hat: minima.iter().copied().fold(f64::INFINITY, f64::min),
        fitted_exponent: regression_slope(&cfg.radii, &min_nu).ok(),
        verdict: classify(&minima),
        annuli,
        samples_per_annulus: cfg.samples_per_annulus,
        seed: cfg.seed,
    })
}

/// Log-log slope of the per-annulus minimum of `nu(df)` against the radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub theta: f64,
    pub k: u32,
    /// `theta <= k - 1 + 0.1`.
    pub plausible: bool,
    pub radii: Vec<f64>,
    pub min_nu: Vec<f64>,
}

pub const EXPONENT_SLACK: f64 = 0.1;
const NU_FLOOR: f64 = 1e-14;

fn regression_slope(radii: &[f64], values: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(values)
        .filter(|(_, &v)| v >= NU_FLOOR)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Convergence(format!(
            "only {} annuli have nu above {NU_FLOOR:e}; no slope to fit",
            pts.len()
        )));
    }
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

pub fn fit_exponent(f: &dyn Germ, z: &ZSpec, k: u32, cfg: &EstimateConfig) -> Result<ExponentFit> {
    let report = estimate_condition(f, z, k, cfg)?;
    let min_nu: Vec<f64> = report.annuli.iter().map(|a| a.min_nu).collect();
    let theta = regression_slope(&cfg.radii, &min_nu)?;
    Ok(ExponentFit {
        theta,
        k,
        plausible: theta <= (k - 1) as f64 + EXPONENT_SLACK,
        radii: cfg.radii.clone(),
        min_nu,
    })
}

/// Points `a_v -> 0` off `Z` along which the ratio degenerates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationSequence {
    pub k: u32,
    pub points: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl ViolationSequence {
    /// Evaluates distances and ratios at caller-supplied points; only membership in
    /// the complement of `Z` is enforced.
    pub fn from_points(f: &dyn Germ, z: &ZSpec, k: u32, points: Vec<Vec<f64>>) -> Result<Self> {
        check_dims(f, z)?;
        let mut distances = Vec::with_capacity(points.len());
        let mut ratios = Vec::with_capacity(points.len());
        for p in &points {
            let d = z.distance(p)?;
            if d == 0.0 {
                return Err(Error::invalid(format!("point {p:?} lies on Z")));
            }
            distances.push(d);
            ratios.push(f.jacobian(p)?.nu() / d.powi(k as i32 - 1));
        }
        Ok(ViolationSequence { k, points, distances, ratios })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `dist(a_{v+1}, Z) < dist(a_v, Z) / 2`.
    pub fn distances_halve(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < 0.5 * w[0])
    }

    /// Ratios strictly decreasing with `r_v <= r_1 / v`.
    pub fn ratios_decay(&self) -> bool {
        let Some(&r1) = self.ratios.first() else { return true };
        self.ratios.windows(2).all(|w| w[1] < w[0])
            && self.ratios.iter().enumerate().all(|(i, &r)| r <= r1 / (i + 1) as f64)
    }
}

const SEARCH_LEVELS: usize = 12;
const SEARCH_START: f64 = 0.5;
const SEARCH_CANDIDATES: usize = 256;
/// Each level keeps candidates with `dist` in `(delta / SHELL_DIV, delta]`.
const SHELL_DIV: f64 = 1.9;

fn level_ratio(f: &dyn Germ, z: &ZSpec, k: u32, x: &[f64], delta: f64) -> Result<Option<f64>> {
    if qmc::norm(x) > 4.0 * delta {
        return Ok(None);
    }
    let d = z.distance(x)?;
    if d <= delta / SHELL_DIV || d > delta {
        return Ok(None);
    }
    Ok(Some(f.jacobian(x)?.nu() / d.powi(k as i32 - 1)))
}

/// Best ratio on the level `delta`, polished by a compass search that keeps the level constraints.
fn search_level(f: &dyn Germ, z: &ZSpec, k: u32, delta: f64, seed: u64) -> Result<Option<(Vec<f64>, f64)>> {
    let n = f.domain_dim();
    let mut candidates = Vec::new();
    for scale in [1.0, 2.0, 4.0] {
        candidates.extend(qmc::ball_points(n, SEARCH_CANDIDATES, scale * delta, seed));
    }
    let scored: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|x| level_ratio(f, z, k, x, delta))
        .collect::<Result<_>>()?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, r) in candidates.into_iter().zip(scored) {
        if let Some(r) = r {
            if best.as_ref().is_none_or(|(_, b)| r < *b) {
                best = Some((x, r));
            }
        }
    }
    let Some((mut x, mut r)) = best else { return Ok(None) };
    let mut step = delta / 8.0;
    while step > delta * 1e-6 {
        let mut improved = false;
        for i in 0..n {
            for sign in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += sign * step;
                if let Some(ry) = level_ratio(f, z, k, &y, delta)? {
                    if ry < r {
                        x = y;
                        r = ry;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok(Some((x, r)))
}

/// Searches for a sequence witnessing failure of the condition.
///
/// Returns `None` when the sampled condition holds or no subsequence meets both
/// the halving and the `r_1 / v` decay requirements over at least four points.
pub fn find_violation_sequence(f: &dyn Germ, z: &ZSpec, k: u32, seed: u64) -> Result<Option<ViolationSequence>> {
    let screen = estimate_condition(f, z, k, &EstimateConfig::dyadic(SEARCH_START, 6, 512, seed))?;
    if screen.verdict == Verdict::Holds {
        return Ok(None);
    }
    let mut levels = Vec::new();
    for j in 0..SEARCH_LEVELS {
        let delta = SEARCH_START / 4f64.powi(j as i32);
        if let Some(hit) = search_level(f, z, k, delta, seed)? {
            levels.push(hit);
        }
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut distances: Vec<f64> = Vec::new();
    for (x, r) in levels {
        let d = z.distance(&x)?;
        let accept = match (ratios.first(), ratios.last(), distances.last()) {
            (None, _, _) => true,
            (Some(&r1), Some(&prev), Some(&dprev)) => {
                r < prev && r <= r1 / (ratios.len() + 1) as f64 && d < 0.5 * dprev
            }
            _ => unreachable!(),
        };
        if accept {
            points.push(x);
            ratios.push(r);
            distances.push(d);
        }
    }
    if points.len() < MIN_ANNULI {
        return Ok(None);
    }
    Ok(Some(ViolationSequence { k, points, distances, ratios }))
}

/// Empirical constants of the three corollary hypotheses, per annulus.
///
/// With `P = f1 - f`: `C = inf nu(df) / dist`, `C1 = sup |P| / nu(df)^2`,
/// `C2 = sup |dP| / nu(df)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub radii: Vec<f64>,
    pub c_per_annulus: Vec<f64>,
    pub c1_per_annulus: Vec<f64>,
    pub c2_per_annulus: Vec<f64>,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    /// Samples off `Z` where `nu(df)` vanished numerically.
    pub skipped: usize,
    pub c_positive: bool,
    pub c1_bounded: bool,
    pub c2_below_half: bool,
    pub pass: bool,
    pub seed: u64,
}

const NU_ZERO: f64 = 1e-14;

/// A per-annulus supremum sequence diverges when it grows strictly by an overall factor of two.
fn diverges(sup: &[f64]) -> bool {
    let inv: Vec<f64> = sup.iter().map(|s| if *s == 0.0 { f64::INFINITY } else { 1.0 / s }).collect();
    classify(&inv) == Verdict::Fails || sup.iter().any(|s| !s.is_finite())
}

pub fn check_corollary_hypotheses(pair: &GermPair, cfg: &EstimateConfig) -> Result<CorollaryReport> {
    cfg.validate()?;
    let p = pair.difference()?;
    let f = &pair.f;
    let z = &pair.z;
    let mut skipped = 0;
    let (mut cs, mut c1s, mut c2s) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..cfg.radii.len() {
        let samples = annulus_samples(f, z, cfg, j)?;
        let extra: Vec<(f64, f64)> = samples
            .par_iter()
            .map(|s| Ok((qmc::norm(&p.eval(&s.x)?), p.jacobian(&s.x)?.spectral_norm())))
            .collect::<Result<_>>()?;
        let (mut c, mut c1, mut c2) = (f64::INFINITY, 0.0f64, 0.0f64);
        let mut used = 0;
        for (s, (pv, dp)) in samples.iter().zip(extra) {
            if s.dist < DIST_FLOOR {
                continue;
            }
            if s.nu <= NU_ZERO {
                skipped += 1;
                continue;
            }
            used += 1;
            c = c.min(s.nu / s.dist);
            c1 = c1.max(pv / (s.nu * s.nu));
            c2 = c2.max(dp / s.nu);
        }
        if used == 0 {
            return Err(Error::invalid(format!("annulus {j} has no usable samples")));
        }
        cs.push(c);
        c1s.push(c1);
        c2s.push(c2);
    }
    let c = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let c1 = c1s.iter().copied().fold(0.0, f64::max);
    let c2 = c2s.iter().copied().fold(0.0, f64::max);
    let c_positive = c > POSITIVE_FLOOR && classify(&cs) != Verdict::Fails;
    let c1_bounded = !diverges(&c1s);
    let c2_below_half = c2 < 0.5 && !diverges(&c2s);
    Ok(CorollaryReport {
        radii: cfg.radii.clone(),
        c_per_annulus: cs,
        c1_per_annulus: c1s,
        c2_per_annulus: c2s,
        c,
        c1,
        c2,
        skipped,
        c_positive,
        c1_bounded,
        c2_below_half,
        pass: c_positive && c1_bounded && c2_below_half,
        seed: cfg.seed,
    })
}
