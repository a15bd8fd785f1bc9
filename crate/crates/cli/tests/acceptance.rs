//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Reference values come from oracles written here rather than from the library: brute-force
//! sphere scans, nalgebra SVDs, hand-derived closed forms and scalar root finding.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zjet_core::bl_construct::{assemble_f, choose_lambdas, make_bump, verify_construction, DEFAULT_INNER_RADIUS};
use zjet_core::lojasiewicz::{
    check_corollary_hypotheses, estimate_condition, fit_exponent, EstimateConfig, Verdict, ViolationSequence,
};
use zjet_core::trivializer::{
    calibrate_constants, flow, gronwall_check, isotopy, start_grid, CalibrationConfig, Deformation, FlowConfig,
    IsotopyResult, VectorField, GRONWALL_EPS,
};
use zjet_core::{ComplexLinearMap, Germ, GermFile, GermPair, LinearMap, PolyGermMap, ZSpec};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- shared samples

const SHAPES: [(usize, usize); 15] = [
    (1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (1, 6),
    (2, 2), (2, 3), (2, 4), (2, 5), (2, 6),
    (3, 3), (3, 4), (3, 5), (3, 6),
];

fn uniform_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// 500 maps cycling through every shape with `1 <= m <= 3`, `m <= n <= 6`.
fn sample_maps() -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..500)
        .map(|i| {
            let (m, n) = SHAPES[i % SHAPES.len()];
            uniform_matrix(&mut rng, m, n)
        })
        .collect()
}

fn lin(a: &DMatrix<f64>) -> LinearMap {
    LinearMap::from_matrix(a.clone()).expect("valid matrix")
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().max()
}

// ---------------------------------------------------------------- criterion 1

const SPHERE_POINTS: usize = 100_000;

/// Quasi-uniform points on `S^(m-1)`: equispaced angles for `m = 2`, a Fibonacci lattice for `m = 3`.
fn sphere_scan(m: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..SPHERE_POINTS)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / SPHERE_POINTS as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..SPHERE_POINTS)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / SPHERE_POINTS as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => unreachable!(),
    }
}

fn quad(g: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let v = DVector::from_column_slice(phi);
    (v.transpose() * g * &v)[(0, 0)].max(0.0)
}

/// `min |A^T phi|` over the scan, then shrinking tangent-plane grids around the best point.
fn brute_force_nu(a: &DMatrix<f64>, scan: &[Vec<f64>]) -> f64 {
    let g = a * a.transpose();
    let m = a.nrows();
    let mut best = scan[0].clone();
    let mut val = quad(&g, &best);
    for phi in scan {
        let q = quad(&g, phi);
        if q < val {
            val = q;
            best = phi.clone();
        }
    }
    if m > 1 {
        let mut width = 0.05;
        for _ in 0..50 {
            // orthonormal tangent basis at `best`
            let p = DVector::from_column_slice(&best);
            let mut basis: Vec<DVector<f64>> = Vec::new();
            for e in 0..m {
                let mut v = DVector::zeros(m);
                v[e] = 1.0;
                v -= &p * p.dot(&v);
                for b in &basis {
                    v -= b * b.dot(&v);
                }
                if v.norm() > 1e-6 && basis.len() < m - 1 {
                    basis.push(v.normalize());
                }
            }
            let steps: Vec<f64> = (-4..=4).map(|s| width * s as f64 / 4.0).collect();
            let mut offsets: Vec<Vec<f64>> = vec![vec![]];
            for _ in 0..m - 1 {
                offsets = offsets
                    .into_iter()
                    .flat_map(|o| steps.iter().map(move |s| [o.clone(), vec![*s]].concat()))
                    .collect();
            }
            for o in offsets {
                let mut q = p.clone();
                for (c, b) in o.iter().zip(&basis) {
                    q += b * *c;
                }
                let q = q.normalize();
                let v = quad(&g, q.as_slice());
                if v < val {
                    val = v;
                    best = q.as_slice().to_vec();
                }
            }
            width *= 0.7;
        }
    }
    val.sqrt()
}

fn criterion_1() -> Outcome {
    let scans: Vec<Vec<Vec<f64>>> = (1..=3).map(sphere_scan).collect();
    let mut worst: f64 = 0.0;
    for a in sample_maps() {
        let oracle = brute_force_nu(&a, &scans[a.nrows() - 1]);
        let err = (lin(&a).nu() - oracle).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-3, "{}x{} map: nu = {}, oracle = {oracle}", a.nrows(), a.ncols(), lin(&a).nu());
    }
    Ok(format!("500 maps, max |nu - oracle| = {worst:.2e}"))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for i in 0..1000 {
        let (m, n) = SHAPES[rng.random_range(0..SHAPES.len())];
        let a = uniform_matrix(&mut rng, m, n);
        // alternate between unrelated pairs and nearby ones
        let scale = if i % 2 == 0 { 1.0 } else { 1e-3 };
        let b = &a + uniform_matrix(&mut rng, m, n) * scale;
        let gap = spectral_norm(&(&a - &b)) + 1e-12 - (lin(&a).nu() - lin(&b).nu()).abs();
        tightest = tightest.min(gap);
        if gap < 0.0 {
            violations += 1;
        }
    }
    ensure!(violations == 0, "{violations} Lipschitz violations");
    Ok(format!("1000 pairs, 0 violations, min slack {tightest:.2e}"))
}

// ---------------------------------------------------------------- criterion 3

/// `nu / g'` bands of `sample_maps()` per shape, frozen from a reference run.
const BAND_FIXTURES: [(usize, usize, f64, f64); 15] = [
    (1, 1, 1.0, 1.0),
    (1, 2, 1.000402762642222, 1.3797585039930595),
    (1, 3, 1.0222599900691767, 1.569005290698238),
    (1, 4, 1.0421142949571696, 1.7985748076564465),
    (1, 5, 1.1011252694049476, 1.980873007282754),
    (1, 6, 1.190625006897377, 2.0145733229132765),
    (2, 2, 0.624041641439304, 0.991415073883668),
    (2, 3, 0.6975997697749559, 1.1305675480101351),
    (2, 4, 0.7611815415921915, 1.247472828047475),
    (2, 5, 0.7808944896532426, 1.243189708689854),
    (2, 6, 0.8317664154227467, 1.4683424605475346),
    (3, 3, 0.4755792361769096, 0.9709878771302493),
    (3, 4, 0.551476370595671, 1.0893606753212106),
    (3, 5, 0.6393219733911158, 1.180556773563533),
    (3, 6, 0.6415638608128078, 1.1340483192720519),
];

/// The same map with its last row replaced by a combination of the others (zero when `m = 1`).
fn rank_deficient(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let mut d = a.clone();
    let mut last = a.row(0) * 0.0;
    for i in 0..m - 1 {
        last += a.row(i) * (0.5 + i as f64);
    }
    d.set_row(m - 1, &last);
    d
}

fn criterion_3() -> Outcome {
    let maps = sample_maps();
    let mut bands: Vec<(usize, usize, f64, f64)> = SHAPES.iter().map(|&(m, n)| (m, n, f64::INFINITY, 0.0)).collect();
    for a in &maps {
        let l = lin(a);
        let (nu, g) = (l.nu(), l.g_prime());
        ensure!(nu > 0.0 && g > 0.0, "full-rank map with nu = {nu}, g' = {g}");
        let d = lin(&rank_deficient(a));
        let scale = a.norm().powi(a.nrows() as i32).max(1.0);
        let (dn, dg) = (d.nu(), d.g_prime());
        ensure!(dn <= 1e-12 * scale && dg <= 1e-12 * scale, "rank-deficient map with nu = {dn:e}, g' = {dg:e}");
        let r = nu / g;
        let slot = SHAPES.iter().position(|&s| s == (a.nrows(), a.ncols())).unwrap();
        bands[slot].2 = bands[slot].2.min(r);
        bands[slot].3 = bands[slot].3.max(r);
        if a.nrows() == 1 {
            // a row vector: nu = |a|, g' = max |a_i|
            ensure!(r >= 1.0 - 1e-12 && r <= (a.ncols() as f64).sqrt() + 1e-12, "row ratio {r} outside [1, sqrt n]");
        }
    }
    for (got, want) in bands.iter().zip(BAND_FIXTURES.iter()) {
        ensure!(got.2 > 0.0 && got.2 <= got.3 && got.3.is_finite(), "degenerate band {got:?}");
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * y.abs().max(1.0);
        ensure!(close(got.2, want.2) && close(got.3, want.3), "band {got:?} differs from fixture {want:?}");
    }
    let lo = bands.iter().map(|b| b.2).fold(f64::INFINITY, f64::min);
    let hi = bands.iter().map(|b| b.3).fold(0.0, f64::max);
    Ok(format!("nu = 0 <=> g' = 0 on 1000 maps; 15 bands match fixtures, overall [{lo:.3}, {hi:.3}]"))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let (m, n) = SHAPES[i % SHAPES.len()];
        let a = DMatrix::from_fn(m, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let oracle = a.clone().singular_values().min();
        let c = ok(ComplexLinearMap::from_matrix(a))?;
        let err = (c.realify().nu() - oracle).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-10, "{m}x{n}: realified nu off by {err:e}");
    }
    Ok(format!("200 complex maps, max error {worst:.2e}"))
}

// ---------------------------------------------------------------- criterion 5

fn power(p: u32, k: u32) -> PolyGermMap {
    PolyGermMap::scalar(2, k, &[(1, &[p, 0])]).expect("monomial")
}

fn axis() -> ZSpec {
    ZSpec::subspace(2, vec![0]).expect("axis")
}

fn criterion_5() -> Outcome {
    let cfg = EstimateConfig::dyadic(0.5, 4, 1024, 5);
    let sq = ok(estimate_condition(&power(2, 2), &axis(), 2, &cfg))?;
    ensure!((sq.c_hat - 2.0).abs() <= 0.02, "x^2: C_hat = {}", sq.c_hat);
    ensure!(sq.verdict == Verdict::Holds, "x^2: verdict {}", sq.verdict);

    // ratio 3|x| on a homothetic sample: annulus minima proportional to the radius
    let cube = ok(estimate_condition(&power(3, 2), &axis(), 2, &cfg))?;
    ensure!(cube.verdict == Verdict::Fails, "x^3: verdict {}", cube.verdict);
    let per_radius: Vec<f64> = cube.annuli.iter().map(|a| a.min_ratio / a.outer_radius).collect();
    for (a, q) in cube.annuli.iter().zip(&per_radius) {
        ensure!((q - per_radius[0]).abs() <= 1e-9 * per_radius[0], "x^3: minima not proportional to radius {per_radius:?}");
        ensure!((a.min_ratio - 3.0 * a.argmin[0].abs()).abs() <= 1e-12, "x^3: ratio at argmin is not 3|x|");
    }

    let t2 = ok(fit_exponent(&power(2, 2), &axis(), 2, &cfg))?.theta;
    let t3 = ok(fit_exponent(&power(3, 2), &axis(), 2, &cfg))?.theta;
    ensure!((t2 - 1.0).abs() <= 0.05 && (t3 - 2.0).abs() <= 0.05, "exponents {t2}, {t3}");
    Ok(format!("C_hat = {:.6}, x^3 minima / r = {:.4}, exponents {t2:.4} / {t3:.4}", sq.c_hat, per_radius[0]))
}

// ---------------------------------------------------------------- criteria 6 and 7

struct FlowRun {
    vf: VectorField,
    result: IsotopyResult,
}

fn cubic_pair() -> Result<GermPair, String> {
    ok(GermPair::new(power(2, 2), ok(PolyGermMap::scalar(2, 2, &[(1, &[2, 0]), (1, &[3, 0])]))?, axis()))
}

fn flow_run() -> Result<FlowRun, String> {
    let pair = cubic_pair()?;
    let def = ok(Deformation::new(&pair, 0))?;
    let report = ok(estimate_condition(&pair.f, &pair.z, 2, &EstimateConfig::dyadic(0.5, 4, 1024, 0)))?;
    let consts = ok(calibrate_constants(&def, &pair.z, &report, &CalibrationConfig::default()))?;
    let vf = ok(VectorField::new(def, pair.z.clone(), consts))?;
    let grid = ok(start_grid(&vf, 64, 0))?;
    let result = ok(isotopy(&vf, &grid, &FlowConfig::default()))?;
    Ok(FlowRun { vf, result })
}

/// Positive root of `h^2 + h^3 = c` by bisection on `[0, 1]`.
fn cubic_root(c: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid + mid * mid * mid < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_6(run: &FlowRun) -> Outcome {
    let res = &run.result;
    ensure!(res.records.len() == 64, "grid has {} points", res.records.len());
    let (mut conservation, mut inverse): (f64, f64) = (0.0, 0.0);
    let mut on_z = 0;
    for rec in &res.records {
        let tr = &rec.trajectory;
        let (x, h) = (&tr.x0, tr.endpoint());
        conservation = conservation.max((h[0] * h[0] + h[0].powi(3) - x[0] * x[0]).abs());
        inverse = inverse.max(*rec.inverse.last().unwrap());
        if x[0] == 0.0 {
            on_z += 1;
            ensure!(tr.points.iter().all(|p| p == x), "Z point {x:?} moved");
        }
    }
    ensure!(on_z > 0, "grid has no points on Z");
    ensure!(conservation <= 1e-6, "max |f1(H(x,1)) - f(x)| = {conservation:e}");
    ensure!(inverse <= 1e-6, "max round-trip residual {inverse:e}");

    let tr = ok(flow(&run.vf, &[0.1, 0.0], &FlowConfig::default()))?;
    let end = tr.endpoint();
    let h = cubic_root(0.01);
    ensure!((end[0] - h).abs() <= 1e-5 && end[1] == 0.0, "endpoint {end:?}, expected ({h}, 0)");
    Ok(format!(
        "U = {:.5}, conservation {conservation:.1e}, round trip {inverse:.1e}, {on_z} Z points fixed, endpoint {:.8} vs {h:.8}",
        run.vf.constants().u_radius,
        end[0]
    ))
}

fn criterion_7(run: &FlowRun) -> Outcome {
    let c = run.vf.constants();
    let res = &run.result;
    ensure!(res.field.max_field_ratio <= 1.0 + 1e-6, "field ratio {} over all evaluations", res.field.max_field_ratio);
    let mut worst: f64 = 0.0;
    for rec in &res.records {
        let tr = &rec.trajectory;
        let d0 = tr.x0[0].abs();
        for (t, h) in tr.times.iter().zip(&tr.points) {
            let d = h[0].abs();
            let w = ok(run.vf.eval(*t, h))?;
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            ensure!(norm <= c.c_double_prime * d * (1.0 + 1e-6), "|W| = {norm:e} at {h:?}, bound {:e}", c.c_double_prime * d);
            if d > 0.0 {
                worst = worst.max(norm / (c.c_double_prime * d));
            }
            let (lo, hi) = ((-c.c_double_prime * t).exp() * d0, (c.c_double_prime * t).exp() * d0);
            ensure!(
                d >= lo * (1.0 - GRONWALL_EPS) && d <= hi * (1.0 + GRONWALL_EPS),
                "dist {d} outside [{lo}, {hi}] at t = {t}"
            );
        }
    }
    let g = gronwall_check(res, c, GRONWALL_EPS);
    ensure!(g.pass, "gronwall_check reported {} violations", g.violations.len());
    Ok(format!(
        "C'' = {:.4}, max |W| / (C'' dist) = {:.3e} over {} evaluations, Gronwall band on {} checkpoints",
        c.c_double_prime, res.field.max_field_ratio, res.field.evaluations, g.checked
    ))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let k = 4;
    let f = ok(PolyGermMap::scalar(2, k, &[(1, &[2, 2])]))?;
    let z = ok(ZSpec::hyperplane_union(2, vec![0, 1]))?;
    let points: Vec<Vec<f64>> = (1..=5).map(|v| vec![3f64.powi(-v), 3f64.powi(-v)]).collect();
    let seq = ok(ViolationSequence::from_points(&f, &z, k, points.clone()))?;
    let lambdas: Vec<f64> = ok(choose_lambdas(&f, &points, k, &z))?.iter().map(|c| c.lambda).collect();
    let pf = ok(assemble_f(&f, &z, &seq, &lambdas, ok(make_bump(DEFAULT_INNER_RADIUS))?))?;
    let g = pf.perturbed();

    let mut decay = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (a, lambda) in points.iter().zip(&lambdas) {
        let value = ok(g.eval(a))?[0];
        let grad = ok(g.jacobian(a))?;
        let grad_norm = (0..2).map(|i| grad.get(0, i).powi(2)).sum::<f64>().sqrt();
        ensure!(value.abs() <= 1e-10 && grad_norm <= 1e-10, "at {a:?}: value {value:e}, gradient {grad_norm:e}");

        // Hess (f - F)(a) = Hess f(a) - lambda I, with Hess(x^2 y^2) by hand
        let (x, y) = (a[0], a[1]);
        let expected = Matrix2::new(2.0 * y * y, 4.0 * x * y, 4.0 * x * y, 2.0 * x * x) - Matrix2::identity() * *lambda;
        let det = expected.determinant();
        let scale = expected.norm().max(*lambda).powi(2);
        ensure!(det.abs() >= 1e-6 * scale, "det Hess = {det:e} at {a:?} (scale {scale:e})");
        // central differences of the library gradient agree with the hand Hessian
        let step = 1e-6 * x;
        for j in 0..2 {
            let mut p = a.clone();
            let mut q = a.clone();
            p[j] += step;
            q[j] -= step;
            let (gp, gq) = (ok(g.jacobian(&p))?, ok(g.jacobian(&q))?);
            for i in 0..2 {
                let fd = (gp.get(0, i) - gq.get(0, i)) / (2.0 * step);
                ensure!((fd - expected[(i, j)]).abs() <= 1e-4 * expected.norm(), "Hessian entry ({i},{j}) at {a:?}");
            }
        }

        // max |F| / dist^k over the ball, dist to {xy = 0}
        let d = x.min(y);
        let r = d / 4.0;
        let mut worst: f64 = 0.0;
        for _ in 0..4000 {
            let (t, s): (f64, f64) = (rng.random_range(0.0..2.0 * PI), rng.random::<f64>().sqrt());
            let p = [x + r * s * t.cos(), y + r * s * t.sin()];
            let big_f = ok(pf.eval(&p))?[0];
            worst = worst.max(big_f.abs() / p[0].abs().min(p[1].abs()).powi(k as i32));
        }
        decay.push(worst);
    }
    ensure!(decay.windows(2).all(|w| w[1] < w[0]), "max |F| / dist^k not strictly decreasing: {decay:?}");
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let gap = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
            let reach = (points[i][0] + points[j][0]) / 4.0;
            ensure!(gap > reach, "balls {i} and {j} overlap");
        }
    }
    let rep = ok(verify_construction(&pf, k, 1024, 0))?;
    ensure!(rep.pass && rep.disjoint, "library verification failed: {:?}", rep.failures);
    Ok(format!("N = 5, exact disjointness, decay {:.3e} -> {:.3e}", decay[0], decay[4]))
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let cfg = EstimateConfig::dyadic(0.5, 4, 1024, 9);
    let quartic = ok(GermPair::new(power(2, 2), ok(PolyGermMap::scalar(2, 2, &[(1, &[2, 0]), (1, &[4, 0])]))?, axis()))?;
    let linear = ok(GermPair::new(power(2, 2), ok(PolyGermMap::scalar(2, 2, &[(1, &[2, 0]), (1, &[1, 0])]))?, axis()))?;

    let good = ok(check_corollary_hypotheses(&quartic, &cfg))?;
    ensure!(good.pass && good.c2 < 0.5, "(x^2, x^2 + x^4): pass = {}, C2 = {}", good.pass, good.c2);
    // |dP| / nu = 4|x|^3 / (2|x|) = 2x^2, whose supremum on the annulus of radius r is at most 2r^2
    for (r, c2) in good.radii.iter().zip(&good.c2_per_annulus) {
        ensure!(*c2 <= 2.0 * r * r * (1.0 + 1e-12) && *c2 >= 2.0 * r * r * 0.9, "C2 on radius {r} is {c2}");
    }
    ensure!(good.c2_per_annulus.windows(2).all(|w| w[1] < w[0]), "C2 not decreasing");

    let bad = ok(check_corollary_hypotheses(&linear, &cfg))?;
    ensure!(!bad.pass && !bad.c2_below_half, "(x^2, x^2 + x): pass = {}", bad.pass);
    ensure!(bad.c2_per_annulus.windows(2).all(|w| w[1] > w[0]), "C2 not growing: {:?}", bad.c2_per_annulus);

    ensure!(ok(check_corollary_hypotheses(&quartic, &cfg))? == good, "first pair not reproducible");
    ensure!(ok(check_corollary_hypotheses(&linear, &cfg))? == bad, "second pair not reproducible");
    Ok(format!(
        "C2 {:.2e} -> {:.2e} (pass); C2 {:.2e} -> {:.2e} (fail)",
        good.c2_per_annulus[0],
        good.c2_per_annulus.last().unwrap(),
        bad.c2_per_annulus[0],
        bad.c2_per_annulus.last().unwrap()
    ))
}

// ---------------------------------------------------------------- criterion 10

fn write_germ(dir: &Path, name: &str, f: &PolyGermMap, z: &ZSpec) -> String {
    let path = dir.join(name);
    std::fs::write(&path, GermFile::from_germ(f, z).to_json()).expect("write germ");
    path.display().to_string()
}

fn without_timestamp(report: &str) -> String {
    report.lines().filter(|l| !l.trim_start().starts_with("\"generated_at\"")).collect::<Vec<_>>().join("\n")
}

fn criterion_10() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let d = dir.path();
    let cross = ok(ZSpec::hyperplane_union(2, vec![0, 1]))?;
    let x2 = write_germ(d, "x2.json", &power(2, 2), &axis());
    let x3 = write_germ(d, "x3.json", &power(3, 2), &axis());
    let x2x3 = write_germ(d, "x2x3.json", &ok(PolyGermMap::scalar(2, 2, &[(1, &[2, 0]), (1, &[3, 0])]))?, &axis());
    let x2x4 = write_germ(d, "x2x4.json", &ok(PolyGermMap::scalar(2, 2, &[(1, &[2, 0]), (1, &[4, 0])]))?, &axis());
    let x2y2 = write_germ(d, "x2y2.json", &ok(PolyGermMap::scalar(2, 4, &[(1, &[2, 2])]))?, &cross);
    let pts = d.join("points.json");
    let points: Vec<Vec<f64>> = (1..=5).map(|v| vec![3f64.powi(-v), 3f64.powi(-v)]).collect();
    ok(std::fs::write(&pts, ok(serde_json::to_string(&points))?))?;
    let pts = pts.display().to_string();

    let runs: Vec<(&str, Vec<&str>, i32)> = vec![
        ("check", vec!["--germ", &x3], 2),
        ("exponent", vec!["--germ", &x2], 0),
        ("trivialize", vec!["--germ", &x2, "--pair", &x2x3], 0),
        ("corollary", vec!["--germ", &x2, "--pair", &x2x4], 0),
        ("construct", vec!["--germ", &x2y2, "--points", &pts], 0),
    ];
    let mut bytes = 0;
    for (cmd, extra, code) in &runs {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = d.join(format!("{cmd}-{attempt}"));
            let status = ok(Command::new(env!("CARGO_BIN_EXE_zjet"))
                .args(["--cmd", cmd, "--seed", "17"])
                .args(extra)
                .arg("--out")
                .arg(&out)
                .output())?;
            ensure!(
                status.status.code() == Some(*code),
                "{cmd}: exit {:?}, expected {code}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr)
            );
            let mut files: Vec<_> = ok(std::fs::read_dir(&out))?.map(|e| e.unwrap().path()).collect();
            files.sort();
            let contents: Vec<(String, String)> = files
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p).unwrap();
                    let name = p.file_name().unwrap().to_string_lossy().into_owned();
                    let text = if name == "report.json" { without_timestamp(&text) } else { text };
                    (name, text)
                })
                .collect();
            outputs.push(contents);
        }
        ensure!(outputs[0].len() == 2, "{cmd}: expected report and one CSV, got {:?}", outputs[0].iter().map(|c| &c.0).collect::<Vec<_>>());
        ensure!(outputs[0] == outputs[1], "{cmd}: outputs differ between runs");
        bytes += outputs[0].iter().map(|c| c.1.len()).sum::<usize>();
    }
    Ok(format!("5 commands x 2 runs byte-identical ({bytes} bytes compared)"))
}

// ---------------------------------------------------------------- driver

fn report(id: usize, name: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut outcome = body();
    let elapsed = start.elapsed();
    if let (Ok(_), Some(limit)) = (&outcome, limit) {
        if elapsed > limit {
            outcome = Err(format!("took {elapsed:.1?}, limit {limit:?}"));
        }
    }
    let secs = elapsed.as_secs_f64();
    match &outcome {
        Ok(detail) => println!("PASS  {id:>2}  {name}: {detail} [{secs:.2} s]"),
        Err(reason) => println!("FAIL  {id:>2}  {name}: {reason} [{secs:.2} s]"),
    }
    outcome.is_ok()
}

fn main() {
    let s = Duration::from_secs;
    let mut passed = Vec::new();
    passed.push(report(1, "nu oracle equivalence", Some(s(60)), criterion_1));
    passed.push(report(2, "nu Lipschitz", None, criterion_2));
    passed.push(report(3, "g' sandwich", None, criterion_3));
    passed.push(report(4, "realification", None, criterion_4));
    passed.push(report(5, "estimator closed forms", Some(s(30)), criterion_5));
    // the flow run is shared: 6 times it, 7 inspects it
    let mut run = None;
    passed.push(report(6, "trivialization", Some(s(60)), || {
        let r = flow_run()?;
        let detail = criterion_6(&r);
        run = Some(r);
        detail
    }));
    passed.push(report(7, "field bound", None, || match &run {
        Some(r) => criterion_7(r),
        None => Err("no flow run to inspect".into()),
    }));
    passed.push(report(8, "counterexample construction", Some(s(30)), criterion_8));
    passed.push(report(9, "corollary hypotheses", None, criterion_9));
    passed.push(report(10, "CLI determinism", None, criterion_10));
    let failed = passed.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", passed.len() - failed, passed.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
