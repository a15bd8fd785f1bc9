//! Experiment driver behind the `zjet` binary.
//!
//! Every command writes `report.json` plus one CSV into the output directory and maps its
//! outcome onto the exit protocol: 0 when the condition holds or every invariant passes,
//! 2 when a failure or violation was found, 1 on errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use zjet_core::bl_construct::{
    assemble_f, choose_lambdas, make_bump, renormalize, verify_construction, DEFAULT_INNER_RADIUS,
};
use zjet_core::germ::ZSpecDef;
use zjet_core::lojasiewicz::{
    check_corollary_hypotheses, estimate_condition, find_violation_sequence, fit_exponent, EstimateConfig,
    Verdict, ViolationSequence,
};
use zjet_core::trivializer::{
    calibrate_constants, gronwall_check, isotopy, start_grid, CalibrationConfig, Deformation, FlowConfig,
    VectorField, GRONWALL_EPS,
};
use zjet_core::{GermFile, GermPair, PolyGermMap, ZSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const ANNULI_FILE: &str = "annuli.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const BALLS_FILE: &str = "balls.csv";

/// Relative slack on the field bound `|W| <= C'' dist`.
const FIELD_BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Input { path: String, source: zjet_core::Error },
    #[error(transparent)]
    Core(#[from] zjet_core::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Sampled estimate of `nu(df) >= C dist^(k-1)`; attaches a violating sequence on failure.
    Check,
    /// Log-log slope of the per-annulus minimum of `nu(df)`.
    Exponent,
    /// Calibrate, build the field and flow a grid from `f` to `f1`.
    Trivialize,
    /// Constants of the Lipschitz-differential variant for the pair `f`, `f1`.
    Corollary,
    /// Perturbation breaking the condition along a violating sequence.
    Construct,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "zjet", version, about = "Jet sufficiency experiments relative to a singular set")]
pub struct Args {
    #[arg(long, value_enum)]
    pub cmd: Command,
    /// Germ file for `f`.
    #[arg(long)]
    pub germ: PathBuf,
    /// Germ file for `f1` (trivialize, corollary).
    #[arg(long)]
    pub pair: Option<PathBuf>,
    /// Singular set as inline JSON or a file path; overrides the `z` block of `--germ`.
    #[arg(long)]
    pub z: Option<String>,
    /// Jet order; defaults to the germ file's `k`.
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub annuli: usize,
    /// Samples per annulus.
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    /// Outer radius of the first annulus.
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_ode: f64,
    /// Bound on conservation and round-trip residuals.
    #[arg(long, default_value_t = 1e-6)]
    pub tol_report: f64,
    /// Start points for trivialize.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// JSON array of sequence points for construct; searched for when absent.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Minimum number of balls for construct.
    #[arg(long, default_value_t = 5)]
    pub balls: usize,
    /// Samples per ball when verifying a construction.
    #[arg(long, default_value_t = 1024)]
    pub ball_samples: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Fully resolved inputs. Everything that affects the results is here, so its hash
/// identifies a run; the output directory is not.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub germ: GermFile,
    pub pair: Option<GermFile>,
    pub z: ZSpecDef,
    pub k: u32,
    pub seed: u64,
    pub annuli: usize,
    pub samples: usize,
    pub radius: f64,
    pub tol_ode: f64,
    pub tol_report: f64,
    pub grid: usize,
    pub points: Option<Vec<Vec<f64>>>,
    pub balls: usize,
    pub ball_samples: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn germ_file(path: &Path) -> Result<GermFile> {
    GermFile::parse(&read(path)?).map_err(|source| CliError::Input { path: path.display().to_string(), source })
}

impl ExperimentConfig {
    pub fn from_args(args: &Args) -> Result<Self> {
        for (name, v) in [("tol-ode", args.tol_ode), ("tol-report", args.tol_report), ("radius", args.radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("--{name} must be positive, got {v}")));
            }
        }
        let germ = germ_file(&args.germ)?;
        let pair = args.pair.as_deref().map(germ_file).transpose()?;
        if matches!(args.cmd, Command::Trivialize | Command::Corollary) && pair.is_none() {
            return Err(CliError::Usage(format!("--cmd {:?} needs --pair", args.cmd).to_lowercase()));
        }
        let z = match &args.z {
            None => germ.z.clone(),
            Some(s) => {
                let (origin, text) = if s.trim_start().starts_with('{') {
                    ("--z".to_string(), s.clone())
                } else {
                    (s.clone(), read(Path::new(s))?)
                };
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Input { path: origin, source: zjet_core::Error::from(e) })?
            }
        };
        let points = match &args.points {
            None => None,
            Some(p) => Some(serde_json::from_str(&read(p)?).map_err(|e| CliError::Input {
                path: p.display().to_string(),
                source: zjet_core::Error::from(e),
            })?),
        };
        Ok(ExperimentConfig {
            command: args.cmd,
            k: args.k.unwrap_or(germ.k),
            germ,
            pair,
            z,
            seed: args.seed,
            annuli: args.annuli,
            samples: args.samples,
            radius: args.radius,
            tol_ode: args.tol_ode,
            tol_report: args.tol_report,
            grid: args.grid,
            points,
            balls: args.balls,
            ball_samples: args.ball_samples,
        })
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn estimate(&self) -> EstimateConfig {
        EstimateConfig::dyadic(self.radius, self.annuli, self.samples, self.seed)
    }

    fn load(&self, file: &GermFile) -> Result<(PolyGermMap, ZSpec)> {
        let f = file.germ()?.with_k(self.k)?;
        let shared: std::sync::Arc<dyn zjet_core::Germ> = std::sync::Arc::new(f.clone());
        let z = ZSpec::resolve(&self.z, f.n(), Some(shared))?;
        Ok((f, z))
    }

    fn germ_pair(&self) -> Result<GermPair> {
        let (f, z) = self.load(&self.germ)?;
        let file = self.pair.as_ref().ok_or_else(|| CliError::Usage("missing --pair".into()))?;
        let f1 = file.germ()?.with_k(self.k)?;
        Ok(GermPair::new(f, f1, z)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    Inconclusive,
    Pass,
    Fail,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Fails => "fails",
            Status::Inconclusive => "inconclusive",
            Status::Pass => "pass",
            Status::Fail => "fail",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Holds | Status::Pass => 0,
            _ => 2,
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Holds => Status::Holds,
            Verdict::Fails => Status::Fails,
            Verdict::Inconclusive => Status::Inconclusive,
        }
    }

    fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// What a command produced, before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub result: Value,
    /// File name and contents.
    pub csv: (&'static str, String),
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    tool_version: &'static str,
    core_version: &'static str,
    command: Command,
    config_hash: String,
    status: Status,
    exit_code: i32,
    config: &'a ExperimentConfig,
    result: &'a Value,
    /// Kept last so that comparisons can drop a single line.
    generated_at: String,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.command {
        Command::Check => check(cfg),
        Command::Exponent => exponent(cfg),
        Command::Trivialize => trivialize(cfg),
        Command::Corollary => corollary(cfg),
        Command::Construct => construct(cfg),
    }
}

fn check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (f, z) = cfg.load(&cfg.germ)?;
    let report = estimate_condition(&f, &z, cfg.k, &cfg.estimate())?;
    let violation = match report.verdict {
        Verdict::Holds => None,
        _ => find_violation_sequence(&f, &z, cfg.k, cfg.seed)?,
    };
    Ok(Outcome {
        status: Status::from_verdict(report.verdict),
        csv: (ANNULI_FILE, report.to_csv()),
        result: json!({ "condition": report, "violation_sequence": violation }),
    })
}

fn exponent(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (f, z) = cfg.load(&cfg.germ)?;
    let fit = fit_exponent(&f, &z, cfg.k, &cfg.estimate())?;
    let mut csv = String::from("annulus,radius,min_nu\n");
    for (j, (r, v)) in fit.radii.iter().zip(&fit.min_nu).enumerate() {
        csv.push_str(&format!("{j},{r},{v}\n"));
    }
    Ok(Outcome { status: Status::from_pass(fit.plausible), csv: (ANNULI_FILE, csv), result: json!({ "exponent": fit }) })
}

fn corollary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let pair = cfg.germ_pair()?;
    let rep = check_corollary_hypotheses(&pair, &cfg.estimate())?;
    let mut csv = String::from("annulus,radius,c,c1,c2\n");
    for j in 0..rep.radii.len() {
        csv.push_str(&format!(
            "{j},{},{},{},{}\n",
            rep.radii[j], rep.c_per_annulus[j], rep.c1_per_annulus[j], rep.c2_per_annulus[j]
        ));
    }
    Ok(Outcome { status: Status::from_pass(rep.pass), csv: (ANNULI_FILE, csv), result: json!({ "corollary": rep }) })
}

#[derive(Debug, Serialize)]
struct IsotopySummary {
    grid_points: usize,
    max_conservation: f64,
    max_inverse: f64,
    max_field_ratio: f64,
    max_linear_residual: f64,
    min_image_separation: f64,
    identity_at_zero: bool,
    z_points_fixed: bool,
    gronwall: bool,
    pass: bool,
}

fn trivialize(cfg: &ExperimentConfig) -> Result<Outcome> {
    let pair = cfg.germ_pair()?;
    let def = Deformation::new(&pair, cfg.seed)?;
    let condition = estimate_condition(&pair.f, &pair.z, cfg.k, &cfg.estimate())?;
    let calib = CalibrationConfig { seed: cfg.seed, ..Default::default() };
    let consts = calibrate_constants(&def, &pair.z, &condition, &calib)?;
    let vf = VectorField::new(def, pair.z.clone(), consts.clone())?;
    let grid = start_grid(&vf, cfg.grid, cfg.seed)?;
    let res = isotopy(&vf, &grid, &FlowConfig { tol: cfg.tol_ode, ..Default::default() })?;
    let gronwall = gronwall_check(&res, &consts, GRONWALL_EPS);

    let identity_at_zero = res.records.iter().all(|r| r.trajectory.points[0] == r.trajectory.x0);
    let z_points_fixed = res
        .records
        .iter()
        .filter(|r| r.trajectory.on_z)
        .all(|r| r.trajectory.points.iter().all(|p| *p == r.trajectory.x0));
    let mut summary = IsotopySummary {
        grid_points: grid.len(),
        max_conservation: res.max_conservation,
        max_inverse: res.max_inverse,
        max_field_ratio: res.field.max_field_ratio,
        max_linear_residual: res.field.max_scaled_residual,
        min_image_separation: res.min_image_separation,
        identity_at_zero,
        z_points_fixed,
        gronwall: gronwall.pass,
        pass: false,
    };
    summary.pass = summary.max_conservation <= cfg.tol_report
        && summary.max_inverse <= cfg.tol_report
        && summary.max_field_ratio <= 1.0 + FIELD_BOUND_SLACK
        && summary.min_image_separation > 0.0
        && identity_at_zero
        && z_points_fixed
        && gronwall.pass;
    Ok(Outcome {
        status: Status::from_pass(summary.pass),
        csv: (TRAJECTORIES_FILE, res.to_csv()),
        result: json!({
            "summary": summary,
            "constants": consts,
            "condition": condition,
            "gronwall": gronwall,
            "isotopy": res,
        }),
    })
}

fn construct(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (f, z) = cfg.load(&cfg.germ)?;
    let k = cfg.k;
    let seq = match &cfg.points {
        Some(points) => ViolationSequence::from_points(&f, &z, k, points.clone())?,
        None => {
            let found = find_violation_sequence(&f, &z, k, cfg.seed)?.ok_or_else(|| {
                CliError::Usage("no violating sequence found; the condition appears to hold (pass --points)".into())
            })?;
            renormalize(&found, cfg.balls).ok_or_else(|| {
                CliError::Usage(format!("violating sequence has fewer than {} usable points", cfg.balls))
            })?
        }
    };
    if seq.len() < cfg.balls {
        return Err(CliError::Usage(format!("need at least {} points, got {}", cfg.balls, seq.len())));
    }
    let lambdas = choose_lambdas(&f, &seq.points, k, &z)?;
    let values: Vec<f64> = lambdas.iter().map(|c| c.lambda).collect();
    let pf = assemble_f(&f, &z, &seq, &values, make_bump(DEFAULT_INNER_RADIUS)?)?;
    let report = verify_construction(&pf, k, cfg.ball_samples, cfg.seed)?;
    // the perturbed germ goes back through the estimator; failures there are data, not errors
    let perturbed = match estimate_condition(&pf.perturbed(), &z, k, &cfg.estimate()) {
        Ok(r) => json!(r),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut csv = String::from("ball,dist,lambda,value_residual,gradient_residual,hessian_det,decay_ratio,chain_bound\n");
    for b in &report.balls {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            b.nu,
            b.dist,
            b.lambda,
            b.value_residual,
            b.gradient_residual,
            b.hessian_det,
            b.decay_ratio,
            b.chain_bound
        ));
    }
    Ok(Outcome {
        status: Status::from_pass(report.pass),
        csv: (BALLS_FILE, csv),
        result: json!({
            "sequence": seq,
            "lambdas": lambdas,
            "construction": report,
            "perturbed_condition": perturbed,
        }),
    })
}

/// Renders `report.json` for an outcome.
pub fn render_report(cfg: &ExperimentConfig, outcome: &Outcome, generated_at: String) -> String {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        core_version: zjet_core::VERSION,
        command: cfg.command,
        config_hash: cfg.hash(),
        status: outcome.status,
        exit_code: outcome.status.exit_code(),
        config: cfg,
        result: &outcome.result,
        generated_at,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    text
}

/// Writes every artifact to a temporary name first, then renames them into place.
pub fn write_outputs(dir: &Path, files: &[(&str, &str)]) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, contents).map_err(io(&tmp))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).map_err(io(&dest))?;
    }
    Ok(())
}

/// Runs a configuration end to end and returns the exit status.
pub fn run(args: &Args) -> Result<Status> {
    let cfg = ExperimentConfig::from_args(args)?;
    let outcome = execute(&cfg)?;
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let report = render_report(&cfg, &outcome, stamp);
    write_outputs(&args.out, &[(REPORT_FILE, &report), (outcome.csv.0, &outcome.csv.1)])?;
    Ok(outcome.status)
}
