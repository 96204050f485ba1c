//! Batch commands behind the `mobius-mono` binary.
//!
//! Each command turns a validated [`Config`] into a [`ReportDocument`] and,
//! for sweeps, a CSV table. Writing files is left to the caller.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use crate::config::{BuildError, Config, ConfigError};
use crate::geom::{orthonormal_frame, Hyperplane, Isometry, Sphere, VecN};
use crate::mobius::{ball_image, isometric_decomposition, make_sigma_a, MobiusError, MobiusMap, Reflection};
use crate::monotonicity::{
    coarea_check, div_w_check, flux_identity_check, j_of_r, i_of_r, monotone_sweep, prescribed_point_bound, q_a,
    surface_gradient_f, surface_gradient_f_fd, MonoError, MonotonicityReport, Scenario, R_MAX_FRACTION,
};
use crate::quadrature::QuadOptions;
use crate::report::{
    sweep_checks, sweep_csv, BallImageRecord, CheckKind, CheckRecord, DecompositionSummary, ReportDocument,
    SweepSummary,
};
use crate::surfaces::{catenoid, flat_disk, SurfaceError};

/// Relative tolerance of the surface-gradient finite-difference check.
pub const GRADIENT_REL_TOL: f64 = 1e-6;
/// Relative tolerance of the `div W` finite-difference check.
pub const DIV_W_REL_TOL: f64 = 1e-5;
/// Finite-difference step (parameter units) for the gradient check.
pub const GRADIENT_FD_STEP: f64 = 1e-3;
/// Grid resolution per axis used to pick interior check samples.
const CHECK_GRID: usize = 9;

pub const CSV_FILE: &str = "sweep.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Decompose,
    BallImage,
    Sweep,
    Verify,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Decompose => "decompose",
            Command::BallImage => "ball-image",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Selftest => "selftest",
        }
    }
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Pass = 0,
    CheckFailed = 1,
    Config = 2,
    Math = 3,
}

/// A fatal command error, classified by exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandError {
    pub exit: Exit,
    pub message: String,
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.exit {
            Exit::Config => "config error",
            Exit::Math => "precondition violated",
            _ => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

impl std::error::Error for CommandError {}

impl CommandError {
    pub fn config(message: impl Into<String>) -> Self {
        CommandError {
            exit: Exit::Config,
            message: message.into(),
        }
    }

    pub fn math(message: impl Into<String>) -> Self {
        CommandError {
            exit: Exit::Math,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::config(e.to_string())
    }
}

impl From<MobiusError> for CommandError {
    fn from(e: MobiusError) -> Self {
        match e {
            MobiusError::FixesInfinity
            | MobiusError::OriginIsPole
            | MobiusError::PoleEncountered { .. }
            | MobiusError::ValidationFailed(_)
            | MobiusError::InvalidPrescribedPoint(_) => CommandError::math(e.to_string()),
            MobiusError::EmptyWord | MobiusError::DimensionMismatch { .. } | MobiusError::Geom(_) => {
                CommandError::config(e.to_string())
            }
        }
    }
}

impl From<SurfaceError> for CommandError {
    fn from(e: SurfaceError) -> Self {
        CommandError::config(e.to_string())
    }
}

impl From<BuildError> for CommandError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => c.into(),
            BuildError::Mobius(m) => m.into(),
            BuildError::Surface(s) => s.into(),
        }
    }
}

impl From<MonoError> for CommandError {
    fn from(e: MonoError) -> Self {
        match e {
            MonoError::DegenerateRadius { r_max, limit } => CommandError::config(format!(
                "sweep.r_max = {r_max} breaks the degenerate-radius rule: radii must stay ≤ {R_MAX_FRACTION}·|b| = {limit}"
            )),
            MonoError::InvalidRadius { .. } | MonoError::DimensionMismatch { .. } => CommandError::config(e.to_string()),
            MonoError::Mobius(m) => m.into(),
            MonoError::Surface(s) => s.into(),
            other => CommandError::math(other.to_string()),
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub report: ReportDocument,
    pub csv: Option<String>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

impl CommandOutput {
    pub fn exit(&self) -> Exit {
        if self.report.all_pass {
            Exit::Pass
        } else {
            Exit::CheckFailed
        }
    }
}

/// Runs a command. `selftest` ignores `config`.
pub fn run(cmd: Command, config: Option<Config>) -> Result<CommandOutput, CommandError> {
    let start = Instant::now();
    let mut out = match (cmd, config) {
        (Command::Selftest, _) => selftest()?,
        (_, None) => return Err(CommandError::config(format!("`{}` needs --config", cmd.name()))),
        (Command::Decompose, Some(cfg)) => decompose(cfg)?,
        (Command::BallImage, Some(cfg)) => ball_images(cfg)?,
        (Command::Sweep, Some(cfg)) => sweep(cfg)?,
        (Command::Verify, Some(cfg)) => verify(cfg)?,
    };
    out.report.timing.total_seconds = start.elapsed().as_secs_f64();
    out.report.timing.threads = rayon::current_num_threads();
    out.report.finalize();
    Ok(out)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn decompose(cfg: Config) -> Result<CommandOutput, CommandError> {
    let map = cfg.build_map()?;
    let dec = isometric_decomposition(&map)?;
    let summary = DecompositionSummary::of(&dec);
    let mut lines = vec![
        format!("b = {}", fmt_vec(&summary.b)),
        format!("R = {}", summary.radius),
        format!("a = σ(0) = {}", fmt_vec(&summary.a)),
        format!("φ(0) = {}", fmt_vec(&summary.phi_origin)),
        format!("direction = {}", fmt_vec(&summary.direction)),
        format!("ψ translation = {}", fmt_vec(&summary.psi_translation)),
    ];
    for row in &summary.psi_linear {
        lines.push(format!("ψ linear row {}", fmt_vec(row)));
    }
    if summary.psi_reverses_orientation {
        lines.push("ψ reverses orientation".into());
    }
    let mut report = ReportDocument::new(Command::Decompose.name(), Some(cfg));
    report.decomposition = Some(summary);
    Ok(CommandOutput {
        report,
        csv: None,
        summary: lines,
    })
}

fn ball_images(cfg: Config) -> Result<CommandOutput, CommandError> {
    let map = cfg.build_map()?;
    let dec = isometric_decomposition(&map)?;
    let radii = cfg
        .sweep
        .as_ref()
        .map(|s| s.radii.clone())
        .ok_or_else(|| CommandError::config("sweep: a radius grid is required"))?;
    let mut report = ReportDocument::new(Command::BallImage.name(), None);
    let mut lines = Vec::new();
    for r in radii {
        let rec = BallImageRecord::of(r, &ball_image(&dec, r));
        lines.push(match &rec {
            BallImageRecord::Ball { r, center, radius } => format!("r = {r}: ball center {} radius {radius}", fmt_vec(center)),
            BallImageRecord::HalfSpace { r, normal, offset } => {
                format!("r = {r}: half-space <{}, x> < {offset}", fmt_vec(normal))
            }
            BallImageRecord::Exterior { r, center, radius } => {
                format!("r = {r}: exterior of ball center {} radius {radius}", fmt_vec(center))
            }
        });
        report.ball_images.push(rec);
    }
    report.decomposition = Some(DecompositionSummary::of(&dec));
    report.config = Some(cfg);
    Ok(CommandOutput {
        report,
        csv: None,
        summary: lines,
    })
}

/// Builds the scenario of a config. A word that is a single sphere gives a
/// reflection scenario.
pub fn build_scenario(cfg: &Config) -> Result<Scenario, CommandError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CommandError::config("sweep: a radius grid is required"))?;
    let patch = cfg.build_patch()?;
    let map = cfg.build_map()?;
    // surfaces the specific FixesInfinity / OriginIsPole diagnosis
    isometric_decomposition(&map)?;
    let scn = match cfg.bare_sphere() {
        Some((b, r)) => Scenario::reflection(b, r, patch, sweep.r_max),
        None => Scenario::mobius(map, patch, sweep.r_max),
    };
    scn.map_err(|e| {
        let mut err = CommandError::from(e);
        if let (Exit::Config, Some(line)) = (err.exit, cfg.sweep_line()) {
            err.message = format!("line {line}: {}", err.message);
        }
        err
    })
}

fn run_sweep(cfg: &Config, scn: &Scenario) -> Result<MonotonicityReport, CommandError> {
    let sweep = cfg.sweep.as_ref().expect("scenario built from sweep");
    Ok(monotone_sweep(scn, &sweep.radii, sweep.rho_nodes, cfg.quad_options())?)
}

fn sweep_lines(rep: &MonotonicityReport) -> Vec<String> {
    let mut lines = Vec::with_capacity(rep.radii.len() + 1);
    for (i, r) in rep.radii.iter().enumerate() {
        lines.push(format!("r = {r:<10} J = {:.12}  I = {:.12}", rep.j[i].value, rep.i[i].value));
    }
    lines.push(format!(
        "pairs: {} of {} pass; J constant: {}",
        rep.pairs.iter().filter(|p| p.volume.pass && p.weighted.pass && p.monotone).count(),
        rep.pairs.len(),
        rep.constant_j
    ));
    lines
}

fn sweep(cfg: Config) -> Result<CommandOutput, CommandError> {
    let scn = build_scenario(&cfg)?;
    let rep = run_sweep(&cfg, &scn)?;
    let csv = sweep_csv(&rep);
    let mut report = ReportDocument::new(Command::Sweep.name(), None);
    report.decomposition = Some(DecompositionSummary::of(scn.decomposition()));
    report.checks = sweep_checks(&rep);
    report.sweep = Some(SweepSummary::of(&rep, Some(CSV_FILE.into())));
    report.config = Some(cfg);
    Ok(CommandOutput {
        report,
        csv: Some(csv),
        summary: sweep_lines(&rep),
    })
}

/// Parameter points of a coarse interior grid whose images lie in
/// `φ(B_r_max)`.
fn interior_samples(scn: &Scenario) -> Vec<Vec<f64>> {
    let patch = scn.patch();
    let k = patch.k();
    let dom = patch.domain();
    let m = if k <= 2 { CHECK_GRID } else { 5 };
    let s_max = scn.s_of_r(scn.r_max());
    let mut out = Vec::new();
    for flat in 0..m.pow(k as u32) {
        let mut rem = flat;
        let q: Vec<f64> = (0..k)
            .map(|ax| {
                let t = ((rem % m) as f64 + 0.5) / m as f64;
                rem /= m;
                dom.lo[ax] + t * dom.extent(ax)
            })
            .collect();
        if scn.weight(&patch.eval(&q)) < s_max {
            out.push(q);
        }
    }
    out
}

fn gradient_record(scn: &Scenario) -> CheckRecord {
    let name = "gradient";
    let run = || -> Result<CheckRecord, MonoError> {
        let mut worst: f64 = 0.0;
        let mut used = 0;
        for q in interior_samples(scn) {
            let smp = scn.patch().sample(&q)?;
            let closed = surface_gradient_f(scn, &smp)?;
            // relative error is meaningless where the gradient vanishes
            if closed.norm() < 1e-6 {
                continue;
            }
            let fd = surface_gradient_f_fd(scn, &q, GRADIENT_FD_STEP)?;
            worst = worst.max(closed.dist(&fd) / closed.norm());
            used += 1;
        }
        if used == 0 {
            return Err(MonoError::Unsupported("no usable samples inside φ(B_r_max)".into()));
        }
        Ok(CheckRecord::two_sided(name, worst, 0.0, GRADIENT_REL_TOL))
    };
    run().unwrap_or_else(|e| CheckRecord::failed(name, CheckKind::TwoSided, e.to_string()))
}

fn div_w_record(scn: &Scenario) -> CheckRecord {
    let name = "divW";
    let run = || -> Result<CheckRecord, MonoError> {
        let samples = interior_samples(scn);
        if samples.is_empty() {
            return Err(MonoError::Unsupported("no samples inside φ(B_r_max)".into()));
        }
        let mut worst: f64 = 0.0;
        for q in samples {
            let smp = scn.patch().sample(&q)?;
            if smp.position.dist(scn.center()) < 1e-6 {
                continue;
            }
            let (closed, fd) = div_w_check(scn, &smp)?;
            // unit floor keeps the identically-zero flat case meaningful
            worst = worst.max((closed - fd).abs() / closed.abs().max(1.0));
        }
        Ok(CheckRecord::two_sided(name, worst, 0.0, DIV_W_REL_TOL))
    };
    run().unwrap_or_else(|e| CheckRecord::failed(name, CheckKind::TwoSided, e.to_string()))
}

fn outcome_record(name: &str, r: Result<crate::monotonicity::CheckOutcome, MonoError>) -> CheckRecord {
    match r {
        Ok(o) => CheckRecord::from_outcome(name, &o),
        Err(e) => CheckRecord::failed(name, CheckKind::TwoSided, e.to_string()),
    }
}

fn verify(cfg: Config) -> Result<CommandOutput, CommandError> {
    let scn = build_scenario(&cfg)?;
    let opts = cfg.quad_options();
    let checks = cfg.checks;
    let radii = cfg.sweep.as_ref().expect("validated").radii.clone();
    let (r_first, r_last) = (radii[0], *radii.last().expect("non-empty"));
    let mut report = ReportDocument::new(Command::Verify.name(), None);
    report.decomposition = Some(DecompositionSummary::of(scn.decomposition()));
    let mut csv = None;
    let mut lines = Vec::new();

    if checks.gradient {
        report.checks.push(gradient_record(&scn));
    }
    if checks.div_w {
        report.checks.push(div_w_record(&scn));
    }
    if checks.flux {
        let s = scn.s_of_r(0.5 * (r_first + r_last));
        report.checks.push(outcome_record("flux", flux_identity_check(&scn, s, opts)));
    }
    if checks.coarea {
        let (s_lo, s_hi) = (scn.s_of_r(r_first), scn.s_of_r(r_last));
        let rec = if s_lo < s_hi {
            outcome_record("coarea", coarea_check(&scn, s_lo, s_hi, opts))
        } else {
            CheckRecord::failed("coarea", CheckKind::TwoSided, "needs at least two radii")
        };
        report.checks.push(rec);
    }
    if checks.prescribed_point {
        let a = scn.center().clone();
        let rec = match prescribed_point_bound(scn.patch(), &a, opts) {
            Ok(p) => CheckRecord::from_prescribed("prescribed_point", &p),
            Err(e) => CheckRecord::failed("prescribed_point", CheckKind::LowerBound, e.to_string()),
        };
        report.checks.push(rec);
    }
    if checks.volume_identity || checks.weighted_identity {
        let rep = run_sweep(&cfg, &scn)?;
        csv = Some(sweep_csv(&rep));
        report.checks.extend(sweep_checks(&rep).into_iter().filter(|c| {
            (checks.volume_identity && c.name.starts_with("volume_identity"))
                || (checks.weighted_identity && c.name.starts_with("weighted_identity"))
                || c.name.starts_with("monotone_J")
        }));
        report.sweep = Some(SweepSummary::of(&rep, Some(CSV_FILE.into())));
        lines.extend(sweep_lines(&rep));
    }
    if report.checks.is_empty() {
        return Err(CommandError::config("checks: no checks are enabled"));
    }
    report.finalize();
    for c in &report.checks {
        lines.push(check_line(c));
    }
    report.config = Some(cfg);
    Ok(CommandOutput {
        report,
        csv,
        summary: lines,
    })
}

pub fn check_line(c: &CheckRecord) -> String {
    let verdict = if c.pass { "PASS" } else { "FAIL" };
    match (&c.error, c.residual, c.budget) {
        (Some(e), _, _) => format!("{verdict} {}: {e}", c.name),
        (None, Some(res), Some(b)) => format!("{verdict} {}: residual {res:.3e}, budget {b:.3e}", c.name),
        _ => format!("{verdict} {}", c.name),
    }
}

// --- selftest --------------------------------------------------------------

fn e(n: usize, i: usize) -> VecN {
    VecN::unit(n, i)
}

/// Flat disk through `a = (1.5, 0, 0)` orthogonal to `b = (2, 0, 0)`, `R = 1`.
pub fn builtin_disk() -> Result<Scenario, CommandError> {
    let frame = orthonormal_frame(&[e(3, 1), e(3, 2)], 1e-12).map_err(|e| CommandError::math(e.to_string()))?;
    let patch = flat_disk(VecN::from([1.5, 0.0, 0.0]), frame, 0.6)?;
    Ok(Scenario::reflection(VecN::from([2.0, 0.0, 0.0]), 1.0, patch, 1.5)?)
}

/// Catenoid of unit scale, `v ∈ [−0.9, 0.9]`, reflected in `S((0,0,3), 2)`.
pub fn builtin_catenoid() -> Result<Scenario, CommandError> {
    let patch = catenoid(1.0, -0.9, 0.9)?;
    Ok(Scenario::reflection(VecN::from([0.0, 0.0, 3.0]), 2.0, patch, 1.9)?)
}

/// The catenoid scenario composed with the mirror `x₁ ↦ −x₁`.
pub fn builtin_mirrored_catenoid() -> Result<Scenario, CommandError> {
    let mirror = Hyperplane::new(e(3, 0), 0.0).map_err(|e| CommandError::math(e.to_string()))?;
    let sphere = Sphere::new(VecN::from([0.0, 0.0, 3.0]), 2.0).map_err(|e| CommandError::math(e.to_string()))?;
    let map = MobiusMap::new(vec![Reflection::InHyperplane(mirror.clone()), Reflection::InSphere(sphere)])?;
    let patch = catenoid(1.0, -0.9, 0.9)?.transformed(Isometry::mirror(&mirror))?;
    Ok(Scenario::mobius(map, patch, 1.9)?)
}

pub const BUILTIN_CATENOID_RADII: [f64; 5] = [1.80, 1.82, 1.84, 1.86, 1.88];

fn selftest() -> Result<CommandOutput, CommandError> {
    let opts = QuadOptions::default();
    let mut report = ReportDocument::new(Command::Selftest.name(), None);
    let mut push = |rec: CheckRecord| report.checks.push(rec);

    let disk = builtin_disk()?;
    for r in [0.3, 0.8, 1.4] {
        match (j_of_r(&disk, r, opts), i_of_r(&disk, r, opts)) {
            (Ok(j), Ok(i)) => {
                push(CheckRecord::two_sided(format!("disk J({r}) = π/4"), j.value, PI / 4.0, 1e-6));
                push(CheckRecord::two_sided(format!("disk I({r}) = π/4"), i.value, PI / 4.0, 1e-6));
            }
            (Err(e), _) | (_, Err(e)) => push(CheckRecord::failed(format!("disk r = {r}"), CheckKind::TwoSided, e.to_string())),
        }
    }

    let cat = builtin_catenoid()?;
    let plain = monotone_sweep(&cat, &BUILTIN_CATENOID_RADII, 4, opts)?;
    for c in sweep_checks(&plain) {
        push(CheckRecord {
            name: format!("catenoid {}", c.name),
            ..c
        });
    }
    for p in &plain.pairs {
        // pinned: budgets stay below 1e-4 of |lhs|
        for (tag, o) in [("volume", &p.volume), ("weighted", &p.weighted)] {
            push(CheckRecord::lower_bound(
                format!("catenoid {tag} budget ≤ 1e-4·|lhs| [{}, {}]", p.r_lo, p.r_hi),
                1e-4 * o.lhs.abs(),
                o.budget,
                0.0,
            ));
        }
    }

    let mirrored = builtin_mirrored_catenoid()?;
    let mir = monotone_sweep(&mirrored, &BUILTIN_CATENOID_RADII, 4, opts)?;
    let mut worst: f64 = 0.0;
    for n in 0..plain.radii.len() {
        worst = worst.max((plain.j[n].value - mir.j[n].value).abs());
        worst = worst.max((plain.i[n].value - mir.i[n].value).abs());
    }
    for (p, m) in plain.pairs.iter().zip(&mir.pairs) {
        worst = worst.max((p.volume.residual - m.volume.residual).abs());
        worst = worst.max((p.weighted.residual - m.weighted.residual).abs());
    }
    push(CheckRecord::two_sided("mirrored catenoid matches reflection", worst, 0.0, 1e-9));

    // σ_a with |a| = 0.5 acting on a tilted plane through a
    let a = VecN::from([0.5, 0.0, 0.0]);
    let sigma = make_sigma_a(&a)?;
    let frame = orthonormal_frame(&[VecN::from([0.3, 1.0, 0.0]), e(3, 2)], 1e-12).map_err(|e| CommandError::math(e.to_string()))?;
    let plane = flat_disk(a.clone(), frame, 1.2)?;
    let sigma_a = Scenario::mobius(sigma, plane, 1.0)?;
    let big_r = sigma_a.radius();
    for r in [0.4, 0.7, 1.0] {
        let name = format!("J({r}) = R²·Q_A(s({r})) for σ_a");
        match (j_of_r(&sigma_a, r, opts), q_a(&sigma_a, sigma_a.s_of_r(r), opts)) {
            (Ok(j), Ok(q)) => {
                let scale = big_r * big_r;
                let budget = crate::monotonicity::error_budget(j.value, j.error_estimate, scale * q.error_estimate);
                push(CheckRecord::two_sided(name, j.value, scale * q.value, budget));
            }
            (Err(e), _) | (_, Err(e)) => push(CheckRecord::failed(name, CheckKind::TwoSided, e.to_string())),
        }
    }

    report.finalize();
    let summary = report.checks.iter().map(check_line).collect();
    Ok(CommandOutput {
        report,
        csv: None,
        summary,
    })
}
