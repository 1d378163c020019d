//! Command-line front end.
//!
//! All angles given on the command line and printed in sweep CSVs are in
//! units of π: `--phi1 0.5` means Φ₁ = π/2, and `--theta1 0.25` means
//! θ₁ = π/4, i.e. a Ramsey pulse area 2θ₁ = π/2.
//!
//! Exit codes: 0 ok, 1 invariant violation, 2 parse or usage error,
//! 3 normalization error, 4 insufficient shots.

use std::ffi::OsString;
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::measurement::{corrected_joint_probability, distribution_from_coefficients, real_coefficient_pbar, shot_rng};
use crate::protocol::{apply_protocol, phase_identity_residual, single_particle_probability, ProtocolAngles};
use crate::qstate::{concurrence_exact, random_pure_state, serialize_state, SingleExcitationState, StateFile, TwoQubitState};
use crate::search::{
    bootstrap_std_error, bound_check, estimate_concurrence_shots, exact_pbar, find_extrema, BoundCheck,
    SearchConfig, ShotReport, VisibilityReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NORMALIZATION: i32 = 3;
pub const EXIT_SHOTS: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotNormalized { .. } | Error::ZeroState => EXIT_NORMALIZATION,
        Error::InsufficientShots { .. } => EXIT_SHOTS,
        Error::Parse(_) | Error::NonFinite(_) | Error::InvalidConfig(_) | Error::NotSingleExcitation => EXIT_PARSE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cqed-concurrence",
    version,
    about = "Concurrence of a two-qubit cavity state from two-atom fringe visibility",
    after_help = "Angles are given in units of pi. State files: {\"amplitudes\": [[re, im] x4]} in |00>,|01>,|10>,|11> order."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the exact concurrence 2|αδ − βγ|.
    Exact(StateArgs),
    /// Search the apparatus angles for the extrema of P̄ and report the visibility.
    Visibility {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Simulated experiment with finite shots per setting.
    Shots {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        seed: SeedArgs,
        /// Shots per grid point in the coarse stage.
        #[arg(long = "shots1", default_value_t = 200)]
        shots1: u64,
        /// Shots per candidate in the re-measurement stage.
        #[arg(long = "shots2", default_value_t = 1_000_000)]
        shots2: u64,
        /// Also report a bootstrap standard error with this many resamples.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Sweep one or two angles and write P̄ (or the one-atom P_e with --single) as CSV.
    Sweep {
        #[command(flatten)]
        state: StateArgs,
        /// NAME=START:END:STEPS, half-open range in units of pi; NAME is
        /// theta1, theta2, phi1 or phi2 (phi with --single). At most two.
        #[arg(long = "axis", required = true)]
        axes: Vec<AxisSpec>,
        #[arg(long, default_value_t = 0.25)]
        theta1: f64,
        #[arg(long, default_value_t = 0.25)]
        theta2: f64,
        #[arg(long, default_value_t = 0.0)]
        phi1: f64,
        #[arg(long, default_value_t = 0.0)]
        phi2: f64,
        /// One-atom scheme on the |01>,|10> amplitudes of the state file.
        #[arg(long)]
        single: bool,
    },
    /// Randomized check of the pipeline identities and bounds.
    Verify {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Trials that also run the full visibility search.
        #[arg(long, default_value_t = 20)]
        visibility_trials: u64,
        #[command(flatten)]
        seed: SeedArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Emit a Haar-random state file.
    Random {
        #[command(flatten)]
        seed: SeedArgs,
    },
}

#[derive(Debug, Args)]
struct StateArgs {
    /// State JSON file, or "-" for standard input.
    state_file: PathBuf,
    /// Renormalize the amplitudes instead of rejecting an unnormalized file.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Grid points on every axis (overridden by --grid-theta / --grid-phi).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    grid_theta: Option<usize>,
    #[arg(long)]
    grid_phi: Option<usize>,
    /// Angle tolerance of the golden-section refinement, radians.
    #[arg(long)]
    refine_tol: Option<f64>,
    #[arg(long)]
    max_refine_iters: Option<usize>,
}

impl SearchArgs {
    fn config(&self, threads: Option<usize>) -> SearchConfig {
        let base = SearchConfig::default();
        SearchConfig {
            grid_points_theta: self.grid_theta.or(self.grid).unwrap_or(base.grid_points_theta),
            grid_points_phi: self.grid_phi.or(self.grid).unwrap_or(base.grid_points_phi),
            refine_tolerance: self.refine_tol.unwrap_or(base.refine_tolerance),
            max_refine_iters: self.max_refine_iters.unwrap_or(base.max_refine_iters),
            parallel: threads != Some(1),
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Worker threads for grid evaluation; 1 runs fully sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Include wall-clock time in the JSON record (breaks byte reproducibility).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct SeedArgs {
    #[arg(long, conflicts_with = "entropy")]
    seed: Option<u64>,
    /// Draw the seed from the operating system instead of defaulting to 0.
    #[arg(long)]
    entropy: bool,
}

impl SeedArgs {
    fn resolve(&self) -> u64 {
        match (self.seed, self.entropy) {
            (Some(s), _) => s,
            (None, true) => rand::rng().random(),
            (None, false) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AxisName {
    Theta1,
    Theta2,
    Phi1,
    Phi2,
    Phi,
}

impl AxisName {
    fn as_str(self) -> &'static str {
        match self {
            Self::Theta1 => "theta1",
            Self::Theta2 => "theta2",
            Self::Phi1 => "phi1",
            Self::Phi2 => "phi2",
            Self::Phi => "phi",
        }
    }
}

/// One sweep axis, values in units of π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    name: AxisName,
    start: f64,
    end: f64,
    steps: usize,
}

impl AxisSpec {
    fn value(&self, k: usize) -> f64 {
        self.start + (self.end - self.start) * k as f64 / self.steps as f64
    }
}

impl FromStr for AxisSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, range) = s
            .split_once('=')
            .ok_or_else(|| format!("axis spec {s:?} is not NAME=START:END:STEPS"))?;
        let name = match name.trim() {
            "theta1" => AxisName::Theta1,
            "theta2" => AxisName::Theta2,
            "phi1" => AxisName::Phi1,
            "phi2" => AxisName::Phi2,
            "phi" => AxisName::Phi,
            other => return Err(format!("unknown axis {other:?}")),
        };
        let parts: Vec<&str> = range.split(':').collect();
        let [start, end, steps] = parts[..] else {
            return Err(format!("axis range {range:?} is not START:END:STEPS"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad number {x:?} in axis spec"))
        };
        let steps: usize = steps
            .trim()
            .parse()
            .map_err(|_| format!("bad step count {steps:?} in axis spec"))?;
        if steps == 0 {
            return Err("axis needs at least one step".into());
        }
        Ok(Self {
            name,
            start: num(start)?,
            end: num(end)?,
            steps,
        })
    }
}

impl fmt::Display for AxisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}:{}:{}", self.name.as_str(), self.start, self.end, self.steps)
    }
}

/// One JSON document per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub state: StateFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub result: RunResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_check: Option<BoundCheck>,
    /// Seconds; present only with `--timing`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunResult {
    Visibility(VisibilityReport),
    Shots(ShotOutput),
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotOutput {
    pub estimate: f64,
    pub std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_std_error: Option<f64>,
    pub shots_stage1_total: u64,
    pub shots_stage2_total: u64,
    pub seed: u64,
    pub details: ShotReport,
}

/// Failure of a command: exit code plus the diagnostic for the error stream.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Self {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

fn io_failure(context: &str, err: std::io::Error) -> Failure {
    Failure {
        code: EXIT_PARSE,
        message: format!("{context}: {err}"),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut impl Write, stderr: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(job()),
        Some(0) => Err(Failure {
            code: EXIT_PARSE,
            message: "--threads must be at least 1".into(),
        }),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure {
                    code: EXIT_PARSE,
                    message: format!("cannot build thread pool: {e}"),
                })?;
            Ok(pool.install(job))
        }
    }
}

fn read_state(args: &StateArgs) -> Result<TwoQubitState, Failure> {
    let text = if args.state_file.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| io_failure("reading standard input", e))?;
        buf
    } else {
        std::fs::read_to_string(&args.state_file)
            .map_err(|e| io_failure(&format!("reading {}", args.state_file.display()), e))?
    };
    Ok(crate::qstate::parse_state(&text, args.normalize)?)
}

fn emit_json(out: &mut impl Write, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("records serialize");
    writeln!(out, "{text}").map_err(|e| io_failure("writing output", e))
}

fn dispatch(command: Command, out: &mut impl Write) -> Result<i32, Failure> {
    match command {
        Command::Exact(state) => cmd_exact(&state, out),
        Command::Visibility { state, search, run } => cmd_visibility(&state, &search, &run, out),
        Command::Shots {
            state,
            search,
            run,
            seed,
            shots1,
            shots2,
            bootstrap,
        } => cmd_shots(&state, &search, &run, seed.resolve(), shots1, shots2, bootstrap, out),
        Command::Sweep {
            state,
            axes,
            theta1,
            theta2,
            phi1,
            phi2,
            single,
        } => cmd_sweep(&state, &axes, [theta1, theta2, phi1, phi2], single, out),
        Command::Verify {
            trials,
            visibility_trials,
            seed,
            search,
            run,
            inject_fault,
        } => cmd_verify(trials, visibility_trials, seed.resolve(), &search, &run, inject_fault, out),
        Command::Random { seed } => {
            let text = serialize_state(&random_pure_state(seed.resolve()));
            writeln!(out, "{text}").map_err(|e| io_failure("writing output", e))?;
            Ok(EXIT_OK)
        }
    }
}

fn cmd_exact(args: &StateArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let state = read_state(args)?;
    let c = concurrence_exact(&state)?;
    writeln!(out, "{c:.15}").map_err(|e| io_failure("writing output", e))?;
    Ok(EXIT_OK)
}

fn cmd_visibility(args: &StateArgs, search: &SearchArgs, run: &RunArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let started = Instant::now();
    let state = read_state(args)?;
    let config = search.config(run.threads);
    let report = with_threads(run.threads, || find_extrema(&state, &config))??;
    let check = bound_check(&report, &state)?;
    let record = RunRecord {
        command: "visibility".into(),
        state: StateFile::from(&state),
        config: Some(config),
        seed: None,
        result: RunResult::Visibility(report),
        bound_check: Some(check),
        wall_time: run.timing.then(|| started.elapsed().as_secs_f64()),
    };
    emit_json(out, &record)?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_shots(
    args: &StateArgs,
    search: &SearchArgs,
    run: &RunArgs,
    seed: u64,
    shots1: u64,
    shots2: u64,
    bootstrap: Option<usize>,
    out: &mut impl Write,
) -> Result<i32, Failure> {
    let started = Instant::now();
    let state = read_state(args)?;
    let config = search.config(run.threads);
    let report = with_threads(run.threads, || estimate_concurrence_shots(&state, &config, shots1, shots2, seed))??;
    let bootstrap_std_error = bootstrap
        .map(|r| {
            // resampling stream sits past every stage seed
            let boot_seed = seed.wrapping_add(config.grid_len() as u64 + 6);
            bootstrap_std_error(&report.counts_max, &report.counts_min, r, boot_seed)
        })
        .transpose()?;
    let record = RunRecord {
        command: "shots".into(),
        state: StateFile::from(&state),
        config: Some(config),
        seed: Some(seed),
        result: RunResult::Shots(ShotOutput {
            estimate: report.estimate(),
            std_error: report.std_error(),
            bootstrap_std_error,
            shots_stage1_total: report.shots_stage1_total,
            shots_stage2_total: report.shots_stage2_total,
            seed,
            details: report,
        }),
        bound_check: None,
        wall_time: run.timing.then(|| started.elapsed().as_secs_f64()),
    };
    emit_json(out, &record)?;
    Ok(EXIT_OK)
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_PARSE,
        message: message.into(),
    }
}

fn cmd_sweep(
    args: &StateArgs,
    axes: &[AxisSpec],
    fixed: [f64; 4],
    single: bool,
    out: &mut impl Write,
) -> Result<i32, Failure> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(usage("sweep takes one or two --axis specs"));
    }
    if axes.len() == 2 && axes[0].name == axes[1].name {
        return Err(usage(format!("axis {} given twice", axes[0].name.as_str())));
    }
    if fixed.iter().any(|x| !x.is_finite()) {
        return Err(usage("fixed angles must be finite"));
    }
    let state = read_state(args)?;
    let pi = std::f64::consts::PI;

    let mut csv = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| usage(format!("writing CSV: {e}"));
    if single {
        if axes.len() != 1 || axes[0].name != AxisName::Phi {
            return Err(usage("--single sweeps exactly one axis named phi"));
        }
        let one_atom = SingleExcitationState::from_two_qubit(&state)?;
        csv.write_record(["phi", "p_e"]).map_err(csv_err)?;
        let axis = axes[0];
        for k in 0..axis.steps {
            let phi = axis.value(k);
            let p = single_particle_probability(&one_atom, phi * pi)?;
            csv.write_record([phi.to_string(), p.to_string()]).map_err(csv_err)?;
        }
    } else {
        let index = |name: AxisName| match name {
            AxisName::Theta1 => Ok(0),
            AxisName::Theta2 => Ok(1),
            AxisName::Phi1 => Ok(2),
            AxisName::Phi2 => Ok(3),
            AxisName::Phi => Err(usage("axis phi is only valid with --single; use phi1 or phi2")),
        };
        let slots: Vec<usize> = axes.iter().map(|a| index(a.name)).collect::<Result<_, _>>()?;
        let mut header: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
        header.push("pbar");
        csv.write_record(&header).map_err(csv_err)?;

        let outer = axes[0];
        let inner = axes.get(1).copied();
        for i in 0..outer.steps {
            for j in 0..inner.map_or(1, |a| a.steps) {
                let mut angles = fixed;
                let mut row = vec![outer.value(i)];
                angles[slots[0]] = outer.value(i);
                if let Some(inner) = inner {
                    angles[slots[1]] = inner.value(j);
                    row.push(inner.value(j));
                }
                let p = exact_pbar(&state, &ProtocolAngles::from_array(angles.map(|a| a * pi)))?;
                row.push(p);
                csv.write_record(row.iter().map(|x| x.to_string())).map_err(csv_err)?;
            }
        }
    }
    let bytes = csv.into_inner().map_err(|e| usage(format!("writing CSV: {e}")))?;
    out.write_all(&bytes).map_err(|e| io_failure("writing output", e))?;
    Ok(EXIT_OK)
}

struct CheckResult {
    name: &'static str,
    tolerance: f64,
    max_residual: f64,
    violations: Vec<String>,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            max_residual: 0.0,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, residual: f64, context: impl FnOnce() -> String) {
        self.max_residual = self.max_residual.max(residual);
        if !(residual <= self.tolerance) {
            self.violations.push(context());
        }
    }
}

fn cmd_verify(
    trials: u64,
    visibility_trials: u64,
    seed: u64,
    search: &SearchArgs,
    run: &RunArgs,
    inject_fault: bool,
    out: &mut impl Write,
) -> Result<i32, Failure> {
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let config = search.config(run.threads);
    config.validate()?;
    let mut rng = shot_rng(seed);
    rng.set_stream(1);

    let mut phase = CheckResult::new("phase_identity", 1e-12);
    let mut factor = CheckResult::new("pbar_factorization", 1e-12);
    let mut closed = CheckResult::new("real_closed_form", 1e-12);
    let mut bounds = CheckResult::new("bound_containment", 1e-12);
    let mut vis = CheckResult::new("visibility_vs_concurrence", 1e-6);

    let describe = |s: &TwoQubitState, a: &ProtocolAngles| {
        let state = serde_json::to_string(&StateFile::from(s)).expect("state serializes");
        let angles = serde_json::to_string(a).expect("angles serialize");
        format!("state {state} angles {angles}")
    };

    for t in 0..trials {
        let state = random_pure_state(seed.wrapping_add(t));
        let angles = ProtocolAngles::new(
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        );

        let mut r = phase_identity_residual(&state, &angles)?;
        if inject_fault {
            r += 1e-9;
        }
        phase.record(r, || describe(&state, &angles));

        let coeffs = apply_protocol(&state, &angles)?;
        let pbar = corrected_joint_probability(&distribution_from_coefficients(&coeffs)?);
        let [a2, b2, c2, d2] = coeffs.to_array().map(|z| z.norm_sqr());
        factor.record((pbar - (a2 * d2 - b2 * c2 + 0.25)).abs(), || describe(&state, &angles));

        let conc = concurrence_exact(&state)?;
        let excess = ((1.0 - conc) / 4.0 - pbar).max(pbar - (1.0 + conc) / 4.0).max(0.0);
        bounds.record(excess, || describe(&state, &angles));

        let raw: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let [a, b, c, d] = raw.map(|x| x / norm);
        let real = TwoQubitState::real(a, b, c, d)?;
        let diff = (real_coefficient_pbar(a, b, c, d, &angles)? - exact_pbar(&real, &angles)?).abs();
        closed.record(diff, || describe(&real, &angles));

        if t < visibility_trials {
            let report = with_threads(run.threads, || find_extrema(&state, &config))??;
            vis.record((report.visibility - conc).abs(), || {
                describe(&state, &report.angles_max)
            });
        }
    }

    let checks = [phase, factor, closed, bounds, vis];
    let w = |e: std::io::Error| io_failure("writing output", e);
    writeln!(out, "trials {trials}, seed {seed}").map_err(w)?;
    let mut ok = true;
    for c in &checks {
        let pass = c.violations.is_empty();
        ok &= pass;
        writeln!(
            out,
            "{:<28} max_residual {:.3e}  tolerance {:.0e}  {}",
            c.name,
            c.max_residual,
            c.tolerance,
            if pass { "PASS" } else { "FAIL" }
        )
        .map_err(w)?;
        for v in c.violations.iter().take(5) {
            writeln!(out, "  violated by {v}").map_err(w)?;
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_INVARIANT })
}
