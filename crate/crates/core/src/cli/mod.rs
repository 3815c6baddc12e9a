//! The `quasispecies` command line.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or configs, 3 when a
//! runtime guard trips (size limits, failed convergence, failed checks).

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, ClassDistribution, DynamicsError};
use crate::landscape::{FitnessLandscape, LandscapeError};
use crate::ldp::{self, LdpError};
use crate::mutation::{self, LumpedMutationMatrix, MutationError};
use crate::simulate::{self, HittingKind, SimError, SimulationConfig, StartState};
use crate::stats::MeanEstimate;

pub use config::{mutation_params, Range, RunConfig, DEFAULT_SEED};
pub use output::write_atomic;

/// Entry-wise agreement required by `lumping-check`.
pub const LUMPING_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Guard(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Guard(_) => 3,
        }
    }
}

impl From<LandscapeError> for CliError {
    fn from(e: LandscapeError) -> Self {
        CliError::Config(format!("invalid landscape: {e}"))
    }
}

impl From<MutationError> for CliError {
    fn from(e: MutationError) -> Self {
        match e {
            MutationError::OracleTooLarge { .. } => CliError::Guard(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::TooLarge { .. }
            | DynamicsError::Residual { .. }
            | DynamicsError::NotConverged { .. }
            | DynamicsError::Degenerate { .. } => CliError::Guard(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<LdpError> for CliError {
    fn from(e: LdpError) -> Self {
        match e {
            LdpError::Dynamics(d) => d.into(),
            LdpError::TooManyClasses { .. }
            | LdpError::NoQuasispecies { .. }
            | LdpError::Unreachable => CliError::Guard(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Dynamics(d) => d.into(),
            SimError::Drift { .. } => CliError::Guard(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_error(path: Option<&Path>, e: std::io::Error) -> CliError {
    match path {
        Some(p) => CliError::Config(format!("cannot write {}: {e}", p.display())),
        None => CliError::Config(format!("cannot write output: {e}")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "quasispecies",
    version,
    about = "Wright-Fisher quasispecies experiments"
)]
pub struct Cli {
    /// RNG seed; defaults to the run file's seed, then to 20011003.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replica and grid parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (written atomically); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of the plain summary where both exist.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    /// Fitness values A(0),...,A(K), comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub fitness: Vec<f64>,
    /// Mutation intensity a.
    #[arg(long)]
    pub a: f64,
}

impl LandscapeArgs {
    fn landscape(&self) -> Result<FitnessLandscape<f64>, CliError> {
        Ok(FitnessLandscape::new(self.fitness.clone())?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the fixed points of the limit map as JSON.
    FixedPoints(LandscapeArgs),
    /// Iterate the limit map from a starting vector.
    Iterate {
        #[command(flatten)]
        model: LandscapeArgs,
        /// Starting weights r_0,...,r_K (default: all zero).
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
    },
    /// Time averages of the class frequencies from a TOML run file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Persistence or neutral-phase hitting times, one CSV row per replica.
    HittingTime(HittingArgs),
    /// Quasipotential from the quasispecies to the origin.
    Quasipotential {
        #[command(flatten)]
        model: LandscapeArgs,
        /// Grid points per unit; defaults by K (2000, 200, 40, 16).
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Phase of every (a, alpha) grid point as CSV.
    PhaseDiagram {
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        fitness: Vec<f64>,
        /// start:stop:step
        #[arg(long)]
        a_range: Range,
        /// start:stop:step
        #[arg(long)]
        alpha_range: Range,
        #[arg(long, default_value_t = 2)]
        kappa: usize,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = ldp::DEFAULT_MARGIN)]
        margin: f64,
    },
    /// Compare the lumped mutation matrix with genotype enumeration.
    LumpingCheck {
        #[arg(long)]
        ell: usize,
        #[arg(long, default_value_t = 2)]
        kappa: usize,
        #[arg(long)]
        q: f64,
        /// Also export the lumped matrix as CSV (`k,l,prob`).
        #[arg(long)]
        matrix_csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    /// Persistence time of the classes 0..=K.
    Tau0,
    /// Neutral-phase discovery time of the classes 0..=class.
    TauStar,
}

#[derive(Debug, Clone, Args)]
pub struct HittingArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Run file; the flags below override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long)]
    pub kappa: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub m: Option<u64>,
    /// Required for tau0; ignored by tau-star, which uses neutral fitness.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub fitness: Option<Vec<f64>>,
    /// master, neutral or fixed-point:<b>. Defaults: fixed-point:0 for
    /// tau0, neutral for tau-star.
    #[arg(long)]
    pub start: Option<StartState>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Target classes 0..=class for tau-star.
    #[arg(long, default_value_t = 0)]
    pub class: usize,
    /// Censoring cap in steps; accepts scientific notation.
    #[arg(long, default_value_t = 1e7)]
    pub cap: f64,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Guard(format!("cannot start thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::FixedPoints(model) => cmd_fixed_points(model, out),
        Command::Iterate {
            model,
            start,
            tol,
            max_iter,
        } => cmd_iterate(model, start.as_deref(), *tol, *max_iter, out),
        Command::Simulate { config } => cmd_simulate(config, cli.seed, out),
        Command::HittingTime(args) => cmd_hitting_time(args, cli.seed, out),
        Command::Quasipotential { model, resolution } => {
            cmd_quasipotential(model, *resolution, cli.json, out)
        }
        Command::PhaseDiagram {
            fitness,
            a_range,
            alpha_range,
            kappa,
            resolution,
            margin,
        } => cmd_phase_diagram(
            fitness,
            a_range,
            alpha_range,
            *kappa,
            *resolution,
            *margin,
            out,
        ),
        Command::LumpingCheck {
            ell,
            kappa,
            q,
            matrix_csv,
        } => cmd_lumping_check(*ell, *kappa, *q, matrix_csv.as_deref(), cli.json, out),
    }
}

#[derive(Serialize)]
struct FixedPointEntry {
    b: usize,
    rho: Vec<f64>,
    residual: f64,
}

#[derive(Serialize)]
struct FixedPointsReport {
    fitness: Vec<f64>,
    a: f64,
    error_threshold: f64,
    fixed_points: Vec<FixedPointEntry>,
    /// Classes left out of the index set because `A(b) e^{-a}` ties with a
    /// boundary.
    degenerate: Vec<usize>,
}

pub fn cmd_fixed_points(model: &LandscapeArgs, out: Option<&Path>) -> Result<(), CliError> {
    let land = model.landscape()?;
    let set = land.index_set(model.a);
    let fixed_points = dynamics::fixed_points(model.a, &land)?
        .into_iter()
        .map(|fp| FixedPointEntry {
            b: fp.b,
            rho: fp.rho.into_weights(),
            residual: fp.residual,
        })
        .collect();
    let report = FixedPointsReport {
        fitness: land.values().to_vec(),
        a: model.a,
        error_threshold: land.error_threshold(),
        fixed_points,
        degenerate: set.degenerate().to_vec(),
    };
    output::emit(out, &output::json_line(&report)).map_err(|e| io_error(out, e))
}

#[derive(Serialize)]
struct IterateReport {
    rho: Vec<f64>,
    iterations: usize,
    /// Index of the closed-form fixed point within 1e-8 of the limit.
    fixed_point: Option<usize>,
}

pub fn cmd_iterate(
    model: &LandscapeArgs,
    start: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let land = model.landscape()?;
    let r0 = match start {
        Some(w) => ClassDistribution::truncated(w.to_vec())?,
        None => ClassDistribution::zeros(land.k() + 1),
    };
    if r0.len() != land.k() + 1 {
        return Err(CliError::Config(format!(
            "--start needs K + 1 = {} weights, got {}",
            land.k() + 1,
            r0.len()
        )));
    }
    let (limit, iterations) = dynamics::iterate_to_fixed_point(&r0, model.a, &land, tol, max_iter)?;
    let fixed_point = dynamics::fixed_points(model.a, &land)?
        .into_iter()
        .find(|fp| fp.rho.l1_distance(&limit) <= 1e-8)
        .map(|fp| fp.b);
    let report = IterateReport {
        rho: limit.into_weights(),
        iterations,
        fixed_point,
    };
    output::emit(out, &output::json_line(&report)).map_err(|e| io_error(out, e))
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    config: &'a SimulationConfig,
    a: f64,
    /// Replica-averaged time averages of classes 0..=K.
    mean: Vec<f64>,
    /// Standard error of `mean` across replicas (0 for a single replica).
    std_err: Vec<f64>,
    trajectories: Vec<simulate::TrajectoryStats>,
}

pub fn cmd_simulate(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(), CliError> {
    let config = RunConfig::load(path)?.simulation(seed)?;
    let trajectories = simulate::run_replicas(&config)?;
    let k = config.land.k();
    let mut mean = Vec::with_capacity(k + 1);
    let mut std_err = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let xs: Vec<f64> = trajectories.iter().map(|t| t.mean[j]).collect();
        let est = MeanEstimate::from_samples(&xs).map_err(|e| CliError::Guard(e.to_string()))?;
        mean.push(est.mean);
        std_err.push(if est.std_err.is_finite() {
            est.std_err
        } else {
            0.0
        });
    }
    let summary = format!(
        "simulate: {} replica(s), {} averaged steps, class-0 frequency {:.6}",
        trajectories.len(),
        config.horizon - config.burn_in,
        mean[0]
    );
    let report = SimulateReport {
        a: config.a(),
        config: &config,
        mean,
        std_err,
        trajectories,
    };
    write_with_summary(out, &output::json_line(&report), &summary)
}

/// Writes the data to `out` and prints `summary`, or prints the data alone
/// when there is no output file.
fn write_with_summary(out: Option<&Path>, body: &[u8], summary: &str) -> Result<(), CliError> {
    output::emit(out, body).map_err(|e| io_error(out, e))?;
    if out.is_some() {
        println!("{summary}");
    }
    Ok(())
}

fn hitting_config(
    args: &HittingArgs,
    seed: Option<u64>,
) -> Result<(SimulationConfig, HittingKind), CliError> {
    let file = args.config.as_deref().map(RunConfig::load).transpose()?;
    let ell = args.ell.or(file.as_ref().map(|f| f.ell));
    let ell = ell.ok_or_else(|| CliError::Config("missing --ell".into()))?;
    let kappa = args.kappa.or(file.as_ref().map(|f| f.kappa)).unwrap_or(2);
    let m = args.m.or(file.as_ref().map(|f| f.m));
    let m = m.ok_or_else(|| CliError::Config("missing --m".into()))?;
    let (q, a) = if args.q.is_some() || args.a.is_some() {
        (args.q, args.a)
    } else {
        (
            file.as_ref().and_then(|f| f.q),
            file.as_ref().and_then(|f| f.a),
        )
    };
    let params = mutation_params(ell, kappa, q, a)?;
    let fitness = match (&args.fitness, &file) {
        (Some(v), _) => Some(FitnessLandscape::new(v.clone())?),
        (None, Some(f)) => Some(f.fitness.clone()),
        (None, None) => None,
    };
    let (kind, land, default_start) = match args.kind {
        KindArg::Tau0 => {
            let land = fitness.ok_or_else(|| CliError::Config("tau0 needs --fitness".into()))?;
            (
                HittingKind::PersistenceTau0,
                land,
                StartState::FixedPoint(0),
            )
        }
        KindArg::TauStar => {
            // Fitness is not used under the neutral hypothesis.
            let land = match fitness {
                Some(l) => l,
                None => FitnessLandscape::sharp_peak(2.0)?,
            };
            (
                HittingKind::NeutralTauStar(args.class),
                land,
                StartState::Neutral,
            )
        }
    };
    let file_start = match file.as_ref().and_then(|f| f.start.as_deref()) {
        Some(s) => Some(s.parse::<StartState>().map_err(CliError::Config)?),
        None => None,
    };
    let start = args.start.clone().or(file_start).unwrap_or(default_start);
    let replicas = args
        .replicas
        .or(file.as_ref().map(|f| f.replicas))
        .unwrap_or(100);
    let config = SimulationConfig {
        params,
        m,
        land,
        seed: seed
            .or(file.as_ref().and_then(|f| f.seed))
            .unwrap_or(DEFAULT_SEED),
        horizon: 1,
        burn_in: 0,
        replicas,
        start,
    };
    config.validate()?;
    Ok((config, kind))
}

/// Column order is the published header `replica,seed,value,censored`.
#[derive(Serialize)]
struct HittingRow {
    replica: u64,
    seed: u64,
    value: u64,
    censored: bool,
}

pub fn cmd_hitting_time(
    args: &HittingArgs,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if !(args.cap >= 0.0)
        || !args.cap.is_finite()
        || args.cap.fract() != 0.0
        || args.cap > u64::MAX as f64
    {
        return Err(CliError::Config(format!(
            "--cap must be a nonnegative integer, got {}",
            args.cap
        )));
    }
    let cap = args.cap as u64;
    let (config, kind) = hitting_config(args, seed)?;
    let records = simulate::hitting_times(&config, kind, cap)?;
    let rows = records.iter().map(|r| HittingRow {
        replica: r.replica,
        seed: r.seed,
        value: r.value(),
        censored: r.censored(),
    });
    let csv = output::csv_bytes(rows).map_err(|e| CliError::Guard(e.to_string()))?;
    let s = simulate::summarize(&records).ok_or_else(|| CliError::Guard("no replicas".into()))?;
    let summary = format!(
        "hitting-time: {} replicas, mean {:.3} (se {:.3}), censored fraction {:.4}",
        s.n, s.mean, s.std_err, s.censored_fraction
    );
    write_with_summary(out, &csv, &summary)
}

#[derive(Serialize)]
struct QuasipotentialReport {
    value: f64,
    path: Vec<Vec<f64>>,
    resolution: usize,
}

pub fn cmd_quasipotential(
    model: &LandscapeArgs,
    resolution: Option<usize>,
    json: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let land = model.landscape()?;
    if land.k() > ldp::MAX_QUASIPOTENTIAL_K {
        return Err(LdpError::TooManyClasses { k: land.k() }.into());
    }
    let resolution = resolution.unwrap_or_else(|| ldp::default_resolution(land.k()));
    let result = ldp::quasipotential(model.a, &land, resolution)?;
    let report = QuasipotentialReport {
        value: result.value,
        path: result.path,
        resolution,
    };
    if json || out.is_some() {
        let summary = format!(
            "quasipotential: {:.9} at resolution {resolution}",
            report.value
        );
        write_with_summary(out, &output::json_line(&report), &summary)
    } else {
        println!("{}", report.value);
        Ok(())
    }
}

/// Header `a,alpha,psi,ln_kappa_over_alpha,phase`.
#[derive(Serialize)]
struct PhaseRow {
    a: f64,
    alpha: f64,
    psi: f64,
    ln_kappa_over_alpha: f64,
    phase: &'static str,
}

pub fn cmd_phase_diagram(
    fitness: &[f64],
    a_range: &Range,
    alpha_range: &Range,
    kappa: usize,
    resolution: Option<usize>,
    margin: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let land = FitnessLandscape::new(fitness.to_vec())?;
    if land.k() > ldp::MAX_QUASIPOTENTIAL_K {
        return Err(LdpError::TooManyClasses { k: land.k() }.into());
    }
    if kappa < 2 {
        return Err(CliError::Config("--kappa must be at least 2".into()));
    }
    let resolution = resolution.unwrap_or_else(|| ldp::default_resolution(land.k()));
    let a_values = a_range.values();
    let alphas = alpha_range.values();
    if alphas.iter().any(|&al| !(al > 0.0)) {
        return Err(CliError::Config("alpha values must be positive".into()));
    }
    let psis: Vec<f64> = a_values
        .par_iter()
        .map(|&a| ldp::psi(a, &land, resolution))
        .collect::<Result<_, _>>()?;
    let ln_kappa = (kappa as f64).ln();
    let mut rows = Vec::with_capacity(a_values.len() * alphas.len());
    for (&a, &psi) in a_values.iter().zip(&psis) {
        for &alpha in &alphas {
            rows.push(PhaseRow {
                a,
                alpha,
                psi,
                ln_kappa_over_alpha: ln_kappa / alpha,
                phase: ldp::classify_with_psi(psi, alpha, kappa, margin)?.label(),
            });
        }
    }
    let csv = output::csv_bytes(rows).map_err(|e| CliError::Guard(e.to_string()))?;
    let summary = format!(
        "phase-diagram: {} x {} grid points at resolution {resolution}",
        a_values.len(),
        alphas.len()
    );
    write_with_summary(out, &csv, &summary)
}

#[derive(Serialize)]
struct LumpingReport {
    ell: usize,
    kappa: usize,
    q: f64,
    max_abs_diff: f64,
    tolerance: f64,
    pass: bool,
}

pub fn cmd_lumping_check(
    ell: usize,
    kappa: usize,
    q: f64,
    matrix_csv: Option<&Path>,
    json: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let params = mutation::MutationParams::new(ell, kappa, q)?;
    let lumped = LumpedMutationMatrix::new(params)?;
    let mut worst = 0.0_f64;
    for k in 0..=ell {
        let oracle = mutation::genotype_lumping_oracle_row(&params, k)?;
        for (x, y) in oracle.iter().zip(lumped.row(k)) {
            worst = worst.max((x - y).abs());
        }
    }
    if let Some(path) = matrix_csv {
        let mut body = Vec::new();
        lumped
            .write_csv(&mut body)
            .map_err(|e| CliError::Guard(e.to_string()))?;
        write_atomic(path, &body).map_err(|e| io_error(Some(path), e))?;
    }
    let pass = worst < LUMPING_TOLERANCE;
    let line = if pass {
        format!("max abs diff < 1e-10 (observed {worst:e})")
    } else {
        format!("max abs diff {worst:e} exceeds 1e-10")
    };
    if json || out.is_some() {
        let report = LumpingReport {
            ell,
            kappa,
            q,
            max_abs_diff: worst,
            tolerance: LUMPING_TOLERANCE,
            pass,
        };
        write_with_summary(out, &output::json_line(&report), &line)?;
    } else {
        println!("{line}");
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::Guard(line))
    }
}
