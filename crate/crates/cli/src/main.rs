//! `lambda-ou`: rates, simulations, characteristic functions and convergence
//! diagnostics for Λ-coalescent block counting processes and fixation lines.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 when a numerical scheme
//! fails to converge, 3 when `selftest` reports a failed criterion. Errors
//! are written to stderr as one JSON object.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lambda_ou::acceptance::{self, Level, Outcome};
use lambda_ou::diagnostics::{default_x_grid, duality_gap_exact, generator_gap_table};
use lambda_ou::limit::{CfInverter, CfKind, CharExponent};
use lambda_ou::rates::{
    block_rate_quadrature, block_rate_with_method, cdi_diagnostic, fixation_rate_quadrature, fixation_rate_with_method,
    RateMethod,
};
use lambda_ou::simulate::{block_path_with, fixation_path_with, sample_scaled_with, JumpSampler, ProcessKind, Seed, DEFAULT_CAP};
use lambda_ou::testfn::GaussianBump;
use lambda_ou::{assumption_a_params, Error, LimitParams, MeasureSpec};

use config::RunConfig;
use output::Csv;

#[derive(Debug, Parser)]
#[command(name = "lambda-ou", version, about = "Λ-coalescent block counts, fixation lines and their OU-type limits")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "LAMBDA_OU_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Jump rates q_{k,j} (block) or γ_{k,j} (fixation) as CSV.
    Rates(RatesArgs),
    /// Simulated paths, rescaled values or raw jump events as CSV.
    Simulate(SimulateArgs),
    /// Characteristic functions of X_t, Y_t or the stationary law as CSV.
    Cf(CfArgs),
    /// Stationary CDF by Fourier inversion, or samples drawn from it.
    Stationary(StationaryArgs),
    /// |A_discrete(k, x) − A_limit(x)| for a Gaussian test function.
    Converge(ConvergeArgs),
    /// Siegmund duality check P(L_t ≥ n) = P(N_t ≤ m).
    Duality(DualityArgs),
    /// η_k and partial sums of 1/η_k.
    Cdi(CdiArgs),
    /// Runs the acceptance suite.
    Selftest(SelftestArgs),
    /// Runs a subcommand described by a JSON config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct MeasureArg {
    /// `beta:a,b`, `lebesgue:c`, `atom:u,mass`, components joined by `+`,
    /// a JSON object, or `@file.json`.
    #[arg(long, value_parser = parse_measure)]
    measure: MeasureSpec,
}

#[derive(Debug, Args)]
struct LimitArgs {
    #[command(flatten)]
    measure: MeasureArg,
    /// Scaling exponent b; inferred for beta:1,b and lebesgue:c.
    #[arg(long)]
    b: Option<f64>,
    /// Quadrature tolerance for the drift a.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

impl LimitArgs {
    fn params(&self) -> Result<LimitParams, Error> {
        let m = &self.measure.measure;
        match self.b {
            Some(b) => assumption_a_params(m, b, self.tol),
            None => LimitParams::auto(m, self.tol),
        }
    }
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    x_max: f64,
    #[arg(long, default_value_t = 0.5)]
    x_step: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>, Error> {
        if !(self.x_step > 0.0) || !(self.x_max >= self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::Config(format!(
                "grid needs finite x-min ≤ x-max and x-step > 0, got {}..{} step {}",
                self.x_min, self.x_max, self.x_step
            )));
        }
        let n = ((self.x_max - self.x_min) / self.x_step + 1e-9).floor() as usize;
        if n > 10_000_000 {
            return Err(Error::Config(format!("grid of {} points is too large", n + 1)));
        }
        Ok((0..=n).map(|i| self.x_min + i as f64 * self.x_step).collect())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Block,
    Fixation,
}

impl From<KindArg> for ProcessKind {
    fn from(k: KindArg) -> ProcessKind {
        match k {
            KindArg::Block => ProcessKind::Block,
            KindArg::Fixation => ProcessKind::Fixation,
        }
    }
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[command(flatten)]
    measure: MeasureArg,
    #[arg(long, value_enum, default_value_t = KindArg::Block)]
    kind: KindArg,
    /// Source states; defaults to 2..=k-max.
    #[arg(long, value_delimiter = ',')]
    k: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    k_max: u64,
    /// Fixation targets k+1..=k+span.
    #[arg(long, default_value_t = 10)]
    span: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    measure: MeasureArg,
    #[arg(long, value_enum, default_value_t = KindArg::Block)]
    kind: KindArg,
    /// Initial state.
    #[arg(long)]
    n: u64,
    /// Observation times, sorted.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    times: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixation lines leaving {1, …, cap} are recorded as capped.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
    /// Scaling exponent for the rescaled value; inferred for beta:1,b and lebesgue:c.
    #[arg(long)]
    b: Option<f64>,
    /// Emit every jump up to the last time instead of values at the times.
    #[arg(long)]
    events: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CfKindArg {
    #[value(name = "X")]
    X,
    #[value(name = "Y")]
    Y,
    Stationary,
}

impl From<CfKindArg> for CfKind {
    fn from(k: CfKindArg) -> CfKind {
        match k {
            CfKindArg::X => CfKind::X,
            CfKindArg::Y => CfKind::Y,
            CfKindArg::Stationary => CfKind::Stationary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Closed form when available, quadrature otherwise.
    Best,
    Quadrature,
}

#[derive(Debug, Args)]
struct CfArgs {
    #[command(flatten)]
    limit: LimitArgs,
    #[arg(long, value_enum, default_value_t = CfKindArg::X)]
    kind: CfKindArg,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Explicit arguments; overrides the grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Best)]
    method: MethodArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StationaryArgs {
    #[command(flatten)]
    limit: LimitArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Inversion accuracy.
    #[arg(long, default_value_t = 1e-8)]
    inv_tol: f64,
    /// Draw this many samples by inverse CDF instead of tabulating.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Points of the interpolation table used for sampling.
    #[arg(long, default_value_t = 4001)]
    table_points: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Best)]
    method: MethodArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    limit: LimitArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    k: Vec<u64>,
    /// Grid; defaults to [−6, 6] step 1/4 plus a band at very negative x.
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long)]
    x_step: Option<f64>,
    /// Test function exp(−(x−c)²/(2w²)).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    center: f64,
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DualityArgs {
    #[command(flatten)]
    measure: MeasureArg,
    /// Initial block count.
    #[arg(long)]
    n: u64,
    /// Initial fixation line.
    #[arg(long)]
    m: u64,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 2000)]
    cap: u64,
    /// Fail when the overflow probability exceeds this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CdiArgs {
    #[command(flatten)]
    measure: MeasureArg,
    #[arg(long, default_value_t = 1000)]
    k_max: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
    level: LevelArg,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Usage(String),
    Io(std::io::Error),
    SelftestFailed(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_numeric() => 2,
            CliError::SelftestFailed(_) => 3,
            _ => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Lib(e) => (e.kind(), e.to_string()),
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Io(e) => ("io", e.to_string()),
            CliError::SelftestFailed(n) => ("selftest", format!("{n} criteria failed")),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.code() })
    }
}

fn parse_measure(s: &str) -> Result<MeasureSpec, String> {
    let text = match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?,
        None => s.to_string(),
    };
    text.parse::<MeasureSpec>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    match try_main(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}

fn try_main(argv: Vec<std::ffi::OsString>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.kind().to_string() + ": " + e.render().to_string().trim())),
    };
    if let Command::Run(r) = &cli.command {
        let cfg = RunConfig::load(&r.config)?;
        let argv = cfg.to_argv()?;
        return try_main(argv.into_iter().map(Into::into).collect());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Rates(a) => rates(a),
        Command::Simulate(a) => simulate(a),
        Command::Cf(a) => cf(a),
        Command::Stationary(a) => stationary(a),
        Command::Converge(a) => converge(a),
        Command::Duality(a) => duality(a),
        Command::Cdi(a) => cdi(a),
        Command::Selftest(a) => selftest(a),
        Command::Run(_) => unreachable!(),
    }
}

fn open(out: &Option<PathBuf>) -> Result<Csv, CliError> {
    Ok(Csv::open(out.as_deref().map(Path::new))?)
}

fn rates(a: RatesArgs) -> Result<(), CliError> {
    let m = &a.measure.measure;
    let ks: Vec<u64> = if a.k.is_empty() { (2..=a.k_max).collect() } else { a.k.clone() };
    let kind = ProcessKind::from(a.kind);
    let mut csv = open(&a.out)?;
    match kind {
        ProcessKind::Block => {
            csv.comment("block counting rates q_{k,j} = C(k,j-1) ∫ u^{k-j-1} (1-u)^{j-1} Λ(du), k → j")?;
        }
        ProcessKind::Fixation => {
            csv.comment("fixation line rates γ_{k,j} = C(j,j-k+1) ∫ u^{j-k-1} (1-u)^k Λ(du), k → j")?;
        }
    }
    csv.comment(&format!("measure: {m}; units: jumps per unit time; rel_gap = |closed − quadrature| / closed"))?;
    csv.header(&["k", "j", "rate", "method", "rel_gap"])?;
    for k in ks {
        let targets: Vec<u64> = match kind {
            ProcessKind::Block => (1..k).collect(),
            ProcessKind::Fixation => (k + 1..=k + a.span).collect(),
        };
        for j in targets {
            let (rate, method) = match kind {
                ProcessKind::Block => block_rate_with_method(k, j, m)?,
                ProcessKind::Fixation => fixation_rate_with_method(k, j, m)?,
            };
            let gap = match method {
                RateMethod::Closed => {
                    let q = match kind {
                        ProcessKind::Block => block_rate_quadrature(k, j, m)?,
                        ProcessKind::Fixation => fixation_rate_quadrature(k, j, m)?,
                    };
                    Some(if rate == 0.0 { q.abs() } else { ((rate - q) / rate).abs() })
                }
                _ => None,
            };
            row!(csv, k, j, rate, method.as_str(), gap)?;
        }
    }
    Ok(csv.finish()?)
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let m = &a.measure.measure;
    let kind = ProcessKind::from(a.kind);
    let sampler = JumpSampler::new(m);
    let mut csv = open(&a.out)?;
    if a.events {
        let horizon = a.times.iter().copied().fold(0.0, f64::max);
        csv.comment(&format!("{kind} jump events of the {kind} process started at {}; measure: {m}", a.n))?;
        csv.comment("t: time of the jump (model time units); state: state after the jump")?;
        csv.header(&["replicate", "t", "state"])?;
        let master = Seed::new(a.seed);
        for r in 0..a.replicates {
            let seed = master.replicate(r);
            let path = match kind {
                ProcessKind::Block => block_path_with(&sampler, a.n, horizon, seed)?,
                ProcessKind::Fixation => fixation_path_with(&sampler, a.n, horizon, a.cap, seed)?,
            };
            for (t, s) in path.events() {
                row!(csv, r, t, s)?;
            }
        }
        return Ok(csv.finish()?);
    }
    let b = a.b.or_else(|| m.natural_b()).ok_or_else(|| {
        CliError::Lib(Error::Config(format!("pass --b for {m}; it is only inferred for beta:1,b and lebesgue:c")))
    })?;
    let run = sample_scaled_with(&sampler, kind, a.n, b, &a.times, a.replicates, a.seed, a.cap)?;
    match kind {
        ProcessKind::Block => csv.comment("scaled_value = log N_t − e^{−bt} log n (dimensionless)")?,
        ProcessKind::Fixation => csv.comment("scaled_value = log L_t − e^{bt} log n (dimensionless); inf when capped")?,
    }
    csv.comment(&format!("measure: {m}; b = {b}; n = {}; seed = {}; t in model time units", a.n, a.seed))?;
    csv.header(&["replicate", "t", "raw_state", "scaled_value"])?;
    for s in &run.samples {
        row!(csv, s.replicate_id, s.t, s.raw_state, s.value)?;
    }
    Ok(csv.finish()?)
}

fn char_exponent(limit: &LimitArgs, method: MethodArg) -> Result<CharExponent, CliError> {
    let params = limit.params()?;
    Ok(match method {
        MethodArg::Best => CharExponent::best(params)?,
        MethodArg::Quadrature => CharExponent::quadrature(params)?,
    })
}

fn cf(a: CfArgs) -> Result<(), CliError> {
    let ce = char_exponent(&a.limit, a.method)?;
    let xs = if a.x.is_empty() { a.grid.grid()? } else { a.x.clone() };
    let kind = CfKind::from(a.kind);
    let grid = lambda_ou::limit::cf_grid(&ce, kind, a.t, &xs)?;
    let mut csv = open(&a.out)?;
    match kind {
        CfKind::X => csv.comment(&format!("E exp(ix X_t) = exp(∫_0^t ψ(e^{{−bs}} x) ds), t = {}", a.t))?,
        CfKind::Y => csv.comment(&format!("E exp(iy Y_t) = exp(∫_0^t ψ(−e^{{bs}} y) ds), t = {}", a.t))?,
        CfKind::Stationary => csv.comment("stationary law: exp(b^{-1} ∫_0^1 ψ(vx) v^{-1} dv)")?,
    }
    csv.comment(&format!(
        "measure: {}; b = {}; a = {}; ψ route: {}; x is the dimensionless Fourier argument",
        ce.measure(),
        ce.b(),
        ce.a(),
        ce.method.as_str()
    ))?;
    csv.header(&["x", "re", "im", "abs"])?;
    for (x, v) in grid.x_grid.iter().zip(&grid.values) {
        row!(csv, *x, v.re, v.im, v.norm())?;
    }
    Ok(csv.finish()?)
}

fn stationary(a: StationaryArgs) -> Result<(), CliError> {
    let ce = char_exponent(&a.limit, a.method)?;
    let xs = a.grid.grid()?;
    let x_max = a.grid.x_min.abs().max(a.grid.x_max.abs());
    let inv = CfInverter::new(|x| ce.phi_stationary(x), x_max, a.inv_tol)?;
    let mut csv = open(&a.out)?;
    csv.comment("stationary CDF F(x) = 1/2 − π^{-1} ∫_0^∞ Im(e^{−iξx} φ(ξ)) ξ^{-1} dξ")?;
    csv.comment(&format!("measure: {}; b = {}; inversion tolerance {:e}", ce.measure(), ce.b(), a.inv_tol))?;
    match a.samples {
        Some(n) => {
            if a.table_points < 2 {
                return Err(Error::Config("table-points must be at least 2".into()).into());
            }
            let table = inv.table(a.grid.x_min, a.grid.x_max, a.table_points)?;
            let mut rng = Seed::new(a.seed).rng();
            csv.comment(&format!(
                "inverse-CDF samples from a {}-point table on [{}, {}]; seed = {}",
                a.table_points, a.grid.x_min, a.grid.x_max, a.seed
            ))?;
            csv.header(&["sample", "value"])?;
            for i in 0..n {
                row!(csv, i, table.sample(&mut rng))?;
            }
        }
        None => {
            csv.header(&["x", "cdf", "error"])?;
            for x in xs {
                let (f, e) = inv.cdf_with_error(x)?;
                row!(csv, x, f, e)?;
            }
        }
    }
    Ok(csv.finish()?)
}

fn converge(a: ConvergeArgs) -> Result<(), CliError> {
    let params = a.limit.params()?;
    let xs = match (a.x_min, a.x_max, a.x_step) {
        (None, None, None) => default_x_grid(),
        (lo, hi, step) => {
            GridArgs { x_min: lo.unwrap_or(-6.0), x_max: hi.unwrap_or(6.0), x_step: step.unwrap_or(0.25) }.grid()?
        }
    };
    if !(a.width > 0.0) {
        return Err(Error::Domain(format!("width must be positive, got {}", a.width)).into());
    }
    let f = GaussianBump::new(a.center, a.width);
    let table = generator_gap_table(&f, &params, &a.k, &xs)?;
    let mut csv = open(&a.out)?;
    csv.comment("gap = |A_k f(x) − A f(x)|, A_k the generator of log N^{(k)} and A that of the limit (units of f per unit time)")?;
    csv.comment(&format!(
        "measure: {}; b = {}; a = {}; f(x) = exp(−(x − {})²/(2·{}²))",
        params.measure, params.b, params.a, a.center, a.width
    ))?;
    csv.header(&["k", "x", "gap"])?;
    for (i, k) in table.k_list.iter().enumerate() {
        for (x, g) in table.x_grid.iter().zip(&table.gaps[i]) {
            row!(csv, *k, *x, *g)?;
        }
    }
    Ok(csv.finish()?)
}

fn duality(a: DualityArgs) -> Result<(), CliError> {
    let m = &a.measure.measure;
    let r = duality_gap_exact(a.n, a.m, a.t, m, a.cap, a.tol)?;
    let mut csv = open(&a.out)?;
    csv.comment("rhs = P(N_t^{(n)} ≤ m); lhs = P(L_t^{(m)} ≥ n) ∈ [lhs_lower, lhs_upper] (probabilities)")?;
    csv.comment(&format!(
        "measure: {m}; fixation chain truncated at cap = {}; bound = overflow probability; numerical_error = uniformization error",
        r.cap
    ))?;
    csv.header(&["n", "m", "t", "cap", "rhs", "lhs_lower", "lhs_upper", "gap", "bound", "numerical_error"])?;
    row!(csv, r.n, r.m0, r.t, r.cap, r.rhs, r.lhs_lower, r.lhs_upper, r.gap, r.truncation_bound, r.numerical_error)?;
    Ok(csv.finish()?)
}

fn cdi(a: CdiArgs) -> Result<(), CliError> {
    let m = &a.measure.measure;
    let rep = cdi_diagnostic(m, a.k_max)?;
    let mut csv = open(&a.out)?;
    csv.comment("η_k = k Σ_{j=0}^{k−2} ∫(1−u)^j Λ(du) (rate units); partial_sum = Σ_{i=2}^{k} 1/η_i (time units)")?;
    csv.comment(&format!("measure: {m}; slope of log(k log k / η_k) = {}; hint: {}", rep.slope, rep.verdict_hint.as_str()))?;
    if let Some(auth) = &rep.authoritative {
        csv.comment(&format!("comes down from infinity: {} ({})", auth.comes_down, auth.reason))?;
    }
    csv.header(&["k", "eta", "partial_sum"])?;
    for (i, (e, s)) in rep.eta.iter().zip(&rep.partial_sums).enumerate() {
        row!(csv, i as u64 + 2, *e, *s)?;
    }
    Ok(csv.finish()?)
}

fn selftest(a: SelftestArgs) -> Result<(), CliError> {
    let level = match a.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let mut failed = 0;
    for id in 1..=10 {
        let r = acceptance::run_criterion(id, level);
        println!("{r}");
        if r.outcome == Outcome::Fail {
            println!("       violated: {}", r.anchor);
            failed += 1;
        }
    }
    println!("{failed} of 10 criteria failed");
    if failed > 0 {
        return Err(CliError::SelftestFailed(failed));
    }
    Ok(())
}
