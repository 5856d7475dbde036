use clap::{Args, Parser, Subcommand, ValueEnum};
use ecfse::estimator::{estimate, ConductanceWeight, EstimationResult, EstimatorConfig, DEFAULT_G_PMU};
use ecfse::evaluation::{allocation_rules, comparison_csv, emit_comparison, run_campaign, true_state, CampaignConfig};
use ecfse::measurement::{allocate, sample, DeviceCounts, MeasurementSet, NoiseMode, PmuMode, StdDevConfig};
use ecfse::network::{builtin_case, parse_case, NetworkModel};
use ecfse::powerflow::{solve_powerflow, true_measurands, PowerInjections, TrueState, DEFAULT_MAX_ITER};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const STATE_SCHEMA: &str = "ecfse.state.v1";

#[derive(Parser)]
#[command(name = "ecfse", version, about = "Linear equivalent-circuit state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the AC power flow of a case.
    Powerflow(PowerflowArgs),
    /// Draw one noisy measurement set from a solved state.
    Synthesize(SynthesizeArgs),
    /// Estimate the state from a measurement set.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo campaign on one allocation.
    Montecarlo(MontecarloArgs),
    /// Tabulate true, estimated and measured voltage magnitudes.
    Compare(CompareArgs),
}

#[derive(Args)]
struct CaseArg {
    /// Case file, or `ieee14` / `ieee118` for the bundled cases.
    #[arg(long)]
    case: String,
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "ECFSE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    pmu: usize,
    #[arg(long = "rtu-inj")]
    rtu_inj: usize,
    #[arg(long = "rtu-flow")]
    rtu_flow: usize,
    #[arg(long = "pmu-mode", value_enum, default_value_t = ModeArg::LineFlow)]
    pmu_mode: ModeArg,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value_t = NoiseArg::Uniform)]
    noise: NoiseArg,
    /// Multiplies every default standard deviation.
    #[arg(long = "sigma-scale", default_value_t = 1.0)]
    sigma_scale: f64,
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, default_value_t = DEFAULT_G_PMU)]
    gpmu: f64,
    /// Weight of the PMU conductance currents in the objective.
    #[arg(long = "conductance-weight", value_enum, default_value_t = WeightArg::Channel)]
    conductance_weight: WeightArg,
}

impl EstimatorArgs {
    fn config(&self) -> Outcome<EstimatorConfig> {
        if !(self.gpmu > 0.0 && self.gpmu.is_finite()) {
            return Err(Failure::Usage(format!("--gpmu must be positive, got {}", self.gpmu)));
        }
        Ok(EstimatorConfig {
            g_pmu: self.gpmu,
            conductance_weight: match self.conductance_weight {
                WeightArg::Channel => ConductanceWeight::Channel,
                WeightArg::Unit => ConductanceWeight::Unit,
            },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    LineFlow,
    Injection,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    Gaussian,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Channel,
    Unit,
}

impl From<ModeArg> for PmuMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::LineFlow => PmuMode::LineFlow,
            ModeArg::Injection => PmuMode::Injection,
        }
    }
}

impl From<NoiseArg> for NoiseMode {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Uniform => NoiseMode::Uniform,
            NoiseArg::Gaussian => NoiseMode::Gaussian,
            NoiseArg::None => NoiseMode::None,
        }
    }
}

#[derive(Args)]
struct PowerflowArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    case: CaseArg,
    /// Solved state from `powerflow`; solved on the fly when omitted.
    #[arg(long)]
    state: Option<PathBuf>,
    #[command(flatten)]
    counts: CountArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    meas: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Record the wall-clock solve time in the result.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MontecarloArgs {
    #[command(flatten)]
    case: CaseArg,
    #[command(flatten)]
    counts: CountArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Record per-trial solve times in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial indices as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    schema: String,
    case: String,
    state: TrueState,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Input(_) => "input",
            Failure::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ecfse::Error> for Failure {
    fn from(e: ecfse::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn read(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: Option<&Path>, text: &str) -> Outcome<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_newline(mut s: String) -> String {
    s.push('\n');
    s
}

fn load_case(arg: &CaseArg) -> Outcome<NetworkModel> {
    let path = Path::new(&arg.case);
    let text = match builtin_case(&arg.case) {
        Some(text) if !path.exists() => text.to_string(),
        _ => read(path)?,
    };
    parse_case(&text).map_err(|e| Failure::Input(format!("{}: {e}", arg.case)))
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_state(path: &Path, net: &NetworkModel) -> Outcome<TrueState> {
    let file: StateFile = load_json(path)?;
    if file.schema != STATE_SCHEMA {
        return Err(Failure::Input(format!(
            "{}: schema {:?}, expected {STATE_SCHEMA:?}",
            path.display(),
            file.schema
        )));
    }
    let ids: Vec<_> = net.buses().iter().map(|b| b.id).collect();
    if file.state.bus_ids != ids || file.state.v.len() != ids.len() {
        return Err(Failure::Input(format!(
            "{}: buses do not match the case",
            path.display()
        )));
    }
    if !file.state.converged {
        return Err(Failure::Input(format!("{}: state did not converge", path.display())));
    }
    Ok(file.state)
}

fn load_measurements(path: &Path, net: &NetworkModel) -> Outcome<MeasurementSet> {
    let meas =
        MeasurementSet::from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    meas.validate(net)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(meas)
}

fn std_dev(args: &NoiseArgs) -> Outcome<StdDevConfig> {
    if !(args.sigma_scale > 0.0 && args.sigma_scale.is_finite()) {
        return Err(Failure::Usage(format!(
            "--sigma-scale must be positive, got {}",
            args.sigma_scale
        )));
    }
    Ok(StdDevConfig::default().scaled(args.sigma_scale))
}

fn counts(args: &CountArgs) -> DeviceCounts {
    DeviceCounts::new(args.pmu, args.rtu_inj, args.rtu_flow)
}

fn powerflow(args: PowerflowArgs) -> Outcome<()> {
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", args.tol)));
    }
    let net = load_case(&args.case)?;
    let state = solve_powerflow(&net, &PowerInjections::from_case(&net), args.tol, args.max_iter)?;
    if !state.converged {
        return Err(Failure::Numerical(format!(
            "power flow did not converge ({} iterations, max mismatch {:e})",
            state.iterations, state.max_mismatch
        )));
    }
    log::info!("power flow converged in {} iterations", state.iterations);
    let file = StateFile {
        schema: STATE_SCHEMA.to_string(),
        case: net.name().to_string(),
        state,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Failure::Input(e.to_string()))?;
    write(args.out.as_deref(), &with_newline(text))
}

fn synthesize(args: SynthesizeArgs) -> Outcome<()> {
    let net = load_case(&args.case)?;
    let truth = match &args.state {
        Some(path) => load_state(path, &net)?,
        None => true_state(&net)?,
    };
    let rules = allocation_rules(&net, &truth, args.counts.pmu_mode.into());
    let alloc = allocate(&net, counts(&args.counts), args.seed.seed, &rules)?;
    let exact = true_measurands(&net, &truth, &alloc)?;
    let meas = sample(
        &exact,
        &alloc,
        net.name(),
        &std_dev(&args.noise)?,
        args.noise.noise.into(),
        args.seed.seed,
    )?;
    write(args.out.as_deref(), &with_newline(meas.to_json()?))
}

fn run_estimate(args: EstimateArgs) -> Outcome<()> {
    let net = load_case(&args.case)?;
    let meas = load_measurements(&args.meas, &net)?;
    let mut result = estimate(&net, &meas, &args.estimator.config()?)?;
    if !args.timing {
        result.solve_seconds = None;
    }
    log::info!(
        "objective {:e}, KKT residual {:e}",
        result.objective,
        result.kkt_residual
    );
    write(args.out.as_deref(), &with_newline(result.to_json()?))
}

fn montecarlo(args: MontecarloArgs) -> Outcome<()> {
    if args.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let net = load_case(&args.case)?;
    let cfg = CampaignConfig {
        counts: counts(&args.counts),
        std_dev: std_dev(&args.noise)?,
        noise: args.noise.noise.into(),
        pmu_mode: args.counts.pmu_mode.into(),
        estimator: args.estimator.config()?,
        trials: args.trials,
        base_seed: args.seed.seed,
        jobs: args.jobs,
    };
    let mut report = run_campaign(&net, &cfg)?;
    log::info!(
        "{} trials: mean sigma2_x {:e}, mean sigma_max {:e}, {:.3} s solving",
        report.trials.len(),
        report.mean_sigma2_x,
        report.mean_sigma_max,
        report.total_solve_seconds()
    );
    if !args.timing {
        report.strip_timing();
    }
    if let Some(csv) = &args.csv {
        write(Some(csv), &report.to_csv())?;
    }
    write(args.out.as_deref(), &with_newline(report.to_json()?))
}

fn compare(args: CompareArgs) -> Outcome<()> {
    let net = load_case(&args.case)?;
    let truth = load_state(&args.state, &net)?;
    let meas = load_measurements(&args.meas, &net)?;
    let result: EstimationResult = load_json(&args.result)?;
    let ids: Vec<_> = net.buses().iter().map(|b| b.id).collect();
    if result.buses.iter().map(|b| b.bus).ne(ids.iter().copied()) {
        return Err(Failure::Input(format!(
            "{}: buses do not match the case",
            args.result.display()
        )));
    }
    let rows = emit_comparison(&net, &truth, &meas, &result)?;
    write(args.out.as_deref(), &comparison_csv(&rows))
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Powerflow(a) => powerflow(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Compare(a) => compare(a),
    }
}

fn report(f: &Failure) -> ExitCode {
    let body = serde_json::json!({
        "error": f.kind(),
        "message": f.message(),
        "exit_code": f.code(),
    });
    eprintln!("{body}");
    ExitCode::from(f.code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&Failure::Usage(e.render().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
