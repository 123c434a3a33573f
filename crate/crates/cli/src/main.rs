//! `spectral-intervene`: generate market states, draw noisy signals, compute
//! interventions, evaluate them and run the Monte Carlo studies.
//!
//! Exit codes: 0 success, 1 runtime/config/IO error, 2 usage error or
//! dimension mismatch, 3 no recoverable structure at the chosen threshold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spectral_intervene::config::{parse_grid, Experiment, ExperimentFile, Overrides};
use spectral_intervene::error::{Error, Result};
use spectral_intervene::generators::{
    recoverable_structure_margin_with, BlockExampleConfig, PlantedConfig, Prop2P2Config,
};
use spectral_intervene::harness::{
    emit_results, fig3_config, noise_scaling_study, prop2_part1_demo, prop2_part2_demo, rows_to_csv,
    run_sweep, large_n_trend_study, GeneratorSpec, OutputFormat, SweepConfig,
};
use spectral_intervene::io::{
    read_intervention, read_signal_json, read_state_csv, read_state_file, read_state_json,
    signal_to_json, state_to_json, write_atomic, write_intervention_csv, write_intervention_json,
    write_json, write_signal_json, write_state_json, InterventionFile,
};
use spectral_intervene::market::{Intervention, MarketState};
use spectral_intervene::rng::{gaussian_vector, stream, Stream};
use spectral_intervene::rules::{
    complete_info_from_decomposition, first_eigenvector_from_decomposition,
    recovery_diagnostics_with, robust_from_decomposition, surplus_under_truth, ThresholdPlan,
    DEFAULT_FLOOR, M_HAT_EXPONENT,
};
use spectral_intervene::signal::{make_signal, spectral_norm, MatrixNoise, NoiseConfig, QuantityNoise};
use spectral_intervene::spectral::decompose;

const SEED_ENV: &str = "SPECTRAL_INTERVENE_SEED";

#[derive(Parser)]
#[command(name = "spectral-intervene", version, about = "Spectral interventions in noisy markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a market state drawn from a named family.
    Generate(GenerateArgs),
    /// Draw a noisy signal of a market state.
    Signal(SignalArgs),
    /// Compute an intervention from a signal (or, for complete_info, a state).
    Intervene(InterveneArgs),
    /// Print the surplus derivatives of an intervention under a true state.
    Evaluate(EvaluateArgs),
    /// Run a Monte Carlo sweep described by a TOML file and flags.
    Sweep(SweepArgs),
    /// Run a preset study.
    Reproduce(ReproduceArgs),
    /// Compare the eigenstructure of a signal with the true state.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorName {
    #[value(name = "block_example")]
    BlockExample,
    #[value(name = "prop2_part1")]
    Prop2Part1,
    #[value(name = "prop2_part2")]
    Prop2Part2,
    #[value(name = "hedonic")]
    Hedonic,
    #[value(name = "planted")]
    Planted,
    #[value(name = "independent")]
    Independent,
}

#[derive(Args)]
struct GenerateArgs {
    /// Family to draw from.
    #[arg(long, value_enum)]
    generator: GeneratorName,
    /// Number of products (block_example, prop2_part1, hedonic, planted, independent).
    #[arg(long)]
    n: Option<usize>,
    /// Structure weight of the block example.
    #[arg(long)]
    gamma: Option<f64>,
    /// Columns of Z in the block example (default: n).
    #[arg(long)]
    z_cols: Option<usize>,
    /// log2 of the size for prop2_part2.
    #[arg(long)]
    m: Option<u32>,
    /// Perturbation magnitude for prop2_part2 (default: sqrt(1/n)).
    #[arg(long)]
    f: Option<f64>,
    /// Characteristics for hedonic.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Characteristic weight for hedonic.
    #[arg(long, default_value_t = 0.12)]
    alpha: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixScheme {
    None,
    Uniform,
    Household,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantityScheme {
    None,
    Lognormal,
    Gaussian,
}

#[derive(Args)]
struct SignalArgs {
    /// True market state JSON.
    #[arg(long)]
    state: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    matrix_noise: MatrixScheme,
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    #[arg(long, default_value_t = 0.3)]
    f_std: f64,
    #[arg(long, default_value_t = 0.3)]
    g_std: f64,
    #[arg(long, value_enum, default_value = "lognormal")]
    quantity_noise: QuantityScheme,
    #[arg(long, default_value_t = 1.0)]
    log_mean: f64,
    #[arg(long, default_value_t = 0.1)]
    log_var: f64,
    /// Standard deviation of additive quantity noise.
    #[arg(long, default_value_t = 0.01)]
    std: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleName {
    #[value(name = "robust")]
    Robust,
    #[value(name = "first_eigenvector")]
    FirstEigenvector,
    #[value(name = "complete_info")]
    CompleteInfo,
}

#[derive(Args)]
struct InterveneArgs {
    /// Signal or state JSON (a state is used as its own noiseless signal).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "robust")]
    rule: RuleName,
    /// Robust cutoff is n^exponent.
    #[arg(long, default_value_t = M_HAT_EXPONENT)]
    threshold_exponent: f64,
    /// Explicit robust cutoff; overrides the exponent.
    #[arg(long)]
    m_hat: Option<f64>,
    /// Predicted expenditure (robust, first_eigenvector) or S_dot (complete_info).
    #[arg(long, default_value_t = 1.0)]
    target_expenditure: f64,
    /// Consumer-surplus target for complete_info.
    #[arg(long, default_value_t = 0.0)]
    target_c_dot: f64,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    floor: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// True state: JSON, or a headerless CSV matrix together with --q0.
    #[arg(long)]
    state: PathBuf,
    /// Single-column CSV of status-quo quantities for a CSV state.
    #[arg(long)]
    q0: Option<PathBuf>,
    /// Intervention JSON or single-column CSV.
    #[arg(long)]
    intervention: PathBuf,
    /// Include per-mode contributions.
    #[arg(long)]
    modes: bool,
}

#[derive(Args)]
struct SweepFlags {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated grid values.
    #[arg(long)]
    gamma_grid: Option<String>,
    #[arg(long, value_enum)]
    rule: Option<RuleName>,
    #[arg(long)]
    threshold_exponent: Option<f64>,
    #[arg(long)]
    target_expenditure: Option<f64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl SweepFlags {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            seed: self.seed,
            reps: self.reps,
            grid: self.gamma_grid.as_deref().map(parse_grid).transpose()?,
            rule: self.rule.map(|r| rule_str(r).to_string()),
            threshold_exponent: self.threshold_exponent,
            target_expenditure: self.target_expenditure,
            out: self.out.clone(),
            format: self.format.map(Into::into),
            jobs: self.jobs,
        })
    }

    fn experiment(&self, base: SweepConfig) -> Result<Experiment> {
        let file = match &self.config {
            Some(p) => ExperimentFile::load(p)?,
            None => ExperimentFile::default(),
        };
        let mut exp = file.resolve(base);
        self.overrides()?.apply(&mut exp)?;
        Ok(exp)
    }
}

fn rule_str(r: RuleName) -> &'static str {
    match r {
        RuleName::Robust => "robust",
        RuleName::FirstEigenvector => "first_eigenvector",
        RuleName::CompleteInfo => "complete_info",
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: SweepFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    #[value(name = "fig3")]
    Fig3,
    #[value(name = "prop2p1")]
    Prop2p1,
    #[value(name = "prop2p2")]
    Prop2p2,
    #[value(name = "noise_scaling")]
    NoiseScaling,
    #[value(name = "thm1_trend")]
    Thm1Trend,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    preset: Preset,
    /// Sizes for thm1_trend and noise_scaling (comma-separated).
    #[arg(long)]
    n_list: Option<String>,
    #[command(flatten)]
    flags: SweepFlags,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// True state JSON.
    #[arg(long)]
    state: PathBuf,
    /// Signal JSON.
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, default_value_t = M_HAT_EXPONENT)]
    threshold_exponent: f64,
    /// Also write the signal's eigendecomposition as JSON.
    #[arg(long)]
    export_decomposition: Option<PathBuf>,
}

fn emit_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn emit_value<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(value, p),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// A library error, or a flag combination the parser cannot catch.
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CmdResult = std::result::Result<ExitCode, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn cmd_generate(a: &GenerateArgs) -> CmdResult {
    let need_n = || a.n.ok_or_else(|| usage("--n is required for this generator"));
    let spec = match a.generator {
        GeneratorName::BlockExample => {
            let mut cfg = BlockExampleConfig { z_cols: a.z_cols, ..Default::default() };
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(g) = a.gamma {
                cfg.gamma = g;
            }
            GeneratorSpec::BlockExample(cfg)
        }
        GeneratorName::Prop2Part1 => GeneratorSpec::Prop2Part1 { n: need_n()? },
        GeneratorName::Prop2Part2 => GeneratorSpec::Prop2Part2 {
            m: a.m.ok_or_else(|| usage("--m is required for prop2_part2"))?,
            f: a.f,
        },
        GeneratorName::Hedonic => GeneratorSpec::Hedonic { n: need_n()?, k: a.k, alpha: a.alpha },
        GeneratorName::Planted => GeneratorSpec::Planted(PlantedConfig::new(need_n()?)),
        GeneratorName::Independent => GeneratorSpec::Independent { n: need_n()? },
    };
    let state = spec.generate(&mut stream(a.seed, Stream::Generator))?;
    match &a.out {
        Some(p) => write_state_json(&state, p)?,
        None => emit_bytes(None, &state_to_json(&state)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_signal(a: &SignalArgs) -> CmdResult {
    let state = read_state_json(&a.state)?;
    let cfg = NoiseConfig {
        matrix: match a.matrix_noise {
            MatrixScheme::None => MatrixNoise::None,
            MatrixScheme::Uniform => MatrixNoise::UniformOffdiag { half_width: a.half_width },
            MatrixScheme::Household => MatrixNoise::HouseholdSampling { f_std: a.f_std, g_std: a.g_std },
        },
        quantity: match a.quantity_noise {
            QuantityScheme::None => QuantityNoise::None,
            QuantityScheme::Lognormal => {
                QuantityNoise::MultiplicativeLognormal { log_mean: a.log_mean, log_var: a.log_var }
            }
            QuantityScheme::Gaussian => QuantityNoise::AdditiveGaussian { std: a.std },
        },
        seed: a.seed,
    };
    let signal = make_signal(&state, &cfg)?;
    match &a.out {
        Some(p) => write_signal_json(&signal, p)?,
        None => emit_bytes(None, &signal_to_json(&signal)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_intervene(a: &InterveneArgs) -> CmdResult {
    let (d, q0, is_signal) = read_state_file(&a.input)?;
    let n = q0.len();
    let mut thresholds = BTreeMap::new();
    let (sigma, predicted) = match a.rule {
        RuleName::CompleteInfo => {
            if is_signal {
                return Err(usage("complete_info needs the true state, not a signal"));
            }
            let state = MarketState::new(d, q0)?;
            let dec = decompose(&state.d)?;
            let s = complete_info_from_decomposition(&state, &dec, a.target_c_dot, a.target_expenditure)?;
            let e = s.expenditure(&state.q0);
            (s, e)
        }
        rule => {
            let dec = decompose(&d)?;
            let s = if rule == RuleName::Robust {
                let m_hat = a.m_hat.unwrap_or((n as f64).powf(a.threshold_exponent));
                thresholds.insert("m_hat".to_string(), m_hat);
                robust_from_decomposition(&dec, &q0, m_hat, a.floor, a.target_expenditure)?
            } else {
                let o = first_eigenvector_from_decomposition(&dec, &q0, a.target_expenditure, a.floor)?;
                if o.degenerate_top {
                    eprintln!("warning: top two eigenvalues tie; using the first eigenvector as sorted");
                }
                o.sigma
            };
            let e = s.expenditure(&q0);
            (s, e)
        }
    };
    let file = InterventionFile {
        sigma: sigma.sigma.as_slice().to_vec(),
        predicted_expenditure: predicted,
        rule: rule_str(a.rule).to_string(),
        thresholds,
    };
    match (a.format, &a.out) {
        (Format::Json, Some(p)) => write_intervention_json(&file, p)?,
        (Format::Csv, Some(p)) => write_intervention_csv(&sigma, p)?,
        (Format::Json, None) => emit_value(None, &file)?,
        (Format::Csv, None) => {
            for x in sigma.sigma.iter() {
                println!("{x}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_state(path: &Path, q0: Option<&Path>) -> Result<MarketState> {
    match q0 {
        Some(q) => read_state_csv(path, q),
        None => read_state_json(path),
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> CmdResult {
    let state = load_state(&a.state, a.q0.as_deref())?;
    let sigma: Intervention = read_intervention(&a.intervention)?;
    let mut report = surplus_under_truth(&state, &sigma)?;
    let residual = report.identity_residual();
    if !a.modes {
        report.mode_contributions.clear();
    }
    let mut value = serde_json::to_value(&report)?;
    value["identity_check"] = json!({
        "half_p_dot_plus_c_dot": 0.5 * report.p_dot_surplus + report.c_dot,
        "s_dot": report.s_dot,
        "residual": residual,
    });
    if !a.modes {
        value.as_object_mut().expect("object").remove("mode_contributions");
    }
    emit_value(None, &value)?;
    Ok(ExitCode::SUCCESS)
}

fn run_experiment(exp: &Experiment) -> Result<()> {
    let result = run_sweep(&exp.sweep)?;
    match &exp.output_path {
        Some(p) => emit_results(&result, p, exp.format),
        None => match exp.format {
            OutputFormat::Csv => emit_bytes(None, &rows_to_csv(&result.rows)?),
            OutputFormat::Json => emit_value(None, &result),
        },
    }
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let exp = a.flags.experiment(SweepConfig::default())?;
    run_experiment(&exp)?;
    Ok(ExitCode::SUCCESS)
}

fn emit_table<T: serde::Serialize>(flags: &SweepFlags, rows: &[T]) -> Result<()> {
    let bytes = match flags.format.unwrap_or(Format::Csv) {
        Format::Csv => rows_to_csv(rows)?,
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(rows)?;
            b.push(b'\n');
            b
        }
    };
    emit_bytes(flags.out.as_deref(), &bytes)
}

fn sizes(arg: &Option<String>, default: &[usize]) -> Result<Vec<usize>> {
    match arg {
        None => Ok(default.to_vec()),
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| Error::Parse(format!("size '{t}': {e}"))))
            .collect(),
    }
}

fn cmd_reproduce(a: &ReproduceArgs) -> CmdResult {
    let f = &a.flags;
    let seed = f.seed.unwrap_or(1);
    match a.preset {
        Preset::Fig3 => {
            let exp = f.experiment(fig3_config(300, 1))?;
            run_experiment(&exp)?;
        }
        Preset::Prop2p1 => {
            let reps = f.reps.unwrap_or(200);
            let mut rows = Vec::new();
            let mut rng = stream(seed, Stream::Sigma);
            for n in sizes(&a.n_list, &[4, 8, 16])? {
                let demo = prop2_part1_demo(n, reps, &mut rng)?;
                rows.extend(demo.rows.into_iter().map(|r| Prop2P1Out {
                    n: r.n,
                    sigma: r.sigma,
                    w_dot: r.w_dot,
                    benchmark_c_dot: demo.benchmark.c_dot,
                    benchmark_p_dot: demo.benchmark.p_dot_surplus,
                    benchmark_s_dot: demo.benchmark.s_dot,
                }));
            }
            emit_table(f, &rows)?;
        }
        Preset::Prop2p2 => {
            let reps = f.reps.unwrap_or(10_000);
            let mut rows = Vec::new();
            for n in sizes(&a.n_list, &[64])? {
                if !n.is_power_of_two() || n < 2 {
                    return Err(usage(format!("n = {n} must be a power of two >= 2")));
                }
                let cfg = Prop2P2Config::with_default_f(n.trailing_zeros());
                let mut rng = stream(seed, Stream::Sigma);
                let sigma = Intervention::new(gaussian_vector(n, &mut rng))?;
                rows.push(prop2_part2_demo(&cfg, reps, &sigma, 0.01, seed)?);
            }
            let flat: Vec<_> = rows
                .iter()
                .map(|d| Prop2P2Out {
                    n: d.n,
                    reps: d.reps,
                    epsilon: d.epsilon,
                    pr_le_minus_eps: d.pr_le_minus_eps,
                    pr_ge_eps: d.pr_ge_eps,
                    symmetry_statistic: d.symmetry_statistic,
                    median: d.summary.median,
                    p05: d.summary.p05,
                    p95: d.summary.p95,
                })
                .collect();
            emit_table(f, &flat)?;
        }
        Preset::NoiseScaling => {
            let rows = noise_scaling_study(&sizes(&a.n_list, &[64, 128, 256])?, 0.3, 0.3, f.reps.unwrap_or(20), seed)?;
            emit_table(f, &rows)?;
        }
        Preset::Thm1Trend => {
            let rows = large_n_trend_study(
                &sizes(&a.n_list, &[64, 256, 1024])?,
                f.reps.unwrap_or(50),
                seed,
                f.jobs.unwrap_or(0),
            )?;
            emit_table(f, &rows)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Serialize)]
struct Prop2P1Out {
    n: usize,
    sigma: String,
    w_dot: f64,
    benchmark_c_dot: f64,
    benchmark_p_dot: f64,
    benchmark_s_dot: f64,
}

#[derive(serde::Serialize)]
struct Prop2P2Out {
    n: usize,
    reps: usize,
    epsilon: f64,
    pr_le_minus_eps: f64,
    pr_ge_eps: f64,
    symmetry_statistic: f64,
    median: f64,
    p05: f64,
    p95: f64,
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CmdResult {
    let state = read_state_json(&a.state)?;
    let signal = read_signal_json(&a.signal)?;
    if signal.n() != state.n() {
        return Err(Error::DimensionMismatch { expected: state.n(), got: signal.n() }.into());
    }
    let plan = ThresholdPlan::with_exponent(state.n(), a.threshold_exponent);
    let dec = decompose(&state.d)?;
    let dec_hat = decompose(&signal.d_hat)?;
    let e_norm = spectral_norm(&(&signal.d_hat - &state.d));
    let diag = recovery_diagnostics_with(&dec, &dec_hat, e_norm, &plan)?;
    let top = |v: &[f64]| v[..v.len().min(5)].to_vec();
    let out = json!({
        "thresholds": plan,
        "diagnostics": diag,
        "margin": recoverable_structure_margin_with(&state, &dec, plan.m)?,
        "top_eigenvalues": top(dec.eigenvalues.as_slice()),
        "top_eigenvalues_signal": top(dec_hat.eigenvalues.as_slice()),
    });
    if let Some(p) = &a.export_decomposition {
        write_json(&dec_hat.to_export(), p)?;
    }
    emit_value(None, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DimensionMismatch { .. } => 2,
        Error::NoRecoverableStructure { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Signal(a) => cmd_signal(a),
        Command::Intervene(a) => cmd_intervene(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
