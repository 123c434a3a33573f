//! Monte Carlo studies.
//!
//! A sweep runs `reps` independent draws at every grid value. Each draw
//! generates a true state, samples a signal, applies a rule and evaluates the
//! intervention against the truth. Draw `(g, r)` reads its randomness from
//! `derive_seed(seed, g, r)`, so results do not depend on the worker count.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{
    adversarial_q0_for_sigma, gen_block_example, gen_hedonic, gen_planted, gen_prop2_part1,
    gen_prop2_part2, hadamard_basis, recoverable_structure_margin_with, BlockExampleConfig,
    PlantedConfig, Prop2P2Config,
};
use crate::market::{equilibrium_response, surplus_from_response, Intervention, MarketState, SurplusReport};
use crate::rng::{derive_seed, stream, Stream};
use crate::rules::{
    complete_info_from_decomposition, first_eigenvector_from_decomposition,
    recovery_diagnostics_with, robust_from_decomposition, ThresholdPlan, DEFAULT_FLOOR,
    M_HAT_EXPONENT,
};
use crate::signal::{make_signal, sample_household_signal, spectral_norm, MatrixNoise, NoiseConfig, QuantityNoise};
use crate::spectral::{decompose, passthrough_spectral, SpectralDecomposition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    BlockExample(BlockExampleConfig),
    /// Equicorrelated market with `q0 = (1/n)(1 + r/2)` for a random unit `r`
    /// orthogonal to the all-ones vector.
    Prop2Part1 { n: usize },
    /// `f = None` means `sqrt(1/n)`.
    Prop2Part2 { m: u32, f: Option<f64> },
    Hedonic { n: usize, k: usize, alpha: f64 },
    Planted(PlantedConfig),
    /// `D = -I` with random non-negative unit `q0`.
    Independent { n: usize },
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::BlockExample(BlockExampleConfig::default())
    }
}

impl GeneratorSpec {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MarketState> {
        match self {
            GeneratorSpec::BlockExample(cfg) => Ok(gen_block_example(cfg, rng)?.state),
            GeneratorSpec::Prop2Part1 { n } => {
                let p = gen_prop2_part1(*n)?;
                let g = DVector::<f64>::from_fn(*n, |_, _| rng.sample(StandardNormal));
                let r = g.add_scalar(-g.mean());
                p.state(&r.normalize())
            }
            GeneratorSpec::Prop2Part2 { m, f } => {
                let cfg = match f {
                    Some(f) => Prop2P2Config { m: *m, f: *f },
                    None => Prop2P2Config::with_default_f(*m),
                };
                gen_prop2_part2(&cfg, rng)
            }
            GeneratorSpec::Hedonic { n, k, alpha } => Ok(gen_hedonic(*n, *k, *alpha, rng)?.state),
            GeneratorSpec::Planted(cfg) => gen_planted(cfg, rng),
            GeneratorSpec::Independent { n } => {
                let q = DVector::<f64>::from_fn(*n, |_, _| rng.random::<f64>());
                MarketState::new(-nalgebra::DMatrix::identity(*n, *n), q.normalize())
            }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            GeneratorSpec::BlockExample(c) => c.n,
            GeneratorSpec::Prop2Part1 { n }
            | GeneratorSpec::Hedonic { n, .. }
            | GeneratorSpec::Independent { n } => *n,
            GeneratorSpec::Prop2Part2 { m, .. } => 1 << m,
            GeneratorSpec::Planted(c) => c.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum RuleSpec {
    Robust {
        #[serde(default = "one")]
        target_expenditure: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    FirstEigenvector {
        #[serde(default = "one")]
        target_expenditure: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// Uses the true state; the signal is ignored.
    CompleteInfo { target_c_dot: f64, target_s_dot: f64 },
}

fn one() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

impl Default for RuleSpec {
    fn default() -> Self {
        RuleSpec::FirstEigenvector { target_expenditure: 1.0, floor: DEFAULT_FLOOR }
    }
}

impl RuleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RuleSpec::Robust { .. } => "robust",
            RuleSpec::FirstEigenvector { .. } => "first_eigenvector",
            RuleSpec::CompleteInfo { .. } => "complete_info",
        }
    }

    /// Same rule family under a new name, keeping the target expenditure.
    pub fn renamed(&self, name: &str) -> Result<RuleSpec> {
        let target = match *self {
            RuleSpec::Robust { target_expenditure, .. }
            | RuleSpec::FirstEigenvector { target_expenditure, .. } => target_expenditure,
            RuleSpec::CompleteInfo { target_s_dot, .. } => target_s_dot,
        };
        match name {
            "robust" => Ok(RuleSpec::Robust { target_expenditure: target, floor: DEFAULT_FLOOR }),
            "first_eigenvector" => Ok(RuleSpec::FirstEigenvector {
                target_expenditure: target,
                floor: DEFAULT_FLOOR,
            }),
            "complete_info" => Ok(RuleSpec::CompleteInfo { target_c_dot: 0.0, target_s_dot: target }),
            other => Err(Error::InvalidConfig(format!("unknown rule '{other}'"))),
        }
    }

    pub fn with_target(self, target: f64) -> RuleSpec {
        match self {
            RuleSpec::Robust { floor, .. } => RuleSpec::Robust { target_expenditure: target, floor },
            RuleSpec::FirstEigenvector { floor, .. } => {
                RuleSpec::FirstEigenvector { target_expenditure: target, floor }
            }
            RuleSpec::CompleteInfo { target_c_dot, .. } => {
                RuleSpec::CompleteInfo { target_c_dot, target_s_dot: target }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CDot,
    PDotSurplus,
    WDot,
    SDot,
    /// `sigma . q0_hat`, the expenditure the authority expects.
    PredictedExpenditure,
    Overlap,
    Misalignment,
    DkBound,
    Margin,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::CDot,
        Metric::PDotSurplus,
        Metric::WDot,
        Metric::SDot,
        Metric::PredictedExpenditure,
        Metric::Overlap,
        Metric::Misalignment,
        Metric::DkBound,
        Metric::Margin,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::CDot => "c_dot",
            Metric::PDotSurplus => "p_dot_surplus",
            Metric::WDot => "w_dot",
            Metric::SDot => "s_dot",
            Metric::PredictedExpenditure => "predicted_expenditure",
            Metric::Overlap => "overlap",
            Metric::Misalignment => "misalignment",
            Metric::DkBound => "dk_bound",
            Metric::Margin => "margin",
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric '{s}'")))
    }

    fn needs_true_decomposition(&self) -> bool {
        matches!(self, Metric::Overlap | Metric::Misalignment | Metric::DkBound | Metric::Margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridParam {
    /// Block-example structure weight.
    Gamma,
    /// Market size (`m = log2 n` for the Hadamard family).
    N,
    /// Hedonic characteristic weight.
    Alpha,
    /// Half-width of uniform off-diagonal noise.
    HalfWidth,
    TargetExpenditure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub generator: GeneratorSpec,
    pub noise: NoiseSpec,
    pub rule: RuleSpec,
    pub grid_param: GridParam,
    pub grid_values: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub metrics: Vec<Metric>,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// `M_hat = n^threshold_exponent`; the diagnostic cutoffs shift with it.
    pub threshold_exponent: f64,
    pub keep_records: bool,
}

/// Noise schemes without a seed; each draw supplies its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    #[serde(default)]
    pub matrix: MatrixNoise,
    #[serde(default)]
    pub quantity: QuantityNoise,
}

impl NoiseSpec {
    pub fn with_seed(&self, seed: u64) -> NoiseConfig {
        NoiseConfig { matrix: self.matrix, quantity: self.quantity, seed }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        fig3_config(300, 1)
    }
}

/// Block example over `gamma = 0.1, ..., 0.9`, uniform `[-1, 1]` matrix noise,
/// centred lognormal quantity noise, first-eigenvector rule with expenditure 1.
pub fn fig3_config(reps: usize, seed: u64) -> SweepConfig {
    SweepConfig {
        generator: GeneratorSpec::default(),
        noise: NoiseSpec {
            matrix: MatrixNoise::UniformOffdiag { half_width: 1.0 },
            quantity: QuantityNoise::CENTERED_LOGNORMAL,
        },
        rule: RuleSpec::default(),
        grid_param: GridParam::Gamma,
        grid_values: (1..=9).map(|i| i as f64 / 10.0).collect(),
        reps,
        seed,
        metrics: vec![Metric::CDot, Metric::PDotSurplus, Metric::WDot, Metric::SDot],
        jobs: 0,
        threshold_exponent: M_HAT_EXPONENT,
        keep_records: false,
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.reps == 0 {
            return fail("reps must be at least 1");
        }
        if self.grid_values.is_empty() {
            return fail("grid must be nonempty");
        }
        if self.metrics.is_empty() {
            return fail("at least one metric is required");
        }
        if self.grid_values.iter().any(|v| !v.is_finite()) {
            return fail("grid values must be finite");
        }
        if !(self.threshold_exponent > 0.0) || !self.threshold_exponent.is_finite() {
            return fail("threshold exponent must be positive");
        }
        self.noise.with_seed(0).validate()?;
        for &v in &self.grid_values {
            self.point(v)?;
        }
        Ok(())
    }

    /// Metrics deduplicated in canonical order.
    pub fn canonical_metrics(&self) -> Vec<Metric> {
        let mut m = self.metrics.clone();
        m.sort();
        m.dedup();
        m
    }

    /// Generator, noise and rule at one grid value.
    pub fn point(&self, value: f64) -> Result<(GeneratorSpec, NoiseSpec, RuleSpec)> {
        let mut generator = self.generator.clone();
        let mut noise = self.noise;
        let mut rule = self.rule;
        let mismatch = || {
            Err(Error::InvalidConfig(format!(
                "grid parameter {:?} does not apply to this generator/noise",
                self.grid_param
            )))
        };
        let as_size = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidConfig(format!("size {v} is not a positive integer")))
            }
        };
        match self.grid_param {
            GridParam::Gamma => match &mut generator {
                GeneratorSpec::BlockExample(c) => c.gamma = value,
                _ => return mismatch(),
            },
            GridParam::Alpha => match &mut generator {
                GeneratorSpec::Hedonic { alpha, .. } => *alpha = value,
                _ => return mismatch(),
            },
            GridParam::N => {
                let n = as_size(value)?;
                match &mut generator {
                    GeneratorSpec::BlockExample(c) => c.n = n,
                    GeneratorSpec::Prop2Part1 { n: x }
                    | GeneratorSpec::Hedonic { n: x, .. }
                    | GeneratorSpec::Independent { n: x } => *x = n,
                    GeneratorSpec::Planted(c) => c.n = n,
                    GeneratorSpec::Prop2Part2 { m, .. } => {
                        if !n.is_power_of_two() {
                            return Err(Error::InvalidConfig(format!("n = {n} is not a power of two")));
                        }
                        *m = n.trailing_zeros();
                    }
                }
            }
            GridParam::HalfWidth => match &mut noise.matrix {
                MatrixNoise::UniformOffdiag { half_width } => *half_width = value,
                _ => return mismatch(),
            },
            GridParam::TargetExpenditure => rule = rule.with_target(value),
        }
        Ok((generator, noise, rule))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub grid_index: usize,
    pub rep: usize,
    /// Values aligned with [`SweepConfig::canonical_metrics`]. For rule
    /// failures the surplus metrics are those of the zero intervention.
    pub values: Vec<f64>,
    /// Error tag when the draw did not produce an intervention.
    pub failure: Option<String>,
    /// `|0.5 P_dot + C_dot - S_dot|` of the evaluated intervention.
    pub identity_residual: f64,
}

fn rule_intervention(
    rule: &RuleSpec,
    state: &MarketState,
    dec_true: Option<&SpectralDecomposition>,
    dec_hat: Option<&SpectralDecomposition>,
    q0_hat: &DVector<f64>,
    plan: &ThresholdPlan,
) -> Result<Intervention> {
    match *rule {
        RuleSpec::Robust { target_expenditure, floor } => {
            robust_from_decomposition(dec_hat.expect("decomposed"), q0_hat, plan.m_hat, floor, target_expenditure)
        }
        RuleSpec::FirstEigenvector { target_expenditure, floor } => {
            first_eigenvector_from_decomposition(dec_hat.expect("decomposed"), q0_hat, target_expenditure, floor)
                .map(|o| o.sigma)
        }
        RuleSpec::CompleteInfo { target_c_dot, target_s_dot } => complete_info_from_decomposition(
            state,
            dec_true.expect("decomposed"),
            target_c_dot,
            target_s_dot,
        ),
    }
}

/// One full draw at grid index `grid_index`.
///
/// Signal sampling errors and rule errors are recorded, never returned. Only
/// configuration errors escape.
pub fn run_rep(grid_index: usize, rep: usize, cfg: &SweepConfig) -> Result<RepRecord> {
    let value = *cfg
        .grid_values
        .get(grid_index)
        .ok_or_else(|| Error::InvalidConfig(format!("grid index {grid_index} out of range")))?;
    let (generator, noise, rule) = cfg.point(value)?;
    let metrics = cfg.canonical_metrics();
    let seed = derive_seed(cfg.seed, grid_index as u64, rep as u64);

    let failed = |tag: &str| RepRecord {
        grid_index,
        rep,
        values: vec![f64::NAN; metrics.len()],
        failure: Some(tag.to_string()),
        identity_residual: 0.0,
    };

    let state = match generator.generate(&mut stream(seed, Stream::Generator)) {
        Ok(s) => s,
        Err(Error::InvalidConfig(m)) => return Err(Error::InvalidConfig(m)),
        Err(e) => return Ok(failed(e.kind())),
    };
    let n = state.n();
    let plan = ThresholdPlan::with_exponent(n, cfg.threshold_exponent);
    let signal = match make_signal(&state, &noise.with_seed(seed)) {
        Ok(s) => s,
        Err(e) => return Ok(failed(e.kind())),
    };

    let need_true = matches!(rule, RuleSpec::CompleteInfo { .. })
        || metrics.iter().any(Metric::needs_true_decomposition);
    let need_hat = !matches!(rule, RuleSpec::CompleteInfo { .. })
        || metrics.iter().any(|m| matches!(m, Metric::Overlap | Metric::Misalignment | Metric::DkBound));
    let dec_true = if need_true { Some(decompose(&state.d)?) } else { None };
    let dec_hat = if need_hat { Some(decompose(&signal.d_hat)?) } else { None };

    let (sigma, failure) =
        match rule_intervention(&rule, &state, dec_true.as_ref(), dec_hat.as_ref(), &signal.q0_hat, &plan) {
            Ok(s) => (s, None),
            Err(e) => (Intervention::zeros(n), Some(e.kind().to_string())),
        };

    let report = match &dec_true {
        Some(dec) => passthrough_spectral(&state, dec, &sigma)?,
        None => {
            let resp = equilibrium_response(&state, &sigma)?;
            surplus_from_response(&state, &sigma, &resp)
        }
    };

    let diagnostics = match (&dec_true, &dec_hat) {
        (Some(dt), Some(dh)) => {
            let e_norm = if metrics.iter().any(|m| matches!(m, Metric::Misalignment | Metric::DkBound)) {
                spectral_norm(&(&signal.d_hat - &state.d))
            } else {
                f64::NAN
            };
            Some(recovery_diagnostics_with(dt, dh, e_norm, &plan)?)
        }
        _ => None,
    };

    let mut values = Vec::with_capacity(metrics.len());
    for m in &metrics {
        let v = match m {
            Metric::CDot => report.c_dot,
            Metric::PDotSurplus => report.p_dot_surplus,
            Metric::WDot => report.w_dot,
            Metric::SDot => report.s_dot,
            Metric::PredictedExpenditure => sigma.expenditure(&signal.q0_hat),
            Metric::Overlap => diagnostics.map_or(f64::NAN, |d| d.top_vector_overlap),
            Metric::Misalignment => diagnostics.map_or(f64::NAN, |d| d.subspace_misalignment),
            Metric::DkBound => diagnostics.map_or(f64::NAN, |d| d.dk_bound),
            Metric::Margin => recoverable_structure_margin_with(
                &state,
                dec_true.as_ref().expect("decomposed"),
                plan.m,
            )?,
        };
        values.push(v);
    }
    Ok(RepRecord {
        grid_index,
        rep,
        values,
        failure,
        identity_residual: report.identity_residual(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
    pub mean: f64,
    pub fraction_negative: f64,
}

/// Percentile `p` in `[0, 1]` of sorted data: linear interpolation at
/// position `h = (N - 1) p` between order statistics `floor(h)` and
/// `floor(h) + 1`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(samples: &[f64]) -> Result<Summary> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(Summary {
        median: percentile_sorted(&sorted, 0.5),
        p05: percentile_sorted(&sorted, 0.05),
        p95: percentile_sorted(&sorted, 0.95),
        mean: sorted.iter().sum::<f64>() / n,
        fraction_negative: sorted.iter().filter(|&&x| x < 0.0).count() as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid_value: f64,
    pub metric: Metric,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
    pub mean: f64,
    pub fraction_negative: f64,
    /// Draws summarized (successful and with a defined value).
    pub reps: usize,
    /// Draws where the rule or the signal failed.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid_param: GridParam,
    pub rows: Vec<SummaryRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub records: Option<Vec<RepRecord>>,
}

impl SweepResult {
    pub fn row(&self, grid_value: f64, metric: Metric) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.grid_value == grid_value && r.metric == metric)
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.grid_values.len())
        .flat_map(|g| (0..cfg.reps).map(move |r| (g, r)))
        .collect();
    let records: Vec<RepRecord> = with_pool(cfg.jobs, || {
        tasks
            .par_iter()
            .map(|&(g, r)| run_rep(g, r, cfg))
            .collect::<Result<Vec<_>>>()
    })??;

    let metrics = cfg.canonical_metrics();
    let mut rows = Vec::with_capacity(cfg.grid_values.len() * metrics.len());
    for (g, &value) in cfg.grid_values.iter().enumerate() {
        let at_g = &records[g * cfg.reps..(g + 1) * cfg.reps];
        let failures = at_g.iter().filter(|r| r.failure.is_some()).count();
        for (k, &metric) in metrics.iter().enumerate() {
            let samples: Vec<f64> = at_g
                .iter()
                .filter(|r| r.failure.is_none())
                .map(|r| r.values[k])
                .filter(|v| !v.is_nan())
                .collect();
            let s = summarize(&samples).unwrap_or(Summary {
                median: f64::NAN,
                p05: f64::NAN,
                p95: f64::NAN,
                mean: f64::NAN,
                fraction_negative: f64::NAN,
            });
            rows.push(SummaryRow {
                grid_value: value,
                metric,
                median: s.median,
                p05: s.p05,
                p95: s.p95,
                mean: s.mean,
                fraction_negative: s.fraction_negative,
                reps: samples.len(),
                failures,
            });
        }
    }
    Ok(SweepResult {
        grid_param: cfg.grid_param,
        rows,
        records: cfg.keep_records.then_some(records),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}'"))),
        }
    }
}

/// Serializes rows with a header line.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn emit_results(result: &SweepResult, path: &Path, format: OutputFormat) -> Result<()> {
    let bytes = match format {
        OutputFormat::Csv => rows_to_csv(&result.rows)?,
        OutputFormat::Json => {
            let mut b = serde_json::to_vec_pretty(result)?;
            b.push(b'\n');
            b
        }
    };
    crate::io::write_atomic(path, &bytes)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop2P1Row {
    pub n: usize,
    pub sigma: String,
    pub w_dot: f64,
    pub sigma_parallel_to_ones: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop2P1Demo {
    pub rows: Vec<Prop2P1Row>,
    /// Complete-information rule on a favourable status quo, targets
    /// `C_dot = 0`, `S_dot = 1`.
    pub benchmark: SurplusReport,
}

/// Pairs the all-ones direction, `e1` and `num_sigma` random directions with
/// their adversarial status quo on the equicorrelated market.
pub fn prop2_part1_demo<R: Rng + ?Sized>(n: usize, num_sigma: usize, rng: &mut R) -> Result<Prop2P1Demo> {
    let p = gen_prop2_part1(n)?;
    let dec = decompose(&p.d_star)?;
    let mut sigmas = vec![
        ("ones".to_string(), DVector::from_element(n, 1.0)),
        ("e1".to_string(), DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })),
    ];
    for k in 0..num_sigma {
        sigmas.push((
            format!("random_{k}"),
            DVector::from_fn(n, |_, _| rng.sample(StandardNormal)),
        ));
    }
    let mut rows = Vec::with_capacity(sigmas.len());
    for (name, s) in sigmas {
        let sigma = Intervention::new(s)?;
        let pair = adversarial_q0_for_sigma(&p.d_star, &sigma)?;
        let state = MarketState::new(p.d_star.clone(), pair.q0)?;
        rows.push(Prop2P1Row {
            n,
            sigma: name,
            w_dot: passthrough_spectral(&state, &dec, &sigma)?.w_dot,
            sigma_parallel_to_ones: pair.sigma_parallel_to_ones,
        });
    }
    let g = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let state = p.state(&g.add_scalar(-g.mean()).normalize())?;
    let sigma = complete_info_from_decomposition(&state, &dec, 0.0, 1.0)?;
    let benchmark = passthrough_spectral(&state, &dec, &sigma)?;
    Ok(Prop2P1Demo { rows, benchmark })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop2P2Demo {
    pub n: usize,
    pub reps: usize,
    pub epsilon: f64,
    pub pr_le_minus_eps: f64,
    pub pr_ge_eps: f64,
    /// `|Pr(X <= -eps) - Pr(X >= eps)|` for `X` the consumer-surplus
    /// contribution of the weak modes.
    pub symmetry_statistic: f64,
    pub summary: Summary,
}

/// Distribution over sign draws of the weak-mode consumer-surplus term
/// `(2/3) sum_{l>=2} (u_l . q0)(u_l . sigma)` for a fixed `sigma`.
pub fn prop2_part2_demo(
    cfg: &Prop2P2Config,
    reps: usize,
    sigma: &Intervention,
    epsilon: f64,
    seed: u64,
) -> Result<Prop2P2Demo> {
    if reps == 0 {
        return Err(Error::EmptySample);
    }
    let n = cfg.n();
    crate::error::check_dim(n, sigma.len())?;
    let basis = hadamard_basis(cfg.m);
    let s_coords = basis.tr_mul(&sigma.sigma);
    let mut samples = Vec::with_capacity(reps);
    for r in 0..reps {
        let state = gen_prop2_part2(cfg, &mut stream(derive_seed(seed, 0, r as u64), Stream::Signs))?;
        let q_coords = basis.tr_mul(&state.q0);
        let weak: f64 = (1..n).map(|l| q_coords[l] * s_coords[l]).sum();
        samples.push(2.0 / 3.0 * weak);
    }
    let m = reps as f64;
    let pr_le = samples.iter().filter(|&&x| x <= -epsilon).count() as f64 / m;
    let pr_ge = samples.iter().filter(|&&x| x >= epsilon).count() as f64 / m;
    Ok(Prop2P2Demo {
        n,
        reps,
        epsilon,
        pr_le_minus_eps: pr_le,
        pr_ge_eps: pr_ge,
        symmetry_statistic: (pr_le - pr_ge).abs(),
        summary: summarize(&samples)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseScalingRow {
    pub n: usize,
    /// Mean of `||D_hat - D|| / sqrt(n)` over successful seeds.
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub seeds: usize,
    pub failures: usize,
}

/// Household-sampling noise on `D_raw = -2I - 0.5 A A^T / n` (`A` Gaussian),
/// compared with the normalized truth.
pub fn noise_scaling_study(
    n_list: &[usize],
    f_std: f64,
    g_std: f64,
    seeds: usize,
    seed: u64,
) -> Result<Vec<NoiseScalingRow>> {
    if seeds == 0 {
        return Err(Error::EmptySample);
    }
    let mut out = Vec::with_capacity(n_list.len());
    for (g, &n) in n_list.iter().enumerate() {
        let mut ratios = Vec::with_capacity(seeds);
        let mut failures = 0;
        for r in 0..seeds {
            let s = derive_seed(seed, g as u64, r as u64);
            let mut grng = stream(s, Stream::Generator);
            let a = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| grng.sample(StandardNormal));
            let mut d_raw = -(&a * a.transpose()) * (0.5 / n as f64);
            d_raw = (&d_raw + d_raw.transpose()) * 0.5;
            for i in 0..n {
                d_raw[(i, i)] -= 2.0;
            }
            let (d_norm, _) = crate::market::normalize_slutsky(&d_raw)?;
            match sample_household_signal(&d_raw, f_std, g_std, &mut stream(s, Stream::MatrixNoise)) {
                Ok(d_hat) => ratios.push(spectral_norm(&(d_hat - &d_norm)) / (n as f64).sqrt()),
                Err(Error::DiagonalSignFlip { .. }) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        let mean_ratio = if ratios.is_empty() {
            f64::NAN
        } else {
            ratios.iter().sum::<f64>() / ratios.len() as f64
        };
        out.push(NoiseScalingRow {
            n,
            mean_ratio,
            max_ratio: ratios.iter().copied().fold(f64::NAN, f64::max),
            seeds: ratios.len(),
            failures,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendRow {
    pub n: usize,
    pub median_abs_s_minus_1: f64,
    pub median_abs_w_minus_s: f64,
    pub median_abs_c: f64,
    pub median_c: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Sweep configuration of the large-`n` study at one size: planted family,
/// uniform `[-1, 1]` matrix noise, additive quantity noise with standard
/// deviation `0.5 / sqrt(n)`, robust rule with expenditure 1.
pub fn trend_config(n: usize, reps: usize, seed: u64) -> SweepConfig {
    SweepConfig {
        generator: GeneratorSpec::Planted(PlantedConfig::new(n)),
        noise: NoiseSpec {
            matrix: MatrixNoise::UniformOffdiag { half_width: 1.0 },
            quantity: QuantityNoise::AdditiveGaussian { std: 0.5 / (n as f64).sqrt() },
        },
        rule: RuleSpec::Robust { target_expenditure: 1.0, floor: DEFAULT_FLOOR },
        grid_param: GridParam::N,
        grid_values: vec![n as f64],
        reps,
        seed,
        metrics: vec![Metric::CDot, Metric::WDot, Metric::SDot],
        jobs: 0,
        threshold_exponent: M_HAT_EXPONENT,
        keep_records: true,
    }
}

pub fn large_n_trend_study(n_list: &[usize], reps: usize, seed: u64, jobs: usize) -> Result<Vec<TrendRow>> {
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut cfg = trend_config(n, reps, seed);
        cfg.jobs = jobs;
        let res = run_sweep(&cfg)?;
        let records = res.records.expect("records kept");
        // Canonical metric order: c_dot, w_dot, s_dot.
        let ok: Vec<&RepRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
        let col = |f: &dyn Fn(&[f64]) -> f64| -> Result<f64> {
            let v: Vec<f64> = ok.iter().map(|r| f(&r.values)).collect();
            Ok(summarize(&v)?.median)
        };
        out.push(TrendRow {
            n,
            median_abs_s_minus_1: col(&|v| (v[2] - 1.0).abs())?,
            median_abs_w_minus_s: col(&|v| (v[1] - v[2]).abs())?,
            median_abs_c: col(&|v| v[0].abs())?,
            median_c: col(&|v| v[0])?,
            reps: ok.len(),
            failures: records.len() - ok.len(),
        });
    }
    Ok(out)
}
