//! TOML experiment files.
//!
//! ```toml
//! [generator]
//! name = "block_example"     # block_example | prop2_part1 | prop2_part2 | hedonic | planted | independent
//! n = 300
//!
//! [noise]
//! matrix = { scheme = "uniform_offdiag", half_width = 1.0 }
//! quantity = { scheme = "multiplicative_lognormal", log_mean = 0.0, log_var = 0.1 }
//!
//! [rule]
//! name = "first_eigenvector"  # robust | first_eigenvector | complete_info
//! target_expenditure = 1.0
//!
//! [sweep]
//! param = "gamma"             # gamma | n | alpha | half_width | target_expenditure
//! values = [0.1, 0.3, 0.5]
//! reps = 300
//! seed = 1
//! jobs = 0
//! threshold_exponent = 0.6667
//! metrics = ["c_dot", "p_dot_surplus", "w_dot", "s_dot"]
//!
//! [output]
//! path = "results.csv"
//! format = "csv"
//! ```
//!
//! Every table and key is optional; missing values fall back to
//! [`SweepConfig::default`], the block-example gamma sweep. Command-line overrides are
//! applied on top with [`Overrides::apply`].

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::{GeneratorSpec, GridParam, Metric, NoiseSpec, OutputFormat, RuleSpec, SweepConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTable {
    pub param: Option<GridParam>,
    pub values: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub threshold_exponent: Option<f64>,
    pub metrics: Option<Vec<Metric>>,
    pub keep_records: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputTable {
    pub path: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub generator: Option<GeneratorSpec>,
    pub noise: Option<NoiseSpec>,
    pub rule: Option<RuleSpec>,
    #[serde(default)]
    pub sweep: SweepTable,
    #[serde(default)]
    pub output: OutputTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub sweep: SweepConfig,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Layers this file over `base`.
    pub fn resolve(self, base: SweepConfig) -> Experiment {
        let mut s = base;
        if let Some(g) = self.generator {
            s.generator = g;
        }
        if let Some(n) = self.noise {
            s.noise = n;
        }
        if let Some(r) = self.rule {
            s.rule = r;
        }
        let t = self.sweep;
        if let Some(p) = t.param {
            s.grid_param = p;
        }
        if let Some(v) = t.values {
            s.grid_values = v;
        }
        if let Some(v) = t.reps {
            s.reps = v;
        }
        if let Some(v) = t.seed {
            s.seed = v;
        }
        if let Some(v) = t.jobs {
            s.jobs = v;
        }
        if let Some(v) = t.threshold_exponent {
            s.threshold_exponent = v;
        }
        if let Some(v) = t.metrics {
            s.metrics = v;
        }
        if let Some(v) = t.keep_records {
            s.keep_records = v;
        }
        Experiment {
            sweep: s,
            output_path: self.output.path,
            format: self.output.format.unwrap_or(OutputFormat::Csv),
        }
    }
}

/// Command-line values; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub rule: Option<String>,
    pub threshold_exponent: Option<f64>,
    pub target_expenditure: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, exp: &mut Experiment) -> Result<()> {
        let s = &mut exp.sweep;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.reps {
            s.reps = v;
        }
        if let Some(v) = &self.grid {
            s.grid_values = v.clone();
        }
        if let Some(name) = &self.rule {
            s.rule = s.rule.renamed(name)?;
        }
        if let Some(t) = self.target_expenditure {
            s.rule = s.rule.with_target(t);
        }
        if let Some(v) = self.threshold_exponent {
            s.threshold_exponent = v;
        }
        if let Some(v) = self.jobs {
            s.jobs = v;
        }
        if let Some(p) = &self.out {
            exp.output_path = Some(p.clone());
        }
        if let Some(f) = self.format {
            exp.format = f;
        }
        Ok(())
    }
}

/// Comma-separated reals, e.g. `0.1,0.5,0.9`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("grid value '{t}': {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::BlockExampleConfig;
    use crate::signal::{MatrixNoise, QuantityNoise};

    const FULL: &str = r#"
[generator]
name = "block_example"
n = 60
gamma = 0.5

[noise]
matrix = { scheme = "uniform_offdiag", half_width = 0.5 }
quantity = { scheme = "additive_gaussian", std = 0.01 }

[rule]
name = "robust"
target_expenditure = 2.0

[sweep]
param = "gamma"
values = [0.2, 0.4]
reps = 7
seed = 99
metrics = ["s_dot", "overlap"]

[output]
path = "x.json"
format = "json"
"#;

    #[test]
    fn full_file() {
        let exp = ExperimentFile::parse(FULL).unwrap().resolve(SweepConfig::default());
        let s = &exp.sweep;
        match &s.generator {
            GeneratorSpec::BlockExample(c) => {
                assert_eq!((c.n, c.gamma), (60, 0.5));
                assert_eq!(c.c, BlockExampleConfig::default().c);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.noise.matrix, MatrixNoise::UniformOffdiag { half_width: 0.5 });
        assert_eq!(s.noise.quantity, QuantityNoise::AdditiveGaussian { std: 0.01 });
        assert_eq!(s.rule, RuleSpec::Robust { target_expenditure: 2.0, floor: 1e-6 });
        assert_eq!((s.reps, s.seed), (7, 99));
        assert_eq!(s.metrics, vec![Metric::SDot, Metric::Overlap]);
        assert_eq!(exp.format, OutputFormat::Json);
        s.validate().unwrap();
    }

    #[test]
    fn empty_file_is_defaults() {
        let exp = ExperimentFile::parse("").unwrap().resolve(SweepConfig::default());
        assert_eq!(exp.sweep, SweepConfig::default());
    }

    #[test]
    fn flags_beat_file() {
        let mut exp = ExperimentFile::parse(FULL).unwrap().resolve(SweepConfig::default());
        let o = Overrides {
            seed: Some(5),
            grid: Some(parse_grid("0.1, 0.9").unwrap()),
            rule: Some("first_eigenvector".into()),
            format: Some(OutputFormat::Csv),
            ..Default::default()
        };
        o.apply(&mut exp).unwrap();
        assert_eq!(exp.sweep.seed, 5);
        assert_eq!(exp.sweep.grid_values, vec![0.1, 0.9]);
        assert_eq!(exp.sweep.rule, RuleSpec::FirstEigenvector { target_expenditure: 2.0, floor: 1e-6 });
        assert_eq!(exp.sweep.reps, 7);
        assert_eq!(exp.format, OutputFormat::Csv);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentFile::parse("[sweep]\nrepz = 3\n").is_err());
        assert!(ExperimentFile::parse("[rule]\nname = \"magic\"\n").is_err());
        assert!(parse_grid("0.1,x").is_err());
    }
}
