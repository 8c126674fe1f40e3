//! Settings from an optional TOML file, overridden by command-line flags.
//!
//! Every flag has a config key of the same name with `-` replaced by `_`,
//! e.g. `--appear-cost 5` and `appear_cost = 5.0`. `--method` maps to the
//! list key `methods`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use trackuq_core::costs::{CostModel, DEFAULT_APPEAR_COST, DEFAULT_DISAPPEAR_COST};
use trackuq_core::dbmc::Temperature;
use trackuq_core::eval::{default_quantiles, DEFAULT_BINS};
use trackuq_core::model::OracleLimit;
use trackuq_core::perturb::NoiseSpec;

use crate::error::{CliError, Result};
use crate::method::{MethodName, MethodSpec, DEFAULT_K};
use crate::sequence::Sequence;
use crate::{ctc, jsonl, sequence};

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Ctc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    /// Gaussian centroid offsets with variance `gamma`.
    Gaussian,
    /// Mask dilation or erosion by `radius` pixels.
    Mask,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Args {
    /// Detections file (jsonl) or ground-truth directory (ctc).
    pub input: PathBuf,
    /// TOML file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input format; guessed from the input path when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Link cost: l2, activity, overlap or overlap-gated.
    #[arg(long)]
    pub cost: Option<String>,
    /// Precision of the Brownian motion model.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub appear_cost: Option<f64>,
    #[arg(long)]
    pub disappear_cost: Option<f64>,
    /// SM, FP, FP+A or AS, optionally with +TS. Repeat or separate by commas.
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Number of best assignments for AS.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub noise: Option<Noise>,
    /// Per-axis variance of Gaussian centroid noise.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Mask dilation/erosion radius in pixels.
    #[arg(long)]
    pub radius: Option<u32>,
    /// Number of perturbed samples for FP and FP+A.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep every n-th frame.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Number of reliability bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Sparsification levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Vec<f64>,
    /// Temperature for +TS methods.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Add the implicit appearance class to softmax columns.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub parental: Option<bool>,
    /// Sequence on which +TS temperatures are fitted.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Previously fitted temperatures.
    #[arg(long)]
    pub temperature: Option<PathBuf>,
    /// Largest frame size handled by the oracle.
    #[arg(long)]
    pub oracle_limit: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<Format>,
    pub cost: Option<String>,
    pub lambda: Option<f64>,
    pub appear_cost: Option<f64>,
    pub disappear_cost: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub k: Option<usize>,
    pub noise: Option<Noise>,
    pub gamma: Option<f64>,
    pub radius: Option<u32>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub subsample: Option<usize>,
    pub bins: Option<usize>,
    pub quantiles: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub parental: Option<bool>,
    pub calibration: Option<PathBuf>,
    pub temperature: Option<PathBuf>,
    pub oracle_limit: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            CliError::parse(path, line, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub input: PathBuf,
    pub format: Format,
    pub cost: String,
    pub lambda: f64,
    pub appear_cost: f64,
    pub disappear_cost: f64,
    pub methods: Vec<MethodName>,
    pub k: usize,
    pub noise: Noise,
    pub gamma: f64,
    pub radius: u32,
    pub samples: usize,
    pub seed: u64,
    pub subsample: usize,
    pub bins: usize,
    pub quantiles: Vec<f64>,
    pub tau: Option<Temperature>,
    pub parental: bool,
    pub calibration: Option<PathBuf>,
    pub temperature: Option<PathBuf>,
    pub oracle_limit: usize,
    pub out_dir: PathBuf,
}

fn guess_format(path: &Path) -> Format {
    if path.is_dir() {
        Format::Ctc
    } else {
        Format::Jsonl
    }
}

impl Settings {
    /// Flags win over the config file, which wins over the defaults.
    pub fn resolve(args: &Args) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let cost = args.cost.clone().or(file.cost).unwrap_or_else(|| "l2".into());
        let method_names = if !args.methods.is_empty() {
            args.methods.clone()
        } else {
            file.methods.unwrap_or_else(|| vec!["SM".into()])
        };
        let methods = method_names
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<MethodName>>>()?;
        let default_noise = if cost.starts_with("overlap") {
            Noise::Mask
        } else {
            Noise::Gaussian
        };
        let quantiles = if !args.quantiles.is_empty() {
            args.quantiles.clone()
        } else {
            file.quantiles.unwrap_or_else(default_quantiles)
        };
        let tau = args.tau.or(file.tau).map(Temperature::new).transpose()?;
        let settings = Settings {
            format: args.format.or(file.format).unwrap_or_else(|| guess_format(&args.input)),
            input: args.input.clone(),
            lambda: args.lambda.or(file.lambda).unwrap_or(1.0),
            appear_cost: args.appear_cost.or(file.appear_cost).unwrap_or(DEFAULT_APPEAR_COST),
            disappear_cost: args.disappear_cost.or(file.disappear_cost).unwrap_or(DEFAULT_DISAPPEAR_COST),
            cost,
            methods,
            k: args.k.or(file.k).unwrap_or(DEFAULT_K),
            noise: args.noise.or(file.noise).unwrap_or(default_noise),
            gamma: args.gamma.or(file.gamma).unwrap_or(DEFAULT_GAMMA),
            radius: args.radius.or(file.radius).unwrap_or(1),
            samples: args.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES),
            seed: args.seed.or(file.seed).unwrap_or(0),
            subsample: args.subsample.or(file.subsample).unwrap_or(1),
            bins: args.bins.or(file.bins).unwrap_or(DEFAULT_BINS),
            quantiles,
            tau,
            parental: args.parental.or(file.parental).unwrap_or(false),
            calibration: args.calibration.clone().or(file.calibration),
            temperature: args.temperature.clone().or(file.temperature),
            oracle_limit: args.oracle_limit.or(file.oracle_limit).unwrap_or(OracleLimit::default().max_mothers),
            out_dir: args.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from("out")),
        };
        settings.cost_model()?;
        if settings.subsample == 0 {
            return Err(CliError::Config("subsample factor must be >= 1".into()));
        }
        Ok(settings)
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        Ok(CostModel::by_name(&self.cost, self.lambda, self.appear_cost, self.disappear_cost)?)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        Ok(match self.noise {
            Noise::Gaussian => NoiseSpec::gaussian(self.gamma, self.seed, self.samples)?,
            Noise::Mask => NoiseSpec::mask(self.radius, self.seed, self.samples)?,
        })
    }

    /// Method specs without temperatures.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        self.methods
            .iter()
            .map(|&name| {
                let mut spec = MethodSpec::new(name);
                spec.k = self.k;
                spec.parental = self.parental;
                if name.kind.needs_noise() {
                    spec.noise = Some(self.noise_spec()?);
                }
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn load_sequence(&self, path: &Path) -> Result<Sequence> {
        let seq = match self.format {
            Format::Jsonl => jsonl::load(path)?,
            Format::Ctc => ctc::load(path)?,
        };
        sequence::subsample(&seq, self.subsample)
    }
}
