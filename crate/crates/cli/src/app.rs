//! The command-line verbs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use trackuq_core::bayes::{exact_edge_probabilities_with_limit, exact_posterior, sni_edge_probabilities};
use trackuq_core::costs::joint_log_likelihood;
use trackuq_core::dbmc::Temperature;
use trackuq_core::eval::Criterion;
use trackuq_core::model::{Assignment, OracleLimit};
use trackuq_core::solver::{solve_map, top_k};

use crate::config::{Args, Format, Settings};
use crate::error::{CliError, Result};
use crate::experiment::{analyze, final_probabilities, fit_on, label, map_failures, report, Failure};
use crate::method::{MethodName, MethodSpec};
use crate::report::{
    edges_csv, read_temperatures, reliability_csv, sparsification_csv, tracks_csv, write_file, write_json,
    TemperatureRecord,
};
use crate::sequence::Sequence;

#[derive(Debug, Clone, clap::Parser)]
#[command(name = "trackuq", version, about = "Uncertainty quantification for LAP cell tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Subcommand)]
pub enum Command {
    /// MAP assignment of every frame pair.
    Track(Args),
    /// Edge probabilities of every frame pair for each method.
    Uncertainty(Args),
    /// Fit temperatures on a calibration sequence.
    FitTemp(Args),
    /// Calibration and sparsification against ground truth.
    Evaluate(Args),
    /// Exhaustive check of the solver and estimators on small frames.
    Oracle(Args),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Track(_) => "track",
            Command::Uncertainty(_) => "uncertainty",
            Command::FitTemp(_) => "fit-temp",
            Command::Evaluate(_) => "evaluate",
            Command::Oracle(_) => "oracle",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::Track(a)
            | Command::Uncertainty(a)
            | Command::FitTemp(a)
            | Command::Evaluate(a)
            | Command::Oracle(a) => a,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: String,
    pub edges: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub improvement_edge_probability: Option<f64>,
    pub improvement_daughter_entropy: Option<f64>,
}

/// Written last by every verb. Holds no paths or timestamps of the run
/// itself so identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub input: String,
    pub format: String,
    pub cost_model: String,
    pub lambda: f64,
    pub appear_cost: f64,
    pub disappear_cost: f64,
    pub subsample_factor: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    pub frames: usize,
    pub pairs: usize,
    pub outputs: Vec<String>,
    pub temperatures: Vec<TemperatureRecord>,
    pub results: Vec<MethodResult>,
    pub failures: Vec<Failure>,
    pub complete: bool,
}

struct Run {
    settings: Settings,
    out_dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn new(command: &Command) -> Result<(Self, Sequence)> {
        let settings = Settings::resolve(command.args())?;
        let seq = settings.load_sequence(&settings.input)?;
        let out_dir = settings.out_dir.clone();
        fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        let manifest = Manifest {
            command: command.name().into(),
            input: settings.input.display().to_string(),
            format: match settings.format {
                Format::Jsonl => "jsonl".into(),
                Format::Ctc => "ctc".into(),
            },
            cost_model: settings.cost.clone(),
            lambda: settings.lambda,
            appear_cost: settings.appear_cost,
            disappear_cost: settings.disappear_cost,
            subsample_factor: settings.subsample,
            seed: settings.seed,
            methods: settings.methods.iter().map(ToString::to_string).collect(),
            frames: seq.frames.len(),
            pairs: seq.pairs(),
            outputs: Vec::new(),
            temperatures: Vec::new(),
            results: Vec::new(),
            failures: Vec::new(),
            complete: true,
        };
        Ok((
            Self {
                settings,
                out_dir,
                manifest,
            },
            seq,
        ))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_file(&self.out_dir.join(name), contents)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.out_dir.join(name), value)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn finish(mut self) -> Result<Manifest> {
        self.manifest.complete = self.manifest.failures.is_empty();
        write_json(&self.out_dir.join("manifest.json"), &self.manifest)?;
        Ok(self.manifest)
    }

    fn record(&self, name: MethodName, tau: Temperature) -> TemperatureRecord {
        TemperatureRecord {
            method: name.base().to_string(),
            cost_model: self.settings.cost.clone(),
            subsample_factor: self.settings.subsample,
            tau: tau.tau(),
        }
    }

    /// Temperatures for the `+TS` methods: `--tau`, else a matching entry of
    /// `--temperature`, else fitted on `--calibration`.
    fn resolve_temperatures(&mut self, specs: &mut [MethodSpec]) -> Result<()> {
        let s = self.settings.clone();
        let stored = match &s.temperature {
            Some(p) => read_temperatures(p)?,
            None => Vec::new(),
        };
        let mut calibration: Option<Sequence> = None;
        let mut fitted: BTreeMap<MethodName, Temperature> = BTreeMap::new();
        for spec in specs.iter_mut().filter(|m| m.name.scaled) {
            let base = spec.name.base();
            if let Some(t) = s.tau {
                spec.tau = Some(t);
                continue;
            }
            let found = stored.iter().find(|r| {
                r.method == base.to_string() && r.cost_model == s.cost && r.subsample_factor == s.subsample
            });
            if let Some(r) = found {
                spec.tau = Some(Temperature::new(r.tau)?);
                continue;
            }
            let Some(path) = &s.calibration else {
                return Err(CliError::Config(format!(
                    "{} needs --tau, a matching --temperature entry or a --calibration sequence",
                    spec.name
                )));
            };
            if same_file(path, &s.input) {
                return Err(CliError::Config(
                    "the calibration sequence must differ from the evaluated one".into(),
                ));
            }
            if calibration.is_none() {
                calibration = Some(s.load_sequence(path)?);
            }
            let tau = match fitted.get(&base) {
                Some(&t) => t,
                None => {
                    let cm = s.cost_model()?;
                    let t = fit_on(calibration.as_ref().expect("loaded above"), &cm, spec)?;
                    fitted.insert(base, t);
                    t
                }
            };
            spec.tau = Some(tau);
        }
        if !fitted.is_empty() {
            let records: Vec<TemperatureRecord> = fitted.iter().map(|(&n, &t)| self.record(n, t)).collect();
            self.write_json("temperature.json", &records)?;
            self.manifest.temperatures = records;
        }
        Ok(())
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn track(command: &Command) -> Result<Manifest> {
    let (mut run, seq) = Run::new(command)?;
    let cm = run.settings.cost_model()?;
    let maps: Vec<std::result::Result<Assignment, String>> = (0..seq.pairs())
        .into_par_iter()
        .map(|t| {
            let (src, tgt) = seq.pair(t);
            solve_map(src, tgt, &cm).map(|s| s.assignment).map_err(|e| e.to_string())
        })
        .collect();
    for (t, m) in maps.iter().enumerate() {
        if let Err(e) = m {
            run.manifest.failures.push(Failure {
                pair: t,
                method: None,
                error: e.clone(),
            });
        }
    }
    let maps: Vec<Option<Assignment>> = maps.into_iter().map(|m| m.ok()).collect();
    run.write("tracks.csv", &tracks_csv(&seq, &maps))?;
    run.finish()
}

fn uncertainty(command: &Command, evaluate: bool) -> Result<Manifest> {
    let (mut run, seq) = Run::new(command)?;
    if evaluate && seq.ground_truth.is_none() {
        return Err(CliError::Config(format!("{} has no ground truth to evaluate against", seq.source)));
    }
    let cm = run.settings.cost_model()?;
    let mut specs = run.settings.method_specs()?;
    run.resolve_temperatures(&mut specs)?;
    let outcomes = analyze(&seq, &cm, &specs);
    run.manifest.failures.extend(map_failures(&outcomes));
    for (k, spec) in specs.iter().enumerate() {
        let mut failures = Vec::new();
        let cond = final_probabilities(&outcomes, k, spec, &mut failures);
        let joint: Vec<_> = outcomes
            .iter()
            .map(|o| o.outputs[k].as_ref().ok().and_then(|out| out.joint.clone()))
            .collect();
        run.manifest.failures.extend(failures);
        let name = spec.name.to_string();
        run.write(&format!("edges_{name}.csv"), &edges_csv(&seq, &joint, &cond))?;
        if !evaluate {
            continue;
        }
        let data = label(&seq, &outcomes, &cond)?;
        if data.is_empty() {
            run.manifest.failures.push(Failure {
                pair: 0,
                method: Some(spec.name.to_string()),
                error: "no daughters to evaluate".into(),
            });
            continue;
        }
        let r = report(&spec.name.to_string(), &data, run.settings.bins, &run.settings.quantiles)?;
        run.write(&format!("reliability_{name}.csv"), &reliability_csv(&r))?;
        run.write(&format!("sparsification_{name}.csv"), &sparsification_csv(&r))?;
        run.manifest.results.push(MethodResult {
            method: r.method.clone(),
            edges: r.edges,
            accuracy: r.accuracy,
            ece: r.ece,
            improvement_edge_probability: r.improvement(Criterion::EdgeProbability),
            improvement_daughter_entropy: r.improvement(Criterion::DaughterEntropy),
        });
    }
    run.manifest.failures.sort_by(|a, b| (a.pair, &a.method).cmp(&(b.pair, &b.method)));
    run.finish()
}

fn fit_temp(command: &Command) -> Result<Manifest> {
    let (mut run, seq) = Run::new(command)?;
    if seq.ground_truth.is_none() {
        return Err(CliError::Config(format!("{} has no ground truth to fit on", seq.source)));
    }
    let cm = run.settings.cost_model()?;
    let mut seen = Vec::new();
    let mut records = Vec::new();
    for spec in run.settings.method_specs()? {
        let base = spec.name.base();
        if seen.contains(&base) {
            continue;
        }
        seen.push(base);
        let tau = fit_on(&seq, &cm, &spec)?;
        records.push(run.record(base, tau));
    }
    run.write_json("temperature.json", &records)?;
    run.manifest.temperatures = records;
    run.finish()
}

#[derive(Debug, Clone, Serialize)]
struct OracleRow {
    pair: usize,
    mothers: usize,
    daughters: usize,
    feasible: usize,
    max_abs_diff: f64,
    map_log_score: f64,
    oracle_log_score: f64,
}

fn oracle(command: &Command) -> Result<Manifest> {
    let (mut run, seq) = Run::new(command)?;
    let cm = run.settings.cost_model()?;
    let limit = OracleLimit {
        max_mothers: run.settings.oracle_limit,
        max_daughters: run.settings.oracle_limit,
    };
    let rows: Vec<std::result::Result<Option<OracleRow>, String>> = (0..seq.pairs())
        .into_par_iter()
        .map(|t| {
            let (src, tgt) = seq.pair(t);
            if limit.check(src.len(), tgt.len()).is_err() {
                return Ok(None);
            }
            let check = || -> trackuq_core::Result<OracleRow> {
                let posterior = exact_posterior(src, tgt, &cm, limit)?;
                let scores: Vec<f64> = posterior
                    .iter()
                    .map(|p| joint_log_likelihood(src, tgt, &p.assignment, &cm))
                    .collect::<trackuq_core::Result<_>>()?;
                let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exact = exact_edge_probabilities_with_limit(src, tgt, &cm, limit)?;
                let sni = sni_edge_probabilities(&top_k(src, tgt, &cm, posterior.len())?)?;
                let map = solve_map(src, tgt, &cm)?;
                Ok(OracleRow {
                    pair: t,
                    mothers: src.len(),
                    daughters: tgt.len(),
                    feasible: posterior.len(),
                    max_abs_diff: sni.max_abs_diff(&exact),
                    map_log_score: map.log_score,
                    oracle_log_score: best,
                })
            };
            check().map(Some).map_err(|e| e.to_string())
        })
        .collect();
    let mut csv = String::from("frame_pair,mothers,daughters,feasible,max_abs_diff,map_log_score,oracle_log_score,status\n");
    for (t, row) in rows.iter().enumerate() {
        match row {
            Ok(Some(r)) => {
                let ok = r.max_abs_diff <= 1e-9 && (r.map_log_score - r.oracle_log_score).abs() <= 1e-9;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.pair,
                    r.mothers,
                    r.daughters,
                    r.feasible,
                    r.max_abs_diff,
                    r.map_log_score,
                    r.oracle_log_score,
                    if ok { "ok" } else { "mismatch" }
                ));
                if !ok {
                    run.manifest.failures.push(Failure {
                        pair: t,
                        method: None,
                        error: "oracle mismatch".into(),
                    });
                }
            }
            Ok(None) => {
                let (m, n) = (seq.frames[t].len(), seq.frames[t + 1].len());
                csv.push_str(&format!("{t},{m},{n},,,,,skipped\n"));
            }
            Err(e) => {
                let (m, n) = (seq.frames[t].len(), seq.frames[t + 1].len());
                csv.push_str(&format!("{t},{m},{n},,,,,error\n"));
                run.manifest.failures.push(Failure {
                    pair: t,
                    method: None,
                    error: e.clone(),
                });
            }
        }
    }
    run.write("oracle.csv", &csv)?;
    run.finish()
}

/// Runs one verb. A manifest is returned, and written, even when some
/// frame pairs failed.
pub fn run(cli: &Cli) -> Result<Manifest> {
    match &cli.command {
        c @ Command::Track(_) => track(c),
        c @ Command::Uncertainty(_) => uncertainty(c, false),
        c @ Command::Evaluate(_) => uncertainty(c, true),
        c @ Command::FitTemp(_) => fit_temp(c),
        c @ Command::Oracle(_) => oracle(c),
    }
}
