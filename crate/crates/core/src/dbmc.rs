//! Daughter-based mother classification: each daughter picks one of the
//! mothers (or `⊥`) as a multi-class prediction.
//!
//! Columns are per-daughter distributions over the mothers followed by the
//! `⊥` class. All exponentials go through log-sum-exp.

use nalgebra::DMatrix;

use crate::bayes::log_sum_exp;
use crate::error::{Error, Result};
use crate::model::{EdgeProbabilityMatrix, ProbabilityKind};

/// Scalar temperature `τ > 0` applied as an exponent to class probabilities.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite() && tau.ln().is_finite()) {
            return Err(Error::Configuration(format!("temperature must be > 0, got {tau}")));
        }
        Ok(Self(tau))
    }

    pub fn tau(self) -> f64 {
        self.0
    }
}

/// One daughter's mother distribution together with its true and predicted
/// mother (`None` = `⊥`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledColumn {
    /// Frame pair the daughter belongs to.
    pub pair: usize,
    pub daughter: usize,
    pub truth: Option<usize>,
    pub prediction: Option<usize>,
    /// `P_{i|j}` for every mother, then `⊥`.
    pub probs: Vec<f64>,
}

impl LabeledColumn {
    fn class_index(&self, mother: Option<usize>) -> usize {
        mother.unwrap_or(self.probs.len() - 1)
    }

    pub fn prob_of(&self, mother: Option<usize>) -> f64 {
        self.probs[self.class_index(mother)]
    }

    /// Probability attached to the predicted mother.
    pub fn confidence(&self) -> f64 {
        self.prob_of(self.prediction)
    }

    pub fn correct(&self) -> bool {
        self.truth == self.prediction
    }

    pub fn entropy(&self) -> f64 {
        column_entropy(&self.probs)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledEdges {
    pub columns: Vec<LabeledColumn>,
}

impl LabeledEdges {
    pub fn new(columns: Vec<LabeledColumn>) -> Result<Self> {
        for (c, col) in columns.iter().enumerate() {
            if col.probs.is_empty() {
                return Err(Error::Structural(format!("column {c} has no classes")));
            }
            let s: f64 = col.probs.iter().sum();
            if (s - 1.0).abs() > 1e-9 || col.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Contract(format!("column {c} is not a distribution (sum {s})")));
            }
            for m in [col.truth, col.prediction].into_iter().flatten() {
                if m + 1 >= col.probs.len() {
                    return Err(Error::Structural(format!("column {c}: mother {m} out of range")));
                }
            }
        }
        Ok(Self { columns })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn extend(&mut self, other: LabeledEdges) {
        self.columns.extend(other.columns);
    }

    pub fn accuracy(&self) -> Option<f64> {
        if self.columns.is_empty() {
            return None;
        }
        Some(self.columns.iter().filter(|c| c.correct()).count() as f64 / self.columns.len() as f64)
    }

    /// Same labels and predictions with every column tempered by `t`.
    pub fn tempered(&self, t: Temperature) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(c, col)| {
                Ok(LabeledColumn {
                    probs: temper_column(&col.probs, t.tau()).ok_or(Error::DegenerateColumn(c))?,
                    ..col.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { columns })
    }

    /// Mean cross-entropy of the true class under temperature `t`, over the
    /// columns where the true class has non-zero base probability.
    pub fn cross_entropy(&self, t: Temperature) -> Option<f64> {
        let prepared = CrossEntropy::new(self);
        prepared.map(|p| p.mean(t.tau().ln()))
    }
}

/// Shannon entropy in nats, `0·ln 0 = 0`.
pub fn column_entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

fn check_costs(costs: &DMatrix<f64>) -> Result<()> {
    if let Some(bad) = costs.iter().find(|c| c.is_nan() || **c == f64::NEG_INFINITY) {
        return Err(Error::Contract(format!("cost {bad} cannot enter a softmax")));
    }
    Ok(())
}

/// Per-daughter softmax over `-w`. With `parental`, an implicit `⊥` class of
/// logit 0 joins every column; otherwise the `⊥` row is zero.
///
/// `costs` is `mothers x daughters`; `+∞` entries get probability zero.
pub fn softmax_columns(costs: &DMatrix<f64>, parental: bool) -> Result<EdgeProbabilityMatrix> {
    check_costs(costs)?;
    let (m, n) = costs.shape();
    let mut values = DMatrix::zeros(m + 1, n);
    let mut logits = Vec::with_capacity(m + 1);
    for j in 0..n {
        logits.clear();
        logits.extend(costs.column(j).iter().map(|w| -w));
        if parental {
            logits.push(0.0);
        }
        let lse = log_sum_exp(&logits);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateColumn(j));
        }
        for i in 0..m {
            values[(i, j)] = (logits[i] - lse).exp();
        }
        if parental {
            values[(m, j)] = (-lse).exp();
        }
    }
    EdgeProbabilityMatrix::new(values, None, ProbabilityKind::ColumnNormalized)
}

/// `P_{i|j} = P_ij / Σ_k P_kj` with the `⊥` row taking part.
pub fn column_normalize(p: &EdgeProbabilityMatrix) -> Result<EdgeProbabilityMatrix> {
    if p.kind() != ProbabilityKind::Joint {
        return Err(Error::Contract("column_normalize expects a joint matrix".into()));
    }
    let mut values = p.values().clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let s: f64 = col.iter().sum();
        if s <= 0.0 {
            return Err(Error::DegenerateColumn(j));
        }
        col /= s;
    }
    EdgeProbabilityMatrix::new(values, None, ProbabilityKind::ColumnNormalized)
}

/// `p^τ` renormalized, computed in log space. `None` if the column is all
/// zero.
fn temper_column(probs: &[f64], tau: f64) -> Option<Vec<f64>> {
    let logs: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { tau * p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let lse = log_sum_exp(&logs);
    if lse == f64::NEG_INFINITY {
        return None;
    }
    Some(logs.iter().map(|l| (l - lse).exp()).collect())
}

/// Raises every entry (including `⊥`) to the power `τ` and renormalizes each
/// column. Zeros stay zero.
pub fn apply_temperature(p: &EdgeProbabilityMatrix, t: Temperature) -> Result<EdgeProbabilityMatrix> {
    let mut values = p.values().clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let probs: Vec<f64> = col.iter().copied().collect();
        let tempered = temper_column(&probs, t.tau()).ok_or(Error::DegenerateColumn(j))?;
        for (dst, src) in col.iter_mut().zip(tempered) {
            *dst = src;
        }
    }
    EdgeProbabilityMatrix::new(values, None, ProbabilityKind::ColumnNormalized)
}

/// Per-daughter entropy in nats over mothers and `⊥`.
pub fn daughter_entropy(p: &EdgeProbabilityMatrix) -> Vec<f64> {
    p.values()
        .column_iter()
        .map(|c| column_entropy(c.as_slice()))
        .collect()
}

/// Search range and tolerance for [`fit_temperature_with`], in `ln τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub log_tau_min: f64,
    pub log_tau_max: f64,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            log_tau_min: -10.0,
            log_tau_max: 10.0,
            tolerance: 1e-6,
        }
    }
}

/// Log-probabilities of every usable column, flattened.
struct CrossEntropy {
    true_log: Vec<f64>,
    offsets: Vec<usize>,
    logs: Vec<f64>,
}

impl CrossEntropy {
    fn new(data: &LabeledEdges) -> Option<Self> {
        let mut true_log = Vec::new();
        let mut offsets = vec![0];
        let mut logs = Vec::new();
        for col in &data.columns {
            let py = col.prob_of(col.truth);
            if py <= 0.0 {
                continue;
            }
            true_log.push(py.ln());
            logs.extend(col.probs.iter().filter(|&&p| p > 0.0).map(|p| p.ln()));
            offsets.push(logs.len());
        }
        if true_log.is_empty() {
            None
        } else {
            Some(Self {
                true_log,
                offsets,
                logs,
            })
        }
    }

    fn mean(&self, log_tau: f64) -> f64 {
        let tau = log_tau.exp();
        let mut scaled = Vec::new();
        let mut total = 0.0;
        for (c, &ly) in self.true_log.iter().enumerate() {
            scaled.clear();
            scaled.extend(self.logs[self.offsets[c]..self.offsets[c + 1]].iter().map(|l| tau * l));
            total += log_sum_exp(&scaled) - tau * ly;
        }
        total / self.true_log.len() as f64
    }
}

/// Temperature minimizing the cross-entropy of the true classes.
pub fn fit_temperature(data: &LabeledEdges) -> Result<Temperature> {
    fit_temperature_with(data, FitOptions::default())
}

/// Golden-section search over `ln τ`. The loss is convex in `τ`, hence
/// unimodal in `ln τ`.
pub fn fit_temperature_with(data: &LabeledEdges, opts: FitOptions) -> Result<Temperature> {
    let objective = CrossEntropy::new(data).ok_or(Error::Unfittable)?;
    let f = |s: f64| objective.mean(s);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (opts.log_tau_min, opts.log_tau_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > opts.tolerance {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = 0.5 * (a + b);
    // the interior minimum may sit on a bound
    for edge in [opts.log_tau_min, opts.log_tau_max] {
        if f(edge) < f(best) {
            best = edge;
        }
    }
    Temperature::new(best.exp())
}
