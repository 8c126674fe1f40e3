//! Posterior edge probabilities.
//!
//! With a uniform prior over feasible assignments, the posterior of an
//! assignment is proportional to `exp(log-likelihood)`. Edge probabilities
//! are the posterior mass of the assignments that contain an edge. Three
//! estimators share one accumulation path:
//!
//! * exact: every feasible assignment (small instances only),
//! * self-normalized importance weighting over a ranked top-K list,
//! * plain frequencies over a list of sampled assignments.

use nalgebra::DMatrix;

use crate::costs::CostModel;
use crate::error::{Error, Result};
use crate::model::{
    enumerate_feasible_with_limit, is_feasible, Assignment, EdgeProbabilityMatrix, Frame, OracleLimit,
    ProbabilityKind,
};
use crate::solver::RankedSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub assignment: Assignment,
    pub weight: f64,
}

/// `log Σ exp(x)`, `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights into probabilities.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::Contract("log-weights must be finite or -inf".into()));
    }
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(Error::Contract("all weights are zero".into()));
    }
    Ok(log_weights.iter().map(|w| (w - lse).exp()).collect())
}

fn check_sizes<'a>(assignments: impl Iterator<Item = &'a Assignment>) -> Result<(usize, usize)> {
    let mut shape = None;
    for a in assignments {
        let s = (a.source_size(), a.target_size());
        match shape {
            None => shape = Some(s),
            Some(prev) if prev != s => {
                return Err(Error::Structural(format!(
                    "assignments of different sizes: {prev:?} vs {s:?}"
                )))
            }
            _ => {}
        }
        if !is_feasible(a)? {
            return Err(Error::Contract(format!("assignment {a} is not feasible")));
        }
    }
    shape.ok_or_else(|| Error::Contract("no assignments given".into()))
}

/// Weighted edge frequencies. Weights must sum to one.
fn accumulate<'a>(
    mothers: usize,
    daughters: usize,
    weighted: impl Iterator<Item = (&'a Assignment, f64)>,
) -> Result<EdgeProbabilityMatrix> {
    let mut values = DMatrix::zeros(mothers + 1, daughters);
    let mut disappear = vec![0.0; mothers];
    for (a, w) in weighted {
        if w == 0.0 {
            continue;
        }
        for e in a.edges() {
            match (e.mother(), e.daughter()) {
                (Some(i), Some(j)) => values[(i, j)] += w,
                (None, Some(j)) => values[(mothers, j)] += w,
                (Some(i), None) => disappear[i] += w,
                (None, None) => {}
            }
        }
    }
    EdgeProbabilityMatrix::new(values, Some(disappear), ProbabilityKind::Joint)
}

/// Exact edge probabilities by summing over every feasible assignment.
pub fn exact_edge_probabilities(src: &Frame, tgt: &Frame, cm: &CostModel) -> Result<EdgeProbabilityMatrix> {
    exact_edge_probabilities_with_limit(src, tgt, cm, OracleLimit::default())
}

pub fn exact_edge_probabilities_with_limit(
    src: &Frame,
    tgt: &Frame,
    cm: &CostModel,
    limit: OracleLimit,
) -> Result<EdgeProbabilityMatrix> {
    let posterior = exact_posterior(src, tgt, cm, limit)?;
    accumulate(
        src.len(),
        tgt.len(),
        posterior.iter().map(|s| (&s.assignment, s.weight)),
    )
}

/// The full posterior over feasible assignments, in enumeration order.
pub fn exact_posterior(src: &Frame, tgt: &Frame, cm: &CostModel, limit: OracleLimit) -> Result<Vec<PosteriorSample>> {
    let all: Vec<Assignment> = enumerate_feasible_with_limit(src.len(), tgt.len(), limit)?.collect();
    let costs = cm.cost_matrix(src, tgt)?;
    let scores: Vec<f64> = all.iter().map(|a| cm.score(a, &costs)).collect();
    let weights = normalize_log_weights(&scores)?;
    Ok(all
        .into_iter()
        .zip(weights)
        .map(|(assignment, weight)| PosteriorSample { assignment, weight })
        .collect())
}

/// Self-normalized importance weights `p_k ∝ exp(log_score_k)` of a set of
/// distinct solutions.
pub fn sni_weights(solutions: &[RankedSolution]) -> Result<Vec<PosteriorSample>> {
    check_sizes(solutions.iter().map(|s| &s.assignment))?;
    let mut distinct = std::collections::HashSet::new();
    if !solutions.iter().all(|s| distinct.insert(&s.assignment)) {
        return Err(Error::Contract("solutions must be distinct".into()));
    }
    let scores: Vec<f64> = solutions.iter().map(|s| s.log_score).collect();
    let weights = normalize_log_weights(&scores)?;
    Ok(solutions
        .iter()
        .zip(weights)
        .map(|(s, weight)| PosteriorSample {
            assignment: s.assignment.clone(),
            weight,
        })
        .collect())
}

/// Edge probabilities from the importance-weighted top-K solutions.
pub fn sni_edge_probabilities(solutions: &[RankedSolution]) -> Result<EdgeProbabilityMatrix> {
    let samples = sni_weights(solutions)?;
    let (m, n) = check_sizes(samples.iter().map(|s| &s.assignment))?;
    accumulate(m, n, samples.iter().map(|s| (&s.assignment, s.weight)))
}

/// Unweighted edge frequencies over sampled assignments.
pub fn mc_edge_probabilities(samples: &[Assignment]) -> Result<EdgeProbabilityMatrix> {
    let (m, n) = check_sizes(samples.iter())?;
    let w = 1.0 / samples.len() as f64;
    accumulate(m, n, samples.iter().map(|a| (a, w)))
}
