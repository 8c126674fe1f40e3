//! Runs methods over every frame pair of a sequence and scores them against
//! ground truth.

use rayon::prelude::*;
use serde::Serialize;
use trackuq_core::costs::CostModel;
use trackuq_core::dbmc::{fit_temperature, LabeledEdges, Temperature};
use trackuq_core::eval::{
    accuracy_improvement, evaluate_predictions, expected_calibration_error, sparsification, Criterion,
    ReliabilityBin, SparsificationCurve,
};
use trackuq_core::model::{Assignment, EdgeProbabilityMatrix};
use trackuq_core::solver::solve_map;

use crate::error::{CliError, Result};
use crate::method::{MethodOutput, MethodSpec};
use crate::sequence::Sequence;

/// MAP assignment and per-method probabilities of one frame pair. Failures
/// are kept as messages so the remaining pairs still get reported.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub pair: usize,
    pub map: std::result::Result<Assignment, String>,
    pub outputs: Vec<std::result::Result<MethodOutput, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub pair: usize,
    pub method: Option<String>,
    pub error: String,
}

/// Frame pairs are processed in parallel; the output is in pair order.
pub fn analyze(seq: &Sequence, cm: &CostModel, methods: &[MethodSpec]) -> Vec<PairOutcome> {
    (0..seq.pairs())
        .into_par_iter()
        .map(|t| {
            let (src, tgt) = seq.pair(t);
            PairOutcome {
                pair: t,
                map: solve_map(src, tgt, cm).map(|s| s.assignment).map_err(|e| e.to_string()),
                outputs: methods
                    .iter()
                    .map(|m| m.estimate(src, tgt, cm).map_err(|e| e.to_string()))
                    .collect(),
            }
        })
        .collect()
}

/// Final (possibly tempered) probabilities of method `index` for every pair.
pub fn final_probabilities(
    outcomes: &[PairOutcome],
    index: usize,
    spec: &MethodSpec,
    failures: &mut Vec<Failure>,
) -> Vec<Option<EdgeProbabilityMatrix>> {
    outcomes
        .iter()
        .map(|o| {
            let result = o.outputs[index]
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|out| spec.finish(&out.conditional).map_err(|e| e.to_string()));
            result
                .map_err(|error| {
                    failures.push(Failure {
                        pair: o.pair,
                        method: Some(spec.name.to_string()),
                        error,
                    })
                })
                .ok()
        })
        .collect()
}

/// Scores the MAP prediction of every daughter against ground truth.
pub fn label(
    seq: &Sequence,
    outcomes: &[PairOutcome],
    probs: &[Option<EdgeProbabilityMatrix>],
) -> Result<LabeledEdges> {
    let mut data = LabeledEdges::default();
    for (o, p) in outcomes.iter().zip(probs) {
        let truth = seq
            .truth(o.pair)
            .ok_or_else(|| CliError::Config(format!("{} has no ground truth", seq.source)))?;
        if let (Ok(map), Some(p)) = (&o.map, p) {
            data.extend(evaluate_predictions(map, p, truth, o.pair)?);
        }
    }
    Ok(data)
}

pub fn map_failures(outcomes: &[PairOutcome]) -> Vec<Failure> {
    outcomes
        .iter()
        .filter_map(|o| {
            o.map.as_ref().err().map(|e| Failure {
                pair: o.pair,
                method: None,
                error: e.clone(),
            })
        })
        .collect()
}

/// Fits the temperature of `spec`'s untempered variant on a calibration
/// sequence.
pub fn fit_on(seq: &Sequence, cm: &CostModel, spec: &MethodSpec) -> Result<Temperature> {
    let base = MethodSpec {
        name: spec.name.base(),
        ..spec.clone()
    };
    let outcomes = analyze(seq, cm, std::slice::from_ref(&base));
    let mut failures = map_failures(&outcomes);
    let probs = final_probabilities(&outcomes, 0, &base, &mut failures);
    if let Some(f) = failures.first() {
        return Err(CliError::Integrity(format!(
            "calibration failed on pair {}: {}",
            f.pair, f.error
        )));
    }
    let data = label(seq, &outcomes, &probs)?;
    Ok(fit_temperature(&data)?)
}

#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: String,
    pub edges: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
    pub curves: Vec<SparsificationCurve>,
}

impl MethodReport {
    pub fn improvement(&self, criterion: Criterion) -> Option<f64> {
        self.curves
            .iter()
            .find(|c| c.criterion == criterion)
            .and_then(|c| accuracy_improvement(c).ok())
    }
}

/// ECE and both sparsification curves of one method's labeled edges.
pub fn report(method: &str, data: &LabeledEdges, bins: usize, quantiles: &[f64]) -> Result<MethodReport> {
    let (ece, reliability) = expected_calibration_error(data, bins)?;
    let curves = [Criterion::EdgeProbability, Criterion::DaughterEntropy]
        .into_iter()
        .map(|c| sparsification(data, None, c, quantiles))
        .collect::<trackuq_core::Result<Vec<_>>>()?;
    Ok(MethodReport {
        method: method.to_string(),
        edges: data.len(),
        accuracy: data.accuracy().unwrap_or(0.0),
        ece,
        bins: reliability,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackuq_core::model::{Detection, Frame};

    fn toy() -> Sequence {
        let f0 = Frame::new(0, vec![Detection::point(1, [0.0, 0.0]), Detection::point(2, [10.0, 0.0])]).unwrap();
        let f1 = Frame::new(1, vec![Detection::point(1, [1.0, 0.0]), Detection::point(2, [9.0, 0.0])]).unwrap();
        let gt = Assignment::from_parents(2, &[Some(0), Some(1)]).unwrap();
        Sequence::new(vec![f0, f1], Some(vec![gt]), "toy").unwrap()
    }

    #[test]
    fn softmax_report_by_hand() {
        let seq = toy();
        let cm = CostModel::l2(1.0).unwrap();
        let sm = MethodSpec::new("SM".parse().unwrap());
        let outcomes = analyze(&seq, &cm, std::slice::from_ref(&sm));
        let mut failures = Vec::new();
        let probs = final_probabilities(&outcomes, 0, &sm, &mut failures);
        assert!(failures.is_empty());
        let data = label(&seq, &outcomes, &probs).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.accuracy(), Some(1.0));
        // costs 0.5 and 40.5 in each column
        let expect = 1.0 / (1.0 + (-40.0f64).exp());
        assert!((data.columns[0].confidence() - expect).abs() < 1e-15);
        let r = report("SM", &data, 10, &[0.5]).unwrap();
        assert!((r.ece - (1.0 - expect)).abs() < 1e-12);
    }

    #[test]
    fn missing_temperature_is_reported_per_pair() {
        let seq = toy();
        let cm = CostModel::l2(1.0).unwrap();
        let ts = MethodSpec::new("SM+TS".parse().unwrap());
        let outcomes = analyze(&seq, &cm, std::slice::from_ref(&ts));
        let mut failures = Vec::new();
        let probs = final_probabilities(&outcomes, 0, &ts, &mut failures);
        assert_eq!(failures.len(), 1);
        assert!(probs[0].is_none());
    }
}
