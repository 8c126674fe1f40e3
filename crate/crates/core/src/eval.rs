//! Calibration and sparsification metrics over labeled daughter columns.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dbmc::{LabeledColumn, LabeledEdges};
use crate::error::{Error, Result};
use crate::model::{Assignment, EdgeProbabilityMatrix, ProbabilityKind};

pub const DEFAULT_BINS: usize = 10;

/// Quantile levels `0.1, 0.2, …, 0.9`.
pub fn default_quantiles() -> Vec<f64> {
    (1..10).map(|i| i as f64 / 10.0).collect()
}

/// Scores every daughter: the prediction is its mother in `map`, the
/// confidence the matching entry of `probs`, and it is correct iff `truth`
/// agrees (`⊥` is a class like any other).
pub fn evaluate_predictions(
    map: &Assignment,
    probs: &EdgeProbabilityMatrix,
    truth: &Assignment,
    pair: usize,
) -> Result<LabeledEdges> {
    let shape = (probs.mothers(), probs.daughters());
    for (what, a) in [("MAP", map), ("ground truth", truth)] {
        if (a.source_size(), a.target_size()) != shape {
            return Err(Error::Structural(format!(
                "{what} assignment is {}x{}, probabilities are {}x{}",
                a.source_size(),
                a.target_size(),
                shape.0,
                shape.1
            )));
        }
    }
    if probs.kind() != ProbabilityKind::ColumnNormalized {
        return Err(Error::Contract("evaluation needs column-normalized probabilities".into()));
    }
    let predicted = map.parents();
    let actual = truth.parents();
    let columns = (0..shape.1)
        .map(|j| LabeledColumn {
            pair,
            daughter: j,
            truth: actual[j],
            prediction: predicted[j],
            probs: probs.column(j),
        })
        .collect();
    LabeledEdges::new(columns)
}

/// Like [`evaluate_predictions`] but each daughter predicts its most likely
/// class (lowest index on ties).
pub fn classify_by_argmax(probs: &EdgeProbabilityMatrix, truth: &Assignment, pair: usize) -> Result<LabeledEdges> {
    if (truth.source_size(), truth.target_size()) != (probs.mothers(), probs.daughters()) {
        return Err(Error::Structural("ground truth does not match probabilities".into()));
    }
    let actual = truth.parents();
    let m = probs.mothers();
    let columns = (0..probs.daughters())
        .map(|j| {
            let col = probs.column(j);
            let best = col
                .iter()
                .enumerate()
                .fold(0, |best, (k, &p)| if p > col[best] { k } else { best });
            LabeledColumn {
                pair,
                daughter: j,
                truth: actual[j],
                prediction: (best < m).then_some(best),
                probs: col,
            }
        })
        .collect();
    LabeledEdges::new(columns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
}

/// Equal-width binned ECE: `Σ_b (n_b / N)·|acc_b − conf_b|`. Confidence 1.0
/// falls into the last bin.
pub fn expected_calibration_error(data: &LabeledEdges, bins: usize) -> Result<(f64, Vec<ReliabilityBin>)> {
    if bins == 0 {
        return Err(Error::Configuration("at least one bin is needed".into()));
    }
    if data.is_empty() {
        return Err(Error::Contract("no predictions to calibrate".into()));
    }
    let mut counts = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for col in &data.columns {
        let s = col.confidence();
        let b = ((s * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
        conf_sum[b] += s;
        correct[b] += usize::from(col.correct());
    }
    let n = data.len() as f64;
    let mut ece = 0.0;
    let report = (0..bins)
        .map(|b| {
            let (mean_confidence, empirical_accuracy) = if counts[b] > 0 {
                let c = counts[b] as f64;
                let conf = conf_sum[b] / c;
                let acc = correct[b] as f64 / c;
                ece += c / n * (acc - conf).abs();
                (Some(conf), Some(acc))
            } else {
                (None, None)
            };
            ReliabilityBin {
                lower: b as f64 / bins as f64,
                upper: (b + 1) as f64 / bins as f64,
                count: counts[b],
                mean_confidence,
                empirical_accuracy,
            }
        })
        .collect();
    Ok((ece, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Drop predictions whose confidence is below the threshold.
    EdgeProbability,
    /// Drop predictions whose daughter entropy is above the threshold.
    DaughterEntropy,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::EdgeProbability => "edge_probability",
            Criterion::DaughterEntropy => "daughter_entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsificationCurve {
    pub criterion: Criterion,
    /// Fraction of predictions targeted for removal at each step.
    pub quantiles: Vec<f64>,
    /// Criterion value at each step, in the criterion's own units.
    pub thresholds: Vec<f64>,
    pub retained_fraction: Vec<f64>,
    /// `None` where nothing is retained.
    pub retained_accuracy: Vec<Option<f64>>,
    pub baseline_accuracy: f64,
}

impl SparsificationCurve {
    pub fn improvement(&self) -> Vec<Option<f64>> {
        self.retained_accuracy
            .iter()
            .map(|a| a.map(|a| a - self.baseline_accuracy))
            .collect()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

struct Curve {
    thresholds: Vec<f64>,
    retained_fraction: Vec<f64>,
    retained_accuracy: Vec<Option<f64>>,
}

/// At level `q`, keeps predictions with uncertainty at or below the
/// `(1 − q)`-quantile.
fn sparsify(correct: &[bool], uncertainty: &[f64], quantiles: &[f64]) -> Curve {
    let mut sorted = uncertainty.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut curve = Curve {
        thresholds: Vec::with_capacity(quantiles.len()),
        retained_fraction: Vec::with_capacity(quantiles.len()),
        retained_accuracy: Vec::with_capacity(quantiles.len()),
    };
    for &q in quantiles {
        let threshold = quantile(&sorted, 1.0 - q);
        let (kept, hits) = correct
            .iter()
            .zip(uncertainty)
            .filter(|(_, &u)| u <= threshold)
            .fold((0usize, 0usize), |(k, h), (&c, _)| (k + 1, h + usize::from(c)));
        curve.thresholds.push(threshold);
        curve.retained_fraction.push(kept as f64 / correct.len() as f64);
        curve
            .retained_accuracy
            .push((kept > 0).then(|| hits as f64 / kept as f64));
    }
    curve
}

fn check_quantiles(quantiles: &[f64]) -> Result<()> {
    if quantiles.is_empty() || quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Configuration("quantile levels must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Accuracy of the retained predictions as the most uncertain ones are
/// removed. `entropies` defaults to the columns' own entropies.
pub fn sparsification(
    data: &LabeledEdges,
    entropies: Option<&[f64]>,
    criterion: Criterion,
    quantiles: &[f64],
) -> Result<SparsificationCurve> {
    check_quantiles(quantiles)?;
    let baseline_accuracy = data
        .accuracy()
        .ok_or_else(|| Error::Contract("no predictions to sparsify".into()))?;
    let correct: Vec<bool> = data.columns.iter().map(LabeledColumn::correct).collect();
    let curve = match criterion {
        Criterion::EdgeProbability => {
            let uncertainty: Vec<f64> = data.columns.iter().map(|c| -c.confidence()).collect();
            let mut curve = sparsify(&correct, &uncertainty, quantiles);
            curve.thresholds.iter_mut().for_each(|t| *t = -*t);
            curve
        }
        Criterion::DaughterEntropy => {
            let own: Vec<f64>;
            let entropies = match entropies {
                Some(e) => {
                    if e.len() != data.len() {
                        return Err(Error::Structural(format!(
                            "{} entropies for {} predictions",
                            e.len(),
                            data.len()
                        )));
                    }
                    e
                }
                None => {
                    own = data.columns.iter().map(LabeledColumn::entropy).collect();
                    &own
                }
            };
            sparsify(&correct, entropies, quantiles)
        }
    };
    Ok(SparsificationCurve {
        criterion,
        quantiles: quantiles.to_vec(),
        thresholds: curve.thresholds,
        retained_fraction: curve.retained_fraction,
        retained_accuracy: curve.retained_accuracy,
        baseline_accuracy,
    })
}

/// Mean of `retained − baseline` over the thresholds that retain anything.
pub fn accuracy_improvement(curve: &SparsificationCurve) -> Result<f64> {
    let diffs: Vec<f64> = curve.improvement().into_iter().flatten().collect();
    if diffs.is_empty() {
        return Err(Error::Contract("sparsification curve retains nothing".into()));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Mean and standard deviation of [`accuracy_improvement`] when the
/// uncertainty scores are randomly permuted across predictions.
pub fn permutation_null(
    data: &LabeledEdges,
    uncertainty: &[f64],
    quantiles: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_quantiles(quantiles)?;
    if uncertainty.len() != data.len() || data.is_empty() {
        return Err(Error::Structural("uncertainty scores must align with the predictions".into()));
    }
    if permutations < 2 {
        return Err(Error::Configuration("need at least two permutations".into()));
    }
    let baseline = data.accuracy().unwrap_or(0.0);
    let correct: Vec<bool> = data.columns.iter().map(LabeledColumn::correct).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = uncertainty.to_vec();
    let mut stats = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        let curve = sparsify(&correct, &shuffled, quantiles);
        let diffs: Vec<f64> = curve.retained_accuracy.iter().flatten().map(|a| a - baseline).collect();
        if !diffs.is_empty() {
            stats.push(diffs.iter().sum::<f64>() / diffs.len() as f64);
        }
    }
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbmc::column_entropy;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn col(truth: Option<usize>, prediction: Option<usize>, probs: Vec<f64>) -> LabeledColumn {
        LabeledColumn {
            pair: 0,
            daughter: 0,
            truth,
            prediction,
            probs,
        }
    }

    fn prob_matrix(rows: usize, cols: usize, v: &[f64]) -> EdgeProbabilityMatrix {
        EdgeProbabilityMatrix::new(
            DMatrix::from_row_slice(rows, cols, v),
            None,
            ProbabilityKind::ColumnNormalized,
        )
        .unwrap()
    }

    #[test]
    fn evaluation_scores_bottom_as_a_class() {
        // 2 mothers, 3 daughters
        let probs = prob_matrix(3, 3, &[0.7, 0.1, 0.2, 0.2, 0.8, 0.3, 0.1, 0.1, 0.5]);
        let map = Assignment::from_parents(2, &[Some(0), Some(1), Some(0)]).unwrap();
        let same = evaluate_predictions(&map, &probs, &map, 4).unwrap();
        assert_eq!(same.accuracy(), Some(1.0));
        assert_eq!(same.columns[2].pair, 4);
        assert_eq!(same.columns[1].confidence(), 0.8);

        // daughter 2 actually appeared: that prediction is wrong
        let truth = Assignment::from_parents(2, &[Some(0), Some(1), None]).unwrap();
        let scored = evaluate_predictions(&map, &probs, &truth, 0).unwrap();
        assert!(!scored.columns[2].correct());
        assert!((scored.accuracy().unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let wrong_size = Assignment::from_parents(1, &[Some(0), Some(0), None]).unwrap();
        assert!(matches!(
            evaluate_predictions(&wrong_size, &probs, &truth, 0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn argmax_classification() {
        let probs = prob_matrix(3, 2, &[0.2, 0.5, 0.3, 0.1, 0.5, 0.4]);
        let truth = Assignment::from_parents(2, &[None, Some(0)]).unwrap();
        let data = classify_by_argmax(&probs, &truth, 0).unwrap();
        assert_eq!(data.columns[0].prediction, None);
        assert_eq!(data.columns[1].prediction, Some(0));
        assert_eq!(data.accuracy(), Some(1.0));
    }

    #[test]
    fn ece_examples() {
        let perfect = LabeledEdges::new(vec![col(Some(0), Some(0), vec![1.0, 0.0]); 10]).unwrap();
        let (ece, bins) = expected_calibration_error(&perfect, 10).unwrap();
        assert_eq!(ece, 0.0);
        assert_eq!(bins[9].count, 10);

        let mut cols = vec![col(Some(0), Some(0), vec![0.9, 0.1]); 5];
        cols.extend(vec![col(None, Some(0), vec![0.9, 0.1]); 5]);
        let half = LabeledEdges::new(cols).unwrap();
        let (ece, bins) = expected_calibration_error(&half, 10).unwrap();
        assert!((ece - 0.4).abs() < 1e-12);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 10);
        assert_eq!(bins[0].empirical_accuracy, None);

        assert!(expected_calibration_error(&LabeledEdges::default(), 10).is_err());
        assert!(expected_calibration_error(&half, 0).is_err());
    }

    fn sample_class<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.len() - 1
    }

    #[test]
    fn self_sampled_labels_are_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let columns: Vec<LabeledColumn> = (0..100_000)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
                let s: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|r| r / s).collect();
                let best = (0..3).fold(0, |b, k| if probs[k] > probs[b] { k } else { b });
                let label = sample_class(&mut rng, &probs);
                let as_class = |k: usize| (k < 2).then_some(k);
                col(as_class(label), as_class(best), probs)
            })
            .collect();
        let data = LabeledEdges::new(columns).unwrap();
        let (ece, _) = expected_calibration_error(&data, 10).unwrap();
        assert!(ece < 0.02, "ece {ece}");
    }

    #[test]
    fn improvement_arithmetic() {
        let curve = SparsificationCurve {
            criterion: Criterion::DaughterEntropy,
            quantiles: vec![0.1, 0.2, 0.3],
            thresholds: vec![0.0; 3],
            retained_fraction: vec![0.9, 0.8, 0.7],
            retained_accuracy: vec![Some(0.8), Some(0.9), Some(1.0)],
            baseline_accuracy: 0.8,
        };
        assert!((accuracy_improvement(&curve).unwrap() - 0.1).abs() < 1e-12);

        let flat = SparsificationCurve {
            retained_accuracy: vec![Some(0.8); 3],
            ..curve.clone()
        };
        assert_eq!(accuracy_improvement(&flat).unwrap(), 0.0);

        let single = SparsificationCurve {
            quantiles: vec![0.5],
            thresholds: vec![0.0],
            retained_fraction: vec![0.5],
            retained_accuracy: vec![Some(0.95)],
            ..curve.clone()
        };
        assert!((accuracy_improvement(&single).unwrap() - 0.15).abs() < 1e-12);

        let empty = SparsificationCurve {
            retained_accuracy: vec![None; 3],
            ..curve
        };
        assert!(accuracy_improvement(&empty).is_err());
    }

    /// Ten predictions: the two with the highest entropy are the only errors.
    fn ranked_errors() -> LabeledEdges {
        let cols = (0..10)
            .map(|k| {
                let p = 0.99 - 0.05 * k as f64;
                let truth = if k >= 8 { None } else { Some(0) };
                col(truth, Some(0), vec![p, 1.0 - p])
            })
            .collect();
        LabeledEdges::new(cols).unwrap()
    }

    #[test]
    fn perfect_ranking_reaches_full_accuracy() {
        let data = ranked_errors();
        for criterion in [Criterion::DaughterEntropy, Criterion::EdgeProbability] {
            let curve = sparsification(&data, None, criterion, &default_quantiles()).unwrap();
            assert_eq!(curve.baseline_accuracy, 0.8);
            assert!(curve.retained_fraction.windows(2).all(|w| w[1] <= w[0]));
            for (q, acc) in curve.quantiles.iter().zip(&curve.retained_accuracy) {
                if *q >= 0.2 {
                    assert_eq!(*acc, Some(1.0), "{} q={q}", criterion.name());
                }
            }
            assert!(accuracy_improvement(&curve).unwrap() > 0.0);
        }
    }

    #[test]
    fn entropies_must_align() {
        let data = ranked_errors();
        let e: Vec<f64> = data.columns.iter().map(|c| column_entropy(&c.probs)).collect();
        let explicit = sparsification(&data, Some(&e), Criterion::DaughterEntropy, &[0.5]).unwrap();
        let implicit = sparsification(&data, None, Criterion::DaughterEntropy, &[0.5]).unwrap();
        assert_eq!(explicit, implicit);
        assert!(matches!(
            sparsification(&data, Some(&e[..3]), Criterion::DaughterEntropy, &[0.5]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn uninformative_uncertainty_stays_within_null_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<LabeledColumn> = (0..4000)
            .map(|_| {
                let truth = if rng.random_bool(0.7) { Some(0) } else { Some(1) };
                col(truth, Some(0), vec![0.5, 0.3, 0.2])
            })
            .collect();
        let data = LabeledEdges::new(cols).unwrap();
        let noise: Vec<f64> = (0..data.len()).map(|_| rng.random()).collect();
        let curve = sparsification(&data, Some(&noise), Criterion::DaughterEntropy, &default_quantiles()).unwrap();
        let observed = accuracy_improvement(&curve).unwrap();
        let (mean, sd) = permutation_null(&data, &noise, &default_quantiles(), 200, 8).unwrap();
        assert!((observed - mean).abs() < 3.0 * sd, "{observed} vs {mean} ± {sd}");
        assert!(observed.abs() < 0.02);
    }
}
