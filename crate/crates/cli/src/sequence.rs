//! Frame sequences with optional ground truth, and temporal subsampling.

use trackuq_core::model::{is_feasible, Assignment, Frame};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    /// One assignment per consecutive frame pair.
    pub ground_truth: Option<Vec<Assignment>>,
    pub source: String,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>, ground_truth: Option<Vec<Assignment>>, source: impl Into<String>) -> Result<Self> {
        let seq = Self {
            frames,
            ground_truth,
            source: source.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            f.validate()?;
        }
        let Some(gt) = &self.ground_truth else {
            return Ok(());
        };
        if gt.len() != self.pairs() {
            return Err(CliError::Integrity(format!(
                "{} frames need {} ground-truth assignments, got {}",
                self.frames.len(),
                self.pairs(),
                gt.len()
            )));
        }
        for (t, a) in gt.iter().enumerate() {
            let (src, tgt) = (&self.frames[t], &self.frames[t + 1]);
            if a.source_size() != src.len() || a.target_size() != tgt.len() {
                return Err(CliError::Integrity(format!(
                    "ground truth for pair {t} is {}x{}, frames hold {}x{}",
                    a.source_size(),
                    a.target_size(),
                    src.len(),
                    tgt.len()
                )));
            }
            if !is_feasible(a)? {
                return Err(CliError::Integrity(format!(
                    "ground truth for pair {t} is not biologically feasible: {a}"
                )));
            }
        }
        Ok(())
    }

    /// Number of consecutive frame pairs.
    pub fn pairs(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn pair(&self, t: usize) -> (&Frame, &Frame) {
        (&self.frames[t], &self.frames[t + 1])
    }

    pub fn truth(&self, t: usize) -> Option<&Assignment> {
        self.ground_truth.as_ref().map(|gt| &gt[t])
    }
}

/// Ancestry across two steps: a daughter of `second` maps to the mother of
/// its own mother in `first`, or `⊥` if either step is an appearance.
pub fn compose(first: &Assignment, second: &Assignment) -> Result<Assignment> {
    compose_all(&[first.clone(), second.clone()])
}

/// Ancestry across a chain of steps. Only the end-to-end result has to be
/// feasible: a third descendant that dies before the last frame is fine.
fn compose_all(steps: &[Assignment]) -> Result<Assignment> {
    let mut parents: Vec<Option<usize>> = (0..steps[0].source_size()).map(Some).collect();
    for step in steps {
        if parents.len() != step.source_size() {
            return Err(CliError::Integrity(format!(
                "cannot chain a {}-daughter step into a {}-mother step",
                parents.len(),
                step.source_size()
            )));
        }
        parents = step.parents().iter().map(|p| p.and_then(|k| parents[k])).collect();
    }
    let composed = Assignment::from_parents(steps[0].source_size(), &parents)?;
    if !is_feasible(&composed)? {
        return Err(CliError::Integrity(format!(
            "more than two descendants share an ancestor: {composed}"
        )));
    }
    Ok(composed)
}

/// Keeps frames `0, f, 2f, …`; ground truth is composed across each gap.
pub fn subsample(seq: &Sequence, factor: usize) -> Result<Sequence> {
    if factor == 0 {
        return Err(CliError::Config("subsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(seq.clone());
    }
    let kept: Vec<usize> = (0..seq.frames.len()).step_by(factor).collect();
    let frames = kept.iter().map(|&t| seq.frames[t].clone()).collect();
    let ground_truth = match &seq.ground_truth {
        None => None,
        Some(gt) => Some(
            kept.windows(2)
                .map(|w| compose_all(&gt[w[0]..w[1]]))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Sequence::new(frames, ground_truth, format!("{} (every {factor})", seq.source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackuq_core::model::Detection;

    fn frame(t: usize, n: usize) -> Frame {
        let dets = (0..n).map(|i| Detection::point(i as u32, [i as f64, t as f64])).collect();
        Frame::new(t, dets).unwrap()
    }

    fn parents(m: usize, p: &[Option<usize>]) -> Assignment {
        Assignment::from_parents(m, p).unwrap()
    }

    /// 1 cell divides into 2, then the first daughter divides again.
    fn dividing() -> Sequence {
        let frames = vec![frame(0, 1), frame(1, 2), frame(2, 3)];
        let gt = vec![
            parents(1, &[Some(0), Some(0)]),
            parents(2, &[Some(0), Some(0), Some(1)]),
        ];
        Sequence::new(frames, Some(gt), "fixture").unwrap()
    }

    #[test]
    fn factor_one_is_identity() {
        let seq = dividing();
        assert_eq!(subsample(&seq, 1).unwrap(), seq);
        assert!(subsample(&seq, 0).is_err());
    }

    #[test]
    fn composition_follows_lineage() {
        let first = parents(2, &[Some(1), None]);
        let second = parents(2, &[Some(0), Some(1), Some(0)]);
        let c = compose(&first, &second).unwrap();
        assert_eq!(c.canonical_text(), "0->_ 1->0 1->2 _->1");
    }

    #[test]
    fn three_descendants_of_one_cell_are_rejected() {
        let seq = dividing();
        assert!(matches!(subsample(&seq, 2), Err(CliError::Integrity(_))));
    }

    #[test]
    fn division_inside_the_gap_maps_to_grandmother() {
        // 1 cell, 2 daughters, one of which is lost
        let frames = vec![frame(0, 1), frame(1, 2), frame(2, 1)];
        let gt = vec![parents(1, &[Some(0), Some(0)]), parents(2, &[Some(1)])];
        let seq = Sequence::new(frames, Some(gt), "fixture").unwrap();
        let sub = subsample(&seq, 2).unwrap();
        assert_eq!(sub.frames.len(), 2);
        assert_eq!(sub.frames[1].time_index, 2);
        assert_eq!(sub.ground_truth.unwrap()[0].canonical_text(), "0->0");
    }

    #[test]
    fn transient_third_descendant_is_allowed() {
        // 0 divides, its first daughter divides, then that granddaughter dies
        let frames = vec![frame(0, 1), frame(1, 2), frame(2, 3), frame(3, 2)];
        let gt = vec![
            parents(1, &[Some(0), Some(0)]),
            parents(2, &[Some(0), Some(0), Some(1)]),
            parents(3, &[Some(1), Some(2)]),
        ];
        let seq = Sequence::new(frames, Some(gt), "fixture").unwrap();
        let sub = subsample(&seq, 3).unwrap();
        assert_eq!(sub.ground_truth.unwrap()[0].canonical_text(), "0->0 0->1");
    }

    #[test]
    fn ground_truth_must_match_frames() {
        let frames = vec![frame(0, 1), frame(1, 2)];
        assert!(Sequence::new(frames.clone(), Some(vec![]), "x").is_err());
        let wrong = parents(1, &[Some(0)]);
        assert!(Sequence::new(frames, Some(vec![wrong]), "x").is_err());
    }
}
