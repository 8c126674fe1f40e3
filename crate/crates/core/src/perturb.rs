//! Feature perturbation: resample detections from a noise model and either
//! solve the MAP assignment per sample (FP+A) or average the link costs (FP).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bayes::mc_edge_probabilities;
use crate::costs::{CostModel, TabulatedCost};
use crate::error::{Error, Result};
use crate::model::{Detection, EdgeProbabilityMatrix, Frame, Mask};
use crate::solver::solve_map_costs;

/// Draws a perturbed copy of one detection. Implement this to plug in an
/// external feature distribution.
pub trait FeatureSampler: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn sample(&self, detection: &Detection, rng: &mut ChaCha8Rng) -> Result<Detection>;
}

#[derive(Debug, Clone)]
pub enum NoiseKind {
    /// Each centroid coordinate gets an independent `N(0, gamma)` offset.
    GaussianCentroid { gamma: f64 },
    /// Each mask is dilated or eroded (fair coin) by `radius` pixels with a
    /// 4-connected structuring element.
    MaskInflateDeflate { radius: u32 },
    Custom(Arc<dyn FeatureSampler>),
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
    pub samples: usize,
}

impl NoiseSpec {
    pub fn gaussian(gamma: f64, seed: u64, samples: usize) -> Result<Self> {
        let spec = Self {
            kind: NoiseKind::GaussianCentroid { gamma },
            seed,
            samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mask(radius: u32, seed: u64, samples: usize) -> Result<Self> {
        let spec = Self {
            kind: NoiseKind::MaskInflateDeflate { radius },
            seed,
            samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Configuration("noise needs at least one sample".into()));
        }
        match self.kind {
            NoiseKind::GaussianCentroid { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Configuration(format!("gamma must be positive, got {gamma}")))
            }
            NoiseKind::MaskInflateDeflate { radius: 0 } => {
                Err(Error::Configuration("mask radius must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            NoiseKind::GaussianCentroid { .. } => "gaussian_centroid",
            NoiseKind::MaskInflateDeflate { .. } => "mask_inflate_deflate",
            NoiseKind::Custom(s) => s.name(),
        }
    }
}

/// Independent generator per (seed, sample, frame, detection).
fn substream(seed: u64, sample_index: usize, time_index: usize, id: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(sample_index as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(time_index as u64).to_le_bytes());
    key[24..28].copy_from_slice(&id.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn diamond(radius: i64) -> Vec<(i64, i64)> {
    let mut offsets = Vec::new();
    for dx in -radius..=radius {
        let rest = radius - dx.abs();
        for dy in -rest..=rest {
            offsets.push((dx, dy));
        }
    }
    offsets
}

pub fn dilate(mask: &Mask, radius: u32) -> Mask {
    let offsets = diamond(radius as i64);
    let mut out = BTreeSet::new();
    for (x, y) in mask.pixels() {
        for &(dx, dy) in &offsets {
            out.insert((x + dx, y + dy));
        }
    }
    Mask::new(out)
}

pub fn erode(mask: &Mask, radius: u32) -> Mask {
    let offsets = diamond(radius as i64);
    Mask::new(
        mask.pixels()
            .filter(|&(x, y)| offsets.iter().all(|&(dx, dy)| mask.contains((x + dx, y + dy)))),
    )
}

fn perturb_detection(d: &Detection, kind: &NoiseKind, rng: &mut ChaCha8Rng) -> Result<Detection> {
    match kind {
        NoiseKind::GaussianCentroid { gamma } => {
            let normal = Normal::new(0.0, gamma.sqrt())
                .map_err(|e| Error::Configuration(format!("gaussian noise: {e}")))?;
            let mut out = d.clone();
            for c in out.centroid.iter_mut() {
                *c += normal.sample(rng);
            }
            Ok(out)
        }
        NoiseKind::MaskInflateDeflate { radius } => {
            let mask = d.mask.as_ref().ok_or_else(|| {
                Error::Configuration(format!("mask perturbation needs a mask on detection {}", d.id))
            })?;
            let grown = rng.random_bool(0.5);
            let new_mask = if grown {
                dilate(mask, *radius)
            } else {
                erode(mask, *radius)
            };
            if new_mask.is_empty() {
                return Ok(d.clone());
            }
            let mut out = Detection::from_mask(d.id, new_mask)?;
            out.activity = d.activity;
            Ok(out)
        }
        NoiseKind::Custom(sampler) => sampler.sample(d, rng),
    }
}

/// The `sample_index`-th perturbed copy of `f`. Deterministic in
/// (seed, sample index, frame time index, detection id).
pub fn perturb_frame(f: &Frame, spec: &NoiseSpec, sample_index: usize) -> Result<Frame> {
    spec.validate()?;
    let detections = f
        .detections
        .iter()
        .map(|d| {
            let mut rng = substream(spec.seed, sample_index, f.time_index, d.id);
            perturb_detection(d, &spec.kind, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Frame {
        time_index: f.time_index,
        detections,
    })
}

fn perturbed_costs(src: &Frame, tgt: &Frame, cm: &CostModel, spec: &NoiseSpec, k: usize) -> Result<DMatrix<f64>> {
    let ps = perturb_frame(src, spec, k)?;
    let pt = perturb_frame(tgt, spec, k)?;
    cm.cost_matrix(&ps, &pt)
}

/// Edge frequencies over the MAP assignments of `spec.samples` perturbed
/// copies of the frame pair.
pub fn fp_assignment_ensemble(src: &Frame, tgt: &Frame, cm: &CostModel, spec: &NoiseSpec) -> Result<EdgeProbabilityMatrix> {
    spec.validate()?;
    let solutions = (0..spec.samples)
        .into_par_iter()
        .map(|k| {
            let costs = perturbed_costs(src, tgt, cm, spec, k)?;
            Ok(solve_map_costs(&costs, cm)?.assignment)
        })
        .collect::<Result<Vec<_>>>()?;
    mc_edge_probabilities(&solutions)
}

/// Link costs averaged over `spec.samples` perturbed copies of the pair.
pub fn fp_mean_cost_matrix(src: &Frame, tgt: &Frame, cm: &CostModel, spec: &NoiseSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let per_sample = (0..spec.samples)
        .into_par_iter()
        .map(|k| perturbed_costs(src, tgt, cm, spec, k))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = DMatrix::zeros(src.len(), tgt.len());
    for c in &per_sample {
        mean += c;
    }
    Ok(mean / spec.samples as f64)
}

/// A cost model for this frame pair whose link costs are the mean perturbed
/// costs. Event costs are inherited from `cm`.
pub fn fp_mean_cost(src: &Frame, tgt: &Frame, cm: &CostModel, spec: &NoiseSpec) -> Result<CostModel> {
    let mean = fp_mean_cost_matrix(src, tgt, cm, spec)?;
    let table = TabulatedCost::from_matrix(format!("{}-mean", cm.name()), src, tgt, &mean)?;
    Ok(cm.with_link(Arc::new(table)))
}
