//! Synthetic frame pairs and sequences with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::costs::CostModel;
use crate::model::{Assignment, Detection, Frame};

fn points(time_index: usize, pts: &[[f64; 2]]) -> Frame {
    Frame {
        time_index,
        detections: pts
            .iter()
            .enumerate()
            .map(|(i, p)| Detection::point(i as u32, *p))
            .collect(),
    }
}

/// Two mothers and three daughters where the middle daughter can belong to
/// either mother. The two best assignments are
/// `0->0 0->2 1->1` and `0->0 1->1 1->2`, two cost units apart.
pub fn two_interpretations() -> (Frame, Frame, CostModel) {
    let src = points(0, &[[0.0, 0.0], [10.0, 0.0]]);
    let tgt = points(1, &[[-2.0, 0.0], [12.0, 0.0], [4.8, 0.5]]);
    let cm = CostModel::l2(1.0)
        .and_then(|c| c.with_event_costs(50.0, 50.0))
        .expect("valid parameters");
    (src, tgt, cm)
}

/// Random small instance: up to `max_mothers` / `max_daughters` uniformly
/// placed cells, l2 cost with random `λ`, `w_a`, `w_d`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_mothers: usize, max_daughters: usize) -> (Frame, Frame, CostModel) {
    let m = rng.random_range(0..=max_mothers);
    let n = rng.random_range(0..=max_daughters);
    let side = 6.0;
    let mut pts = |count: usize| -> Vec<[f64; 2]> {
        (0..count)
            .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
            .collect()
    };
    let src = points(0, &pts(m));
    let tgt = points(1, &pts(n));
    let lambda = rng.random_range(0.2..2.0);
    let wa = rng.random_range(0.5..8.0);
    let wd = rng.random_range(0.5..8.0);
    let cm = CostModel::l2(lambda)
        .and_then(|c| c.with_event_costs(wa, wd))
        .expect("valid parameters");
    (src, tgt, cm)
}

/// `cells` mothers uniform in a `side x side` square; daughter `j` is mother
/// `j` displaced by `N(0, variance·I)`. Returns the frames and the true
/// assignment.
pub fn brownian_pair<R: Rng + ?Sized>(
    rng: &mut R,
    cells: usize,
    side: f64,
    variance: f64,
) -> (Frame, Frame, Assignment) {
    let mothers: Vec<[f64; 2]> = (0..cells)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    let step = Normal::new(0.0, variance.sqrt()).expect("variance must be finite and >= 0");
    let daughters: Vec<[f64; 2]> = mothers
        .iter()
        .map(|p| [p[0] + step.sample(rng), p[1] + step.sample(rng)])
        .collect();
    let parents: Vec<Option<usize>> = (0..cells).map(Some).collect();
    let truth = Assignment::from_parents(cells, &parents).expect("indices in range");
    (points(0, &mothers), points(1, &daughters), truth)
}

/// `frames` frames of `cells` independent random walks with per-frame step
/// variance `step_variance`, plus the identity ground truth between
/// consecutive frames. Detection ids are the walk labels.
pub fn brownian_walks<R: Rng + ?Sized>(
    rng: &mut R,
    cells: usize,
    side: f64,
    step_variance: f64,
    frames: usize,
) -> (Vec<Frame>, Vec<Assignment>) {
    let step = Normal::new(0.0, step_variance.sqrt()).expect("variance must be finite and >= 0");
    let mut pos: Vec<[f64; 2]> = (0..cells)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        if t > 0 {
            for p in pos.iter_mut() {
                p[0] += step.sample(rng);
                p[1] += step.sample(rng);
            }
        }
        out.push(points(t, &pos));
    }
    let parents: Vec<Option<usize>> = (0..cells).map(Some).collect();
    let identity = Assignment::from_parents(cells, &parents).expect("indices in range");
    let truth = vec![identity; frames.saturating_sub(1)];
    (out, truth)
}
