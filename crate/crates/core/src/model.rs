//! Detections, frames and the assignments linking two consecutive frames.
//!
//! An [`Assignment`] is a set of [`Edge`]s between a source frame (mothers)
//! and a target frame (daughters). Either side of an edge can be the fallback
//! node `⊥`, encoded as `None`: `_->j` is an appearing daughter and `i->_` a
//! disappearing mother.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Pixel coordinates `(x, y)` of a segmentation mask.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Mask {
    pixels: BTreeSet<(i64, i64)>,
}

impl Mask {
    pub fn new(pixels: impl IntoIterator<Item = (i64, i64)>) -> Self {
        Self {
            pixels: pixels.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, px: (i64, i64)) -> bool {
        self.pixels.contains(&px)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.pixels.iter().copied()
    }

    pub fn intersection_len(&self, other: &Mask) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.pixels.iter().filter(|p| large.pixels.contains(p)).count()
    }

    /// Mean pixel position, `None` for an empty mask.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        if self.is_empty() {
            return None;
        }
        let n = self.len() as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
        Some([sx / n, sy / n])
    }
}

/// One segmented cell in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: u32,
    pub centroid: Vec<f64>,
    pub area: u64,
    pub mask: Option<Mask>,
    pub activity: Option<f64>,
}

impl Detection {
    /// A point detection without mask or activity.
    pub fn point(id: u32, centroid: impl Into<Vec<f64>>) -> Self {
        Self {
            id,
            centroid: centroid.into(),
            area: 0,
            mask: None,
            activity: None,
        }
    }

    /// A detection derived from its mask; centroid and area are computed.
    pub fn from_mask(id: u32, mask: Mask) -> Result<Self> {
        let centroid = mask
            .centroid()
            .ok_or_else(|| Error::Structural(format!("detection {id} has an empty mask")))?;
        Ok(Self {
            id,
            centroid: centroid.to_vec(),
            area: mask.len() as u64,
            mask: Some(mask),
            activity: None,
        })
    }

    pub fn with_activity(mut self, activity: f64) -> Self {
        self.activity = Some(activity);
        self
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.centroid.len()) {
            return Err(Error::Structural(format!(
                "detection {} has a {}-dimensional centroid",
                self.id,
                self.centroid.len()
            )));
        }
        if self.centroid.iter().any(|c| !c.is_finite()) {
            return Err(Error::Structural(format!(
                "detection {} has a non-finite centroid",
                self.id
            )));
        }
        if let Some(a) = self.activity {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Configuration(format!(
                    "detection {} has non-positive activity {a}",
                    self.id
                )));
            }
        }
        if let Some(mask) = &self.mask {
            if mask.len() as u64 != self.area {
                return Err(Error::Structural(format!(
                    "detection {}: area {} does not match mask size {}",
                    self.id,
                    self.area,
                    mask.len()
                )));
            }
            if let Some(c) = mask.centroid() {
                let off = c
                    .iter()
                    .zip(&self.centroid)
                    .any(|(m, x)| (m - x).abs() > 0.5);
                if off {
                    return Err(Error::Structural(format!(
                        "detection {}: centroid is more than 0.5px from the mask centroid",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// All detections at one time point. Position in `detections` is the index
/// used by assignments and probability matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub time_index: usize,
    pub detections: Vec<Detection>,
}

impl Frame {
    pub fn new(time_index: usize, detections: Vec<Detection>) -> Result<Self> {
        let frame = Self {
            time_index,
            detections,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn position_of(&self, id: u32) -> Option<usize> {
        self.detections.iter().position(|d| d.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.detections {
            if !seen.insert(d.id) {
                return Err(Error::Structural(format!(
                    "duplicate detection id {} in frame {}",
                    d.id, self.time_index
                )));
            }
            d.validate()?;
        }
        Ok(())
    }
}

/// A mother→daughter link; `None` on either side stands for `⊥`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    mother: Option<usize>,
    daughter: Option<usize>,
}

impl Edge {
    pub fn new(mother: Option<usize>, daughter: Option<usize>) -> Result<Self> {
        if mother.is_none() && daughter.is_none() {
            return Err(Error::Structural("⊥->⊥ edges are not allowed".into()));
        }
        Ok(Self { mother, daughter })
    }

    pub fn link(mother: usize, daughter: usize) -> Self {
        Self {
            mother: Some(mother),
            daughter: Some(daughter),
        }
    }

    pub fn appear(daughter: usize) -> Self {
        Self {
            mother: None,
            daughter: Some(daughter),
        }
    }

    pub fn disappear(mother: usize) -> Self {
        Self {
            mother: Some(mother),
            daughter: None,
        }
    }

    pub fn mother(&self) -> Option<usize> {
        self.mother
    }

    pub fn daughter(&self) -> Option<usize> {
        self.daughter
    }

    fn sort_key(&self) -> (usize, usize) {
        (
            self.mother.unwrap_or(usize::MAX),
            self.daughter.unwrap_or(usize::MAX),
        )
    }
}

// ⊥ sorts after every real index.
impl Ord for Edge {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mother {
            Some(i) => write!(f, "{i}")?,
            None => f.write_str("_")?,
        }
        f.write_str("->")?;
        match self.daughter {
            Some(j) => write!(f, "{j}"),
            None => f.write_str("_"),
        }
    }
}

/// A set of edges between a source frame of `source_size` mothers and a
/// target frame of `target_size` daughters.
///
/// Construction does not check feasibility; see [`is_feasible`]. Ordering is
/// lexicographic over the sorted edges and is used as the deterministic
/// tie-break between equally scored assignments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    edges: BTreeSet<Edge>,
    source_size: usize,
    target_size: usize,
}

impl Assignment {
    pub fn new(source_size: usize, target_size: usize, edges: impl IntoIterator<Item = Edge>) -> Self {
        Self {
            edges: edges.into_iter().collect(),
            source_size,
            target_size,
        }
    }

    /// Builds the assignment in which daughter `j` descends from `parents[j]`.
    /// Mothers without any daughter disappear.
    pub fn from_parents(source_size: usize, parents: &[Option<usize>]) -> Result<Self> {
        let mut has_child = vec![false; source_size];
        let mut edges = BTreeSet::new();
        for (j, parent) in parents.iter().enumerate() {
            match *parent {
                Some(i) if i >= source_size => {
                    return Err(Error::Structural(format!(
                        "mother index {i} out of range for {source_size} mothers"
                    )))
                }
                Some(i) => {
                    has_child[i] = true;
                    edges.insert(Edge::link(i, j));
                }
                None => {
                    edges.insert(Edge::appear(j));
                }
            }
        }
        for (i, _) in has_child.iter().enumerate().filter(|(_, &c)| !c) {
            edges.insert(Edge::disappear(i));
        }
        Ok(Self {
            edges,
            source_size,
            target_size: parents.len(),
        })
    }

    pub fn empty() -> Self {
        Self::new(0, 0, [])
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    /// Real mother→daughter links as `(mother, daughter)`.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .filter_map(|e| Some((e.mother?, e.daughter?)))
    }

    /// Number of `⊥->j` edges.
    pub fn appearing(&self) -> usize {
        self.edges.iter().filter(|e| e.mother.is_none()).count()
    }

    /// Number of `i->⊥` edges.
    pub fn disappearing(&self) -> usize {
        self.edges.iter().filter(|e| e.daughter.is_none()).count()
    }

    /// Mother of every daughter (`None` = appears). Only meaningful for
    /// feasible assignments.
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.target_size];
        for (i, j) in self.links() {
            if j < parents.len() {
                parents[j] = Some(i);
            }
        }
        parents
    }

    /// Whitespace-separated `i->j`, `i->_`, `_->j` tokens in edge order.
    pub fn canonical_text(&self) -> String {
        let tokens: Vec<String> = self.edges.iter().map(Edge::to_string).collect();
        tokens.join(" ")
    }

    pub fn parse_canonical(source_size: usize, target_size: usize, text: &str) -> Result<Self> {
        let parse_side = |s: &str| -> Result<Option<usize>> {
            if s == "_" {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::Structural(format!("bad edge endpoint {s:?}")))
            }
        };
        let mut edges = Vec::new();
        for token in text.split_whitespace() {
            let (m, d) = token
                .split_once("->")
                .ok_or_else(|| Error::Structural(format!("bad edge token {token:?}")))?;
            edges.push(Edge::new(parse_side(m)?, parse_side(d)?)?);
        }
        Ok(Self::new(source_size, target_size, edges))
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

/// Checks biological feasibility: every daughter has exactly one edge, every
/// mother has at least one edge and at most two daughters, and a mother with a
/// daughter does not also disappear.
pub fn is_feasible(a: &Assignment) -> Result<bool> {
    let mut daughter_edges = vec![0usize; a.target_size];
    let mut mother_links = vec![0usize; a.source_size];
    let mut mother_gone = vec![false; a.source_size];
    for e in a.edges() {
        if let Some(i) = e.mother {
            if i >= a.source_size {
                return Err(Error::Structural(format!(
                    "mother index {i} out of range for {} mothers",
                    a.source_size
                )));
            }
        }
        if let Some(j) = e.daughter {
            if j >= a.target_size {
                return Err(Error::Structural(format!(
                    "daughter index {j} out of range for {} daughters",
                    a.target_size
                )));
            }
        }
        match (e.mother, e.daughter) {
            (Some(i), Some(j)) => {
                mother_links[i] += 1;
                daughter_edges[j] += 1;
            }
            (None, Some(j)) => daughter_edges[j] += 1,
            (Some(i), None) => mother_gone[i] = true,
            (None, None) => return Ok(false),
        }
    }
    let daughters_ok = daughter_edges.iter().all(|&c| c == 1);
    let mothers_ok = mother_links
        .iter()
        .zip(&mother_gone)
        .all(|(&links, &gone)| links <= 2 && (links > 0) != gone);
    Ok(daughters_ok && mothers_ok)
}

/// Size guard for exhaustive enumeration over all feasible assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimit {
    pub max_mothers: usize,
    pub max_daughters: usize,
}

impl Default for OracleLimit {
    fn default() -> Self {
        Self {
            max_mothers: 6,
            max_daughters: 6,
        }
    }
}

impl OracleLimit {
    pub fn check(&self, mothers: usize, daughters: usize) -> Result<()> {
        if mothers > self.max_mothers || daughters > self.max_daughters {
            return Err(Error::TooLarge {
                mothers,
                daughters,
                limit_mothers: self.max_mothers,
                limit_daughters: self.max_daughters,
            });
        }
        Ok(())
    }
}

/// Every feasible assignment between `m` mothers and `n` daughters, in
/// ascending [`Assignment`] order, under the default [`OracleLimit`].
pub fn enumerate_feasible(m: usize, n: usize) -> Result<impl Iterator<Item = Assignment>> {
    enumerate_feasible_with_limit(m, n, OracleLimit::default())
}

pub fn enumerate_feasible_with_limit(
    m: usize,
    n: usize,
    limit: OracleLimit,
) -> Result<impl Iterator<Item = Assignment>> {
    limit.check(m, n)?;
    let mut out = Vec::new();
    let mut parents = vec![None; n];
    let mut load = vec![0u8; m];
    collect_parent_maps(0, &mut parents, &mut load, &mut |p| {
        out.push(Assignment::from_parents(m, p).expect("indices in range"))
    });
    out.sort();
    Ok(out.into_iter())
}

fn collect_parent_maps(
    j: usize,
    parents: &mut [Option<usize>],
    load: &mut [u8],
    emit: &mut dyn FnMut(&[Option<usize>]),
) {
    if j == parents.len() {
        emit(parents);
        return;
    }
    parents[j] = None;
    collect_parent_maps(j + 1, parents, load, emit);
    for i in 0..load.len() {
        if load[i] < 2 {
            load[i] += 1;
            parents[j] = Some(i);
            collect_parent_maps(j + 1, parents, load, emit);
            load[i] -= 1;
        }
    }
    parents[j] = None;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityKind {
    /// Edge probabilities `P_ij`.
    Joint,
    /// Per-daughter mother distributions `P_{i|j}`.
    ColumnNormalized,
}

const PROB_SLACK: f64 = 1e-9;

/// Mother/daughter probabilities with an extra `⊥` row (last) holding each
/// daughter's appearance probability.
///
/// Joint matrices built from assignment distributions also carry the
/// per-mother disappearance probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilityMatrix {
    values: DMatrix<f64>,
    disappear: Option<Vec<f64>>,
    kind: ProbabilityKind,
}

impl EdgeProbabilityMatrix {
    /// `values` has one row per mother plus the trailing `⊥` row. Entries
    /// within rounding slack of `[0, 1]` are clamped.
    pub fn new(
        mut values: DMatrix<f64>,
        disappear: Option<Vec<f64>>,
        kind: ProbabilityKind,
    ) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Structural("probability matrix needs a ⊥ row".into()));
        }
        let mothers = values.nrows() - 1;
        for v in values.iter_mut() {
            if !(v.is_finite() && *v >= -PROB_SLACK && *v <= 1.0 + PROB_SLACK) {
                return Err(Error::Contract(format!("probability {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let disappear = match disappear {
            Some(mut d) => {
                if d.len() != mothers {
                    return Err(Error::Structural(format!(
                        "{} disappearance entries for {mothers} mothers",
                        d.len()
                    )));
                }
                for v in d.iter_mut() {
                    if !(v.is_finite() && *v >= -PROB_SLACK && *v <= 1.0 + PROB_SLACK) {
                        return Err(Error::Contract(format!("probability {v} outside [0, 1]")));
                    }
                    *v = v.clamp(0.0, 1.0);
                }
                Some(d)
            }
            None => None,
        };
        if kind == ProbabilityKind::ColumnNormalized {
            for (j, col) in values.column_iter().enumerate() {
                let s: f64 = col.iter().sum();
                if (s - 1.0).abs() > PROB_SLACK {
                    return Err(Error::Contract(format!(
                        "column {j} sums to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            disappear,
            kind,
        })
    }

    pub fn mothers(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn daughters(&self) -> usize {
        self.values.ncols()
    }

    pub fn kind(&self) -> ProbabilityKind {
        self.kind
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn disappear(&self) -> Option<&[f64]> {
        self.disappear.as_deref()
    }

    /// Probability that `mother` (or `⊥`) is the mother of `daughter`.
    pub fn get(&self, mother: Option<usize>, daughter: usize) -> f64 {
        let row = mother.unwrap_or(self.mothers());
        self.values[(row, daughter)]
    }

    pub fn appear(&self, daughter: usize) -> f64 {
        self.values[(self.mothers(), daughter)]
    }

    /// Column `j` including the trailing `⊥` entry.
    pub fn column(&self, daughter: usize) -> Vec<f64> {
        self.values.column(daughter).iter().copied().collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.values.column_iter().map(|c| c.sum()).collect()
    }

    /// Expected number of edges touching each mother: its link mass plus its
    /// disappearance mass when known.
    pub fn mother_mass(&self) -> Vec<f64> {
        (0..self.mothers())
            .map(|i| {
                let links: f64 = self.values.row(i).iter().sum();
                links + self.disappear.as_ref().map_or(0.0, |d| d[i])
            })
            .collect()
    }

    /// Largest entry-wise absolute difference, including disappearance mass
    /// when both sides carry it.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.values.shape(), other.values.shape());
        let mut d = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if let (Some(a), Some(b)) = (&self.disappear, &other.disappear) {
            d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(d, f64::max);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn parse(m: usize, n: usize, s: &str) -> Assignment {
        Assignment::parse_canonical(m, n, s).unwrap()
    }

    #[test]
    fn three_mothers_five_daughters_is_feasible() {
        // mother 0 divides, mother 1 divides, mother 2 has one daughter
        let a = parse(3, 5, "0->0 0->1 1->2 1->3 2->4");
        assert!(is_feasible(&a).unwrap());
    }

    #[test]
    fn three_daughters_for_one_mother_is_infeasible() {
        let a = parse(1, 3, "0->0 0->1 0->2");
        assert!(!is_feasible(&a).unwrap());
    }

    #[test]
    fn daughter_with_two_mothers_is_infeasible() {
        let a = parse(2, 1, "0->0 1->0");
        assert!(!is_feasible(&a).unwrap());
    }

    #[test]
    fn uncovered_daughter_or_mother_is_infeasible() {
        assert!(!is_feasible(&parse(1, 2, "0->0")).unwrap());
        assert!(!is_feasible(&parse(2, 1, "0->0")).unwrap());
        assert!(is_feasible(&parse(2, 1, "0->0 1->_")).unwrap());
    }

    #[test]
    fn linked_mother_cannot_also_disappear() {
        assert!(!is_feasible(&parse(1, 1, "0->0 0->_")).unwrap());
    }

    #[test]
    fn out_of_range_index_is_structural_error() {
        let a = parse(1, 1, "3->0");
        assert!(matches!(is_feasible(&a), Err(Error::Structural(_))));
    }

    #[test]
    fn bottom_to_bottom_edge_rejected() {
        assert!(Edge::new(None, None).is_err());
        assert!(Assignment::parse_canonical(1, 1, "_->_").is_err());
    }

    #[test]
    fn forced_enumerations() {
        let a: Vec<_> = enumerate_feasible(1, 0).unwrap().collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].canonical_text(), "0->_");

        let a: Vec<_> = enumerate_feasible(0, 1).unwrap().collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].canonical_text(), "_->0");

        let a: Vec<String> = enumerate_feasible(1, 1)
            .unwrap()
            .map(|a| a.canonical_text())
            .collect();
        assert_eq!(a, vec!["0->0", "0->_ _->0"]);
    }

    #[test]
    fn empty_instance_has_one_empty_assignment() {
        let a: Vec<_> = enumerate_feasible(0, 0).unwrap().collect();
        assert_eq!(a, vec![Assignment::empty()]);
    }

    #[test]
    fn enumeration_refuses_large_instances() {
        assert!(matches!(
            enumerate_feasible(7, 2).map(|_| ()),
            Err(Error::TooLarge { .. })
        ));
        let limit = OracleLimit {
            max_mothers: 7,
            max_daughters: 2,
        };
        assert!(enumerate_feasible_with_limit(7, 2, limit).is_ok());
    }

    /// Independent count: choose `a` mothers with one daughter and `b` with
    /// two, then distribute labelled daughters.
    fn count_feasible(m: u64, n: u64) -> u64 {
        fn fact(k: u64) -> u64 {
            (1..=k).product()
        }
        fn choose(n: u64, k: u64) -> u64 {
            if k > n {
                0
            } else {
                fact(n) / (fact(k) * fact(n - k))
            }
        }
        let mut total = 0;
        for a in 0..=m {
            for b in 0..=(m - a) {
                if a + 2 * b > n {
                    continue;
                }
                total += choose(m, a) * choose(m - a, b) * fact(n) / (fact(n - a - 2 * b) * 2u64.pow(b as u32));
            }
        }
        total
    }

    #[test]
    fn enumeration_matches_independent_count() {
        assert_eq!(count_feasible(2, 2), 9);
        assert_eq!(enumerate_feasible(2, 2).unwrap().count(), 9);
        for m in 0..=4 {
            for n in 0..=4 {
                let all: Vec<_> = enumerate_feasible(m, n).unwrap().collect();
                assert_eq!(all.len() as u64, count_feasible(m as u64, n as u64), "m={m} n={n}");
                let distinct: HashSet<String> = all.iter().map(|a| a.canonical_text()).collect();
                assert_eq!(distinct.len(), all.len());
                assert!(all.iter().all(|a| is_feasible(a).unwrap()));
                assert!(all.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn feasible_set_grows_at_least_factorially() {
        for n in 1..=5usize {
            let count = enumerate_feasible(n, n).unwrap().count();
            let nfact: usize = (1..=n).product();
            assert!(count >= nfact, "n={n}: {count} < {nfact}");
        }
    }

    #[test]
    fn canonical_text_is_order_independent() {
        let a = Assignment::new(2, 2, [Edge::link(1, 0), Edge::appear(1), Edge::disappear(0)]);
        let b = Assignment::new(2, 2, [Edge::disappear(0), Edge::link(1, 0), Edge::appear(1)]);
        assert_eq!(a, b);
        assert_eq!(a.canonical_text(), "0->_ 1->0 _->1");
        assert_eq!(parse(2, 2, &a.canonical_text()), a);
    }

    #[test]
    fn column_normalized_matrix_checks_sums() {
        let ok = DMatrix::from_row_slice(2, 1, &[0.25, 0.75]);
        assert!(EdgeProbabilityMatrix::new(ok, None, ProbabilityKind::ColumnNormalized).is_ok());
        let bad = DMatrix::from_row_slice(2, 1, &[0.25, 0.5]);
        assert!(EdgeProbabilityMatrix::new(bad, None, ProbabilityKind::ColumnNormalized).is_err());
        let neg = DMatrix::from_row_slice(2, 1, &[-0.1, 1.1]);
        assert!(EdgeProbabilityMatrix::new(neg, None, ProbabilityKind::Joint).is_err());
    }

    #[test]
    fn mask_geometry() {
        let m = Mask::new([(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(m.centroid(), Some([0.5, 0.5]));
        let d = Detection::from_mask(4, m).unwrap();
        assert_eq!(d.area, 4);
        assert!(d.validate().is_ok());
        let mut bad = d.clone();
        bad.centroid = vec![3.0, 0.5];
        assert!(bad.validate().is_err());
        let mut bad = d;
        bad.area = 5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frame_rejects_duplicate_ids_and_bad_activity() {
        let dup = Frame::new(0, vec![Detection::point(1, [0.0, 0.0]), Detection::point(1, [1.0, 0.0])]);
        assert!(dup.is_err());
        let zero = Frame::new(0, vec![Detection::point(1, [0.0, 0.0]).with_activity(0.0)]);
        assert!(zero.is_err());
    }
}
