//! MAP assignment and top-K assignments for a frame pair.
//!
//! Divisions are handled by giving every mother two rows in a square LAP.
//! The first copy pays `w_d` when it goes unused, the second copy is free, so
//! a mother with no daughter pays `w_d` exactly once. Each daughter owns an
//! appear row that either takes the daughter (paying `w_a`) or fills one of
//! the idle disappear columns at zero cost.
//!
//! Top-K uses Murty's partitioning over each daughter's mother choice, so the
//! partitions are over decoded assignments rather than raw matchings and
//! mother-copy permutations never produce duplicates.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::costs::CostModel;
use crate::error::{Error, Result};
use crate::lap;
use crate::model::{Assignment, Frame};

/// Stand-in for forbidden (infinite) costs inside the LAP.
pub const BIG: f64 = 1e15;

/// Extra Murty pops allowed past the k-th solution to collect equal scores.
const TIE_EXTENSION: usize = 256;
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSlot {
    MotherCopy { mother: usize, copy: u8 },
    Appear { daughter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColSlot {
    Daughter(usize),
    Disappear { mother: usize, copy: u8 },
}

/// Square cost matrix of size `2·|mothers| + |daughters|` with the meaning
/// of every row and column.
#[derive(Debug, Clone)]
pub struct LapEncoding {
    pub cost_matrix: DMatrix<f64>,
    pub rows: Vec<RowSlot>,
    pub cols: Vec<ColSlot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSolution {
    pub assignment: Assignment,
    pub log_score: f64,
    pub rank: usize,
}

/// Allowed mothers per daughter during Murty partitioning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct DaughterConstraint {
    required: Option<Option<usize>>,
    forbidden: BTreeSet<Option<usize>>,
}

impl DaughterConstraint {
    fn allows(&self, mother: Option<usize>) -> bool {
        match self.required {
            Some(req) => req == mother,
            None => !self.forbidden.contains(&mother),
        }
    }
}

fn clamp_big(c: f64) -> f64 {
    if c.is_finite() {
        c.min(BIG)
    } else {
        BIG
    }
}

/// Builds the augmented LAP from a link cost matrix (`mothers x daughters`).
pub fn encode_costs(costs: &DMatrix<f64>, appear_cost: f64, disappear_cost: f64) -> LapEncoding {
    encode_constrained(costs, appear_cost, disappear_cost, &[])
}

fn encode_constrained(
    costs: &DMatrix<f64>,
    appear_cost: f64,
    disappear_cost: f64,
    constraints: &[DaughterConstraint],
) -> LapEncoding {
    let (m, n) = costs.shape();
    let size = 2 * m + n;
    let mut rows = Vec::with_capacity(size);
    for mother in 0..m {
        rows.push(RowSlot::MotherCopy { mother, copy: 0 });
        rows.push(RowSlot::MotherCopy { mother, copy: 1 });
    }
    rows.extend((0..n).map(|daughter| RowSlot::Appear { daughter }));
    let mut cols: Vec<ColSlot> = (0..n).map(ColSlot::Daughter).collect();
    for mother in 0..m {
        cols.push(ColSlot::Disappear { mother, copy: 0 });
        cols.push(ColSlot::Disappear { mother, copy: 1 });
    }

    let allowed = |j: usize, mother: Option<usize>| constraints.get(j).is_none_or(|c| c.allows(mother));
    let mut matrix = DMatrix::from_element(size, size, BIG);
    for (r, row) in rows.iter().enumerate() {
        for (c, col) in cols.iter().enumerate() {
            matrix[(r, c)] = match (*row, *col) {
                (RowSlot::MotherCopy { mother, .. }, ColSlot::Daughter(j)) => {
                    if allowed(j, Some(mother)) {
                        clamp_big(costs[(mother, j)])
                    } else {
                        BIG
                    }
                }
                (RowSlot::MotherCopy { mother, copy }, ColSlot::Disappear { mother: dm, copy: dc }) => {
                    if mother == dm && copy == dc {
                        if copy == 0 {
                            clamp_big(disappear_cost)
                        } else {
                            0.0
                        }
                    } else {
                        BIG
                    }
                }
                (RowSlot::Appear { daughter }, ColSlot::Daughter(j)) => {
                    if daughter == j && allowed(j, None) {
                        clamp_big(appear_cost)
                    } else {
                        BIG
                    }
                }
                (RowSlot::Appear { .. }, ColSlot::Disappear { .. }) => 0.0,
            };
        }
    }
    LapEncoding {
        cost_matrix: matrix,
        rows,
        cols,
    }
}

/// Builds the augmented LAP for a frame pair.
pub fn encode_lap(src: &Frame, tgt: &Frame, cm: &CostModel) -> Result<LapEncoding> {
    let costs = cm.cost_matrix(src, tgt)?;
    Ok(encode_costs(&costs, cm.appear_cost(), cm.disappear_cost()))
}

impl LapEncoding {
    pub fn mothers(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r, RowSlot::MotherCopy { .. }))
            .count()
            / 2
    }

    pub fn daughters(&self) -> usize {
        self.rows.len() - 2 * self.mothers()
    }

    /// Decodes a perfect matching (`row -> column`) into an assignment.
    /// Fails with [`Error::Infeasible`] if the matching uses a `BIG` cell.
    pub fn decode(&self, row_to_col: &[usize]) -> Result<Assignment> {
        if row_to_col.len() != self.rows.len() {
            return Err(Error::Structural(format!(
                "matching covers {} of {} rows",
                row_to_col.len(),
                self.rows.len()
            )));
        }
        let mut parents: Vec<Option<Option<usize>>> = vec![None; self.daughters()];
        for (r, &c) in row_to_col.iter().enumerate() {
            if self.cost_matrix[(r, c)] >= BIG {
                return Err(Error::Infeasible);
            }
            let mother = match (self.rows[r], self.cols[c]) {
                (RowSlot::MotherCopy { mother, .. }, ColSlot::Daughter(j)) => Some((Some(mother), j)),
                (RowSlot::Appear { .. }, ColSlot::Daughter(j)) => Some((None, j)),
                _ => None,
            };
            if let Some((mother, j)) = mother {
                if parents[j].replace(mother).is_some() {
                    return Err(Error::Structural(format!("daughter {j} matched twice")));
                }
            }
        }
        let parents: Vec<Option<usize>> = parents
            .into_iter()
            .enumerate()
            .map(|(j, p)| p.ok_or_else(|| Error::Structural(format!("daughter {j} unmatched"))))
            .collect::<Result<_>>()?;
        Assignment::from_parents(self.mothers(), &parents)
    }

    fn solve(&self) -> Result<Assignment> {
        let matching = lap::solve(&self.cost_matrix);
        self.decode(&matching)
    }
}

/// Precomputed link costs and event costs for one frame pair.
struct Problem<'a> {
    costs: &'a DMatrix<f64>,
    cm: &'a CostModel,
}

impl Problem<'_> {
    fn solve(&self, constraints: &[DaughterConstraint]) -> Result<RankedSolution> {
        let enc = encode_constrained(self.costs, self.cm.appear_cost(), self.cm.disappear_cost(), constraints);
        let assignment = enc.solve()?;
        let log_score = self.cm.score(&assignment, self.costs);
        Ok(RankedSolution {
            assignment,
            log_score,
            rank: 1,
        })
    }
}

/// MAP assignment from a link cost matrix.
pub fn solve_map_costs(costs: &DMatrix<f64>, cm: &CostModel) -> Result<RankedSolution> {
    Problem { costs, cm }.solve(&[])
}

/// Assignment maximizing the joint log-likelihood over all feasible
/// assignments of the frame pair.
pub fn solve_map(src: &Frame, tgt: &Frame, cm: &CostModel) -> Result<RankedSolution> {
    let costs = cm.cost_matrix(src, tgt)?;
    solve_map_costs(&costs, cm)
}

struct Candidate {
    solution: RankedSolution,
    constraints: Vec<DaughterConstraint>,
}

impl Candidate {
    // best score first, then lower canonical order
    fn priority(&self, other: &Self) -> Ordering {
        self.solution
            .log_score
            .total_cmp(&other.solution.log_score)
            .then_with(|| other.solution.assignment.cmp(&self.solution.assignment))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.priority(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority(other)
    }
}

/// The `k` highest-scoring feasible assignments from a link cost matrix.
pub fn top_k_costs(costs: &DMatrix<f64>, cm: &CostModel, k: usize) -> Result<Vec<RankedSolution>> {
    if k == 0 {
        return Err(Error::Contract("top_k needs k >= 1".into()));
    }
    let problem = Problem { costs, cm };
    let n = costs.ncols();
    let root_constraints = vec![DaughterConstraint::default(); n];
    let root = problem.solve(&root_constraints)?;

    let mut heap = BinaryHeap::new();
    heap.push(Candidate {
        solution: root,
        constraints: root_constraints,
    });
    let mut seen = HashSet::new();
    let mut found: Vec<RankedSolution> = Vec::new();
    let mut extension = 0;

    while let Some(best) = heap.pop() {
        if found.len() >= k {
            let kth = found[k - 1].log_score;
            if best.solution.log_score < kth - TIE_TOLERANCE || extension >= TIE_EXTENSION {
                break;
            }
            extension += 1;
        }
        if !seen.insert(best.solution.assignment.clone()) {
            continue;
        }
        let parents = best.solution.assignment.parents();
        // Child t: daughters before t keep this solution's mothers, daughter t
        // must pick a different one.
        let free: Vec<usize> = (0..n).filter(|&j| best.constraints[j].required.is_none()).collect();
        let children: Vec<Vec<DaughterConstraint>> = free
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                let mut c = best.constraints.clone();
                for &u in &free[..pos] {
                    c[u].required = Some(parents[u]);
                }
                c[t].forbidden.insert(parents[t]);
                c
            })
            .collect();
        let solved: Vec<Option<Candidate>> = children
            .into_par_iter()
            .map(|constraints| match problem.solve(&constraints) {
                Ok(solution) => Ok(Some(Candidate {
                    solution,
                    constraints,
                })),
                Err(Error::Infeasible) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        heap.extend(solved.into_iter().flatten());
        found.push(best.solution);
    }

    found.sort_by(|a, b| {
        b.log_score
            .total_cmp(&a.log_score)
            .then_with(|| a.assignment.cmp(&b.assignment))
    });
    found.truncate(k);
    for (rank, s) in found.iter_mut().enumerate() {
        s.rank = rank + 1;
    }
    Ok(found)
}

/// The `min(k, |𝔸|)` highest-scoring distinct feasible assignments, best
/// first. Equal scores are ordered by canonical assignment order.
pub fn top_k(src: &Frame, tgt: &Frame, cm: &CostModel, k: usize) -> Result<Vec<RankedSolution>> {
    let costs = cm.cost_matrix(src, tgt)?;
    top_k_costs(&costs, cm, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::joint_log_likelihood;
    use crate::model::{enumerate_feasible, is_feasible, Detection};
    use crate::synthetic;

    fn frame(t: usize, pts: &[[f64; 2]]) -> Frame {
        Frame::new(
            t,
            pts.iter()
                .enumerate()
                .map(|(i, p)| Detection::point(i as u32, *p))
                .collect(),
        )
        .unwrap()
    }

    fn l2(wa: f64, wd: f64) -> CostModel {
        CostModel::l2(1.0).unwrap().with_event_costs(wa, wd).unwrap()
    }

    #[test]
    fn encoding_dimensions() {
        let cm = l2(10.0, 10.0);
        let enc = encode_lap(&frame(0, &[[0.0, 0.0]]), &frame(1, &[[1.0, 0.0]]), &cm).unwrap();
        assert_eq!(enc.cost_matrix.shape(), (3, 3));
        let enc = encode_lap(&frame(0, &[[0.0, 0.0], [1.0, 1.0]]), &frame(1, &[[1.0, 0.0]]), &cm).unwrap();
        assert_eq!(enc.cost_matrix.shape(), (5, 5));
    }

    #[test]
    fn forced_appear_and_disappear() {
        let cm = l2(10.0, 10.0);
        let sol = solve_map(&Frame::default(), &frame(1, &[[0.0, 0.0]]), &cm).unwrap();
        assert_eq!(sol.assignment.canonical_text(), "_->0");
        assert_eq!(sol.log_score, -10.0);
        let sol = solve_map(&frame(0, &[[0.0, 0.0], [5.0, 5.0]]), &Frame::default(), &cm).unwrap();
        assert_eq!(sol.assignment.canonical_text(), "0->_ 1->_");
        assert_eq!(sol.log_score, -20.0);
    }

    #[test]
    fn empty_frames_give_empty_assignment() {
        let sol = solve_map(&Frame::default(), &Frame::default(), &l2(10.0, 10.0)).unwrap();
        assert!(sol.assignment.is_empty());
        assert_eq!(sol.log_score, 0.0);
    }

    #[test]
    fn two_separated_pairs_link_straight() {
        let src = frame(0, &[[0.0, 0.0], [10.0, 0.0]]);
        let tgt = frame(1, &[[0.0, 1.0], [10.0, 1.0]]);
        let sol = solve_map(&src, &tgt, &l2(50.0, 50.0)).unwrap();
        assert_eq!(sol.assignment.canonical_text(), "0->0 1->1");
    }

    #[test]
    fn close_pair_divides() {
        let src = frame(0, &[[0.0, 0.0]]);
        let tgt = frame(1, &[[1.0, 0.0], [-1.0, 0.0]]);
        let sol = solve_map(&src, &tgt, &l2(50.0, 50.0)).unwrap();
        assert_eq!(sol.assignment.canonical_text(), "0->0 0->1");
        assert_eq!(sol.log_score, -1.0);
    }

    #[test]
    fn map_score_is_the_joint_log_likelihood() {
        let (src, tgt, cm) = synthetic::two_interpretations();
        let sol = solve_map(&src, &tgt, &cm).unwrap();
        assert_eq!(sol.log_score, joint_log_likelihood(&src, &tgt, &sol.assignment, &cm).unwrap());
    }

    #[test]
    fn forbidden_links_are_never_chosen() {
        let mut costs = DMatrix::from_element(1, 1, f64::INFINITY);
        let cm = l2(3.0, 4.0);
        let sol = solve_map_costs(&costs, &cm).unwrap();
        assert_eq!(sol.assignment.canonical_text(), "0->_ _->0");
        assert_eq!(sol.log_score, -7.0);
        costs[(0, 0)] = 1.0;
        assert_eq!(solve_map_costs(&costs, &cm).unwrap().assignment.canonical_text(), "0->0");
    }

    #[test]
    fn every_matching_decodes_to_a_feasible_assignment() {
        // enumerate all permutations of a small encoding; finite-cost ones
        // must decode to feasible assignments covering all of 𝔸
        let costs = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let enc = encode_costs(&costs, 5.0, 6.0);
        let size = enc.rows.len();
        let mut perm: Vec<usize> = (0..size).collect();
        let mut decoded = HashSet::new();
        let mut matchings = 0usize;
        permutations(&mut perm, 0, &mut |p| {
            if let Ok(a) = enc.decode(p) {
                matchings += 1;
                assert!(is_feasible(&a).unwrap());
                decoded.insert(a);
            }
        });
        let all: HashSet<Assignment> = enumerate_feasible(2, 2).unwrap().collect();
        assert_eq!(decoded, all);
        assert!(matchings > all.len());
    }

    fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permutations(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn top_k_covers_all_solutions_in_score_order() {
        let src = frame(0, &[[0.0, 0.0], [2.0, 0.0]]);
        let tgt = frame(1, &[[0.5, 0.0], [2.5, 1.0]]);
        let cm = l2(2.0, 2.0);
        let all = top_k(&src, &tgt, &cm, 100).unwrap();
        assert_eq!(all.len(), 9);
        let mut oracle: Vec<f64> = enumerate_feasible(2, 2)
            .unwrap()
            .map(|a| joint_log_likelihood(&src, &tgt, &a, &cm).unwrap())
            .collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (s, o) in all.iter().zip(&oracle) {
            assert!((s.log_score - o).abs() < 1e-9);
        }
        assert_eq!(all.iter().map(|s| s.rank).collect::<Vec<_>>(), (1..=9).collect::<Vec<_>>());
        let one = top_k(&src, &tgt, &cm, 1).unwrap();
        assert_eq!(one[0].assignment, solve_map(&src, &tgt, &cm).unwrap().assignment);
    }

    #[test]
    fn top_two_are_the_two_interpretations() {
        let (src, tgt, cm) = synthetic::two_interpretations();
        let best = top_k(&src, &tgt, &cm, 2).unwrap();
        let texts: Vec<String> = best.iter().map(|s| s.assignment.canonical_text()).collect();
        assert_eq!(texts, vec!["0->0 0->2 1->1", "0->0 1->1 1->2"]);
        assert!(best[0].log_score > best[1].log_score);
    }

    #[test]
    fn k_zero_is_a_contract_violation() {
        assert!(matches!(
            top_k(&Frame::default(), &Frame::default(), &l2(1.0, 1.0), 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn ties_are_broken_by_canonical_order() {
        // mirror-symmetric: both single-division solutions score the same
        let src = frame(0, &[[-1.0, 0.0], [1.0, 0.0]]);
        let tgt = frame(1, &[[0.0, 0.0]]);
        let cm = l2(50.0, 0.0);
        let best = top_k(&src, &tgt, &cm, 2).unwrap();
        assert_eq!(best[0].log_score, best[1].log_score);
        assert!(best[0].assignment < best[1].assignment);
        let first = top_k(&src, &tgt, &cm, 1).unwrap();
        assert_eq!(first[0].assignment, best[0].assignment);
    }
}
