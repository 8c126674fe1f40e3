//! Link costs `w(x_i, x_j')` and the appear/disappear costs that together
//! define the log-likelihood of an assignment.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{is_feasible, Assignment, Detection, Frame};

pub const DEFAULT_APPEAR_COST: f64 = 10.0;
pub const DEFAULT_DISAPPEAR_COST: f64 = 10.0;

/// Precision `λ` of the Brownian displacement model `x' ~ N(x, λ⁻¹I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianParams {
    lambda: f64,
}

impl BrownianParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Configuration(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for BrownianParams {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

fn squared_distance(a: &Detection, b: &Detection) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Structural(format!(
            "centroid dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.centroid
        .iter()
        .zip(&b.centroid)
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// `(λ/2)·‖a − b‖²`
pub fn l2_cost(a: &Detection, b: &Detection, p: BrownianParams) -> Result<f64> {
    Ok(0.5 * p.lambda * squared_distance(a, b)?)
}

/// `(λ/(2α))·‖a − b‖²` with `α` the mother's activity.
pub fn activity_cost(a: &Detection, b: &Detection, p: BrownianParams) -> Result<f64> {
    let alpha = match a.activity {
        Some(alpha) if alpha > 0.0 && alpha.is_finite() => alpha,
        Some(alpha) => {
            return Err(Error::Configuration(format!(
                "detection {} has invalid activity {alpha}",
                a.id
            )))
        }
        None => {
            return Err(Error::Configuration(format!(
                "detection {} has no activity value",
                a.id
            )))
        }
    };
    Ok(0.5 * p.lambda / alpha * squared_distance(a, b)?)
}

/// Negative number of shared mask pixels.
pub fn overlap_cost(a: &Detection, b: &Detection) -> Result<f64> {
    match (&a.mask, &b.mask) {
        (Some(ma), Some(mb)) => Ok(-(ma.intersection_len(mb) as f64)),
        _ => Err(Error::Configuration(format!(
            "overlap cost needs masks on detections {} and {}",
            a.id, b.id
        ))),
    }
}

/// A pluggable link cost. `f64::INFINITY` marks a forbidden link.
pub trait LinkCost: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn cost(&self, mother: &Detection, daughter: &Detection) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct L2Cost(pub BrownianParams);

impl LinkCost for L2Cost {
    fn name(&self) -> &str {
        "l2"
    }

    fn cost(&self, mother: &Detection, daughter: &Detection) -> Result<f64> {
        l2_cost(mother, daughter, self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ActivityCost(pub BrownianParams);

impl LinkCost for ActivityCost {
    fn name(&self) -> &str {
        "activity"
    }

    fn cost(&self, mother: &Detection, daughter: &Detection) -> Result<f64> {
        activity_cost(mother, daughter, self.0)
    }
}

/// Overlap cost. With `gate` set, disjoint masks are forbidden links;
/// otherwise they cost 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapCost {
    pub gate: bool,
}

impl LinkCost for OverlapCost {
    fn name(&self) -> &str {
        "overlap"
    }

    fn cost(&self, mother: &Detection, daughter: &Detection) -> Result<f64> {
        let c = overlap_cost(mother, daughter)?;
        if self.gate && c == 0.0 {
            Ok(f64::INFINITY)
        } else {
            Ok(c)
        }
    }
}

/// Costs looked up by `(mother id, daughter id)` for one fixed frame pair.
#[derive(Debug, Clone)]
pub struct TabulatedCost {
    name: String,
    table: HashMap<(u32, u32), f64>,
}

impl TabulatedCost {
    pub fn new(name: impl Into<String>, table: HashMap<(u32, u32), f64>) -> Self {
        Self {
            name: name.into(),
            table,
        }
    }

    /// Tabulates `costs[(i, j)]` for the detections of `src` and `tgt`.
    pub fn from_matrix(name: impl Into<String>, src: &Frame, tgt: &Frame, costs: &DMatrix<f64>) -> Result<Self> {
        if costs.shape() != (src.len(), tgt.len()) {
            return Err(Error::Structural(format!(
                "cost matrix is {:?}, frames are {}x{}",
                costs.shape(),
                src.len(),
                tgt.len()
            )));
        }
        let mut table = HashMap::with_capacity(src.len() * tgt.len());
        for (i, a) in src.detections.iter().enumerate() {
            for (j, b) in tgt.detections.iter().enumerate() {
                table.insert((a.id, b.id), costs[(i, j)]);
            }
        }
        Ok(Self::new(name, table))
    }
}

impl LinkCost for TabulatedCost {
    fn name(&self) -> &str {
        &self.name
    }

    fn cost(&self, mother: &Detection, daughter: &Detection) -> Result<f64> {
        self.table
            .get(&(mother.id, daughter.id))
            .copied()
            .ok_or_else(|| {
                Error::Structural(format!(
                    "no tabulated cost for {} -> {}",
                    mother.id, daughter.id
                ))
            })
    }
}

/// Link cost plus the costs `w_a` of an appearing daughter and `w_d` of a
/// disappearing mother.
#[derive(Debug, Clone)]
pub struct CostModel {
    link: Arc<dyn LinkCost>,
    appear_cost: f64,
    disappear_cost: f64,
}

impl CostModel {
    pub fn new(link: Arc<dyn LinkCost>, appear_cost: f64, disappear_cost: f64) -> Result<Self> {
        for (what, v) in [("appear", appear_cost), ("disappear", disappear_cost)] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Configuration(format!("{what} cost must be >= 0, got {v}")));
            }
        }
        Ok(Self {
            link,
            appear_cost,
            disappear_cost,
        })
    }

    pub fn l2(lambda: f64) -> Result<Self> {
        Self::new(
            Arc::new(L2Cost(BrownianParams::new(lambda)?)),
            DEFAULT_APPEAR_COST,
            DEFAULT_DISAPPEAR_COST,
        )
    }

    pub fn activity(lambda: f64) -> Result<Self> {
        Self::new(
            Arc::new(ActivityCost(BrownianParams::new(lambda)?)),
            DEFAULT_APPEAR_COST,
            DEFAULT_DISAPPEAR_COST,
        )
    }

    pub fn overlap(gate: bool) -> Result<Self> {
        Self::new(
            Arc::new(OverlapCost { gate }),
            DEFAULT_APPEAR_COST,
            DEFAULT_DISAPPEAR_COST,
        )
    }

    /// Looks up `"l2" | "activity" | "overlap"`.
    pub fn by_name(name: &str, lambda: f64, appear_cost: f64, disappear_cost: f64) -> Result<Self> {
        let link: Arc<dyn LinkCost> = match name {
            "l2" => Arc::new(L2Cost(BrownianParams::new(lambda)?)),
            "activity" => Arc::new(ActivityCost(BrownianParams::new(lambda)?)),
            "overlap" => Arc::new(OverlapCost { gate: false }),
            "overlap-gated" => Arc::new(OverlapCost { gate: true }),
            other => return Err(Error::Configuration(format!("unknown cost model {other:?}"))),
        };
        Self::new(link, appear_cost, disappear_cost)
    }

    pub fn with_event_costs(mut self, appear_cost: f64, disappear_cost: f64) -> Result<Self> {
        let checked = Self::new(self.link.clone(), appear_cost, disappear_cost)?;
        self.appear_cost = checked.appear_cost;
        self.disappear_cost = checked.disappear_cost;
        Ok(self)
    }

    /// Same event costs, different link cost.
    pub fn with_link(&self, link: Arc<dyn LinkCost>) -> Self {
        Self {
            link,
            appear_cost: self.appear_cost,
            disappear_cost: self.disappear_cost,
        }
    }

    pub fn name(&self) -> &str {
        self.link.name()
    }

    pub fn appear_cost(&self) -> f64 {
        self.appear_cost
    }

    pub fn disappear_cost(&self) -> f64 {
        self.disappear_cost
    }

    pub fn link_cost(&self, mother: &Detection, daughter: &Detection) -> Result<f64> {
        let c = self.link.cost(mother, daughter)?;
        if c.is_nan() || c == f64::NEG_INFINITY {
            return Err(Error::Contract(format!(
                "cost {} for {} -> {} is not a valid cost",
                c, mother.id, daughter.id
            )));
        }
        Ok(c)
    }

    /// `|src| x |tgt|` matrix of link costs.
    pub fn cost_matrix(&self, src: &Frame, tgt: &Frame) -> Result<DMatrix<f64>> {
        let mut costs = DMatrix::zeros(src.len(), tgt.len());
        for (i, a) in src.detections.iter().enumerate() {
            for (j, b) in tgt.detections.iter().enumerate() {
                costs[(i, j)] = self.link_cost(a, b)?;
            }
        }
        Ok(costs)
    }

    /// Log-likelihood of a feasible assignment given its precomputed link
    /// cost matrix. Edges are summed in canonical order.
    pub fn score(&self, a: &Assignment, costs: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for e in a.edges() {
            total -= match (e.mother(), e.daughter()) {
                (Some(i), Some(j)) => costs[(i, j)],
                (None, Some(_)) => self.appear_cost,
                (Some(_), None) => self.disappear_cost,
                (None, None) => unreachable!("⊥->⊥ edges cannot be constructed"),
            };
        }
        total
    }
}

/// `Σ −w(x_i, x_j') − m·w_a − n·w_d` over the edges of `a`, with `m` appearing
/// daughters and `n` disappearing mothers. Forbidden links give `-∞`.
pub fn joint_log_likelihood(src: &Frame, tgt: &Frame, a: &Assignment, cm: &CostModel) -> Result<f64> {
    if a.source_size() != src.len() || a.target_size() != tgt.len() {
        return Err(Error::Structural(format!(
            "assignment is {}x{}, frames are {}x{}",
            a.source_size(),
            a.target_size(),
            src.len(),
            tgt.len()
        )));
    }
    if !is_feasible(a)? {
        return Err(Error::Contract(format!("assignment {a} is not feasible")));
    }
    let costs = cm.cost_matrix(src, tgt)?;
    Ok(cm.score(a, &costs))
}
