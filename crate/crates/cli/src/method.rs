//! The four probability estimators, each with an optional temperature.

use std::fmt;
use std::str::FromStr;

use trackuq_core::bayes::sni_edge_probabilities;
use trackuq_core::costs::CostModel;
use trackuq_core::dbmc::{apply_temperature, column_normalize, softmax_columns, Temperature};
use trackuq_core::model::{EdgeProbabilityMatrix, Frame};
use trackuq_core::perturb::{fp_assignment_ensemble, fp_mean_cost_matrix, NoiseSpec};
use trackuq_core::solver::top_k;

use crate::error::{CliError, Result};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    /// Softmax over the link costs.
    Sm,
    /// Softmax over the mean perturbed link costs.
    Fp,
    /// Edge frequencies over MAP solutions of perturbed features.
    FpA,
    /// Importance-weighted top-K assignments.
    As,
}

impl MethodKind {
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Sm => "SM",
            MethodKind::Fp => "FP",
            MethodKind::FpA => "FP+A",
            MethodKind::As => "AS",
        }
    }

    pub fn needs_noise(self) -> bool {
        matches!(self, MethodKind::Fp | MethodKind::FpA)
    }
}

/// A method name such as `AS` or `FP+A+TS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodName {
    pub kind: MethodKind,
    pub scaled: bool,
}

impl MethodName {
    pub fn base(self) -> MethodName {
        MethodName {
            scaled: false,
            ..self
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.label())?;
        if self.scaled {
            f.write_str("+TS")?;
        }
        Ok(())
    }
}

impl FromStr for MethodName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (rest, scaled) = match upper.strip_suffix("+TS") {
            Some(r) => (r, true),
            None => (upper.as_str(), false),
        };
        let kind = match rest {
            "SM" => MethodKind::Sm,
            "FP" => MethodKind::Fp,
            "FP+A" => MethodKind::FpA,
            "AS" => MethodKind::As,
            _ => return Err(CliError::Config(format!("unknown method {s:?} (SM, FP, FP+A, AS, optionally +TS)"))),
        };
        Ok(MethodName { kind, scaled })
    }
}

#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: MethodName,
    pub noise: Option<NoiseSpec>,
    pub k: usize,
    /// Add the implicit `⊥` class to softmax columns.
    pub parental: bool,
    pub tau: Option<Temperature>,
}

/// Probabilities of one method on one frame pair, before any temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    /// Posterior edge probabilities, for the sampling estimators.
    pub joint: Option<EdgeProbabilityMatrix>,
    pub conditional: EdgeProbabilityMatrix,
}

impl MethodSpec {
    pub fn new(name: MethodName) -> Self {
        Self {
            name,
            noise: None,
            k: DEFAULT_K,
            parental: false,
            tau: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.kind == MethodKind::As && self.k == 0 {
            return Err(CliError::Config("AS needs k >= 1".into()));
        }
        if self.name.kind.needs_noise() {
            match &self.noise {
                None => return Err(CliError::Config(format!("{} needs a noise model", self.name))),
                Some(n) => n.validate()?,
            }
        }
        Ok(())
    }

    fn noise(&self) -> Result<&NoiseSpec> {
        self.noise
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{} needs a noise model", self.name)))
    }

    /// Untempered probabilities for one frame pair.
    pub fn estimate(&self, src: &Frame, tgt: &Frame, cm: &CostModel) -> Result<MethodOutput> {
        let out = match self.name.kind {
            MethodKind::Sm => MethodOutput {
                joint: None,
                conditional: softmax_columns(&cm.cost_matrix(src, tgt)?, self.parental)?,
            },
            MethodKind::Fp => MethodOutput {
                joint: None,
                conditional: softmax_columns(&fp_mean_cost_matrix(src, tgt, cm, self.noise()?)?, self.parental)?,
            },
            MethodKind::FpA => {
                let joint = fp_assignment_ensemble(src, tgt, cm, self.noise()?)?;
                MethodOutput {
                    conditional: column_normalize(&joint)?,
                    joint: Some(joint),
                }
            }
            MethodKind::As => {
                let joint = sni_edge_probabilities(&top_k(src, tgt, cm, self.k)?)?;
                MethodOutput {
                    conditional: column_normalize(&joint)?,
                    joint: Some(joint),
                }
            }
        };
        Ok(out)
    }

    /// Applies the configured temperature when the method is `+TS`.
    pub fn finish(&self, conditional: &EdgeProbabilityMatrix) -> Result<EdgeProbabilityMatrix> {
        if !self.name.scaled {
            return Ok(conditional.clone());
        }
        let tau = self
            .tau
            .ok_or_else(|| CliError::Config(format!("{} needs a temperature", self.name)))?;
        Ok(apply_temperature(conditional, tau)?)
    }
}
