use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::bounds::{BoundFormula, BoundInputs};
use super::{parse_ratio, ratio_to_f64};
use crate::error::{Error, Result};
use crate::sampling::RngSeed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TestName {
    SingleTrajectory,
    Serial,
    TwoPath,
    Parallel,
    StarSplit,
    /// (ε,α) test over `m` trajectories of length `k`.
    Outlier,
    /// (ε,α) test over `m` trajectories of geometric length.
    GeometricOutlier,
    ProductSerial,
    ProductTwoPath,
    ProductUniformPivot,
}

impl TestName {
    pub fn bound_formula(self) -> BoundFormula {
        match self {
            TestName::SingleTrajectory => BoundFormula::SingleTrajectorySqrt2Eps,
            TestName::Serial => BoundFormula::SerialEps,
            TestName::TwoPath => BoundFormula::TwoPath2Eps,
            TestName::Parallel => BoundFormula::ParallelEps,
            TestName::StarSplit => BoundFormula::StarSplitEps,
            TestName::Outlier => BoundFormula::MultiTrajectoryBinomialTail,
            TestName::GeometricOutlier => BoundFormula::GeometricBinomialTail,
            TestName::ProductSerial => BoundFormula::ProductSerialEps,
            TestName::ProductTwoPath => BoundFormula::ProductTwoPath2dEps,
            TestName::ProductUniformPivot => BoundFormula::ProductUniformPivotBinomialTail,
        }
    }
}

/// Inputs fixed before sampling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TestParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tuple: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Nominal ε to check the observation against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Observed {
    pub pivot_label: f64,
    /// `count/total` for the statistic the bound uses (ε_(t) for (ε,α) tests).
    pub epsilon: String,
    /// Per-trajectory `count/total`, in trajectory order.
    pub epsilon_list: Vec<String>,
    /// Trajectories counted by the (ε,α) tests; equal to `t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized_lengths: Option<Vec<usize>>,
    /// Split points or pivot positions, in sample order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_points: Option<Vec<usize>>,
}

/// Outcome against the nominal ε from [`TestParams::epsilon`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NominalCheck {
    pub epsilon: f64,
    pub is_outlier: bool,
    /// The bound evaluated at the nominal ε.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SignificanceReport {
    pub test: TestName,
    pub params: TestParams,
    pub seed: RngSeed,
    /// Integer encoding of the pivot, one entry per component.
    pub sigma0: Vec<Vec<u64>>,
    pub observed: Observed,
    pub p_value: f64,
    pub bound_formula: BoundFormula,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chernoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<NominalCheck>,
    /// Indices of geometric trajectories cut at the length cap.
    #[serde(default)]
    pub truncation_flags: Vec<usize>,
}

impl SignificanceReport {
    pub fn bound_inputs(&self) -> Result<BoundInputs> {
        Ok(BoundInputs {
            epsilon: ratio_to_f64(parse_ratio(&self.observed.epsilon)?),
            alpha: self.params.alpha,
            m: self.params.m,
            t: self.params.t,
            d: self.params.d,
        })
    }

    /// Re-evaluates `bound_formula` on the recorded inputs.
    pub fn recompute_p(&self) -> Result<f64> {
        self.bound_formula.evaluate(&self.bound_inputs()?)
    }

    /// Checks the invariants a stored report must satisfy.
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_value) {
            return Err(Error::InvalidParameter { name: "p_value", reason: format!("{} is outside [0, 1]", self.p_value) });
        }
        if self.bound_formula != self.test.bound_formula() {
            return Err(Error::InvalidParameter {
                name: "bound_formula",
                reason: format!("{:?} does not belong to test {:?}", self.bound_formula, self.test),
            });
        }
        let recomputed = self.recompute_p()?;
        if recomputed.to_bits() != self.p_value.to_bits() {
            return Err(Error::InvalidParameter {
                name: "p_value",
                reason: format!("recorded {} but the formula gives {recomputed}", self.p_value),
            });
        }
        for e in &self.observed.epsilon_list {
            parse_ratio(e)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports always serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
