use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use super::OutlierObservation;
use crate::error::{invalid, Result};

/// The theorem a p-value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFormula {
    /// `min(1, sqrt(2 eps))`
    SingleTrajectorySqrt2Eps,
    /// `eps`
    SerialEps,
    /// `min(1, 2 eps)`
    TwoPath2Eps,
    /// `eps`
    ParallelEps,
    /// `eps`
    StarSplitEps,
    /// `binomial_tail(m, t, min(1, sqrt(2 eps / alpha)))`
    MultiTrajectoryBinomialTail,
    /// `binomial_tail(m, t, min(1, sqrt(eps / alpha)))`
    GeometricBinomialTail,
    /// `eps`
    ProductSerialEps,
    /// `min(1, 2^d eps)`
    ProductTwoPath2dEps,
    /// `binomial_tail(m, t, min(1, eps / alpha))`
    ProductUniformPivotBinomialTail,
}

/// Everything a [`BoundFormula`] may read.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub m: Option<usize>,
    pub t: Option<usize>,
    pub d: Option<usize>,
}

impl BoundInputs {
    pub fn epsilon(epsilon: f64) -> Self {
        BoundInputs { epsilon, ..Default::default() }
    }
}

impl BoundFormula {
    pub fn evaluate(self, inputs: &BoundInputs) -> Result<f64> {
        let eps = inputs.epsilon;
        if !(0.0..=1.0).contains(&eps) {
            return Err(invalid("epsilon", format!("must lie in [0, 1], got {eps}")));
        }
        let tail = |q: f64| -> Result<f64> {
            let (m, t) = multi_params(inputs)?;
            Ok(binomial_tail(m as u64, t as u64, q.min(1.0)))
        };
        Ok(match self {
            BoundFormula::SingleTrajectorySqrt2Eps => p_single_trajectory(eps),
            BoundFormula::SerialEps | BoundFormula::ParallelEps | BoundFormula::StarSplitEps | BoundFormula::ProductSerialEps => eps,
            BoundFormula::TwoPath2Eps => (2.0 * eps).min(1.0),
            BoundFormula::ProductTwoPath2dEps => {
                let d = inputs.d.ok_or_else(|| invalid("d", "required by the product two-path bound"))?;
                if d == 0 {
                    return Err(invalid("d", "need at least one component"));
                }
                (2f64.powi(d.min(2000) as i32) * eps).min(1.0)
            }
            BoundFormula::MultiTrajectoryBinomialTail => tail((2.0 * eps / alpha(inputs)?).sqrt())?,
            BoundFormula::GeometricBinomialTail => tail((eps / alpha(inputs)?).sqrt())?,
            BoundFormula::ProductUniformPivotBinomialTail => tail(eps / alpha(inputs)?)?,
        })
    }
}

fn alpha(inputs: &BoundInputs) -> Result<f64> {
    match inputs.alpha {
        Some(a) if a > 0.0 && a <= 1.0 => Ok(a),
        Some(a) => Err(invalid("alpha", format!("must lie in (0, 1], got {a}"))),
        None => Err(invalid("alpha", "required by this bound")),
    }
}

fn multi_params(inputs: &BoundInputs) -> Result<(usize, usize)> {
    let m = inputs.m.ok_or_else(|| invalid("m", "required by this bound"))?;
    let t = inputs.t.ok_or_else(|| invalid("t", "required by this bound"))?;
    if t == 0 || t > m {
        return Err(invalid("t", format!("need 1 <= t <= m, got t = {t}, m = {m}")));
    }
    Ok((m, t))
}

/// `min(1, sqrt(2 eps))`.
pub fn p_single_trajectory(epsilon: f64) -> f64 {
    (2.0 * epsilon).sqrt().min(1.0)
}

/// `eps` for serial-shaped observations.
pub fn p_serial(obs: &OutlierObservation) -> Result<f64> {
    obs.require_shape("serial")?;
    Ok(obs.epsilon())
}

/// `min(1, 2 eps)` over the `2k + 1` two-path labels.
pub fn p_two_paths(obs: &OutlierObservation) -> Result<f64> {
    obs.require_shape("two-path")?;
    Ok((2.0 * obs.epsilon()).min(1.0))
}

/// `eps` over `sigma0` and the branch endpoints.
pub fn p_parallel(obs: &OutlierObservation) -> Result<f64> {
    obs.require_shape("parallel")?;
    Ok(obs.epsilon())
}

/// `eps` over the `m k` star-split labels.
pub fn p_star_split(obs: &OutlierObservation) -> Result<f64> {
    obs.require_shape("star-split")?;
    Ok(obs.epsilon())
}

/// `sum_{j=k..m} C(m,j) q^j (1-q)^(m-j)`, accumulated in log space.
pub fn binomial_tail(m: u64, k: u64, q: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > m || q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    if k == m {
        return q.powf(m as f64);
    }
    let ln_q = q.ln();
    let ln_p = (-q).ln_1p();
    let term = |j: u64| ln_binomial(m, j) + j as f64 * ln_q + (m - j) as f64 * ln_p;
    // terms are unimodal in j with the mode near m q; each side is summed
    // around its own peak and the two are normalized against each other
    let mode = (m as f64 * q).floor() as u64;
    let log_sum = |lo: u64, hi: u64| {
        let top = mode.clamp(lo, hi);
        let peak = term(top);
        let mut sum = 0.0;
        for j in (lo..=top).rev() {
            let x = term(j) - peak;
            sum += x.exp();
            if x < -60.0 {
                break;
            }
        }
        for j in top + 1..=hi {
            let x = term(j) - peak;
            sum += x.exp();
            if x < -60.0 {
                break;
            }
        }
        peak + sum.ln()
    };
    let upper = log_sum(k, m);
    let lower = log_sum(0, k - 1);
    let ratio = lower - upper;
    if ratio > 0.0 {
        let e = (-ratio).exp();
        (e / (1.0 + e)).clamp(0.0, 1.0)
    } else {
        (1.0 / (1.0 + ratio.exp())).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ChernoffVariant {
    /// `exp(-min(r^2 sqrt(alpha / 2eps) / 3m, r / 3))`
    TwoPath,
    /// `exp(-min(r^2 sqrt(alpha / eps) / 3m, r / 3))`
    Geometric,
}

/// Chernoff form of the multi-trajectory tail.
pub fn chernoff_tail(m: usize, epsilon: f64, alpha: f64, r: f64, variant: ChernoffVariant) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", format!("the bound is vacuous unless r > 0, got {r}")));
    }
    if m == 0 {
        return Err(invalid("m", "need at least one trajectory"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    let c = match variant {
        ChernoffVariant::TwoPath => 2.0,
        ChernoffVariant::Geometric => 1.0,
    };
    let exponent = (r * r * (alpha / (c * epsilon)).sqrt() / (3.0 * m as f64)).min(r / 3.0);
    Ok((-exponent).exp().clamp(0.0, 1.0))
}

/// The `t`-th smallest entry (1-based). Lowering any entry never raises the
/// result, so hypotheses for a fixed `t` stay nested.
pub fn select_epsilon_t<T: Ord + Copy>(epsilons: &[T], t: usize) -> Result<T> {
    if t == 0 || t > epsilons.len() {
        return Err(invalid("t", format!("need 1 <= t <= {}, got {t}", epsilons.len())));
    }
    let mut sorted = epsilons.to_vec();
    sorted.sort_unstable();
    Ok(sorted[t - 1])
}
