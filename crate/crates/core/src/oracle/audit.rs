//! Exhaustive checks of the inequalities behind every bound, on one chain.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use super::{Epsilon, Oracle, ProbValue, TreeShape};
use crate::chain::format_rational;
use crate::error::Result;

/// Which inequality a check exercised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditCheck {
    /// `sum_j rho^k_{j,l} <= l + 1`.
    SumProperty,
    /// `rho^{2k}_{k,l} <= rho^k_{j,l}`.
    IntervalProperty,
    /// `p^{2k}_{k,eps} < 2 eps`.
    #[serde(rename = "two-path-below-2eps")]
    TwoPathBelow2Eps,
    /// `p^k_{0,eps} <= sqrt(2 eps)`.
    #[serde(rename = "single-trajectory-sqrt-2eps")]
    SingleTrajectorySqrt2Eps,
    /// Serial test with stationary start `<= eps`.
    SerialEps,
    /// `p^k_{0,eps}(sigma)^2 <= p^{2k}_{k,eps}(sigma)` for every state.
    KeyInequality,
    /// Certified non-(ε,α)-outliers satisfy `p^k_{0,eps}(sigma)^2 <= 2 eps / alpha`.
    #[serde(rename = "certified-sqrt-2eps-over-alpha")]
    CertifiedSqrt2EpsOverAlpha,
    /// `sum_{w in S} rho^{T,S}_{w,l} <= l + 1` on star-split trees.
    TreeSum,
    /// Parallel test with stationary start `<= eps`.
    ParallelEps,
    /// Star-split test with stationary start `<= eps`.
    StarSplitEps,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditViolation {
    pub check: AuditCheck,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    /// Trajectory lengths `0..=max_k`.
    pub max_k: usize,
    pub epsilons: Vec<Epsilon>,
    pub alphas: Vec<BigRational>,
    /// Star shapes with legs `1..=tree_max_k` and `1..=max_m` legs; 0 skips them.
    pub tree_max_k: usize,
    pub max_m: usize,
}

impl AuditConfig {
    pub fn new(max_k: usize) -> Self {
        AuditConfig {
            max_k,
            epsilons: default_epsilon_grid(max_k),
            alphas: [(1, 1), (1, 2), (1, 4), (1, 10)].iter().map(|&(p, q)| BigRational::new(BigInt::from(p), BigInt::from(q))).collect(),
            tree_max_k: 0,
            max_m: 0,
        }
    }

    pub fn with_trees(mut self, tree_max_k: usize, max_m: usize) -> Self {
        self.tree_max_k = tree_max_k;
        self.max_m = max_m;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub exact: bool,
    pub checks: BTreeMap<AuditCheck, u64>,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total_checks(&self) -> u64 {
        self.checks.values().sum()
    }

    pub fn merge(&mut self, other: AuditReport) {
        self.exact &= other.exact;
        for (c, n) in other.checks {
            *self.checks.entry(c).or_default() += n;
        }
        self.violations.extend(other.violations);
    }
}

/// `2^-1..2^-10` together with every `c/(k+1)` and `c/(2k+1)` for `k <= max_k`,
/// so each distinct `floor(eps n)` is hit.
pub fn default_epsilon_grid(max_k: usize) -> Vec<Epsilon> {
    let mut grid = Vec::new();
    for e in 1..=10u32 {
        grid.push(BigRational::new(BigInt::one(), BigInt::from(2u64.pow(e))));
    }
    for k in 0..=max_k as u64 {
        for n in [k + 1, 2 * k + 1] {
            for c in 1..=n {
                grid.push(BigRational::new(c.into(), n.into()));
            }
        }
    }
    grid.sort();
    grid.dedup();
    grid.into_iter().map(|e| Epsilon::new(e).expect("grid lies in (0, 1]")).collect()
}

struct Recorder {
    report: AuditReport,
}

impl Recorder {
    fn check(&mut self, check: AuditCheck, holds: bool, site: Site, lhs: &dyn std::fmt::Display, rhs: &dyn std::fmt::Display) {
        *self.report.checks.entry(check).or_default() += 1;
        if !holds {
            self.report.violations.push(AuditViolation {
                check,
                k: site.k,
                m: site.m,
                index: site.index,
                epsilon: site.eps.map(ToString::to_string),
                alpha: site.alpha.map(format_rational),
                lhs: lhs.to_string(),
                rhs: rhs.to_string(),
            });
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Site<'a> {
    k: usize,
    m: Option<usize>,
    index: Option<usize>,
    eps: Option<&'a Epsilon>,
    alpha: Option<&'a BigRational>,
}

fn exact(r: BigRational) -> ProbValue {
    ProbValue::Exact(r)
}

fn int(n: usize) -> ProbValue {
    exact(BigRational::from_integer(n.into()))
}

/// Runs every check on `oracle`'s chain. On floating chains a check fails
/// only when the violation exceeds the error bound.
pub fn audit_chain(oracle: &Oracle, config: &AuditConfig) -> Result<AuditReport> {
    let mut rec = Recorder { report: AuditReport { exact: oracle.is_exact(), checks: BTreeMap::new(), violations: Vec::new() } };
    let n = oracle.n_states();
    let pi = oracle.stationary();
    let two = BigRational::from_integer(2.into());
    for k in 0..=config.max_k {
        let table = oracle.walk_table(2 * k, 2 * k)?;
        let site = Site { k, ..Site::default() };
        for l in 0..=k {
            let rhs = int(l + 1);
            let sum = table.rho_sum(k, l);
            rec.check(AuditCheck::SumProperty, sum.le(&rhs), Site { index: Some(l), ..site }, &sum, &rhs);
            let middle = table.rho(2 * k, k, l);
            for j in 0..=k {
                let r = table.rho(k, j, l);
                rec.check(AuditCheck::IntervalProperty, middle.le(&r), Site { index: Some(j), ..site }, &middle, &r);
            }
        }
        for eps in &config.epsilons {
            let site = Site { eps: Some(eps), ..site };
            let two_eps = eps.value() * &two;
            let (l1, l2) = (eps.ell(k as u64 + 1), eps.ell(2 * k as u64 + 1));
            let two_path = l2.map_or_else(ProbValue::zero, |l| table.rho(2 * k, k, l));
            rec.check(AuditCheck::TwoPathBelow2Eps, two_path.lt(&exact(two_eps.clone())), site, &two_path, &format_rational(&two_eps));
            let single = l1.map_or_else(ProbValue::zero, |l| table.rho(k, 0, l));
            rec.check(AuditCheck::SingleTrajectorySqrt2Eps, single.square_le(&two_eps), site, &single, &format!("sqrt({})", format_rational(&two_eps)));
            let serial = l1.map_or_else(ProbValue::zero, |l| table.rho_sum(k, l).div_int(k as u64 + 1));
            rec.check(AuditCheck::SerialEps, serial.le(&exact(eps.value().clone())), site, &serial, eps);
            let p: Vec<ProbValue> = (0..n).map(|s| l1.map_or_else(ProbValue::zero, |l| table.conditional(s, k, l))).collect();
            for (s, ps) in p.iter().enumerate() {
                let center = l2.map_or_else(ProbValue::zero, |l| table.center(s, k, l));
                let holds = match (ps, &center) {
                    (ProbValue::Exact(a), ProbValue::Exact(c)) => a * a <= *c,
                    _ => ps.mul(ps).le(&center),
                };
                rec.check(AuditCheck::KeyInequality, holds, Site { index: Some(s), ..site }, &format!("({ps})^2"), &center);
            }
            for alpha in &config.alphas {
                let bound = &two_eps / alpha;
                for s in 0..n {
                    let cert = super::certify(p.clone(), &pi, s, alpha);
                    if cert.non_outlier {
                        let site = Site { index: Some(s), alpha: Some(alpha), ..site };
                        rec.check(AuditCheck::CertifiedSqrt2EpsOverAlpha, cert.p_sigma0.square_le(&bound), site, &cert.p_sigma0, &format!("sqrt({})", format_rational(&bound)));
                    }
                }
            }
        }
    }
    for k in 1..=config.tree_max_k {
        for m in 1..=config.max_m {
            let site = Site { k, m: Some(m), ..Site::default() };
            let base = TreeShape::star_split(m, k, 1)?;
            let trees: Vec<TreeShape> = base.subset().iter().map(|&w| base.with_pivot(w)).collect::<Result<_>>()?;
            for l in 0..base.subset().len() {
                let sum = trees.iter().try_fold(ProbValue::zero(), |acc, t| Ok::<_, crate::Error>(acc.add(&oracle.tree_rho(t, l)?.value)))?;
                let rhs = int(l + 1);
                rec.check(AuditCheck::TreeSum, sum.le(&rhs), Site { index: Some(l), ..site }, &sum, &rhs);
            }
            for eps in &config.epsilons {
                let site = Site { eps: Some(eps), ..site };
                let bound = exact(eps.value().clone());
                let p = oracle.parallel_probability(k, m, eps)?;
                rec.check(AuditCheck::ParallelEps, p.le(&bound), site, &p, eps);
                let p = oracle.star_split_probability(k, m, eps)?;
                rec.check(AuditCheck::StarSplitEps, p.le(&bound), site, &p, eps);
            }
        }
    }
    Ok(rec.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Edge, LabeledChain};

    #[test]
    fn grid_hits_every_floor() {
        let grid = default_epsilon_grid(2);
        for n in [1u64, 2, 3, 5] {
            for c in 1..=n {
                let target = BigRational::new(c.into(), n.into());
                assert!(grid.iter().any(|e| *e.value() == target), "{c}/{n}");
            }
        }
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_chain_passes() {
        let edges = [Edge::new(0, 1, 2.0), Edge::new(1, 2, 1.0), Edge::new(2, 3, 3.0), Edge::new(0, 2, 1.0), Edge::new(3, 3, 1.0)];
        let chain = LabeledChain::build_from_edge_list(4, &edges).unwrap().with_labels(vec![2.0, 0.0, 1.0, 1.0]).unwrap();
        let o = Oracle::new(&chain).unwrap();
        let report = audit_chain(&o, &AuditConfig::new(3).with_trees(2, 2)).unwrap();
        assert!(report.exact);
        assert!(report.passed(), "{:?}", report.violations);
        assert_eq!(report.checks.len(), 10);
    }

    #[test]
    fn failed_check_is_recorded() {
        let mut rec = Recorder { report: AuditReport { exact: true, checks: BTreeMap::new(), violations: Vec::new() } };
        rec.check(AuditCheck::SerialEps, false, Site::default(), &"1", &"1/2");
        assert!(!rec.report.passed());
        assert_eq!(rec.report.total_checks(), 1);
    }
}
