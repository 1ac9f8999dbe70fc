//! Explicit labeled Markov chains.
//!
//! A [`LabeledChain`] is a dense row-stochastic matrix `P(from, to)`, an
//! unnormalized stationary weight per state and one real label per state.
//! Transition probabilities are always indexed `(from, to)`; the stationary
//! weight is kept separate from `P` rather than overloading one symbol for
//! both.
//!
//! When every input number is rational (integer edge weights, decimal matrix
//! entries, `"p/q"` strings) the chain also carries an exact copy of `P` and
//! of the weights. The oracle uses it to compute probabilities without
//! round-off; samplers only ever touch the `f64` copy.

mod document;
mod rational;

use std::collections::VecDeque;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{Num, One, Zero};
use serde::{Deserialize, Serialize};

pub use document::{ChainSpecDocument, DocumentForm, EdgeEntry, NumberText, StateEntry};
pub use rational::{decimal_rational, format_rational, parse_rational, rational_to_f64, square_le};

use crate::error::{invalid, Error, Result};

/// Largest accepted `|sum_v P(u,v) - 1|`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Largest accepted `|w(u)P(u,v) - w(v)P(v,u)|` on the stored weights.
pub const DETAILED_BALANCE_TOLERANCE: f64 = 1e-10;

/// Index of a state within one chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl From<usize> for StateId {
    fn from(index: usize) -> Self {
        StateId(index)
    }
}

/// One undirected weighted edge for the random-walk construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, weight: f64) -> Self {
        Edge { u, v, weight }
    }
}

/// Exact rational copy of a chain's numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactParts {
    /// Row-major `n * n`.
    pub transition: Vec<BigRational>,
    pub stationary_weight: Vec<BigRational>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledChain {
    n: usize,
    transition: Vec<f64>,
    stationary_weight: Vec<f64>,
    label: Vec<f64>,
    exact: Option<Arc<ExactParts>>,
    cumulative: Vec<f64>,
}

impl LabeledChain {
    /// Builds a chain from dense `f64` rows.
    ///
    /// Numbers are interpreted as the decimals they print as, so the exact
    /// copy of `[[0.9, 0.1], ...]` holds `9/10` and `1/10`. When `stationary`
    /// is `None` the weights are solved from detailed balance.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        stationary: Option<Vec<f64>>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        let n = check_shape(rows.len(), rows.iter().map(Vec::len), stationary.as_deref().map(<[f64]>::len), labels.len())?;
        let transition: Vec<f64> = rows.into_iter().flatten().collect();
        if transition.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidChain("transition entries must be finite".into()));
        }
        if let Some(w) = &stationary {
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidChain("stationary weights must be finite".into()));
            }
        }
        check_labels(&labels)?;

        let exact_p: Option<Vec<BigRational>> = transition.iter().map(|&x| decimal_rational(x)).collect();
        let exact_w: Option<Option<Vec<BigRational>>> = match &stationary {
            Some(w) => Some(w.iter().map(|&x| decimal_rational(x)).collect()),
            None => None,
        };

        match (exact_p, exact_w) {
            (Some(p), None) => {
                let w = infer_stationary(n, &p);
                let stationary_weight = w.iter().map(rational_to_f64).collect();
                Ok(Self::assemble(n, transition, stationary_weight, labels, Some(ExactParts { transition: p, stationary_weight: w })))
            }
            (Some(p), Some(Some(w))) => {
                Ok(Self::assemble(n, transition, stationary.unwrap(), labels, Some(ExactParts { transition: p, stationary_weight: w })))
            }
            _ => {
                let w = stationary.unwrap_or_else(|| infer_stationary(n, &transition));
                Ok(Self::assemble(n, transition, w, labels, None))
            }
        }
    }

    /// Builds a chain from exact rational rows; the `f64` copy is the
    /// correctly rounded image of each entry.
    pub fn from_rational_rows(
        rows: Vec<Vec<BigRational>>,
        stationary: Option<Vec<BigRational>>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        let n = check_shape(rows.len(), rows.iter().map(Vec::len), stationary.as_ref().map(Vec::len), labels.len())?;
        check_labels(&labels)?;
        let p: Vec<BigRational> = rows.into_iter().flatten().collect();
        let w = stationary.unwrap_or_else(|| infer_stationary(n, &p));
        Ok(Self::from_exact(n, p, w, labels))
    }

    fn from_exact(n: usize, p: Vec<BigRational>, w: Vec<BigRational>, labels: Vec<f64>) -> Self {
        let transition = p.iter().map(rational_to_f64).collect();
        let stationary_weight = w.iter().map(rational_to_f64).collect();
        Self::assemble(n, transition, stationary_weight, labels, Some(ExactParts { transition: p, stationary_weight: w }))
    }

    fn assemble(
        n: usize,
        transition: Vec<f64>,
        stationary_weight: Vec<f64>,
        label: Vec<f64>,
        exact: Option<ExactParts>,
    ) -> Self {
        let cumulative = transition
            .chunks(n)
            .flat_map(|row| {
                row.iter()
                    .scan(0.0, |acc, &p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        LabeledChain {
            n,
            transition,
            stationary_weight,
            label,
            exact: exact.map(Arc::new),
            cumulative,
        }
    }

    /// Random walk on a weighted undirected graph: `P(u,v) = w(u,v)/deg(u)`
    /// and stationary weight `deg(u)`. Parallel edges add up; a self-loop
    /// `(u, u, w)` adds `w` once to `deg(u)`. Labels start at zero.
    pub fn build_from_edge_list(n_states: usize, edges: &[Edge]) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidChain("a chain needs at least one state".into()));
        }
        let mut weight = vec![BigRational::zero(); n_states * n_states];
        for e in edges {
            if e.u >= n_states || e.v >= n_states {
                return Err(Error::InvalidChain(format!(
                    "edge ({}, {}) refers to a state outside 0..{n_states}",
                    e.u, e.v
                )));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::InvalidChain(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.u, e.v, e.weight
                )));
            }
            let w = decimal_rational(e.weight).expect("finite weight");
            weight[e.u * n_states + e.v] += &w;
            if e.u != e.v {
                weight[e.v * n_states + e.u] += w;
            }
        }
        Self::from_symmetric_weights(n_states, weight)
    }

    /// Same as [`build_from_edge_list`](Self::build_from_edge_list) with exact
    /// rational weights.
    pub fn build_from_rational_edges(n_states: usize, edges: &[(usize, usize, BigRational)]) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidChain("a chain needs at least one state".into()));
        }
        let mut weight = vec![BigRational::zero(); n_states * n_states];
        for (u, v, w) in edges {
            let (u, v) = (*u, *v);
            if u >= n_states || v >= n_states {
                return Err(Error::InvalidChain(format!("edge ({u}, {v}) refers to a state outside 0..{n_states}")));
            }
            if *w <= BigRational::zero() {
                return Err(Error::InvalidChain(format!("edge ({u}, {v}) has non-positive weight {w}")));
            }
            weight[u * n_states + v] += w;
            if u != v {
                weight[v * n_states + u] += w;
            }
        }
        Self::from_symmetric_weights(n_states, weight)
    }

    fn from_symmetric_weights(n: usize, weight: Vec<BigRational>) -> Result<Self> {
        let degree: Vec<BigRational> = weight
            .chunks(n)
            .map(|row| row.iter().fold(BigRational::zero(), |acc, w| acc + w))
            .collect();
        if let Some(isolated) = degree.iter().position(Zero::is_zero) {
            return Err(Error::IsolatedVertex(isolated));
        }
        let p = weight
            .iter()
            .enumerate()
            .map(|(idx, w)| w / &degree[idx / n])
            .collect();
        Ok(Self::from_exact(n, p, degree, vec![0.0; n]))
    }

    /// Replaces the labels.
    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(invalid("labels", format!("expected {} labels, got {}", self.n, labels.len())));
        }
        check_labels(&labels)?;
        self.label = labels;
        Ok(self)
    }

    /// Drops the exact copy; downstream exact computation falls back to `f64`.
    pub fn without_exact(mut self) -> Self {
        self.exact = None;
        self
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.n).map(StateId)
    }

    pub fn transition(&self, from: StateId, to: StateId) -> f64 {
        self.transition[from.0 * self.n + to.0]
    }

    pub fn row(&self, from: StateId) -> &[f64] {
        &self.transition[from.0 * self.n..(from.0 + 1) * self.n]
    }

    pub fn stationary_weights(&self) -> &[f64] {
        &self.stationary_weight
    }

    pub fn labels(&self) -> &[f64] {
        &self.label
    }

    pub fn label(&self, state: StateId) -> f64 {
        self.label[state.0]
    }

    pub fn exact(&self) -> Option<&ExactParts> {
        self.exact.as_deref()
    }

    pub fn contains(&self, state: StateId) -> bool {
        state.0 < self.n
    }

    /// Normalized stationary distribution `w / sum(w)`.
    pub fn stationary_distribution(&self) -> Vec<f64> {
        let total: f64 = self.stationary_weight.iter().sum();
        self.stationary_weight.iter().map(|w| w / total).collect()
    }

    /// Next state given a uniform draw `u in [0, 1)`.
    pub fn step_with(&self, from: StateId, u: f64) -> StateId {
        let row = &self.cumulative[from.0 * self.n..(from.0 + 1) * self.n];
        let idx = row.partition_point(|&c| c <= u);
        if idx < self.n {
            return StateId(idx);
        }
        // u landed above the rounded row total: take the last reachable state.
        let probs = self.row(from);
        StateId(probs.iter().rposition(|&p| p > 0.0).unwrap_or(from.0))
    }

    /// State drawn from the stationary distribution given `u in [0, 1)`.
    pub fn stationary_state_with(&self, u: f64) -> StateId {
        let total: f64 = self.stationary_weight.iter().sum();
        let target = u * total;
        let mut acc = 0.0;
        for (idx, w) in self.stationary_weight.iter().enumerate() {
            acc += w;
            if target < acc {
                return StateId(idx);
            }
        }
        StateId(self.stationary_weight.iter().rposition(|&w| w > 0.0).unwrap_or(0))
    }

    /// Checks stochasticity, weight sanity and detailed balance.
    pub fn validate(&self) -> ValidationReport {
        let n = self.n;
        let mut checks = Vec::with_capacity(4);

        let mut worst = (0.0f64, None);
        for u in 0..n {
            let sum: f64 = self.transition[u * n..(u + 1) * n].iter().sum();
            let residual = (sum - 1.0).abs();
            if residual > worst.0 {
                worst = (residual, Some((u, u)));
            }
        }
        checks.push(ValidationCheck::new(CheckKind::RowSums, worst.0, ROW_SUM_TOLERANCE, worst.1));

        let mut worst = (0.0f64, None);
        for (idx, &p) in self.transition.iter().enumerate() {
            if -p > worst.0 {
                worst = (-p, Some((idx / n, idx % n)));
            }
        }
        checks.push(ValidationCheck::new(CheckKind::NonNegativeTransitions, worst.0, 0.0, worst.1));

        let most_negative = self.stationary_weight.iter().fold(0.0f64, |acc, &w| acc.max(-w));
        let all_zero = self.stationary_weight.iter().all(|&w| w <= 0.0);
        let weight_residual = if all_zero { most_negative.max(1.0) } else { most_negative };
        let worst_weight = self
            .stationary_weight
            .iter()
            .position(|&w| w < 0.0)
            .map(|u| (u, u));
        checks.push(ValidationCheck::new(CheckKind::StationaryWeights, weight_residual, 0.0, worst_weight));

        let mut worst = (0.0f64, None);
        for u in 0..n {
            for v in (u + 1)..n {
                let lhs = self.stationary_weight[u] * self.transition[u * n + v];
                let rhs = self.stationary_weight[v] * self.transition[v * n + u];
                let residual = (lhs - rhs).abs();
                if residual > worst.0 {
                    worst = (residual, Some((u, v)));
                }
            }
        }
        checks.push(ValidationCheck::new(CheckKind::DetailedBalance, worst.0, DETAILED_BALANCE_TOLERANCE, worst.1));

        ValidationReport { checks }
    }

    /// Fails with [`Error::InvalidChain`] listing every violated check.
    pub fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            return Ok(());
        }
        let detail: Vec<String> = report.violations().map(ToString::to_string).collect();
        Err(Error::InvalidChain(detail.join("; ")))
    }

    pub(crate) fn check_state(&self, state: StateId, name: &'static str) -> Result<()> {
        if self.contains(state) {
            Ok(())
        } else {
            Err(invalid(name, format!("state {} is outside 0..{}", state.0, self.n)))
        }
    }
}

fn check_shape(
    rows: usize,
    row_lens: impl Iterator<Item = usize>,
    stationary_len: Option<usize>,
    labels_len: usize,
) -> Result<usize> {
    if rows == 0 {
        return Err(Error::InvalidChain("a chain needs at least one state".into()));
    }
    for (idx, len) in row_lens.enumerate() {
        if len != rows {
            return Err(Error::InvalidChain(format!("row {idx} has {len} entries, expected {rows}")));
        }
    }
    if let Some(len) = stationary_len {
        if len != rows {
            return Err(Error::InvalidChain(format!("{len} stationary weights for {rows} states")));
        }
    }
    if labels_len != rows {
        return Err(Error::InvalidChain(format!("{labels_len} labels for {rows} states")));
    }
    Ok(rows)
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidChain("labels must be finite".into()));
    }
    Ok(())
}

/// Solves `w(v) = w(u) P(u,v) / P(v,u)` along a breadth-first forest over
/// pairs with both directions positive. Each component's root gets weight 1.
/// For a reversible chain this is its stationary weight vector; otherwise
/// validation reports the mismatch.
fn infer_stationary<T: Clone + Num + PartialOrd>(n: usize, p: &[T]) -> Vec<T> {
    let mut weight: Vec<Option<T>> = vec![None; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if weight[root].is_some() {
            continue;
        }
        weight[root] = Some(T::one());
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let wu = weight[u].clone().expect("visited");
            for v in 0..n {
                if v == u || weight[v].is_some() {
                    continue;
                }
                let forward = &p[u * n + v];
                let backward = &p[v * n + u];
                if *forward > T::zero() && *backward > T::zero() {
                    weight[v] = Some(wu.clone() * forward.clone() / backward.clone());
                    queue.push_back(v);
                }
            }
        }
    }
    weight.into_iter().map(|w| w.unwrap_or_else(T::one)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    RowSums,
    NonNegativeTransitions,
    StationaryWeights,
    DetailedBalance,
}

/// One validation check with its largest residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub kind: CheckKind,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// `(row, column)` of the worst entry, or `(state, state)` for per-state checks.
    pub worst_at: Option<(usize, usize)>,
}

impl ValidationCheck {
    fn new(kind: CheckKind, max_residual: f64, tolerance: f64, worst_at: Option<(usize, usize)>) -> Self {
        ValidationCheck {
            kind,
            max_residual,
            tolerance,
            passed: max_residual <= tolerance,
            worst_at,
        }
    }
}

impl std::fmt::Display for ValidationCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?}: residual {:e} (tolerance {:e})",
            self.kind, self.max_residual, self.tolerance
        )?;
        if let Some((a, b)) = self.worst_at {
            write!(f, " at ({a}, {b})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// `sum_u pi(u) P(u, v)` for the normalized stationary distribution.
pub fn stationary_residual(chain: &LabeledChain) -> f64 {
    let pi = chain.stationary_distribution();
    let n = chain.n_states();
    (0..n)
        .map(|v| {
            let mass: f64 = (0..n).map(|u| pi[u] * chain.transition(StateId(u), StateId(v))).sum();
            (mass - pi[v]).abs()
        })
        .fold(0.0, f64::max)
}

impl ExactParts {
    /// True when rows sum to exactly one, weights are nonnegative with a
    /// positive total, and detailed balance holds exactly.
    pub fn is_exactly_reversible(&self, n: usize) -> bool {
        let one = BigRational::one();
        let zero = BigRational::zero();
        for u in 0..n {
            let row = &self.transition[u * n..(u + 1) * n];
            if row.iter().any(|p| *p < zero) {
                return false;
            }
            if row.iter().fold(BigRational::zero(), |acc, p| acc + p) != one {
                return false;
            }
        }
        if self.stationary_weight.iter().any(|w| *w < zero) || self.stationary_weight.iter().all(Zero::is_zero) {
            return false;
        }
        for u in 0..n {
            for v in (u + 1)..n {
                let lhs = &self.stationary_weight[u] * &self.transition[u * n + v];
                let rhs = &self.stationary_weight[v] * &self.transition[v * n + u];
                if lhs != rhs {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(list: &[(usize, usize)]) -> Vec<Edge> {
        list.iter().map(|&(u, v)| Edge::new(u, v, 1.0)).collect()
    }

    #[test]
    fn symmetric_two_state_is_valid() {
        let chain = LabeledChain::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]], Some(vec![1.0, 1.0]), vec![0.0, 1.0]).unwrap();
        let report = chain.validate();
        assert!(report.is_valid(), "{report:?}");
        assert_eq!(chain.stationary_distribution(), vec![0.5, 0.5]);
    }

    #[test]
    fn detailed_balance_violation_reports_residual() {
        let chain = LabeledChain::from_rows(vec![vec![0.0, 1.0], vec![0.5, 0.5]], Some(vec![1.0, 1.0]), vec![0.0, 1.0]).unwrap();
        let report = chain.validate();
        let violations: Vec<_> = report.violations().collect();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, CheckKind::DetailedBalance);
        assert_eq!(violations[0].max_residual, 0.5);
        assert_eq!(violations[0].worst_at, Some((0, 1)));
        assert!(chain.require_valid().is_err());
    }

    #[test]
    fn row_sum_and_negative_entries_are_reported() {
        let chain = LabeledChain::from_rows(vec![vec![0.7, 0.5], vec![-0.1, 1.1]], Some(vec![1.0, 1.0]), vec![0.0, 1.0]).unwrap();
        let kinds: Vec<_> = chain.validate().violations().map(|c| c.kind).collect();
        assert!(kinds.contains(&CheckKind::RowSums));
        assert!(kinds.contains(&CheckKind::NonNegativeTransitions));
    }

    #[test]
    fn zero_weights_are_rejected() {
        let chain = LabeledChain::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]], Some(vec![0.0, 0.0]), vec![0.0, 1.0]).unwrap();
        let kinds: Vec<_> = chain.validate().violations().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![CheckKind::StationaryWeights]);
    }

    #[test]
    fn triangle_walk() {
        let chain = LabeledChain::build_from_edge_list(3, &edges(&[(0, 1), (1, 2), (2, 0)])).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                let expected = if u == v { 0.0 } else { 0.5 };
                assert_eq!(chain.transition(StateId(u), StateId(v)), expected);
            }
        }
        assert_eq!(chain.stationary_weights(), &[2.0, 2.0, 2.0]);
        assert!(chain.validate().is_valid());
    }

    #[test]
    fn k33_walk() {
        let mut list = Vec::new();
        for a in 0..3 {
            for b in 3..6 {
                list.push((a, b));
            }
        }
        let chain = LabeledChain::build_from_edge_list(6, &edges(&list)).unwrap();
        for a in 0..3 {
            for b in 3..6 {
                assert_eq!(chain.transition(StateId(a), StateId(b)), 1.0 / 3.0);
                assert_eq!(chain.transition(StateId(b), StateId(a)), 1.0 / 3.0);
            }
            assert_eq!(chain.transition(StateId(a), StateId((a + 1) % 3)), 0.0);
        }
        assert!(chain.validate().is_valid());
        assert_eq!(chain.stationary_distribution(), vec![1.0 / 6.0; 6]);
        let exact = chain.exact().unwrap();
        assert!(exact.is_exactly_reversible(6));
        assert_eq!(exact.transition[3], BigRational::new(1.into(), 3.into()));
    }

    #[test]
    fn path_walk_degrees() {
        let chain = LabeledChain::build_from_edge_list(3, &edges(&[(0, 1), (1, 2)])).unwrap();
        assert_eq!(chain.stationary_weights(), &[1.0, 2.0, 1.0]);
        assert_eq!(chain.transition(StateId(1), StateId(0)), 0.5);
        assert_eq!(chain.transition(StateId(1), StateId(2)), 0.5);
        assert_eq!(chain.stationary_distribution(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn isolated_vertex_is_named() {
        let err = LabeledChain::build_from_edge_list(4, &edges(&[(0, 1), (1, 3)])).unwrap_err();
        assert!(matches!(err, Error::IsolatedVertex(2)));
    }

    #[test]
    fn bad_edges_are_rejected() {
        assert!(LabeledChain::build_from_edge_list(2, &[Edge::new(0, 2, 1.0)]).is_err());
        assert!(LabeledChain::build_from_edge_list(2, &[Edge::new(0, 1, 0.0)]).is_err());
        assert!(LabeledChain::build_from_edge_list(2, &[Edge::new(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn weights_are_inferred_from_detailed_balance() {
        // Birth-death chain: pi proportional to (1, 2, 2).
        let chain = LabeledChain::from_rows(
            vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 0.5, 0.5]],
            None,
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        assert_eq!(chain.stationary_weights(), &[1.0, 2.0, 2.0]);
        assert!(chain.validate().is_valid());
        assert!(stationary_residual(&chain) < 1e-15);
    }

    #[test]
    fn four_state_fixed_point() {
        let chain = LabeledChain::build_from_edge_list(
            4,
            &[Edge::new(0, 1, 2.0), Edge::new(1, 2, 0.5), Edge::new(2, 3, 3.0), Edge::new(3, 0, 1.25), Edge::new(1, 1, 0.7)],
        )
        .unwrap();
        assert!(chain.validate().is_valid());
        let pi = chain.stationary_distribution();
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(stationary_residual(&chain) < 1e-10);
    }

    #[test]
    fn stepping_follows_cumulative_rows() {
        let chain = LabeledChain::from_rows(vec![vec![0.25, 0.75], vec![1.0, 0.0]], None, vec![0.0, 1.0]).unwrap();
        assert_eq!(chain.step_with(StateId(0), 0.0), StateId(0));
        assert_eq!(chain.step_with(StateId(0), 0.2499), StateId(0));
        assert_eq!(chain.step_with(StateId(0), 0.25), StateId(1));
        assert_eq!(chain.step_with(StateId(1), 0.999_999), StateId(0));
    }

    #[test]
    fn mismatched_shapes_fail() {
        assert!(LabeledChain::from_rows(vec![vec![1.0, 0.0]], None, vec![0.0]).is_err());
        assert!(LabeledChain::from_rows(vec![vec![1.0]], None, vec![0.0, 1.0]).is_err());
        assert!(LabeledChain::from_rows(vec![], None, vec![]).is_err());
    }
}
