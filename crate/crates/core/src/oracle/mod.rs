//! Exact probabilities on small explicit chains.
//!
//! For a π-stationary trajectory `X_0..X_k`, `rho(k, j, l)` is the
//! probability that `omega(X_j)` is `l`-small, i.e. at most `l` other labels
//! are `<=` it. Conditioned on `X_j = sigma`, a reversible chain splits the
//! trajectory into two independent walks from `sigma` of lengths `j` and
//! `k - j`, so everything reduces to one table per pivot state: the weight of
//! `s`-step walks from `sigma` that visit `c` states labelled `<= omega(sigma)`.
//!
//! Chains with exact rational data are computed in exact arithmetic. Other
//! chains use `f64` and carry an a-priori error bound (all terms are
//! nonnegative, so the relative error is at most `gamma_N` for `N` rounding
//! steps).

mod audit;
mod kernel;
mod product;
mod tree;

pub use audit::{audit_chain, default_epsilon_grid, AuditCheck, AuditConfig, AuditReport, AuditViolation};
pub use product::ProductOracle;
pub use tree::TreeShape;

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::Serialize;

use kernel::{Backend, ExactBackend, FloatBackend, Weight};

use crate::chain::{decimal_rational, format_rational, parse_rational, rational_to_f64, square_le, LabeledChain, StateId};
use crate::error::{invalid, Error, Result};

/// Default cap on elementary operations per oracle call.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// A probability, exact or with an absolute error bound.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbValue {
    Exact(BigRational),
    Approx { value: f64, error_bound: f64 },
}

impl ProbValue {
    pub fn zero() -> Self {
        ProbValue::Exact(BigRational::zero())
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, ProbValue::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            ProbValue::Exact(r) => Some(r),
            ProbValue::Approx { .. } => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ProbValue::Exact(r) => rational_to_f64(r),
            ProbValue::Approx { value, .. } => *value,
        }
    }

    fn approx(&self) -> (f64, f64) {
        match self {
            ProbValue::Exact(r) => {
                let v = rational_to_f64(r);
                (v, v.abs() * f64::EPSILON)
            }
            ProbValue::Approx { value, error_bound } => (*value, *error_bound),
        }
    }

    pub fn add(&self, other: &ProbValue) -> ProbValue {
        match (self, other) {
            (ProbValue::Exact(a), ProbValue::Exact(b)) => ProbValue::Exact(a + b),
            _ => {
                let ((a, ea), (b, eb)) = (self.approx(), other.approx());
                let s = a + b;
                ProbValue::Approx { value: s, error_bound: ea + eb + s.abs() * f64::EPSILON }
            }
        }
    }

    pub fn mul(&self, other: &ProbValue) -> ProbValue {
        match (self, other) {
            (ProbValue::Exact(a), ProbValue::Exact(b)) => ProbValue::Exact(a * b),
            _ => {
                let ((a, ea), (b, eb)) = (self.approx(), other.approx());
                let p = a * b;
                ProbValue::Approx { value: p, error_bound: a.abs() * eb + b.abs() * ea + ea * eb + p.abs() * f64::EPSILON }
            }
        }
    }

    /// `self / other` for a positive divisor.
    pub fn div(&self, other: &ProbValue) -> ProbValue {
        match (self, other) {
            (ProbValue::Exact(a), ProbValue::Exact(b)) => ProbValue::Exact(a / b),
            _ => {
                let ((a, ea), (b, eb)) = (self.approx(), other.approx());
                let q = a / b;
                let low = (b - eb).max(f64::MIN_POSITIVE);
                let err = (a.abs() + ea) / low - q.abs();
                ProbValue::Approx { value: q, error_bound: err.max(ea / low) + 2.0 * q.abs() * f64::EPSILON }
            }
        }
    }

    pub fn div_int(&self, n: u64) -> ProbValue {
        match self {
            ProbValue::Exact(a) => ProbValue::Exact(a / BigInt::from(n)),
            ProbValue::Approx { value, error_bound } => {
                let q = value / n as f64;
                ProbValue::Approx { value: q, error_bound: error_bound / n as f64 + q.abs() * f64::EPSILON }
            }
        }
    }

    /// False only when `self > other` is certain.
    pub fn le(&self, other: &ProbValue) -> bool {
        match (self, other) {
            (ProbValue::Exact(a), ProbValue::Exact(b)) => a <= b,
            _ => {
                let ((a, ea), (b, eb)) = (self.approx(), other.approx());
                a - ea <= b + eb
            }
        }
    }

    /// False only when `self >= other` is certain.
    pub fn lt(&self, other: &ProbValue) -> bool {
        match (self, other) {
            (ProbValue::Exact(a), ProbValue::Exact(b)) => a < b,
            _ => {
                let ((a, ea), (b, eb)) = (self.approx(), other.approx());
                a - ea < b + eb
            }
        }
    }

    /// `self^2 <= bound`, exactly when `self` is exact.
    pub fn square_le(&self, bound: &BigRational) -> bool {
        match self {
            ProbValue::Exact(a) => square_le(a, bound),
            ProbValue::Approx { .. } => self.mul(self).le(&ProbValue::Exact(bound.clone())),
        }
    }
}

impl fmt::Display for ProbValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbValue::Exact(r) => f.write_str(&format_rational(r)),
            ProbValue::Approx { value, error_bound } => write!(f, "{value} +- {error_bound:e}"),
        }
    }
}

impl Serialize for ProbValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ProbValue::Exact(r) => {
                let mut s = serializer.serialize_struct("ProbValue", 2)?;
                s.serialize_field("exact", &format_rational(r))?;
                s.serialize_field("value", &rational_to_f64(r))?;
                s.end()
            }
            ProbValue::Approx { value, error_bound } => {
                let mut s = serializer.serialize_struct("ProbValue", 2)?;
                s.serialize_field("value", value)?;
                s.serialize_field("error_bound", error_bound)?;
                s.end()
            }
        }
    }
}

/// A probability with a description of its event.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactProbability {
    pub event: String,
    pub value: ProbValue,
}

/// ε in `(0, 1]`, kept as an exact rational so `floor(eps n)` is exact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Epsilon(BigRational);

impl Epsilon {
    pub fn new(value: BigRational) -> Result<Self> {
        if value <= BigRational::zero() || value > BigRational::from_integer(1.into()) {
            return Err(invalid("epsilon", format!("must lie in (0, 1], got {}", format_rational(&value))));
        }
        Ok(Epsilon(value))
    }

    pub fn ratio(numer: u64, denom: u64) -> Result<Self> {
        if denom == 0 {
            return Err(invalid("epsilon", "zero denominator"));
        }
        Self::new(BigRational::new(numer.into(), denom.into()))
    }

    /// Uses the shortest decimal form of `x`, so `0.1` means `1/10`.
    pub fn from_f64(x: f64) -> Result<Self> {
        Self::new(decimal_rational(x).ok_or_else(|| invalid("epsilon", format!("not finite: {x}")))?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(parse_rational(text)?)
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.0)
    }

    /// `floor(eps n) - 1`: the pivot is an ε-outlier among `n` labels iff it
    /// is `l`-small. `None` when `floor(eps n) = 0` and the event is empty.
    pub fn ell(&self, n_total: u64) -> Option<usize> {
        let f = (&self.0 * BigInt::from(n_total)).floor().to_integer();
        let f = f.to_usize().expect("floor(eps n) <= n");
        f.checked_sub(1)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(&self.0))
    }
}

/// Outcome of the (ε,α) certification of one state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certification {
    /// `Pr_{sigma ~ pi}[p(sigma) >= p(sigma0)] >= alpha`.
    pub non_outlier: bool,
    pub p_sigma0: ProbValue,
    pub mass_at_or_above: ProbValue,
    pub p_by_state: Vec<ProbValue>,
}

pub(crate) fn certify(p_by_state: Vec<ProbValue>, pi: &[ProbValue], sigma0: usize, alpha: &BigRational) -> Certification {
    let p0 = p_by_state[sigma0].clone();
    let mass = p_by_state
        .iter()
        .zip(pi)
        .filter(|(p, _)| match (p, &p0) {
            (ProbValue::Exact(a), ProbValue::Exact(b)) => a >= b,
            _ => p.to_f64() >= p0.to_f64(),
        })
        .fold(ProbValue::zero(), |acc, (_, w)| acc.add(w));
    let non_outlier = match &mass {
        ProbValue::Exact(m) => m >= alpha,
        ProbValue::Approx { value, .. } => *value >= rational_to_f64(alpha),
    };
    Certification { non_outlier, p_sigma0: p0, mass_at_or_above: mass, p_by_state }
}

pub(crate) fn charge(required: u128, budget: u64) -> Result<()> {
    if required > u128::from(budget) {
        Err(Error::BudgetExceeded { required, budget })
    } else {
        Ok(())
    }
}

enum Inner {
    Exact(ExactBackend),
    Float(FloatBackend),
}

macro_rules! with_backend {
    ($inner:expr, $b:ident => $body:expr) => {
        match $inner {
            Inner::Exact($b) => $body,
            Inner::Float($b) => $body,
        }
    };
}

/// Exact (or error-bounded) computation on one explicit chain.
pub struct Oracle {
    inner: Inner,
    budget: u64,
}

impl Oracle {
    pub fn new(chain: &LabeledChain) -> Result<Self> {
        Self::with_budget(chain, DEFAULT_BUDGET)
    }

    /// Exact when the chain carries exact data that satisfy detailed balance
    /// exactly; floating point otherwise.
    pub fn with_budget(chain: &LabeledChain, budget: u64) -> Result<Self> {
        chain.require_valid()?;
        let inner = match ExactBackend::new(chain) {
            Some(b) => Inner::Exact(b),
            None => Inner::Float(FloatBackend::new(chain)),
        };
        Ok(Oracle { inner, budget })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.inner, Inner::Exact(_))
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn n_states(&self) -> usize {
        with_backend!(&self.inner, b => b.kernel.n)
    }

    /// Normalized stationary probabilities.
    pub fn stationary(&self) -> Vec<ProbValue> {
        match &self.inner {
            Inner::Exact(b) => b.kernel.pi.iter().map(|w| ProbValue::Exact(BigRational::new(w.clone(), b.b.clone()))).collect(),
            Inner::Float(b) => b.kernel.pi.iter().map(|&w| ProbValue::Approx { value: w, error_bound: w * kernel::gamma(2 * b.kernel.n + 2) }).collect(),
        }
    }

    fn check_sigma(&self, sigma: StateId) -> Result<()> {
        if sigma.0 < self.n_states() {
            Ok(())
        } else {
            Err(invalid("sigma", format!("state {} is outside 0..{}", sigma.0, self.n_states())))
        }
    }

    /// Walk-count tables for every pivot state, for walks of up to
    /// `max_steps` steps and counts up to `cap`.
    pub fn walk_table(&self, max_steps: usize, cap: usize) -> Result<WalkTable<'_>> {
        let n = self.n_states() as u128;
        charge(n * n * n * (max_steps as u128 + 1) * (cap as u128 + 1), self.budget)?;
        let data = match &self.inner {
            Inner::Exact(b) => TableData::Exact(walk_tables(b, max_steps, cap)),
            Inner::Float(b) => TableData::Float(walk_tables(b, max_steps, cap)),
        };
        Ok(WalkTable { oracle: self, max_steps, cap, data })
    }

    /// `rho^k_{j,l}`.
    pub fn rho(&self, k: usize, j: usize, l: usize) -> Result<ExactProbability> {
        if j > k {
            return Err(invalid("j", format!("need j <= k, got j = {j}, k = {k}")));
        }
        let table = self.walk_table(k, l)?;
        Ok(ExactProbability { event: format!("omega(X_{j}) is {l}-small among omega(X_0..X_{k})"), value: table.rho(k, j, l) })
    }

    /// `p^k_{i,eps}`: `X_i` is an ε-outlier on a stationary trajectory.
    pub fn p_outlier(&self, k: usize, i: usize, eps: &Epsilon) -> Result<ExactProbability> {
        let event = format!("X_{i} is a {eps}-outlier among X_0..X_{k}");
        match eps.ell(k as u64 + 1) {
            None => Ok(ExactProbability { event, value: ProbValue::zero() }),
            Some(l) => Ok(ExactProbability { event, value: self.rho(k, i, l)?.value }),
        }
    }

    /// `p^k_{0,eps}(sigma)`: trajectory started at `sigma`.
    pub fn p_conditional(&self, sigma: StateId, k: usize, eps: &Epsilon) -> Result<ExactProbability> {
        self.check_sigma(sigma)?;
        let event = format!("X_0 = {} is a {eps}-outlier among X_0..X_{k}", sigma.0);
        let value = match eps.ell(k as u64 + 1) {
            None => ProbValue::zero(),
            Some(l) => self.walk_table(k, l)?.conditional(sigma.0, k, l),
        };
        Ok(ExactProbability { event, value })
    }

    /// `p^{2k}_{k,eps}(sigma)`: the middle of a `2k`-step trajectory, given `X_k = sigma`.
    pub fn p_conditional_center(&self, sigma: StateId, k: usize, eps: &Epsilon) -> Result<ExactProbability> {
        self.check_sigma(sigma)?;
        let event = format!("X_{k} = {} is a {eps}-outlier among X_0..X_{}", sigma.0, 2 * k);
        let value = match eps.ell(2 * k as u64 + 1) {
            None => ProbValue::zero(),
            Some(l) => self.walk_table(k, l)?.center(sigma.0, k, l),
        };
        Ok(ExactProbability { event, value })
    }

    /// Whether `sigma0` is a non-(ε,α)-outlier for length-`k` trajectories.
    pub fn certify_eps_alpha(&self, sigma0: StateId, k: usize, eps: &Epsilon, alpha: &BigRational) -> Result<Certification> {
        self.check_sigma(sigma0)?;
        let n = self.n_states();
        let p_by_state = match eps.ell(k as u64 + 1) {
            None => vec![ProbValue::zero(); n],
            Some(l) => {
                let table = self.walk_table(k, l)?;
                (0..n).map(|s| table.conditional(s, k, l)).collect()
            }
        };
        Ok(certify(p_by_state, &self.stationary(), sigma0.0, alpha))
    }

    /// Serial test with `sigma0 ~ pi`: `(1/(k+1)) sum_j rho^k_{j,l}`.
    pub fn serial_probability(&self, k: usize, eps: &Epsilon) -> Result<ProbValue> {
        let Some(l) = eps.ell(k as u64 + 1) else { return Ok(ProbValue::zero()) };
        let table = self.walk_table(k, l)?;
        Ok(table.rho_sum(k, l).div_int(k as u64 + 1))
    }

    /// Two-path test with `sigma0 ~ pi`: `p^{2k}_{k,eps}`.
    pub fn two_path_probability(&self, k: usize, eps: &Epsilon) -> Result<ProbValue> {
        let Some(l) = eps.ell(2 * k as u64 + 1) else { return Ok(ProbValue::zero()) };
        Ok(self.walk_table(2 * k, l)?.rho(2 * k, k, l))
    }

    /// `X_j` is among the `f` lowest of `X_0..X_k` when the pivot takes a
    /// uniform position among the labels equal to it.
    pub fn rho_random_ties(&self, k: usize, j: usize, f: usize) -> Result<ExactProbability> {
        if j > k {
            return Err(invalid("j", format!("need j <= k, got j = {j}, k = {k}")));
        }
        let event = format!("X_{j} ranks at most {f} among X_0..X_{k} with ties broken at random");
        if f == 0 {
            return Ok(ExactProbability { event, value: ProbValue::zero() });
        }
        let n = self.n_states() as u128;
        let kk = k as u128 + 1;
        charge(n * n * n * kk * kk * (f as u128) + n * kk.pow(4), self.budget)?;
        let value = with_backend!(&self.inner, b => random_tie_rho(b, k, j, f));
        Ok(ExactProbability { event, value })
    }

    /// `p^k_{i,eps}` with random tie-breaking.
    pub fn p_outlier_random_ties(&self, k: usize, i: usize, eps: &Epsilon) -> Result<ExactProbability> {
        let f = eps.ell(k as u64 + 1).map_or(0, |l| l + 1);
        self.rho_random_ties(k, i, f)
    }

    /// `rho^{T,S}_{v,l}` for the π-stationary projection onto `tree`.
    pub fn tree_rho(&self, tree: &TreeShape, l: usize) -> Result<ExactProbability> {
        let v = self.n_states() as u128;
        let cost = v * v * v * tree.n_vertices() as u128 * (l as u128 + 1) * (l as u128 + 1);
        charge(cost, self.budget)?;
        let value = with_backend!(&self.inner, b => tree::tree_rho(b, tree, l));
        Ok(ExactProbability { event: format!("omega(X_{}) is {l}-small among the {} tree labels", tree.pivot(), tree.subset().len()), value })
    }

    /// Parallel test with `sigma0 ~ pi`: pivot leaf of an `m`-leg star with
    /// legs of length `k`, compared with the other leaves.
    pub fn parallel_probability(&self, k: usize, m: usize, eps: &Epsilon) -> Result<ProbValue> {
        let Some(l) = eps.ell(m as u64) else { return Ok(ProbValue::zero()) };
        Ok(self.tree_rho(&TreeShape::star(m, k)?, l)?.value)
    }

    /// Star-split test with `sigma0 ~ pi`:
    /// `(1/k) sum_{xi=1..k} rho^{T,S}_{v_xi,l}` over `m k` labels.
    pub fn star_split_probability(&self, k: usize, m: usize, eps: &Epsilon) -> Result<ProbValue> {
        let Some(l) = eps.ell((m * k) as u64) else { return Ok(ProbValue::zero()) };
        let mut total = ProbValue::zero();
        for xi in 1..=k {
            total = total.add(&self.tree_rho(&TreeShape::star_split(m, k, xi)?, l)?.value);
        }
        Ok(total.div_int(k as u64))
    }
}

enum TableData {
    Exact(Vec<Vec<Vec<BigInt>>>),
    Float(Vec<Vec<Vec<f64>>>),
}

/// `F[sigma][s][c]`: weight of `s`-step walks from `sigma` with exactly `c`
/// visits (after the start) to states labelled `<= omega(sigma)`.
pub struct WalkTable<'a> {
    oracle: &'a Oracle,
    max_steps: usize,
    cap: usize,
    data: TableData,
}

macro_rules! with_table {
    ($table:expr, $b:ident, $d:ident => $body:expr) => {
        match (&$table.oracle.inner, &$table.data) {
            (Inner::Exact($b), TableData::Exact($d)) => $body,
            (Inner::Float($b), TableData::Float($d)) => $body,
            _ => unreachable!("table and backend always match"),
        }
    };
}

impl WalkTable<'_> {
    fn check(&self, steps: usize, l: usize) {
        assert!(steps <= self.max_steps && l <= self.cap, "walk table too small: needs {steps} steps and count {l}");
    }

    fn depth(&self, steps: usize) -> usize {
        (steps + 2) * (self.oracle.n_states() + self.cap + 3)
    }

    /// `rho^k_{j,l}`.
    pub fn rho(&self, k: usize, j: usize, l: usize) -> ProbValue {
        self.check(k, l);
        let depth = self.depth(k);
        with_table!(self, b, d => {
            let mut num = zero_like(&b.kernel.pi);
            for (sigma, f) in d.iter().enumerate() {
                let pair = pair_sum(&f[j], &f[k - j], l);
                num.add_mul(&b.kernel.pi[sigma], &pair);
            }
            b.finish(num, k, true, depth)
        })
    }

    /// `sum_{j=0..k} rho^k_{j,l}`.
    pub fn rho_sum(&self, k: usize, l: usize) -> ProbValue {
        self.check(k, l);
        let depth = self.depth(k) + k + 1;
        with_table!(self, b, d => {
            let mut num = zero_like(&b.kernel.pi);
            for (sigma, f) in d.iter().enumerate() {
                let mut inner = zero_like(&b.kernel.pi);
                for j in 0..=k {
                    inner.add_ref(&pair_sum(&f[j], &f[k - j], l));
                }
                num.add_mul(&b.kernel.pi[sigma], &inner);
            }
            b.finish(num, k, true, depth)
        })
    }

    /// `Pr[at most l of X_1..X_k are labelled <= omega(sigma) | X_0 = sigma]`.
    pub fn conditional(&self, sigma: usize, k: usize, l: usize) -> ProbValue {
        self.check(k, l);
        let depth = self.depth(k);
        with_table!(self, b, d => {
            let mut num = zero_like(&b.kernel.pi);
            for c in 0..=l {
                num.add_ref(&d[sigma][k][c]);
            }
            b.finish(num, k, false, depth)
        })
    }

    /// The same event for the middle of a `2k`-step trajectory through `sigma`.
    pub fn center(&self, sigma: usize, k: usize, l: usize) -> ProbValue {
        self.check(k, l);
        let depth = 2 * self.depth(k);
        with_table!(self, b, d => {
            let f = &d[sigma][k];
            b.finish(pair_sum(f, f, l), 2 * k, false, depth)
        })
    }
}

/// `G[s][a][e]`: weight of `s`-step walks from `sigma` with `a < cap` visits
/// below `omega(sigma)` and `e` visits level with it.
fn tie_counts<B: Backend>(backend: &B, sigma: usize, max_steps: usize, cap: usize) -> Vec<Vec<Vec<B::W>>> {
    let k = backend.kernel();
    let n = k.n;
    let pivot = k.labels[sigma];
    let zero = || vec![vec![B::W::zero(); max_steps + 1]; cap];
    let mut cur: Vec<Vec<Vec<B::W>>> = (0..n).map(|_| zero()).collect();
    cur[sigma][0][0] = B::W::one();
    let fold = |layer: &[Vec<Vec<B::W>>]| {
        let mut t = zero();
        for row in layer {
            for (a, r) in row.iter().enumerate() {
                for (e, w) in r.iter().enumerate() {
                    t[a][e].add_ref(w);
                }
            }
        }
        t
    };
    let mut out = vec![fold(&cur)];
    for _ in 0..max_steps {
        let mut next: Vec<Vec<Vec<B::W>>> = (0..n).map(|_| zero()).collect();
        for (u, row) in cur.iter().enumerate() {
            for v in 0..n {
                let p = k.p(u, v);
                if p.is_zero() {
                    continue;
                }
                let (da, de) = if k.labels[v] < pivot { (1, 0) } else if k.labels[v] == pivot { (0, 1) } else { (0, 0) };
                for a in 0..cap.saturating_sub(da) {
                    for e in 0..max_steps + 1 - de {
                        next[v][a + da][e + de].add_mul(&row[a][e], p);
                    }
                }
            }
        }
        cur = next;
        out.push(fold(&cur));
    }
    out
}

fn random_tie_rho<B: Backend>(backend: &B, k: usize, j: usize, f: usize) -> ProbValue {
    let kernel = backend.kernel();
    let per_sigma: Vec<Vec<Vec<B::W>>> = (0..kernel.n)
        .into_par_iter()
        .map(|sigma| {
            let g = tie_counts(backend, sigma, k, f);
            let (x, y) = (&g[j], &g[k - j]);
            let mut h = vec![vec![B::W::zero(); k + 1]; f];
            for a1 in 0..f {
                for a2 in 0..f - a1 {
                    for e1 in 0..=j {
                        if x[a1][e1].is_zero() {
                            continue;
                        }
                        for e2 in 0..=k - j {
                            h[a1 + a2][e1 + e2].add_mul(&x[a1][e1], &y[a2][e2]);
                        }
                    }
                }
            }
            for row in &mut h {
                for w in row {
                    *w = B::W::mul_ref(&kernel.pi[sigma], w);
                }
            }
            h
        })
        .collect();
    let depth = (k + 2) * (kernel.n + f + k + 3) + 2 * kernel.n;
    let mut total = ProbValue::zero();
    for a in 0..f {
        for e in 0..=k {
            let mut num = B::W::zero();
            for h in &per_sigma {
                num.add_ref(&h[a][e]);
            }
            if num.is_zero() {
                continue;
            }
            // rank a + 1 + U{0..=e} is at most f with probability min(f - a, e + 1) / (e + 1)
            let share = BigRational::new(((f - a).min(e + 1)).into(), (e + 1).into());
            total = total.add(&backend.finish(num, k, true, depth).mul(&ProbValue::Exact(share)));
        }
    }
    total
}

fn zero_like<W: Weight>(_: &[W]) -> W {
    W::zero()
}

/// `sum_{a + c <= l} x[a] y[c]`.
fn pair_sum<W: Weight>(x: &[W], y: &[W], l: usize) -> W {
    let mut prefix = Vec::with_capacity(l + 1);
    let mut run = W::zero();
    for c in 0..=l {
        run.add_ref(&y[c]);
        prefix.push(run.clone());
    }
    let mut total = W::zero();
    for a in 0..=l {
        total.add_mul(&x[a], &prefix[l - a]);
    }
    total
}

fn walk_tables<B: Backend>(backend: &B, max_steps: usize, cap: usize) -> Vec<Vec<Vec<B::W>>> {
    let n = backend.kernel().n;
    (0..n).into_par_iter().map(|sigma| walk_counts(backend, sigma, max_steps, cap)).collect()
}

fn walk_counts<B: Backend>(backend: &B, sigma: usize, max_steps: usize, cap: usize) -> Vec<Vec<B::W>> {
    let k = backend.kernel();
    let n = k.n;
    let pivot = k.labels[sigma];
    let low: Vec<usize> = (0..n).map(|s| usize::from(k.labels[s] <= pivot)).collect();
    let mut cur = vec![vec![B::W::zero(); cap + 1]; n];
    cur[sigma][0] = B::W::one();
    let mut out = Vec::with_capacity(max_steps + 1);
    out.push(totals(&cur, cap));
    for _ in 0..max_steps {
        let mut next = vec![vec![B::W::zero(); cap + 1]; n];
        for (u, row) in cur.iter().enumerate() {
            for v in 0..n {
                let p = k.p(u, v);
                if p.is_zero() {
                    continue;
                }
                let shift = low[v];
                for c in 0..(cap + 1).saturating_sub(shift) {
                    next[v][c + shift].add_mul(&row[c], p);
                }
            }
        }
        cur = next;
        out.push(totals(&cur, cap));
    }
    out
}

fn totals<W: Weight>(layer: &[Vec<W>], cap: usize) -> Vec<W> {
    let mut t = vec![W::zero(); cap + 1];
    for row in layer {
        for (c, w) in row.iter().enumerate() {
            t[c].add_ref(w);
        }
    }
    t
}
