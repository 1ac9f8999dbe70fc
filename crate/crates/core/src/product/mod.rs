//! Tests on products of chains and exact counting of low-label outcomes.
//!
//! Each component contributes a trajectory through its coordinate of
//! `sigma0`; the comparison set is the Cartesian product of those
//! trajectories.

mod count;

pub use count::{brute_force_count, count_event, epsilon_from_event, EventCount, RegionHistogram, DEFAULT_VALUE_LIMIT};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::chain::{LabeledChain, StateId};
use crate::error::{invalid, Error, Result};
use crate::oracle::DEFAULT_BUDGET;
use crate::sampling::{sample_trajectory_product, ChainSampler, PivotMode, RngSeed, TrajectoryProductSample};
use crate::significance::{OutlierObservation, SampleShape, SignificanceReport, TestName, TestParams};

/// Label on the product space.
#[derive(Clone, Debug, PartialEq)]
pub enum JointLabel {
    /// `omega(x) = sum_i omega_i(x_i)`, added left to right.
    Sum,
    /// Explicit label per tuple, indexed in mixed radix with component 0
    /// most significant.
    Table(Vec<f64>),
}

/// `d` independent component chains with a joint label.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductChain {
    components: Vec<LabeledChain>,
    joint: JointLabel,
    budget: u64,
}

impl ProductChain {
    pub fn new(components: Vec<LabeledChain>, joint: JointLabel) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("components", "a product needs at least one component"));
        }
        if let JointLabel::Table(table) = &joint {
            let size = components.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.n_states()));
            if size != Some(table.len()) {
                return Err(invalid("joint_label", format!("table has {} entries for {size:?} tuples", table.len())));
            }
            if table.iter().any(|x| x.is_nan()) {
                return Err(invalid("joint_label", "labels must not be NaN"));
            }
        }
        Ok(ProductChain { components, joint, budget: DEFAULT_BUDGET })
    }

    pub fn sum(components: Vec<LabeledChain>) -> Result<Self> {
        Self::new(components, JointLabel::Sum)
    }

    /// Caps the work spent ranking a pivot within the product.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[LabeledChain] {
        &self.components
    }

    pub fn joint(&self) -> &JointLabel {
        &self.joint
    }

    /// Mixed-radix index of a state tuple.
    pub fn tuple_index(&self, states: &[usize]) -> usize {
        states.iter().zip(&self.components).fold(0, |acc, (&s, c)| acc * c.n_states() + s)
    }

    pub fn tuple_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.d()];
        for (i, c) in self.components.iter().enumerate().rev() {
            out[i] = index % c.n_states();
            index /= c.n_states();
        }
        out
    }

    pub fn n_tuples(&self) -> Option<usize> {
        self.components.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.n_states()))
    }

    pub fn label(&self, states: &[usize]) -> f64 {
        match &self.joint {
            JointLabel::Sum => states.iter().zip(&self.components).fold(0.0, |acc, (&s, c)| acc + c.label(StateId(s))),
            JointLabel::Table(table) => table[self.tuple_index(states)],
        }
    }

    fn check_sigma0(&self, sigma0: &[usize]) -> Result<()> {
        if sigma0.len() != self.d() {
            return Err(invalid("sigma0", format!("{} coordinates for {} components", sigma0.len(), self.d())));
        }
        for (c, &s) in self.components.iter().zip(sigma0) {
            c.check_state(StateId(s), "sigma0")?;
        }
        Ok(())
    }

    /// `#{tuples x in the product of trajectories : omega(x) <= omega(pivot)}`.
    pub fn count_leq(&self, sample: &TrajectoryProductSample<StateId>) -> Result<u64> {
        let states: Vec<Vec<usize>> = sample.trajectories.iter().map(|t| t.states.iter().map(|s| s.0).collect()).collect();
        let pivot: Vec<usize> = states.iter().zip(&sample.pivots).map(|(t, &j)| t[j]).collect();
        let a = self.label(&pivot);
        match &self.joint {
            JointLabel::Sum => {
                let lists: Vec<Vec<f64>> = states.iter().zip(&self.components).map(|(t, c)| t.iter().map(|&s| c.label(StateId(s))).collect()).collect();
                sum_count_leq(&lists, a, self.budget)
            }
            JointLabel::Table(_) => {
                let total = states.iter().try_fold(1u64, |acc, t| acc.checked_mul(t.len() as u64));
                match total {
                    Some(t) if t <= self.budget => {}
                    _ => return Err(Error::BudgetExceeded { required: states.iter().map(|t| t.len() as u128).product(), budget: self.budget }),
                }
                Ok(enumerate_count(&states, |x| self.label(x) <= a))
            }
        }
    }
}

/// Tuples `(x_0..x_{d-1})` from the given label lists whose left-to-right
/// float sum is `<= a`. Floating-point addition is monotone, so the last
/// coordinate is counted by binary search against each distinct partial sum.
pub fn sum_count_leq(lists: &[Vec<f64>], a: f64, budget: u64) -> Result<u64> {
    let (last, init) = lists.split_last().ok_or_else(|| invalid("lists", "no components"))?;
    let mut partial: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    partial.insert(0.0f64.to_bits(), (0.0, 1));
    for list in init {
        let mut next = BTreeMap::new();
        for &(s, c) in partial.values() {
            for &x in list {
                let v = s + x;
                next.entry(v.to_bits()).or_insert((v, 0)).1 += c;
            }
        }
        let work = next.len() as u128 * list.len() as u128;
        if work > u128::from(budget) {
            return Err(Error::BudgetExceeded { required: work, budget });
        }
        partial = next;
    }
    let mut sorted = last.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(partial.values().map(|&(s, c)| c * sorted.partition_point(|&x| s + x <= a) as u64).sum())
}

fn enumerate_count(states: &[Vec<usize>], mut keep: impl FnMut(&[usize]) -> bool) -> u64 {
    let mut idx = vec![0usize; states.len()];
    let mut tuple: Vec<usize> = states.iter().map(|t| t[0]).collect();
    let mut count = 0;
    loop {
        if keep(&tuple) {
            count += 1;
        }
        let mut i = states.len();
        loop {
            if i == 0 {
                return count;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < states[i].len() {
                tuple[i] = states[i][idx[i]];
                break;
            }
            idx[i] = 0;
            tuple[i] = states[i][0];
        }
    }
}

fn sample(product: &ProductChain, sigma0: &[usize], k: &[usize], pivots: &PivotMode, seed: RngSeed) -> Result<TrajectoryProductSample<StateId>> {
    let chains: Vec<&LabeledChain> = product.components.iter().collect();
    let start: Vec<StateId> = sigma0.iter().map(|&s| StateId(s)).collect();
    sample_trajectory_product(&chains, &start, k, pivots, seed)
}

fn observe(product: &ProductChain, sample: &TrajectoryProductSample<StateId>, shape: SampleShape) -> Result<OutlierObservation> {
    let pivot: Vec<usize> = sample.trajectories.iter().zip(&sample.pivots).map(|(t, &j)| t.states[j].0).collect();
    let total = sample.trajectories.iter().map(|t| t.states.len() as u64).product();
    OutlierObservation::from_counts(product.label(&pivot), product.count_leq(sample)?, total, shape)
}

fn describe(product: &ProductChain, sigma0: &[usize]) -> Vec<Vec<u64>> {
    product.components.iter().zip(sigma0).map(|(c, &s)| c.describe(&StateId(s))).collect()
}

/// Serial product test: per component a `k`-step trajectory through
/// `sigma0_i` at a uniform position; p = ε over `(k+1)^d` labels.
pub fn run_product_serial_test(product: &ProductChain, sigma0: &[usize], k: usize, seed: RngSeed) -> Result<SignificanceReport> {
    product.check_sigma0(sigma0)?;
    let d = product.d();
    let s = sample(product, sigma0, &vec![k; d], &PivotMode::Uniform, seed)?;
    let obs = observe(product, &s, SampleShape::ProductSerial { k, d })?;
    let params = TestParams { k: Some(k), d: Some(d), ..Default::default() };
    crate::significance::single_report(TestName::ProductSerial, params, seed, describe(product, sigma0), &obs, Some(s.pivots))
}

/// Two-path product test: per component two `k`-step walks from
/// `sigma0_i`; p = `min(1, 2^d eps)` over `(2k+1)^d` labels.
pub fn run_product_two_path_test(product: &ProductChain, sigma0: &[usize], k: usize, seed: RngSeed) -> Result<SignificanceReport> {
    product.check_sigma0(sigma0)?;
    let d = product.d();
    let s = sample(product, sigma0, &vec![2 * k; d], &PivotMode::Fixed(vec![k; d]), seed)?;
    let obs = observe(product, &s, SampleShape::ProductTwoPath { k, d })?;
    let params = TestParams { k: Some(k), d: Some(d), ..Default::default() };
    crate::significance::single_report(TestName::ProductTwoPath, params, seed, describe(product, sigma0), &obs, None)
}

/// Product (ε,α) claim: `m` trajectory products with uniform pivots
/// `j_i ~ Unif{0..k_i}`; ε is the `t`-th smallest and
/// p = `binomial_tail(m, t, min(1, eps / alpha))`.
pub fn run_product_uniform_pivot_test(
    product: &ProductChain,
    sigma0: &[usize],
    k: &[usize],
    alpha: f64,
    m: usize,
    t: usize,
    seed: RngSeed,
) -> Result<SignificanceReport> {
    product.check_sigma0(sigma0)?;
    if k.len() != product.d() {
        return Err(invalid("k", format!("{} lengths for {} components", k.len(), product.d())));
    }
    crate::significance::check_multi(m, t, alpha)?;
    let shape = SampleShape::ProductUniformPivot { k: k.to_vec() };
    let observations = (0..m)
        .into_par_iter()
        .map(|i| observe(product, &sample(product, sigma0, k, &PivotMode::Uniform, seed.item(i as u64))?, shape.clone()))
        .collect::<Result<Vec<_>>>()?;
    let params = TestParams { k_tuple: Some(k.to_vec()), m: Some(m), t: Some(t), alpha: Some(alpha), d: Some(product.d()), ..Default::default() };
    crate::significance::multi_report(TestName::ProductUniformPivot, params, seed, describe(product, sigma0), &observations, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Edge;
    use crate::sampling::Trajectory;
    use crate::significance::{run_serial_test, SignificanceReport};
    use proptest::prelude::*;

    fn iid(labels: Vec<f64>) -> LabeledChain {
        let n = labels.len();
        LabeledChain::from_rows(vec![vec![1.0 / n as f64; n]; n], None, labels).unwrap()
    }

    fn knn3() -> LabeledChain {
        let mut edges = Vec::new();
        for u in 0..3 {
            for v in 3..6 {
                edges.push(Edge::new(u, v, 1.0));
            }
        }
        LabeledChain::build_from_edge_list(6, &edges).unwrap().with_labels((1..=6).map(f64::from).collect()).unwrap()
    }

    fn fixed(trajectories: Vec<Vec<usize>>, pivots: Vec<usize>) -> TrajectoryProductSample<StateId> {
        TrajectoryProductSample { trajectories: trajectories.into_iter().map(|t| Trajectory { states: t.into_iter().map(StateId).collect() }).collect(), pivots }
    }

    #[test]
    fn label_and_index() {
        let p = ProductChain::sum(vec![iid(vec![0.0, 1.0]), iid(vec![0.0, 10.0, 20.0])]).unwrap();
        assert_eq!(p.tuple_index(&[1, 2]), 5);
        assert_eq!(p.tuple_of(5), vec![1, 2]);
        assert_eq!(p.label(&[1, 2]), 21.0);
        assert!(ProductChain::new(vec![iid(vec![0.0, 1.0])], JointLabel::Table(vec![0.0])).is_err());
        assert!(ProductChain::sum(vec![]).is_err());
    }

    #[test]
    fn count_by_hand() {
        let p = ProductChain::sum(vec![iid(vec![0.0, 1.0, 2.0]), iid(vec![0.0, 1.0, 2.0])]).unwrap();
        // trajectories (0, 2) and (1, 1, 2), pivot labels 0 + 1 = 1: tuples with sum <= 1 are (0,1) twice
        let s = fixed(vec![vec![0, 2], vec![1, 1, 2]], vec![0, 0]);
        assert_eq!(p.count_leq(&s).unwrap(), 2);
        let table = ProductChain::new(p.components().to_vec(), JointLabel::Table((0..9).map(|i| -(i as f64)).collect())).unwrap();
        // label -(3a + b): every tuple here has index >= 1
        assert_eq!(table.count_leq(&s).unwrap(), 6);
    }

    #[test]
    fn k_zero_gives_one() {
        let p = ProductChain::sum(vec![knn3(), knn3()]).unwrap();
        let r = run_product_serial_test(&p, &[0, 4], 0, RngSeed::new(2)).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.observed.epsilon, "1/1");
    }

    #[test]
    fn one_component_has_k_plus_one_labels() {
        let c = knn3();
        let p = ProductChain::sum(vec![c.clone()]).unwrap();
        for seed in 0..20 {
            let a = run_product_serial_test(&p, &[2], 6, RngSeed::new(seed)).unwrap();
            let b = run_serial_test(&c, &StateId(2), 6, RngSeed::new(seed)).unwrap();
            assert_eq!(a.bound_formula.evaluate(&a.bound_inputs().unwrap()).unwrap(), a.p_value);
            assert_eq!(b.observed.epsilon.split('/').nth(1), Some("7"));
            assert_eq!(a.observed.epsilon.split('/').nth(1), Some("7"));
        }
    }

    #[test]
    fn two_path_penalty_and_round_trip() {
        let p = ProductChain::sum(vec![knn3(), knn3()]).unwrap();
        let r = run_product_two_path_test(&p, &[0, 3], 1, RngSeed::new(5)).unwrap();
        assert_eq!(r.observed.epsilon.split('/').nth(1), Some("9"));
        let eps: f64 = {
            let (a, b) = r.observed.epsilon.split_once('/').unwrap();
            a.parse::<f64>().unwrap() / b.parse::<f64>().unwrap()
        };
        assert_eq!(r.p_value, (4.0 * eps).min(1.0));
        let back = SignificanceReport::from_json(&r.to_json()).unwrap();
        back.check().unwrap();
    }

    #[test]
    fn uniform_pivot_single_sample() {
        let p = ProductChain::sum(vec![knn3(), iid(vec![0.0, 1.0, 2.0])]).unwrap();
        let r = run_product_uniform_pivot_test(&p, &[1, 2], &[2, 3], 0.5, 1, 1, RngSeed::new(8)).unwrap();
        let (a, b) = r.observed.epsilon.split_once('/').unwrap();
        let eps = a.parse::<f64>().unwrap() / b.parse::<f64>().unwrap();
        assert_eq!(b, "12");
        assert_eq!(r.p_value, (eps / 0.5).min(1.0));
        r.check().unwrap();
        assert!(run_product_uniform_pivot_test(&p, &[1, 2], &[2], 0.5, 1, 1, RngSeed::new(8)).is_err());
    }

    #[test]
    fn deterministic_across_pools() {
        let p = ProductChain::sum(vec![knn3(), knn3(), iid(vec![3.0, 1.0])]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_product_uniform_pivot_test(&p, &[0, 1, 1], &[3, 2, 4], 0.2, 16, 4, RngSeed::new(77)).unwrap().to_json())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn table_budget_refuses() {
        let c = iid(vec![0.0, 1.0]);
        let p = ProductChain::new(vec![c.clone(), c], JointLabel::Table(vec![0.0, 1.0, 2.0, 3.0])).unwrap().with_budget(10);
        let s = fixed(vec![vec![0; 4], vec![1; 4]], vec![0, 0]);
        assert!(matches!(p.count_leq(&s), Err(Error::BudgetExceeded { .. })));
    }

    proptest! {
        #[test]
        fn sum_fast_path_matches_enumeration(
            labels in prop::collection::vec(prop::collection::vec(-3i32..4, 1..5), 1..4),
            scale in prop::sample::select(vec![1.0, 0.1, 0.3]),
            pivot in any::<prop::sample::Index>(),
        ) {
            let lists: Vec<Vec<f64>> = labels.iter().map(|l| l.iter().map(|&x| x as f64 * scale).collect()).collect();
            let states: Vec<Vec<usize>> = lists.iter().map(|l| (0..l.len()).collect()).collect();
            let sum = |x: &[usize]| x.iter().zip(&lists).fold(0.0, |acc, (&i, l)| acc + l[i]);
            let total: usize = lists.iter().map(Vec::len).product();
            let mut all: Vec<f64> = Vec::new();
            enumerate_count(&states, |x| { all.push(sum(x)); false });
            let a = all[pivot.index(total)];
            let brute = all.iter().filter(|&&v| v <= a).count() as u64;
            prop_assert_eq!(sum_count_leq(&lists, a, u64::MAX).unwrap(), brute);
        }
    }
}
