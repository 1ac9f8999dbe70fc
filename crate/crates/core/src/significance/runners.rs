use num_rational::Ratio;
use rayon::prelude::*;

use super::bounds::{chernoff_tail, select_epsilon_t, BoundInputs, ChernoffVariant};
use super::report::{NominalCheck, Observed, SignificanceReport, TestName, TestParams};
use super::{format_ratio, OutlierObservation, SampleShape, TieBreak};
use crate::error::{invalid, Result};
use crate::sampling::{
    sample_geometric_trajectory, sample_parallel, sample_serial, sample_star_split, sample_trajectory, sample_two_paths, ChainSampler,
    ParallelSample, RngSeed, SerialSample, StarSplitSample, Trajectory, TwoPathSample, DEFAULT_GEOMETRIC_CAP,
};

fn labels<S: ChainSampler>(chain: &S, states: &[S::State]) -> Vec<f64> {
    states.iter().map(|s| chain.label(s)).collect()
}

/// Pivot `X_0` among `X_0..X_k`.
pub fn observe_trajectory<S: ChainSampler>(chain: &S, trajectory: &Trajectory<S::State>, ties: TieBreak) -> Result<OutlierObservation> {
    let labels = labels(chain, &trajectory.states);
    OutlierObservation::from_labels(labels[0], &labels, SampleShape::SingleTrajectory { k: trajectory.k() }, ties)
}

pub fn observe_serial<S: ChainSampler>(chain: &S, sample: &SerialSample<S::State>, ties: TieBreak) -> Result<OutlierObservation> {
    let mut all = labels(chain, &sample.y.states);
    all.extend(sample.z.states[1..].iter().map(|s| chain.label(s)));
    OutlierObservation::from_labels(all[0], &all, SampleShape::Serial { k: sample.k }, ties)
}

pub fn observe_two_paths<S: ChainSampler>(chain: &S, sample: &TwoPathSample<S::State>, ties: TieBreak) -> Result<OutlierObservation> {
    let mut all = labels(chain, &sample.y.states);
    all.extend(sample.z.states[1..].iter().map(|s| chain.label(s)));
    OutlierObservation::from_labels(all[0], &all, SampleShape::TwoPath { k: sample.y.k() }, ties)
}

/// `sigma0` against the branch endpoints `Z^s_k`.
pub fn observe_parallel<S: ChainSampler>(chain: &S, sample: &ParallelSample<S::State>, ties: TieBreak) -> Result<OutlierObservation> {
    let mut all = vec![chain.label(sample.x.start())];
    all.extend(sample.branches.iter().map(|b| chain.label(b.last())));
    OutlierObservation::from_labels(all[0], &all, SampleShape::Parallel { m: all.len() }, ties)
}

/// `sigma0` against every exposed state except the branch point `X_xi`.
pub fn observe_star_split<S: ChainSampler>(chain: &S, sample: &StarSplitSample<S::State>, ties: TieBreak) -> Result<OutlierObservation> {
    let mut all = vec![chain.label(&sample.sigma0)];
    all.extend(sample.pre_branch[..sample.xi - 1].iter().map(|s| chain.label(s)));
    all.extend(sample.side.iter().map(|s| chain.label(s)));
    for branch in &sample.branches {
        all.extend(branch.iter().map(|s| chain.label(s)));
    }
    OutlierObservation::from_labels(all[0], &all, SampleShape::StarSplit { k: sample.k, m: sample.m() }, ties)
}

/// Inputs for [`run_test`]. Fields a test does not use are ignored.
#[derive(Clone, Debug)]
pub struct TestConfig {
    pub k: usize,
    pub m: usize,
    pub t: usize,
    pub alpha: f64,
    pub mu: f64,
    pub length_cap: usize,
    /// Nominal ε for the report's pass/fail line.
    pub epsilon: Option<f64>,
    pub seed: RngSeed,
    pub ties: TieBreak,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            k: 0,
            m: 1,
            t: 1,
            alpha: 1.0,
            mu: 1.0,
            length_cap: DEFAULT_GEOMETRIC_CAP,
            epsilon: None,
            seed: RngSeed::new(0),
            ties: TieBreak::Conservative,
        }
    }
}

/// Dispatches to the runner for `test`. Product tests live in [`crate::product`].
pub fn run_test<S: ChainSampler>(chain: &S, sigma0: &S::State, test: TestName, config: &TestConfig) -> Result<SignificanceReport> {
    let mut report = match test {
        TestName::SingleTrajectory => run_single_trajectory_test(chain, sigma0, config.k, config.seed)?,
        TestName::Serial => run_serial_test(chain, sigma0, config.k, config.seed)?,
        TestName::TwoPath => run_two_path_test(chain, sigma0, config.k, config.seed)?,
        TestName::Parallel => run_parallel_test(chain, sigma0, config.k, config.m, config.seed)?,
        TestName::StarSplit => run_star_split_test(chain, sigma0, config.k, config.m, config.seed)?,
        TestName::Outlier => run_outlier_test(chain, sigma0, config.k, config.m, config.t, config.alpha, config.seed)?,
        TestName::GeometricOutlier => {
            run_geometric_outlier_test(chain, sigma0, config.mu, config.m, config.t, config.alpha, config.length_cap, config.seed)?
        }
        TestName::ProductSerial | TestName::ProductTwoPath | TestName::ProductUniformPivot => {
            return Err(invalid("test", "product tests need a product chain"));
        }
    };
    if config.ties != TieBreak::Conservative {
        return Err(invalid("ties", "random tie-breaking is available through the observe_* functions only"));
    }
    if let Some(eps) = config.epsilon {
        attach_nominal(&mut report, eps)?;
    }
    Ok(report)
}

/// Adds the ε-outlier verdict at a nominal ε to a single-statistic report.
pub(crate) fn attach_nominal(report: &mut SignificanceReport, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1], got {eps}")));
    }
    if report.observed.rho.is_some() {
        return Err(invalid("epsilon", "the (ε,α) tests take t, not a nominal ε"));
    }
    let ratio = super::parse_ratio(&report.observed.epsilon)?;
    let obs = OutlierObservation { pivot_label: report.observed.pivot_label, count_leq: *ratio.numer(), n_total: *ratio.denom(), shape: SampleShape::Unstructured };
    let mut inputs = report.bound_inputs()?;
    inputs.epsilon = eps;
    report.params.epsilon = Some(eps);
    report.nominal = Some(NominalCheck { epsilon: eps, is_outlier: obs.is_outlier(eps), bound: report.bound_formula.evaluate(&inputs)? });
    Ok(())
}

pub(crate) fn single_report(
    test: TestName,
    params: TestParams,
    seed: RngSeed,
    sigma0: Vec<Vec<u64>>,
    obs: &OutlierObservation,
    split_points: Option<Vec<usize>>,
) -> Result<SignificanceReport> {
    let formula = test.bound_formula();
    let inputs = BoundInputs { epsilon: obs.epsilon(), alpha: params.alpha, m: params.m, t: params.t, d: params.d };
    let p_value = formula.evaluate(&inputs)?;
    let epsilon = format_ratio(obs.epsilon_obs());
    Ok(SignificanceReport {
        test,
        params,
        seed,
        sigma0,
        observed: Observed {
            pivot_label: obs.pivot_label,
            epsilon: epsilon.clone(),
            epsilon_list: vec![epsilon],
            rho: None,
            realized_lengths: None,
            split_points,
        },
        p_value,
        bound_formula: formula,
        chernoff: None,
        nominal: None,
        truncation_flags: Vec::new(),
    })
}

pub(crate) fn check_multi(m: usize, t: usize, alpha: f64) -> Result<()> {
    if m == 0 {
        return Err(invalid("m", "need at least one trajectory"));
    }
    if t == 0 || t > m {
        return Err(invalid("t", format!("need 1 <= t <= m, got t = {t}, m = {m}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Builds an (ε,α) report from per-sample observations in sample order.
pub(crate) fn multi_report(
    test: TestName,
    params: TestParams,
    seed: RngSeed,
    sigma0: Vec<Vec<u64>>,
    observations: &[OutlierObservation],
    chernoff: Option<ChernoffVariant>,
) -> Result<SignificanceReport> {
    let m = params.m.expect("multi-sample reports record m");
    let t = params.t.expect("multi-sample reports record t");
    let alpha = params.alpha.expect("multi-sample reports record alpha");
    let eps: Vec<Ratio<u64>> = observations.iter().map(OutlierObservation::epsilon_obs).collect();
    let eps_t = select_epsilon_t(&eps, t)?;
    let formula = test.bound_formula();
    let inputs = BoundInputs { epsilon: super::ratio_to_f64(eps_t), alpha: Some(alpha), m: Some(m), t: Some(t), d: params.d };
    let p_value = formula.evaluate(&inputs)?;
    let chernoff = chernoff.and_then(|variant| {
        let c = if variant == ChernoffVariant::TwoPath { 2.0 } else { 1.0 };
        let r = t as f64 - m as f64 * (c * inputs.epsilon / alpha).sqrt();
        (r > 0.0).then(|| chernoff_tail(m, inputs.epsilon, alpha, r, variant).ok()).flatten()
    });
    Ok(SignificanceReport {
        test,
        params,
        seed,
        sigma0,
        observed: Observed {
            pivot_label: observations[0].pivot_label,
            epsilon: format_ratio(eps_t),
            epsilon_list: eps.into_iter().map(format_ratio).collect(),
            rho: Some(t),
            realized_lengths: None,
            split_points: None,
        },
        p_value,
        bound_formula: formula,
        chernoff,
        nominal: None,
        truncation_flags: Vec::new(),
    })
}

/// One trajectory from `sigma0`; p = `min(1, sqrt(2 eps))`.
pub fn run_single_trajectory_test<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, seed: RngSeed) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    let trajectory = sample_trajectory(chain, sigma0, k, seed);
    let obs = observe_trajectory(chain, &trajectory, TieBreak::Conservative)?;
    let params = TestParams { k: Some(k), ..Default::default() };
    single_report(TestName::SingleTrajectory, params, seed, vec![chain.describe(sigma0)], &obs, None)
}

/// Serial test, `xi` uniform on `{0..k}`; p = eps.
pub fn run_serial_test<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, seed: RngSeed) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    let sample = sample_serial(chain, sigma0, k, seed);
    let obs = observe_serial(chain, &sample, TieBreak::Conservative)?;
    let params = TestParams { k: Some(k), ..Default::default() };
    single_report(TestName::Serial, params, seed, vec![chain.describe(sigma0)], &obs, Some(vec![sample.xi]))
}

/// Two walks of length `k` from `sigma0`; p = `min(1, 2 eps)`.
pub fn run_two_path_test<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, seed: RngSeed) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    let sample = sample_two_paths(chain, sigma0, k, seed);
    let obs = observe_two_paths(chain, &sample, TieBreak::Conservative)?;
    let params = TestParams { k: Some(k), ..Default::default() };
    single_report(TestName::TwoPath, params, seed, vec![chain.describe(sigma0)], &obs, None)
}

/// Branch `m - 1` walks at `X_k`; p = eps over `sigma0` and the endpoints.
pub fn run_parallel_test<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, m: usize, seed: RngSeed) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    let sample = sample_parallel(chain, sigma0, k, m, seed)?;
    let obs = observe_parallel(chain, &sample, TieBreak::Conservative)?;
    let params = TestParams { k: Some(k), m: Some(m), ..Default::default() };
    single_report(TestName::Parallel, params, seed, vec![chain.describe(sigma0)], &obs, None)
}

/// Star-split test, `xi` uniform on `{1..k}`; p = eps over `m k` labels.
pub fn run_star_split_test<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, m: usize, seed: RngSeed) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    let sample = sample_star_split(chain, sigma0, k, m, seed)?;
    let obs = observe_star_split(chain, &sample, TieBreak::Conservative)?;
    let params = TestParams { k: Some(k), m: Some(m), ..Default::default() };
    single_report(TestName::StarSplit, params, seed, vec![chain.describe(sigma0)], &obs, Some(vec![sample.xi]))
}

/// (ε,α) test: `m` independent `k`-step trajectories from `sigma0`, with `t`
/// fixed in advance. ε is the `t`-th smallest per-trajectory ε and
/// p = `binomial_tail(m, t, min(1, sqrt(2 eps / alpha)))`.
pub fn run_outlier_test<S: ChainSampler>(
    chain: &S,
    sigma0: &S::State,
    k: usize,
    m: usize,
    t: usize,
    alpha: f64,
    seed: RngSeed,
) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    check_multi(m, t, alpha)?;
    let observations = (0..m)
        .into_par_iter()
        .map(|i| observe_trajectory(chain, &sample_trajectory(chain, sigma0, k, seed.item(i as u64)), TieBreak::Conservative))
        .collect::<Result<Vec<_>>>()?;
    let params = TestParams { k: Some(k), m: Some(m), t: Some(t), alpha: Some(alpha), ..Default::default() };
    multi_report(TestName::Outlier, params, seed, vec![chain.describe(sigma0)], &observations, Some(ChernoffVariant::TwoPath))
}

/// As [`run_outlier_test`] with geometric lengths of mean `mu` and
/// q = `min(1, sqrt(eps / alpha))`.
#[allow(clippy::too_many_arguments)]
pub fn run_geometric_outlier_test<S: ChainSampler>(
    chain: &S,
    sigma0: &S::State,
    mu: f64,
    m: usize,
    t: usize,
    alpha: f64,
    length_cap: usize,
    seed: RngSeed,
) -> Result<SignificanceReport> {
    chain.check_state(sigma0)?;
    check_multi(m, t, alpha)?;
    let samples = (0..m)
        .into_par_iter()
        .map(|i| {
            let g = sample_geometric_trajectory(chain, sigma0, mu, length_cap, seed.item(i as u64))?;
            let obs = observe_trajectory(chain, &g.trajectory, TieBreak::Conservative)?;
            Ok((obs, g.length.realized_k, g.truncated))
        })
        .collect::<Result<Vec<_>>>()?;
    let observations: Vec<_> = samples.iter().map(|(o, _, _)| o.clone()).collect();
    let params = TestParams { m: Some(m), t: Some(t), mu: Some(mu), length_cap: Some(length_cap), alpha: Some(alpha), ..Default::default() };
    let mut report = multi_report(TestName::GeometricOutlier, params, seed, vec![chain.describe(sigma0)], &observations, Some(ChernoffVariant::Geometric))?;
    report.observed.realized_lengths = Some(samples.iter().map(|s| s.1).collect());
    report.truncation_flags = samples.iter().enumerate().filter(|(_, s)| s.2).map(|(i, _)| i).collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{LabeledChain, StateId};
    use crate::significance::SignificanceReport;

    fn iid(n: usize) -> LabeledChain {
        let row = vec![1.0 / n as f64; n];
        LabeledChain::from_rows(vec![row; n], Some(vec![1.0; n]), (0..n).map(|i| i as f64).collect()).unwrap()
    }

    fn knn3() -> LabeledChain {
        let mut rows = vec![vec![0.0; 6]; 6];
        for u in 0..3 {
            for v in 3..6 {
                rows[u][v] = 1.0 / 3.0;
                rows[v][u] = 1.0 / 3.0;
            }
        }
        LabeledChain::from_rows(rows, Some(vec![1.0; 6]), (1..=6).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn reports_are_recomputable_and_round_trip() {
        let chain = iid(5);
        let s = StateId(0);
        let seed = RngSeed::with_stream(3, 4);
        let reports = [
            run_single_trajectory_test(&chain, &s, 20, seed).unwrap(),
            run_serial_test(&chain, &s, 20, seed).unwrap(),
            run_two_path_test(&chain, &s, 20, seed).unwrap(),
            run_parallel_test(&chain, &s, 5, 7, seed).unwrap(),
            run_star_split_test(&chain, &s, 5, 3, seed).unwrap(),
            run_outlier_test(&chain, &s, 20, 10, 4, 0.5, seed).unwrap(),
            run_geometric_outlier_test(&chain, &s, 4.0, 10, 4, 0.5, 3, seed).unwrap(),
        ];
        for r in &reports {
            r.check().unwrap();
            let back = SignificanceReport::from_json(&r.to_json()).unwrap();
            assert_eq!(&back, r);
            back.check().unwrap();
        }
    }

    #[test]
    fn all_trajectories_match_closed_form() {
        let chain = iid(5);
        let r = run_outlier_test(&chain, &StateId(0), 9, 6, 6, 0.9, RngSeed::new(1)).unwrap();
        // state 0 has the smallest label: every trajectory gives count_leq = 1 + visits to 0
        let eps = crate::significance::ratio_to_f64(crate::significance::parse_ratio(&r.observed.epsilon).unwrap());
        let closed = (2.0 * eps / 0.9f64).powf(3.0).min(1.0);
        assert!((r.p_value - closed).abs() <= 1e-12 * closed, "{} vs {closed}", r.p_value);
        assert_eq!(r.observed.rho, Some(6));
    }

    #[test]
    fn star_split_with_one_leg_counts_k_labels() {
        let r = run_star_split_test(&iid(5), &StateId(0), 6, 1, RngSeed::new(2)).unwrap();
        assert!(r.observed.epsilon.ends_with("/6"));
        let r = run_star_split_test(&iid(5), &StateId(0), 4, 3, RngSeed::new(2)).unwrap();
        assert!(r.observed.epsilon.ends_with("/12"));
    }

    #[test]
    fn knn_two_path_nominal() {
        let chain = knn3();
        let config = TestConfig { k: 1, epsilon: Some(0.3333), seed: RngSeed::new(7), ..Default::default() };
        let r = run_test(&chain, &StateId(0), TestName::TwoPath, &config).unwrap();
        let nominal = r.nominal.unwrap();
        assert!((nominal.bound - 0.6666).abs() < 1e-15);
        // the pivot has the smallest label, so exactly 1 of 3 labels is <= it,
        // and 1 > 0.3333 * 3
        assert_eq!(r.observed.epsilon, "1/3");
        assert!(!nominal.is_outlier);
    }

    #[test]
    fn geometric_truncation_is_reported() {
        let r = run_geometric_outlier_test(&iid(3), &StateId(1), 1000.0, 5, 2, 0.5, 2, RngSeed::new(1)).unwrap();
        assert_eq!(r.truncation_flags, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.observed.realized_lengths, Some(vec![2; 5]));
    }

    #[test]
    fn parameter_errors() {
        let chain = iid(3);
        assert!(run_outlier_test(&chain, &StateId(0), 3, 4, 5, 0.5, RngSeed::new(1)).is_err());
        assert!(run_outlier_test(&chain, &StateId(0), 3, 4, 2, 0.0, RngSeed::new(1)).is_err());
        assert!(run_outlier_test(&chain, &StateId(0), 3, 4, 2, 1.5, RngSeed::new(1)).is_err());
        assert!(run_serial_test(&chain, &StateId(3), 3, RngSeed::new(1)).is_err());
        assert!(run_star_split_test(&chain, &StateId(0), 0, 2, RngSeed::new(1)).is_err());
        let config = TestConfig { m: 3, t: 2, alpha: 0.5, epsilon: Some(0.1), ..Default::default() };
        assert!(run_test(&chain, &StateId(0), TestName::Outlier, &config).is_err());
    }

    #[test]
    fn tampered_report_fails_check() {
        let mut r = run_serial_test(&iid(4), &StateId(0), 10, RngSeed::new(1)).unwrap();
        r.p_value = (r.p_value * 0.5).max(0.0);
        assert!(r.check().is_err());
    }

    #[test]
    fn same_seed_same_report_regardless_of_pool() {
        let chain = iid(6);
        let run = || run_outlier_test(&chain, &StateId(2), 50, 40, 5, 0.3, RngSeed::new(11)).unwrap().to_json();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
        assert_eq!(one, four);
    }
}
