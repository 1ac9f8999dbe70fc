//! Oracle values against direct enumeration of paths, trees and outcomes.

use chainsig::oracle::{Epsilon, Oracle, ProbValue, TreeShape};
use chainsig::product::{count_event, RegionHistogram};
use chainsig::sampling::RngSeed;
use chainsig::zoo::{make_knn, random_reversible_chain};
use chainsig::LabeledChain;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

struct Exact {
    n: usize,
    p: Vec<BigRational>,
    pi: Vec<BigRational>,
    labels: Vec<f64>,
}

impl Exact {
    fn of(chain: &LabeledChain) -> Self {
        let e = chain.exact().expect("exact chain");
        let total = e.stationary_weight.iter().fold(BigRational::zero(), |a, w| a + w);
        Exact {
            n: chain.n_states(),
            p: e.transition.clone(),
            pi: e.stationary_weight.iter().map(|w| w / &total).collect(),
            labels: chain.labels().to_vec(),
        }
    }

    fn p(&self, u: usize, v: usize) -> &BigRational {
        &self.p[u * self.n + v]
    }

    fn power(&self, k: usize) -> Vec<BigRational> {
        let n = self.n;
        let mut m: Vec<BigRational> = (0..n * n).map(|i| if i / n == i % n { BigRational::one() } else { BigRational::zero() }).collect();
        for _ in 0..k {
            let mut next = vec![BigRational::zero(); n * n];
            for u in 0..n {
                for w in 0..n {
                    if m[u * n + w].is_zero() {
                        continue;
                    }
                    for v in 0..n {
                        next[u * n + v] += &m[u * n + w] * self.p(w, v);
                    }
                }
            }
            m = next;
        }
        m
    }

    fn small(&self, pivot: usize, states: &[usize], l: usize) -> bool {
        let a = self.labels[pivot];
        states.iter().filter(|&&s| self.labels[s] <= a).count() <= l + 1
    }

    /// `Pr[X_j is l-small among X_0..X_k]` over every path.
    fn rho(&self, k: usize, j: usize, l: usize) -> BigRational {
        let mut total = BigRational::zero();
        let mut path = vec![0usize; k + 1];
        loop {
            let mut w = self.pi[path[0]].clone();
            for t in 0..k {
                if w.is_zero() {
                    break;
                }
                w *= self.p(path[t], path[t + 1]);
            }
            if !w.is_zero() && self.small(path[j], &path, l) {
                total += w;
            }
            let Some(pos) = (0..=k).rev().find(|&i| path[i] + 1 < self.n) else { break };
            path[pos] += 1;
            path[pos + 1..].fill(0);
        }
        total
    }

    /// Weight of a vertex assignment under the stationary tree measure.
    fn tree_rho(&self, tree: &TreeShape, l: usize) -> BigRational {
        let v = tree.n_vertices();
        let mut total = BigRational::zero();
        let mut x = vec![0usize; v];
        loop {
            let mut w = self.pi[x[0]].clone();
            for &(a, b) in tree.edges() {
                w *= self.p(x[a], x[b]);
            }
            if !w.is_zero() {
                let compared: Vec<usize> = tree.subset().iter().map(|&s| x[s]).collect();
                if self.small(x[tree.pivot()], &compared, l) {
                    total += w;
                }
            }
            let Some(pos) = (0..v).rev().find(|&i| x[i] + 1 < self.n) else { break };
            x[pos] += 1;
            x[pos + 1..].fill(0);
        }
        total
    }

    /// Parallel test: `X_0 ~ pi`, hub `X_k`, `m - 1` more `k`-step walks from
    /// the hub; `X_0` against the `m` endpoints.
    fn parallel(&self, k: usize, m: usize, l: usize) -> BigRational {
        let pk = self.power(k);
        let n = self.n;
        let mut total = BigRational::zero();
        for x0 in 0..n {
            for c in 0..n {
                let base = &self.pi[x0] * &pk[x0 * n + c];
                if base.is_zero() {
                    continue;
                }
                let mut ends = vec![0usize; m - 1];
                loop {
                    let w = ends.iter().fold(base.clone(), |acc, &e| acc * &pk[c * n + e]);
                    let mut all = vec![x0];
                    all.extend(&ends);
                    if !w.is_zero() && self.small(x0, &all, l) {
                        total += w;
                    }
                    let Some(pos) = (0..m - 1).rev().find(|&i| ends[i] + 1 < n) else { break };
                    ends[pos] += 1;
                    ends[pos + 1..].fill(0);
                }
            }
        }
        total
    }
}

fn exact(v: ProbValue) -> BigRational {
    v.as_exact().expect("exact oracle").clone()
}

fn chains() -> Vec<LabeledChain> {
    let mut out = vec![make_knn(2).unwrap()];
    for seed in 0..6 {
        let c = random_reversible_chain(3 + (seed as usize % 2), RngSeed::new(seed)).unwrap();
        let tied: Vec<f64> = c.labels().iter().map(|x| (x / 2.0).floor()).collect();
        out.push(c.clone().with_labels(tied).unwrap());
        out.push(c);
    }
    out
}

#[test]
fn path_rho_matches_enumeration() {
    for chain in chains() {
        let o = Oracle::new(&chain).unwrap();
        let b = Exact::of(&chain);
        for k in 0..=4 {
            for j in 0..=k {
                for l in 0..=k {
                    assert_eq!(exact(o.rho(k, j, l).unwrap().value), b.rho(k, j, l), "k={k} j={j} l={l}");
                }
            }
        }
    }
}

#[test]
fn serial_and_two_path_match_enumeration() {
    for chain in chains() {
        let o = Oracle::new(&chain).unwrap();
        let b = Exact::of(&chain);
        for k in 1..=3usize {
            for c in 1..=(2 * k + 1) as u64 {
                let eps = Epsilon::ratio(c, 2 * k as u64 + 1).unwrap();
                let serial = eps.ell(k as u64 + 1).map_or_else(BigRational::zero, |l| {
                    (0..=k).fold(BigRational::zero(), |acc, j| acc + b.rho(k, j, l)) / BigRational::from_integer(BigInt::from(k + 1))
                });
                assert_eq!(exact(o.serial_probability(k, &eps).unwrap()), serial);
                let two = eps.ell(2 * k as u64 + 1).map_or_else(BigRational::zero, |l| b.rho(2 * k, k, l));
                assert_eq!(exact(o.two_path_probability(k, &eps).unwrap()), two);
            }
        }
    }
}

#[test]
fn tree_rho_matches_enumeration() {
    let shapes = [
        TreeShape::path(4, 1).unwrap(),
        TreeShape::star(3, 1).unwrap(),
        TreeShape::star(2, 2).unwrap(),
        TreeShape::star_split(2, 2, 1).unwrap(),
        TreeShape::star_split(2, 2, 2).unwrap(),
        TreeShape::star_split(3, 1, 1).unwrap(),
        TreeShape::new(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)], vec![0, 2, 4], 2).unwrap(),
    ];
    for chain in chains().into_iter().take(7) {
        let o = Oracle::new(&chain).unwrap();
        let b = Exact::of(&chain);
        for t in &shapes {
            for l in 0..t.subset().len() {
                assert_eq!(exact(o.tree_rho(t, l).unwrap().value), b.tree_rho(t, l), "{t:?} l={l}");
            }
        }
    }
}

#[test]
fn parallel_matches_enumeration() {
    for chain in chains().into_iter().take(5) {
        let o = Oracle::new(&chain).unwrap();
        let b = Exact::of(&chain);
        for k in 1..=2 {
            for m in 1..=3 {
                for c in 1..=m as u64 {
                    let eps = Epsilon::ratio(c, m as u64).unwrap();
                    let l = eps.ell(m as u64).unwrap();
                    assert_eq!(exact(o.parallel_probability(k, m, &eps).unwrap()), b.parallel(k, m, l), "k={k} m={m} c={c}");
                }
            }
        }
    }
}

/// Expands each histogram into its individual outcomes and visits every
/// outcome tuple.
fn outcome_count(regions: &[Vec<(i64, u64)>], delta: i64) -> u64 {
    let outcomes: Vec<Vec<i64>> = regions.iter().map(|r| r.iter().flat_map(|&(v, c)| std::iter::repeat_n(v, c as usize)).collect()).collect();
    let mut idx = vec![0usize; outcomes.len()];
    let mut count = 0;
    loop {
        let sum: i64 = idx.iter().zip(&outcomes).map(|(&i, o)| o[i]).sum();
        if sum <= delta {
            count += 1;
        }
        let Some(pos) = (0..idx.len()).rev().find(|&i| idx[i] + 1 < outcomes[i].len()) else { break };
        idx[pos] += 1;
        idx[pos + 1..].fill(0);
    }
    count
}

fn region() -> impl Strategy<Value = Vec<(i64, u64)>> {
    prop::collection::btree_map(-4i64..6, 1u64..4, 1..4).prop_map(|m| m.into_iter().collect())
}

proptest! {
    #[test]
    fn count_event_matches_outcome_enumeration(regions in prop::collection::vec(region(), 1..5), delta in -12i64..16) {
        let hs: Vec<RegionHistogram> = regions.iter().enumerate().map(|(i, r)| RegionHistogram::from_pairs(format!("r{i}"), r).unwrap()).collect();
        let got = count_event(&hs, &BigRational::from_integer(delta.into()), 10_000).unwrap();
        prop_assert_eq!(got.count, BigUint::from(outcome_count(&regions, delta)));
        let total: u64 = regions.iter().map(|r| r.iter().map(|p| p.1).sum::<u64>()).product();
        prop_assert_eq!(got.total, BigUint::from(total));
    }
}
