//! Exact probabilities for trajectory products.
//!
//! Each component's trajectories are enumerated and grouped by the pivot
//! state and the multiset of visited states; the rank of the pivot tuple
//! among all `prod (k_i + 1)` product labels depends only on these classes.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use super::kernel::{gamma, Backend, ExactBackend, FloatBackend, Kernel, Weight};
use super::{certify, charge, Certification, Epsilon, ExactProbability, ProbValue, DEFAULT_BUDGET};
use crate::error::{invalid, Result};
use crate::product::ProductChain;

struct Class<W> {
    pivot: usize,
    /// Distinct visited states with multiplicities, pivot included.
    support: Vec<(usize, u64)>,
    weight: W,
}

enum Inner {
    Exact(Vec<ExactBackend>),
    Float(Vec<FloatBackend>),
}

/// Oracle over a [`ProductChain`] with independent π-stationary components.
pub struct ProductOracle<'a> {
    product: &'a ProductChain,
    inner: Inner,
    budget: u64,
}

impl<'a> ProductOracle<'a> {
    pub fn new(product: &'a ProductChain) -> Result<Self> {
        Self::with_budget(product, DEFAULT_BUDGET)
    }

    pub fn with_budget(product: &'a ProductChain, budget: u64) -> Result<Self> {
        for c in product.components() {
            c.require_valid()?;
        }
        let exact: Option<Vec<_>> = product.components().iter().map(ExactBackend::new).collect();
        let inner = match exact {
            Some(b) => Inner::Exact(b),
            None => Inner::Float(product.components().iter().map(FloatBackend::new).collect()),
        };
        Ok(ProductOracle { product, inner, budget })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.inner, Inner::Exact(_))
    }

    fn check_tuple(&self, name: &'static str, values: &[usize]) -> Result<()> {
        if values.len() != self.product.d() {
            return Err(invalid(name, format!("{} entries for {} components", values.len(), self.product.d())));
        }
        Ok(())
    }

    fn estimate(&self, k: &[usize]) -> u128 {
        let sizes: Vec<u128> = self.product.components().iter().map(|c| c.n_states() as u128).collect();
        let enumerate: u128 = sizes.iter().zip(k).map(|(&n, &ki)| n.saturating_pow(ki as u32 + 1) * (ki as u128 + 1)).sum();
        // class count is at most the trajectory count
        let combos = sizes.iter().zip(k).fold(1u128, |acc, (&n, &ki)| acc.saturating_mul(n.saturating_pow(ki as u32 + 1).min(n * multisets(n, ki as u128 + 1))));
        let inner = sizes.iter().fold(1u128, |acc, &n| acc.saturating_mul(n));
        enumerate.saturating_add(combos.saturating_mul(inner))
    }

    /// `Pr[X_j = sigma and omega(X_j) is l-small]` for each pivot tuple
    /// `sigma`, indexed by [`ProductChain::tuple_index`].
    pub fn pivot_masses(&self, k: &[usize], j: &[usize], l: usize) -> Result<Vec<ProbValue>> {
        self.check_tuple("k", k)?;
        self.check_tuple("j", j)?;
        if let Some(i) = (0..k.len()).find(|&i| j[i] > k[i]) {
            return Err(invalid("j", format!("pivot {} exceeds length {} in component {i}", j[i], k[i])));
        }
        charge(self.estimate(k), self.budget)?;
        Ok(match &self.inner {
            Inner::Exact(b) => {
                let den = b.iter().zip(k).fold(BigInt::one(), |acc, (bi, &ki)| acc * bi.denominator(ki, true));
                masses(self.product, b, k, j, l).into_iter().map(|num| ProbValue::Exact(BigRational::new(num, den.clone()))).collect()
            }
            Inner::Float(b) => {
                // the work estimate bounds the number of roundings behind any entry
                let g = gamma(usize::try_from(self.estimate(k)).unwrap_or(usize::MAX));
                masses(self.product, b, k, j, l).into_iter().map(|v| ProbValue::Approx { value: v, error_bound: v * g * (1.0 + 2.0 * g) }).collect()
            }
        })
    }

    /// Product `rho^k_{j,l}` over independent stationary trajectories.
    pub fn rho(&self, k: &[usize], j: &[usize], l: usize) -> Result<ExactProbability> {
        let total = self.pivot_masses(k, j, l)?.iter().fold(ProbValue::zero(), |acc, m| acc.add(m));
        Ok(ExactProbability { event: format!("product label at {j:?} is {l}-small among all trajectory-product labels"), value: total })
    }

    /// Serial product test with stationary start: the pivots `xi_i` are
    /// uniform on `{0..k}`, so the probability is the average of `rho` over
    /// all pivot tuples, with `l` taken from `(k+1)^d` labels.
    pub fn serial_probability(&self, k: usize, eps: &Epsilon) -> Result<ProbValue> {
        let d = self.product.d();
        let total = (k as u64 + 1).checked_pow(d as u32).ok_or_else(|| invalid("k", "too many product labels"))?;
        let Some(l) = eps.ell(total) else { return Ok(ProbValue::zero()) };
        let kk = vec![k; d];
        let mut sum = ProbValue::zero();
        for pivots in odometer(&vec![k + 1; d]) {
            sum = sum.add(&self.rho(&kk, &pivots, l)?.value);
        }
        Ok(sum.div_int(total))
    }

    /// Two-path product test with stationary start: `rho^{2k}_{k,l}` over
    /// `(2k+1)^d` labels.
    pub fn two_path_probability(&self, k: usize, eps: &Epsilon) -> Result<ProbValue> {
        let d = self.product.d();
        let total = (2 * k as u64 + 1).checked_pow(d as u32).ok_or_else(|| invalid("k", "too many product labels"))?;
        let Some(l) = eps.ell(total) else { return Ok(ProbValue::zero()) };
        Ok(self.rho(&vec![2 * k; d], &vec![k; d], l)?.value)
    }

    /// Per pivot tuple `sigma`, the probability that `sigma` is an ε-outlier
    /// on a trajectory product through it with uniform pivots.
    pub fn uniform_pivot_conditional(&self, k: &[usize], eps: &Epsilon) -> Result<Vec<ProbValue>> {
        self.check_tuple("k", k)?;
        let n_tuples = self.product.n_tuples().ok_or_else(|| invalid("components", "too many tuples"))?;
        let total = k.iter().try_fold(1u64, |acc, &ki| acc.checked_mul(ki as u64 + 1)).ok_or_else(|| invalid("k", "too many product labels"))?;
        let Some(l) = eps.ell(total) else { return Ok(vec![ProbValue::zero(); n_tuples]) };
        let mut sums = vec![ProbValue::zero(); n_tuples];
        for pivots in odometer(&k.iter().map(|&ki| ki + 1).collect::<Vec<_>>()) {
            for (s, m) in sums.iter_mut().zip(self.pivot_masses(k, &pivots, l)?) {
                *s = s.add(&m);
            }
        }
        let pi = self.stationary();
        Ok(sums
            .into_iter()
            .zip(&pi)
            .map(|(s, w)| match w {
                ProbValue::Exact(w) if w.is_zero() => ProbValue::zero(),
                _ => s.div_int(total).div(w),
            })
            .collect())
    }

    /// Stationary probabilities of the pivot tuples.
    pub fn stationary(&self) -> Vec<ProbValue> {
        let per: Vec<Vec<ProbValue>> = self.product.components().iter().map(|c| super::Oracle::with_budget(c, self.budget).map(|o| o.stationary())).collect::<Result<_>>().expect("components were validated");
        let n = self.product.n_tuples().expect("tuple count fits");
        (0..n)
            .map(|idx| {
                let tuple = self.product.tuple_of(idx);
                tuple.iter().enumerate().fold(ProbValue::Exact(BigRational::one()), |acc, (i, &s)| acc.mul(&per[i][s]))
            })
            .collect()
    }

    /// (ε,α) certification of `sigma0` for the uniform-pivot product test.
    pub fn certify(&self, sigma0: &[usize], k: &[usize], eps: &Epsilon, alpha: &BigRational) -> Result<Certification> {
        self.check_tuple("sigma0", sigma0)?;
        if let Some(i) = (0..sigma0.len()).find(|&i| sigma0[i] >= self.product.components()[i].n_states()) {
            return Err(invalid("sigma0", format!("state {} is outside component {i}", sigma0[i])));
        }
        let p = self.uniform_pivot_conditional(k, eps)?;
        Ok(certify(p, &self.stationary(), self.product.tuple_index(sigma0), alpha))
    }
}

fn multisets(n: u128, size: u128) -> u128 {
    // C(n + size - 1, size)
    let mut c: u128 = 1;
    for i in 0..size.min(64) {
        c = c.saturating_mul(n + i) / (i + 1);
    }
    c
}

/// All tuples with `0 <= t_i < radix_i`, last index fastest.
pub(crate) fn odometer(radix: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = radix.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0; radix.len()];
    if radix.contains(&0) {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = radix.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < radix[i] {
                break;
            }
            cur[i] = 0;
        }
    }
}

fn classes<W: Weight>(kernel: &Kernel<W>, k: usize, j: usize) -> Vec<Class<W>> {
    let n = kernel.n;
    let mut map: BTreeMap<(usize, Vec<u64>), W> = BTreeMap::new();
    let mut path = Vec::with_capacity(k + 1);
    fn walk<W: Weight>(kernel: &Kernel<W>, k: usize, j: usize, path: &mut Vec<usize>, weight: W, map: &mut BTreeMap<(usize, Vec<u64>), W>) {
        if path.len() == k + 1 {
            let mut counts = vec![0u64; kernel.n];
            for &s in path.iter() {
                counts[s] += 1;
            }
            map.entry((path[j], counts)).or_insert_with(W::zero).add_ref(&weight);
            return;
        }
        let last = *path.last().expect("nonempty");
        for v in 0..kernel.n {
            let p = kernel.p(last, v);
            if p.is_zero() {
                continue;
            }
            path.push(v);
            walk(kernel, k, j, path, W::mul_ref(&weight, p), map);
            path.pop();
        }
    }
    for s in 0..n {
        if kernel.pi[s].is_zero() {
            continue;
        }
        path.push(s);
        walk(kernel, k, j, &mut path, kernel.pi[s].clone(), &mut map);
        path.pop();
    }
    map.into_iter()
        .map(|((pivot, counts), weight)| Class {
            pivot,
            support: counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(s, &c)| (s, c)).collect(),
            weight,
        })
        .collect()
}

fn masses<B: Backend>(product: &ProductChain, backends: &[B], k: &[usize], j: &[usize], l: usize) -> Vec<B::W> {
    let d = backends.len();
    let per: Vec<Vec<Class<B::W>>> = (0..d).into_par_iter().map(|i| classes(backends[i].kernel(), k[i], j[i])).collect();
    let n_tuples = product.n_tuples().expect("tuple count fits");
    let radix: Vec<usize> = per.iter().map(Vec::len).collect();
    let combos = odometer(&radix);
    let partial: Vec<(usize, B::W)> = combos
        .par_iter()
        .filter_map(|combo| {
            let chosen: Vec<&Class<B::W>> = combo.iter().enumerate().map(|(i, &c)| &per[i][c]).collect();
            let pivot: Vec<usize> = chosen.iter().map(|c| c.pivot).collect();
            let a = product.label(&pivot);
            let mut at_or_below: u64 = 0;
            for pick in odometer(&chosen.iter().map(|c| c.support.len()).collect::<Vec<_>>()) {
                let states: Vec<usize> = pick.iter().enumerate().map(|(i, &p)| chosen[i].support[p].0).collect();
                if product.label(&states) <= a {
                    at_or_below += pick.iter().enumerate().map(|(i, &p)| chosen[i].support[p].1).product::<u64>();
                }
            }
            // the pivot itself is among the tuples counted
            if at_or_below - 1 > l as u64 {
                return None;
            }
            let mut w = chosen[0].weight.clone();
            for c in &chosen[1..] {
                w = B::W::mul_ref(&w, &c.weight);
            }
            Some((product.tuple_index(&pivot), w))
        })
        .collect();
    let mut out = vec![B::W::zero(); n_tuples];
    for (idx, w) in partial {
        out[idx].add_ref(&w);
    }
    out
}
