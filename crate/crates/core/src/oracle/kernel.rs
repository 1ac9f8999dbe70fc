//! Scaled transition data shared by the exact and floating backends.
//!
//! The exact backend writes `P(u,v) = A(u,v) / L` and `pi(u) = b(u) / B` with
//! integer `A`, `b`, so every path weight is an integer over `B L^steps` and
//! the dynamic programs never reduce fractions.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::ProbValue;
use crate::chain::LabeledChain;

pub(crate) trait Weight: Clone + Send + Sync + Zero + One {
    fn add_mul(&mut self, a: &Self, b: &Self);
    fn add_ref(&mut self, a: &Self);
    fn mul_ref(a: &Self, b: &Self) -> Self;
}

impl Weight for BigInt {
    fn add_mul(&mut self, a: &Self, b: &Self) {
        if !a.is_zero() && !b.is_zero() {
            *self += a * b;
        }
    }
    fn add_ref(&mut self, a: &Self) {
        *self += a;
    }
    fn mul_ref(a: &Self, b: &Self) -> Self {
        a * b
    }
}

impl Weight for f64 {
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn add_ref(&mut self, a: &Self) {
        *self += a;
    }
    fn mul_ref(a: &Self, b: &Self) -> Self {
        a * b
    }
}

/// Transition numerators, stationary numerators and labels.
#[derive(Clone, Debug)]
pub(crate) struct Kernel<W> {
    pub n: usize,
    pub p: Vec<W>,
    pub pi: Vec<W>,
    pub labels: Vec<f64>,
}

impl<W: Weight> Kernel<W> {
    pub fn p(&self, u: usize, v: usize) -> &W {
        &self.p[u * self.n + v]
    }
}

/// Converts numerators into probabilities.
pub(crate) trait Backend: Sync {
    type W: Weight;
    fn kernel(&self) -> &Kernel<Self::W>;
    /// `numerator / (B^[stationary] L^steps)`; `depth` bounds the number of
    /// rounding steps behind the numerator.
    fn finish(&self, numerator: Self::W, steps: usize, stationary: bool, depth: usize) -> ProbValue;
}

pub(crate) struct ExactBackend {
    pub kernel: Kernel<BigInt>,
    pub l: BigInt,
    pub b: BigInt,
}

impl ExactBackend {
    pub fn new(chain: &LabeledChain) -> Option<Self> {
        let exact = chain.exact()?;
        let n = chain.n_states();
        if !exact.is_exactly_reversible(n) {
            return None;
        }
        let l = lcm_denominators(&exact.transition);
        let d = lcm_denominators(&exact.stationary_weight);
        let scale = |values: &[BigRational], by: &BigInt| -> Vec<BigInt> {
            values.iter().map(|x| (x * BigRational::from_integer(by.clone())).to_integer()).collect()
        };
        let p = scale(&exact.transition, &l);
        let pi = scale(&exact.stationary_weight, &d);
        if pi.iter().any(Signed::is_negative) || p.iter().any(Signed::is_negative) {
            return None;
        }
        let b = pi.iter().sum();
        Some(ExactBackend { kernel: Kernel { n, p, pi, labels: chain.labels().to_vec() }, l, b })
    }

    pub fn denominator(&self, steps: usize, stationary: bool) -> BigInt {
        let mut den = num_traits::pow(self.l.clone(), steps);
        if stationary {
            den *= &self.b;
        }
        den
    }
}

fn lcm_denominators(values: &[BigRational]) -> BigInt {
    values.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

impl Backend for ExactBackend {
    type W = BigInt;
    fn kernel(&self) -> &Kernel<BigInt> {
        &self.kernel
    }
    fn finish(&self, numerator: BigInt, steps: usize, stationary: bool, _depth: usize) -> ProbValue {
        ProbValue::Exact(BigRational::new(numerator, self.denominator(steps, stationary)))
    }
}

pub(crate) struct FloatBackend {
    pub kernel: Kernel<f64>,
}

impl FloatBackend {
    pub fn new(chain: &LabeledChain) -> Self {
        FloatBackend {
            kernel: Kernel {
                n: chain.n_states(),
                p: chain.states().flat_map(|u| chain.row(u).to_vec()).collect(),
                pi: chain.stationary_distribution(),
                labels: chain.labels().to_vec(),
            },
        }
    }
}

/// `gamma_n = n u / (1 - n u)`: relative error of an `n`-step computation
/// over nonnegative terms.
pub(crate) fn gamma(depth: usize) -> f64 {
    let nu = depth as f64 * f64::EPSILON / 2.0;
    if nu >= 0.5 {
        f64::INFINITY
    } else {
        nu / (1.0 - nu)
    }
}

impl Backend for FloatBackend {
    type W = f64;
    fn kernel(&self) -> &Kernel<f64> {
        &self.kernel
    }
    fn finish(&self, numerator: f64, _steps: usize, _stationary: bool, depth: usize) -> ProbValue {
        let g = gamma(depth);
        ProbValue::Approx { value: numerator, error_bound: numerator.abs() * g * (1.0 + 2.0 * g) }
    }
}
