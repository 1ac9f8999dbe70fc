//! Chain families for demos and tests.

mod grid;

pub use grid::{
    make_grid_districting_chain, Block, BlockTable, GridDistrictingChain, GridDistrictingState, PartisanScore, Violation,
    DEFAULT_ENUMERATION_LIMIT,
};

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::chain::{Edge, LabeledChain};
use crate::error::{invalid, Error, Result};
use crate::sampling::{Role, RngSeed};

/// Random walk on `K_{n,n}` with labels `1..n` on one side and `n+1..2n`
/// on the other.
pub fn make_knn(n: usize) -> Result<LabeledChain> {
    let a: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let b: Vec<f64> = (n + 1..=2 * n).map(|i| i as f64).collect();
    make_knn_with_labels(&a, &b)
}

pub fn make_knn_with_labels(side_a: &[f64], side_b: &[f64]) -> Result<LabeledChain> {
    let n = side_a.len();
    if n == 0 || side_b.len() != n {
        return Err(invalid("n", format!("need two nonempty sides of equal size, got {} and {}", n, side_b.len())));
    }
    let mut edges = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in n..2 * n {
            edges.push(Edge::new(u, v, 1.0));
        }
    }
    LabeledChain::build_from_edge_list(2 * n, &edges)?.with_labels([side_a, side_b].concat())
}

/// `P(u, v) = 1/n`: every trajectory is an i.i.d. uniform sample.
pub fn make_iid(labels: &[f64]) -> Result<LabeledChain> {
    make_iid_weighted(labels, &vec![1; labels.len()])
}

/// `P(u, v) = w(v) / sum w`.
pub fn make_iid_weighted(labels: &[f64], weights: &[u64]) -> Result<LabeledChain> {
    let n = labels.len();
    if n == 0 || weights.len() != n {
        return Err(invalid("labels", "need one positive weight per label and at least one label"));
    }
    let total: u64 = weights.iter().sum();
    if weights.contains(&0) {
        return Err(invalid("weights", "weights must be positive"));
    }
    let row: Vec<BigRational> = weights.iter().map(|&w| BigRational::new(w.into(), total.into())).collect();
    let pi = weights.iter().map(|&w| BigRational::from_integer(w.into())).collect();
    LabeledChain::from_rational_rows(vec![row; n], Some(pi), labels.to_vec())
}

/// Simple random walk on the path `0 - 1 - .. - n-1`, label = position.
pub fn make_path_walk(n: usize) -> Result<LabeledChain> {
    if n == 0 {
        return Err(invalid("n", "need at least one state"));
    }
    let edges: Vec<Edge> = if n == 1 { vec![Edge::new(0, 0, 1.0)] } else { (1..n).map(|v| Edge::new(v - 1, v, 1.0)).collect() };
    LabeledChain::build_from_edge_list(n, &edges)?.with_labels((0..n).map(|i| i as f64).collect())
}

/// Simple random walk on the `n`-cycle, label = position.
pub fn make_cycle_walk(n: usize) -> Result<LabeledChain> {
    if n == 0 {
        return Err(invalid("n", "need at least one state"));
    }
    let edges: Vec<Edge> = (0..n).map(|v| Edge::new(v, (v + 1) % n, 1.0)).collect();
    LabeledChain::build_from_edge_list(n, &edges)?.with_labels((0..n).map(|i| i as f64).collect())
}

/// Random walk on a random connected graph with integer edge weights in
/// `1..=9`, occasional self-loops and a random permutation of `1..=n` as
/// labels. Exact and reversible by construction.
pub fn random_reversible_chain(n: usize, seed: RngSeed) -> Result<LabeledChain> {
    if n < 2 {
        return Err(invalid("n", format!("need at least 2 states, got {n}")));
    }
    let mut rng = seed.role(Role::Item).rng();
    let mut weights: Vec<(usize, usize, u32)> = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        weights.push((u, v, rng.random_range(1..=9)));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.4) && !weights.iter().any(|&(a, b, _)| (a, b) == (u, v)) {
                weights.push((u, v, rng.random_range(1..=9)));
            }
        }
        if rng.random_bool(0.3) {
            weights.push((u, u, rng.random_range(1..=4)));
        }
    }
    let edges: Vec<(usize, usize, BigRational)> = weights.into_iter().map(|(u, v, w)| (u, v, BigRational::from_integer(BigInt::from(w)))).collect();
    let mut labels: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    labels.shuffle(&mut rng);
    LabeledChain::build_from_rational_edges(n, &edges)?.with_labels(labels)
}

/// A named zoo chain: `knn:N`, `iid:N`, `path:N`, `cycle:N`,
/// `random:N:SEED` or `grid:WxH:D[:DEV]` (exact chain on a synthetic block
/// table, vote-margin labels).
#[derive(Clone, Debug, PartialEq)]
pub enum ZooSpec {
    Knn(usize),
    Iid(usize),
    Path(usize),
    Cycle(usize),
    Random { n: usize, seed: u64 },
    Grid { width: usize, height: usize, districts: usize, deviation: f64 },
}

impl ZooSpec {
    pub fn build(&self) -> Result<LabeledChain> {
        match *self {
            ZooSpec::Knn(n) => make_knn(n),
            ZooSpec::Iid(n) => make_iid(&(1..=n).map(|i| i as f64).collect::<Vec<_>>()),
            ZooSpec::Path(n) => make_path_walk(n),
            ZooSpec::Cycle(n) => make_cycle_walk(n),
            ZooSpec::Random { n, seed } => random_reversible_chain(n, RngSeed::new(seed)),
            ZooSpec::Grid { width, height, districts, deviation } => {
                let blocks = BlockTable::synthetic(width, height);
                let chain = GridDistrictingChain::new(blocks, districts, deviation, PartisanScore::VoteMargin, false)?;
                Ok(chain.enumerate(DEFAULT_ENUMERATION_LIMIT)?.1)
            }
        }
    }
}

impl FromStr for ZooSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let bad = || Error::Parse(format!("unknown zoo chain {text:?}; expected knn:N, iid:N, path:N, cycle:N, random:N:SEED or grid:WxH:D[:DEV]"));
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["knn", n] => Ok(ZooSpec::Knn(num(n)?)),
            ["iid", n] => Ok(ZooSpec::Iid(num(n)?)),
            ["path", n] => Ok(ZooSpec::Path(num(n)?)),
            ["cycle", n] => Ok(ZooSpec::Cycle(num(n)?)),
            ["random", n, seed] => Ok(ZooSpec::Random { n: num(n)?, seed: seed.parse().map_err(|_| bad())? }),
            ["grid", dims, d, rest @ ..] if rest.len() <= 1 => {
                let (w, h) = dims.split_once('x').ok_or_else(bad)?;
                let deviation = match rest {
                    [dev] => dev.parse::<f64>().map_err(|_| bad())?,
                    _ => 0.5,
                };
                Ok(ZooSpec::Grid { width: num(w)?, height: num(h)?, districts: num(d)?, deviation })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ZooSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZooSpec::Knn(n) => write!(f, "knn:{n}"),
            ZooSpec::Iid(n) => write!(f, "iid:{n}"),
            ZooSpec::Path(n) => write!(f, "path:{n}"),
            ZooSpec::Cycle(n) => write!(f, "cycle:{n}"),
            ZooSpec::Random { n, seed } => write!(f, "random:{n}:{seed}"),
            ZooSpec::Grid { width, height, districts, deviation } => write!(f, "grid:{width}x{height}:{districts}:{deviation}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::StateId;
    use crate::oracle::{Oracle, ProbValue};
    use num_traits::One;

    #[test]
    fn knn_shapes() {
        let c = make_knn(1).unwrap();
        assert_eq!(c.row(StateId(0)), &[0.0, 1.0]);
        assert_eq!(c.row(StateId(1)), &[1.0, 0.0]);
        let c = make_knn(3).unwrap();
        assert_eq!(c.n_states(), 6);
        assert_eq!(c.labels(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        for u in 0..3 {
            for v in 0..6 {
                let p = c.transition(StateId(u), StateId(v));
                assert_eq!(p, if v >= 3 { 1.0 / 3.0 } else { 0.0 });
            }
        }
        assert!(c.stationary_weights().windows(2).all(|w| w[0] == w[1]));
        let r = Oracle::new(&c).unwrap().rho(2, 1, 0).unwrap().value;
        assert_eq!(r, ProbValue::Exact(BigRational::new(1.into(), 2.into())));
    }

    #[test]
    fn iid_is_exact_and_uniform() {
        let c = make_iid(&[2.0, 7.0]).unwrap();
        assert!(c.validate().is_valid());
        assert!(c.exact().unwrap().stationary_weight.iter().all(|w| w.is_one()));
        assert!(make_iid(&[]).is_err());
        let w = make_iid_weighted(&[0.0, 1.0, 2.0], &[1, 2, 3]).unwrap();
        assert_eq!(w.transition(StateId(0), StateId(2)), 0.5);
        assert!(w.exact().unwrap().is_exactly_reversible(3));
    }

    #[test]
    fn walks() {
        let p = make_path_walk(4).unwrap();
        assert_eq!(p.row(StateId(0)), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(p.row(StateId(1)), &[0.5, 0.0, 0.5, 0.0]);
        let c = make_cycle_walk(5).unwrap();
        assert_eq!(c.transition(StateId(0), StateId(4)), 0.5);
        assert!(make_path_walk(1).unwrap().validate().is_valid());
        assert!(make_cycle_walk(1).unwrap().validate().is_valid());
    }

    #[test]
    fn random_chains_are_valid_and_reproducible() {
        for seed in 0..50 {
            let c = random_reversible_chain(5, RngSeed::new(seed)).unwrap();
            assert!(c.validate().is_valid());
            assert!(c.exact().unwrap().is_exactly_reversible(5));
            let mut labels = c.labels().to_vec();
            labels.sort_by(f64::total_cmp);
            assert_eq!(labels, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
            assert_eq!(c, random_reversible_chain(5, RngSeed::new(seed)).unwrap());
        }
        assert!(random_reversible_chain(1, RngSeed::new(0)).is_err());
    }

    #[test]
    fn spec_strings() {
        for s in ["knn:3", "iid:5", "path:4", "cycle:5", "random:5:17", "grid:2x2:2:0.5"] {
            let spec: ZooSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert!(spec.build().unwrap().validate().is_valid());
        }
        assert_eq!("grid:2x2:2".parse::<ZooSpec>().unwrap(), ZooSpec::Grid { width: 2, height: 2, districts: 2, deviation: 0.5 });
        for s in ["knn", "knn:x", "tree:3", "random:5", "grid:2:2"] {
            assert!(s.parse::<ZooSpec>().is_err(), "{s}");
        }
    }
}
