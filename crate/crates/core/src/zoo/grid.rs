//! Toy redistricting chain: single-cell flips on a grid of blocks.
//!
//! A state assigns every cell to one of `D` districts. Each district must be
//! nonempty, 4-connected and within `deviation * ideal` of the ideal
//! population. A step picks a uniform boundary cell `b` (one with a neighbour
//! in another district), a uniform neighbouring district `c`, and moves `b`
//! to `c`. The move is accepted with probability
//! `min(1, |B(x)| |N(b,x)| / (|B(y)| |N(b,y)|))`, where `B` is the boundary
//! set and `N(b, .)` the districts adjacent to `b` other than its own; invalid
//! or rejected moves leave the state unchanged. This makes `P` symmetric, so
//! the uniform distribution on valid districtings is stationary and the chain
//! is reversible.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Read;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::LabeledChain;
use crate::error::{invalid, Error, Result};
use crate::sampling::ChainSampler;

pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1 << 20;

const POP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub cell: u64,
    pub x: i64,
    pub y: i64,
    pub pop: u64,
    pub votes_a: u64,
    pub votes_b: u64,
}

/// Blocks on distinct integer grid points; adjacency is 4-neighbourhood.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTable {
    blocks: Vec<Block>,
    adjacency: Vec<Vec<usize>>,
}

const HEADER: [&str; 6] = ["cell", "x", "y", "pop", "votes_a", "votes_b"];

impl BlockTable {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(invalid("blocks", "the table has no rows"));
        }
        let mut at: HashMap<(i64, i64), usize> = HashMap::new();
        let mut cells = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if let Some(j) = at.insert((b.x, b.y), i) {
                return Err(invalid("blocks", format!("cells {} and {} share coordinates ({}, {})", blocks[j].cell, b.cell, b.x, b.y)));
            }
            if cells.insert(b.cell, i).is_some() {
                return Err(invalid("blocks", format!("duplicate cell id {}", b.cell)));
            }
        }
        let adjacency = blocks
            .iter()
            .map(|b| {
                let mut n: Vec<usize> = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().filter_map(|(dx, dy)| at.get(&(b.x + dx, b.y + dy)).copied()).collect();
                n.sort_unstable();
                n
            })
            .collect();
        Ok(BlockTable { blocks, adjacency })
    }

    /// Full `width x height` grid with 100 people per cell and a fixed vote
    /// pattern with uneven turnout: `votes_a = 20 + 10 ((7x + 3y) mod 5)` and
    /// `votes_b = 30 + 10 ((3x + 2y + 1) mod 4)`.
    pub fn synthetic(width: usize, height: usize) -> Self {
        let mut blocks = Vec::with_capacity(width * height);
        for y in 0..height as i64 {
            for x in 0..width as i64 {
                let votes_a = 20 + ((7 * x + 3 * y) % 5) as u64 * 10;
                let votes_b = 30 + ((3 * x + 2 * y + 1) % 4) as u64 * 10;
                blocks.push(Block { cell: blocks.len() as u64, x, y, pop: 100, votes_a, votes_b });
            }
        }
        BlockTable::new(blocks).expect("synthetic grid has distinct cells")
    }

    /// Reads `cell,x,y,pop,votes_a,votes_b` rows.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != HEADER {
            return Err(Error::Parse(format!("block table header must be `{}`, found `{}`", HEADER.join(","), header.join(","))));
        }
        let blocks = rdr.deserialize().collect::<std::result::Result<Vec<Block>, _>>()?;
        BlockTable::new(blocks)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &self.blocks {
            w.serialize(b)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn neighbours(&self, cell: usize) -> &[usize] {
        &self.adjacency[cell]
    }

    pub fn total_population(&self) -> u64 {
        self.blocks.iter().map(|b| b.pop).sum()
    }

    /// Cells in boustrophedon order: rows by `y`, alternating direction.
    fn snake_order(&self) -> Vec<usize> {
        let mut rows: Vec<i64> = self.blocks.iter().map(|b| b.y).collect();
        rows.sort_unstable();
        rows.dedup();
        let mut order = Vec::with_capacity(self.len());
        for (r, y) in rows.iter().enumerate() {
            let mut row: Vec<usize> = (0..self.len()).filter(|&i| self.blocks[i].y == *y).collect();
            row.sort_by_key(|&i| self.blocks[i].x);
            if r % 2 == 1 {
                row.reverse();
            }
            order.extend(row);
        }
        order
    }
}

/// Partisan score of a districting; lower means better for party A.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartisanScore {
    /// Districts won by B; a tied district counts one half.
    Seats,
    /// `sum_d (b_d - a_d) / (a_d + b_d)`; districts without votes add 0.
    VoteMargin,
}

/// District of each cell, `0..D`. [`district_ids`](Self::district_ids) gives
/// the external `1..=D` numbering.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridDistrictingState {
    pub assignment: Vec<u16>,
}

impl GridDistrictingState {
    pub fn from_district_ids(ids: &[u16]) -> Result<Self> {
        if ids.contains(&0) {
            return Err(invalid("assignment", "district ids start at 1"));
        }
        Ok(GridDistrictingState { assignment: ids.iter().map(|d| d - 1).collect() })
    }

    pub fn district_ids(&self) -> Vec<u16> {
        self.assignment.iter().map(|d| d + 1).collect()
    }
}

/// Which constraint a districting breaks.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    WrongLength { expected: usize, found: usize },
    UnknownDistrict { cell: usize, district: u16 },
    Empty { district: u16 },
    Disconnected { district: u16 },
    Population { district: u16, population: u64, ideal: f64, deviation: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, found } => write!(f, "assignment covers {found} cells, the table has {expected}"),
            Violation::UnknownDistrict { cell, district } => write!(f, "cell {cell} is assigned to district {district}, which does not exist"),
            Violation::Empty { district } => write!(f, "district {district} is empty"),
            Violation::Disconnected { district } => write!(f, "district {district} is not contiguous"),
            Violation::Population { district, population, ideal, deviation } => {
                write!(f, "district {district} has population {population}, outside {ideal} +/- {}%", deviation * 100.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridDistrictingChain {
    blocks: BlockTable,
    districts: usize,
    deviation: f64,
    ideal: f64,
    score: PartisanScore,
    negate: bool,
    initial: GridDistrictingState,
}

/// Same as [`GridDistrictingChain::new`].
pub fn make_grid_districting_chain(blocks: BlockTable, districts: usize, deviation: f64, score: PartisanScore) -> Result<GridDistrictingChain> {
    GridDistrictingChain::new(blocks, districts, deviation, score, false)
}

impl GridDistrictingChain {
    /// Fails with [`Error::Infeasible`] when the snake-order starting
    /// districting breaks a constraint; supply another start with
    /// [`with_initial`](Self::with_initial) in that case.
    pub fn new(blocks: BlockTable, districts: usize, deviation: f64, score: PartisanScore, negate: bool) -> Result<Self> {
        if districts == 0 || districts > u16::MAX as usize {
            return Err(invalid("districts", format!("need 1..={} districts, got {districts}", u16::MAX)));
        }
        if !(deviation >= 0.0) || !deviation.is_finite() {
            return Err(invalid("deviation", format!("must be a finite nonnegative fraction, got {deviation}")));
        }
        if districts > blocks.len() {
            return Err(Error::Infeasible(format!("{districts} nonempty districts need at least {districts} cells, the table has {}", blocks.len())));
        }
        let ideal = blocks.total_population() as f64 / districts as f64;
        let initial = snake_start(&blocks, districts);
        let chain = GridDistrictingChain { blocks, districts, deviation, ideal, score, negate, initial };
        if let Some(v) = chain.violation(&chain.initial) {
            return Err(Error::Infeasible(format!("no valid starting districting found: {v}")));
        }
        Ok(chain)
    }

    pub fn with_initial(mut self, state: GridDistrictingState) -> Result<Self> {
        if let Some(v) = self.violation(&state) {
            return Err(Error::Infeasible(v.to_string()));
        }
        self.initial = state;
        Ok(self)
    }

    pub fn initial_state(&self) -> &GridDistrictingState {
        &self.initial
    }

    pub fn blocks(&self) -> &BlockTable {
        &self.blocks
    }

    pub fn districts(&self) -> usize {
        self.districts
    }

    pub fn ideal_population(&self) -> f64 {
        self.ideal
    }

    pub fn populations(&self, state: &GridDistrictingState) -> Vec<u64> {
        let mut pop = vec![0; self.districts];
        for (b, &d) in self.blocks.blocks.iter().zip(&state.assignment) {
            pop[d as usize] += b.pop;
        }
        pop
    }

    fn pop_ok(&self, pop: u64) -> bool {
        (pop as f64 - self.ideal).abs() <= self.deviation * self.ideal + POP_TOLERANCE
    }

    /// First broken constraint, in district order; `None` for a valid state.
    pub fn violation(&self, state: &GridDistrictingState) -> Option<Violation> {
        let a = &state.assignment;
        if a.len() != self.blocks.len() {
            return Some(Violation::WrongLength { expected: self.blocks.len(), found: a.len() });
        }
        if let Some(cell) = a.iter().position(|&d| d as usize >= self.districts) {
            return Some(Violation::UnknownDistrict { cell, district: a[cell] + 1 });
        }
        let pops = self.populations(state);
        for d in 0..self.districts as u16 {
            let Some(seed) = a.iter().position(|&x| x == d) else {
                return Some(Violation::Empty { district: d + 1 });
            };
            if !self.connected(a, d, seed, None) {
                return Some(Violation::Disconnected { district: d + 1 });
            }
            if !self.pop_ok(pops[d as usize]) {
                return Some(Violation::Population { district: d + 1, population: pops[d as usize], ideal: self.ideal, deviation: self.deviation });
            }
        }
        None
    }

    /// Whether the cells of `district`, minus `removed`, form one 4-connected
    /// piece containing `seed`.
    fn connected(&self, a: &[u16], district: u16, seed: usize, removed: Option<usize>) -> bool {
        let member = |c: usize| a[c] == district && Some(c) != removed;
        let size = (0..a.len()).filter(|&c| member(c)).count();
        let mut seen = vec![false; a.len()];
        seen[seed] = true;
        let mut queue = VecDeque::from([seed]);
        let mut reached = 0;
        while let Some(c) = queue.pop_front() {
            reached += 1;
            for &n in self.blocks.neighbours(c) {
                if !seen[n] && member(n) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        reached == size
    }

    /// Districts adjacent to `cell` other than its own, ascending.
    fn other_districts(&self, a: &[u16], cell: usize) -> Vec<u16> {
        let mut ds: Vec<u16> = self.blocks.neighbours(cell).iter().map(|&n| a[n]).filter(|&d| d != a[cell]).collect();
        ds.sort_unstable();
        ds.dedup();
        ds
    }

    fn boundary(&self, a: &[u16]) -> Vec<usize> {
        (0..a.len()).filter(|&c| self.blocks.neighbours(c).iter().any(|&n| a[n] != a[c])).collect()
    }

    /// Whether moving `cell` to `to` keeps a valid state valid. The receiving
    /// district stays connected because `cell` touches it.
    fn move_ok(&self, a: &[u16], pops: &[u64], cell: usize, to: u16) -> bool {
        let from = a[cell];
        let p = self.blocks.blocks[cell].pop;
        if !self.pop_ok(pops[from as usize] - p) || !self.pop_ok(pops[to as usize] + p) {
            return false;
        }
        match (0..a.len()).find(|&c| a[c] == from && c != cell) {
            None => false,
            Some(seed) => self.connected(a, from, seed, Some(cell)),
        }
    }

    /// Every valid move from `state` as `(cell, district, probability)`, in
    /// exact arithmetic. The self-loop takes the remaining mass.
    pub fn moves(&self, state: &GridDistrictingState) -> Vec<(usize, u16, BigRational)> {
        let a = &state.assignment;
        let pops = self.populations(state);
        let bx = self.boundary(a);
        let mut out = Vec::new();
        for &b in &bx {
            let nb = self.other_districts(a, b);
            for &c in &nb {
                if !self.move_ok(a, &pops, b, c) {
                    continue;
                }
                let mut y = a.clone();
                y[b] = c;
                let forward = bx.len() * nb.len();
                let backward = self.boundary(&y).len() * self.other_districts(&y, b).len();
                out.push((b, c, BigRational::new(BigInt::one(), BigInt::from(forward.max(backward)))));
            }
        }
        out
    }

    /// All valid districtings, in lexicographic order of assignment, with
    /// the exact chain on them (uniform stationary weights).
    pub fn enumerate(&self, limit: u64) -> Result<(Vec<GridDistrictingState>, LabeledChain)> {
        let n = self.blocks.len();
        let total = (self.districts as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if total > u128::from(limit) {
            return Err(Error::BudgetExceeded { required: total, budget: limit });
        }
        let mut states = Vec::new();
        let mut a = vec![0u16; n];
        loop {
            let s = GridDistrictingState { assignment: a.clone() };
            if self.violation(&s).is_none() {
                states.push(s);
            }
            let Some(pos) = (0..n).rev().find(|&i| (a[i] as usize) + 1 < self.districts) else {
                break;
            };
            a[pos] += 1;
            a[pos + 1..].fill(0);
        }
        let index: HashMap<&GridDistrictingState, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let m = states.len();
        let mut rows = vec![vec![BigRational::zero(); m]; m];
        for (i, s) in states.iter().enumerate() {
            let mut stay = BigRational::one();
            for (cell, d, p) in self.moves(s) {
                let mut y = s.clone();
                y.assignment[cell] = d;
                stay -= &p;
                rows[i][index[&y]] += p;
            }
            rows[i][i] += stay;
        }
        let labels = states.iter().map(|s| self.score(s)).collect();
        let chain = LabeledChain::from_rational_rows(rows, Some(vec![BigRational::one(); m]), labels)?;
        Ok((states, chain))
    }

    pub fn score(&self, state: &GridDistrictingState) -> f64 {
        let mut a = vec![0u64; self.districts];
        let mut b = vec![0u64; self.districts];
        for (blk, &d) in self.blocks.blocks.iter().zip(&state.assignment) {
            a[d as usize] += blk.votes_a;
            b[d as usize] += blk.votes_b;
        }
        let omega: f64 = match self.score {
            PartisanScore::Seats => a.iter().zip(&b).map(|(&a, &b)| if b > a { 1.0 } else if b == a { 0.5 } else { 0.0 }).sum(),
            PartisanScore::VoteMargin => a
                .iter()
                .zip(&b)
                .map(|(&a, &b)| if a + b == 0 { 0.0 } else { (b as f64 - a as f64) / (a + b) as f64 })
                .sum(),
        };
        if self.negate {
            -omega
        } else {
            omega
        }
    }
}

/// Cuts the snake order where cumulative population is closest to each
/// `i * total / D`, keeping every piece nonempty.
fn snake_start(blocks: &BlockTable, districts: usize) -> GridDistrictingState {
    let order = blocks.snake_order();
    let n = order.len();
    let total = blocks.total_population() as f64;
    let mut prefix = vec![0.0; n + 1];
    for (i, &c) in order.iter().enumerate() {
        prefix[i + 1] = prefix[i] + blocks.blocks[c].pop as f64;
    }
    let mut cuts = vec![0usize];
    for i in 1..districts {
        let target = total * i as f64 / districts as f64;
        let lo = cuts[i - 1] + 1;
        let hi = n - (districts - i);
        let best = (lo..=hi).min_by(|&p, &q| (prefix[p] - target).abs().total_cmp(&(prefix[q] - target).abs())).expect("lo <= hi");
        cuts.push(best);
    }
    cuts.push(n);
    let mut assignment = vec![0u16; n];
    for d in 0..districts {
        for &c in &order[cuts[d]..cuts[d + 1]] {
            assignment[c] = d as u16;
        }
    }
    GridDistrictingState { assignment }
}

impl ChainSampler for GridDistrictingChain {
    type State = GridDistrictingState;

    fn step<R: Rng + ?Sized>(&self, from: &GridDistrictingState, rng: &mut R) -> GridDistrictingState {
        let a = &from.assignment;
        let bx = self.boundary(a);
        if bx.is_empty() {
            return from.clone();
        }
        let b = bx[rng.random_range(0..bx.len())];
        let nb = self.other_districts(a, b);
        let c = nb[rng.random_range(0..nb.len())];
        let u: f64 = rng.random();
        if !self.move_ok(a, &self.populations(from), b, c) {
            return from.clone();
        }
        let mut y = from.clone();
        y.assignment[b] = c;
        let forward = (bx.len() * nb.len()) as f64;
        let backward = (self.boundary(&y.assignment).len() * self.other_districts(&y.assignment, b).len()) as f64;
        if u * backward < forward {
            y
        } else {
            from.clone()
        }
    }

    fn label(&self, state: &GridDistrictingState) -> f64 {
        self.score(state)
    }

    fn describe(&self, state: &GridDistrictingState) -> Vec<u64> {
        state.district_ids().into_iter().map(u64::from).collect()
    }

    fn check_state(&self, state: &GridDistrictingState) -> Result<()> {
        match self.violation(state) {
            None => Ok(()),
            Some(v) => Err(invalid("sigma0", v.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::StateId;
    use crate::sampling::RngSeed;
    use crate::significance::run_serial_test;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, d: usize, dev: f64) -> GridDistrictingChain {
        GridDistrictingChain::new(BlockTable::synthetic(w, h), d, dev, PartisanScore::VoteMargin, false).unwrap()
    }

    fn state(ids: &[u16]) -> GridDistrictingState {
        GridDistrictingState::from_district_ids(ids).unwrap()
    }

    #[test]
    fn csv_round_trip_and_header() {
        let t = BlockTable::synthetic(3, 2);
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("cell,x,y,pop,votes_a,votes_b\n0,0,0,100,20,40\n"));
        assert_eq!(BlockTable::from_reader(text.as_bytes()).unwrap(), t);
        assert_eq!(t.neighbours(0), &[1, 3]);
        assert_eq!(t.neighbours(4), &[1, 3, 5]);
        let bad = "id,x,y,pop,votes_a,votes_b\n0,0,0,1,1,1\n";
        assert!(matches!(BlockTable::from_reader(bad.as_bytes()), Err(Error::Parse(_))));
        let clash = "cell,x,y,pop,votes_a,votes_b\n0,0,0,1,1,1\n1,0,0,1,1,1\n";
        assert!(BlockTable::from_reader(clash.as_bytes()).is_err());
        let negative = "cell,x,y,pop,votes_a,votes_b\n0,0,0,-1,1,1\n";
        assert!(BlockTable::from_reader(negative.as_bytes()).is_err());
    }

    #[test]
    fn snake_start_is_valid() {
        let c = grid(4, 4, 2, 0.0);
        assert_eq!(c.initial_state().district_ids(), [1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2]);
        let c = grid(3, 3, 3, 0.0);
        assert_eq!(c.initial_state().district_ids(), [1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert!(grid(5, 3, 4, 0.5).violation(grid(5, 3, 4, 0.5).initial_state()).is_none());
    }

    #[test]
    fn infeasible_parameters_name_the_constraint() {
        let err = GridDistrictingChain::new(BlockTable::synthetic(3, 1), 2, 0.1, PartisanScore::Seats, false).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.contains("population")), "{err}");
        let err = GridDistrictingChain::new(BlockTable::synthetic(2, 1), 3, 0.1, PartisanScore::Seats, false).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.contains("cells")), "{err}");
        assert!(grid(2, 2, 2, 0.5).with_initial(state(&[1, 2, 2, 1])).is_err());
    }

    #[test]
    fn scores() {
        let blocks = BlockTable::new(vec![
            Block { cell: 0, x: 0, y: 0, pop: 1, votes_a: 60, votes_b: 40 },
            Block { cell: 1, x: 1, y: 0, pop: 1, votes_a: 50, votes_b: 50 },
            Block { cell: 2, x: 2, y: 0, pop: 1, votes_a: 0, votes_b: 0 },
        ])
        .unwrap();
        let s = state(&[1, 2, 3]);
        let seats = GridDistrictingChain::new(blocks.clone(), 3, 0.0, PartisanScore::Seats, false).unwrap();
        assert_eq!(seats.score(&s), 1.0);
        let margin = GridDistrictingChain::new(blocks.clone(), 3, 0.0, PartisanScore::VoteMargin, true).unwrap();
        assert_eq!(margin.score(&s), 0.2);
        let margin = GridDistrictingChain::new(blocks, 3, 0.0, PartisanScore::VoteMargin, false).unwrap();
        assert_eq!(margin.score(&state(&[1, 1, 1])), -0.1);
    }

    #[test]
    fn disconnecting_move_is_rejected() {
        // District 1 is a U around district 2:
        //   1 2 1
        //   1 1 1
        let c = GridDistrictingChain::new(BlockTable::synthetic(3, 2), 2, 1.0, PartisanScore::Seats, false).unwrap();
        let s = state(&[1, 1, 1, 1, 2, 1]);
        assert!(c.violation(&s).is_none());
        let pops = c.populations(&s);
        assert!(!c.move_ok(&s.assignment, &pops, 1, 1));
        assert!(c.move_ok(&s.assignment, &pops, 3, 1));
        assert!(c.moves(&s).iter().all(|&(cell, _, _)| cell != 1));
        let mut rng = RngSeed::new(3).rng();
        let mut saw_rejection = false;
        for _ in 0..2000 {
            let y = c.step(&s, &mut rng);
            assert!(c.violation(&y).is_none());
            assert_ne!(y.assignment[1], 1);
            saw_rejection |= y == s;
        }
        assert!(saw_rejection);
    }

    #[test]
    fn two_by_two_is_exactly_reversible() {
        let c = grid(2, 2, 2, 0.5);
        let (states, chain) = c.enumerate(DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(states.len(), 12);
        let exact = chain.exact().unwrap();
        assert!(exact.is_exactly_reversible(12));
        assert!(chain.validate().is_valid());
        let n = states.len();
        for u in 0..n {
            for v in 0..n {
                assert_eq!(exact.transition[u * n + v], exact.transition[v * n + u]);
            }
        }
        // Uniform weights are stationary: columns sum to one.
        for v in 0..n {
            let col = (0..n).fold(BigRational::zero(), |acc, u| acc + &exact.transition[u * n + v]);
            assert!(col.is_one());
        }
    }

    #[test]
    fn sampler_matches_enumerated_kernel() {
        let c = grid(2, 2, 2, 0.5);
        let (states, chain) = c.enumerate(DEFAULT_ENUMERATION_LIMIT).unwrap();
        let index: HashMap<&GridDistrictingState, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let draws = 40_000;
        for (i, s) in states.iter().enumerate() {
            let mut rng = RngSeed::new(11).item(i as u64).rng();
            let mut counts = vec![0u32; states.len()];
            for _ in 0..draws {
                counts[index[&c.step(s, &mut rng)]] += 1;
            }
            for (j, &k) in counts.iter().enumerate() {
                let p = chain.transition(StateId(i), StateId(j));
                let freq = f64::from(k) / draws as f64;
                assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / draws as f64).sqrt() + 1e-9, "{i}->{j}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn grid_audit_passes() {
        let (_, chain) = grid(2, 2, 2, 0.5).enumerate(DEFAULT_ENUMERATION_LIMIT).unwrap();
        let o = crate::oracle::Oracle::new(&chain).unwrap();
        let report = crate::oracle::audit_chain(&o, &crate::oracle::AuditConfig::new(3)).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn enumeration_respects_limit() {
        assert!(matches!(grid(4, 4, 2, 0.25).enumerate(1000), Err(Error::BudgetExceeded { .. })));
    }

    /// Lowest vote-margin score among the 676 valid 4x4 districtings.
    fn extreme_four_by_four() -> GridDistrictingState {
        state(&[
            1, 1, 1, 1, //
            1, 1, 1, 2, //
            1, 2, 1, 2, //
            1, 2, 2, 2, //
        ])
    }

    #[test]
    fn extreme_state_is_the_minimum() {
        let c = grid(4, 4, 2, 0.25);
        let (states, chain) = c.enumerate(DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(states.len(), 676);
        let min = chain.labels().iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(c.score(&extreme_four_by_four()), min);
    }

    #[test]
    fn pinned_four_by_four_serial_run() {
        let c = grid(4, 4, 2, 0.25).with_initial(extreme_four_by_four()).unwrap();
        let s = c.initial_state().clone();
        let report = run_serial_test(&c, &s, 10_000, RngSeed::new(1)).unwrap();
        assert!(report.p_value <= 0.05, "{}", report.p_value);
        assert_eq!(report.observed.epsilon, "50/10001");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]

        #[test]
        fn moves_preserve_constraints(seed in any::<u64>(), shape in 0usize..3) {
            let (w, h, d, dev) = [(4, 4, 2, 0.25), (5, 4, 3, 0.3), (3, 3, 3, 0.0)][shape];
            let c = grid(w, h, d, dev);
            let mut s = c.initial_state().clone();
            let mut rng = RngSeed::new(seed).rng();
            for _ in 0..100_000 {
                s = c.step(&s, &mut rng);
                prop_assert!(c.violation(&s).is_none(), "{:?}", s.district_ids());
            }
        }
    }
}
