use std::collections::VecDeque;

use num_traits::{One, Zero};
use rayon::prelude::*;

use super::kernel::{Backend, Weight};
use super::ProbValue;
use crate::error::{invalid, Error, Result};

/// A tree with a comparison subset `S` and a pivot `v` in `S`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeShape {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
    subset: Vec<usize>,
    pivot: usize,
}

impl TreeShape {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize)>, subset: Vec<usize>, pivot: usize) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::NotATree("no vertices".into()));
        }
        if edges.len() + 1 != n_vertices {
            return Err(Error::NotATree(format!("{} edges on {n_vertices} vertices", edges.len())));
        }
        let mut adjacency = vec![Vec::new(); n_vertices];
        for &(u, v) in &edges {
            if u >= n_vertices || v >= n_vertices || u == v {
                return Err(Error::NotATree(format!("bad edge ({u}, {v})")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut seen = vec![false; n_vertices];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if !std::mem::replace(&mut seen[w], true) {
                    queue.push_back(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::NotATree(format!("vertex {v} is not connected to vertex 0")));
        }
        let mut sorted = subset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != subset.len() || sorted.last().is_some_and(|&v| v >= n_vertices) {
            return Err(invalid("subset", "comparison vertices must be distinct tree vertices"));
        }
        if !subset.contains(&pivot) {
            return Err(invalid("pivot", format!("vertex {pivot} is not in the comparison subset")));
        }
        Ok(TreeShape { n_vertices, edges, subset, pivot })
    }

    /// Path `0 - 1 - .. - len-1`, every vertex compared.
    pub fn path(len: usize, pivot: usize) -> Result<Self> {
        let edges = (1..len).map(|v| (v - 1, v)).collect();
        Self::new(len, edges, (0..len).collect(), pivot)
    }

    /// Vertex at `depth` (1-based) on `leg` of a star with center 0.
    pub fn leg_vertex(leg_len: usize, leg: usize, depth: usize) -> usize {
        1 + leg * leg_len + depth - 1
    }

    fn legs(legs: usize, leg_len: usize) -> Result<Vec<(usize, usize)>> {
        if legs == 0 || leg_len == 0 {
            return Err(invalid("legs", "a star needs at least one leg of length at least 1"));
        }
        let mut edges = Vec::with_capacity(legs * leg_len);
        for s in 0..legs {
            for d in 1..=leg_len {
                let parent = if d == 1 { 0 } else { Self::leg_vertex(leg_len, s, d - 1) };
                edges.push((parent, Self::leg_vertex(leg_len, s, d)));
            }
        }
        Ok(edges)
    }

    /// Parallel-test shape: `legs` legs of length `leg_len`, the leaves
    /// compared, pivot at the leaf of leg 0.
    pub fn star(legs: usize, leg_len: usize) -> Result<Self> {
        let edges = Self::legs(legs, leg_len)?;
        let leaves: Vec<usize> = (0..legs).map(|s| Self::leg_vertex(leg_len, s, leg_len)).collect();
        let pivot = leaves[0];
        Self::new(1 + legs * leg_len, edges, leaves, pivot)
    }

    /// Star-split shape: every vertex but the center compared, pivot at
    /// depth `xi` on leg 0.
    pub fn star_split(legs: usize, leg_len: usize, xi: usize) -> Result<Self> {
        if xi == 0 || xi > leg_len {
            return Err(invalid("xi", format!("need 1 <= xi <= {leg_len}, got {xi}")));
        }
        let edges = Self::legs(legs, leg_len)?;
        let n = 1 + legs * leg_len;
        Self::new(n, edges, (1..n).collect(), Self::leg_vertex(leg_len, 0, xi))
    }

    pub fn with_pivot(&self, pivot: usize) -> Result<Self> {
        Self::new(self.n_vertices, self.edges.clone(), self.subset.clone(), pivot)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn pivot(&self) -> usize {
        self.pivot
    }

    /// BFS order from the pivot and the children of each vertex.
    fn rooted(&self) -> (Vec<usize>, Vec<Vec<usize>>) {
        let mut adjacency = vec![Vec::new(); self.n_vertices];
        for &(u, v) in &self.edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut children = vec![Vec::new(); self.n_vertices];
        let mut seen = vec![false; self.n_vertices];
        let mut order = vec![self.pivot];
        seen[self.pivot] = true;
        let mut i = 0;
        while i < order.len() {
            let u = order[i];
            for &w in &adjacency[u] {
                if !std::mem::replace(&mut seen[w], true) {
                    children[u].push(w);
                    order.push(w);
                }
            }
            i += 1;
        }
        (order, children)
    }
}

/// Truncated convolution of count distributions.
fn convolve<W: Weight>(a: &[W], b: &[W]) -> Vec<W> {
    let cap = a.len() - 1;
    let mut out = vec![W::zero(); cap + 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for j in 0..=cap - i {
            out[i + j].add_mul(x, &b[j]);
        }
    }
    out
}

/// Root the tree at the pivot, draw the root from pi and pass count
/// distributions up from the leaves.
pub(crate) fn tree_rho<B: Backend>(backend: &B, tree: &TreeShape, l: usize) -> ProbValue {
    let k = backend.kernel();
    let n = k.n;
    let (order, children) = tree.rooted();
    let mut in_s = vec![false; tree.n_vertices];
    for &v in &tree.subset {
        in_s[v] = true;
    }
    let per_root: Vec<B::W> = (0..n)
        .into_par_iter()
        .map(|sigma| {
            if k.pi[sigma].is_zero() {
                return B::W::zero();
            }
            let a = k.labels[sigma];
            let mut unit = vec![B::W::zero(); l + 1];
            unit[0] = B::W::one();
            // msg[u][s]: count distribution of subtree(u) given the parent's state s
            let mut msg: Vec<Vec<Vec<B::W>>> = vec![Vec::new(); tree.n_vertices];
            for &u in order.iter().skip(1).rev() {
                let shift = in_s[u];
                let h: Vec<Vec<B::W>> = (0..n)
                    .map(|t| {
                        let mut dist = unit.clone();
                        for &w in &children[u] {
                            dist = convolve(&dist, &msg[w][t]);
                        }
                        if shift && k.labels[t] <= a {
                            dist.rotate_right(1);
                            dist[0] = B::W::zero();
                        }
                        dist
                    })
                    .collect();
                for &w in &children[u] {
                    msg[w] = Vec::new();
                }
                msg[u] = (0..n)
                    .map(|s| {
                        let mut out = vec![B::W::zero(); l + 1];
                        for (t, ht) in h.iter().enumerate() {
                            let p = k.p(s, t);
                            if p.is_zero() {
                                continue;
                            }
                            for c in 0..=l {
                                out[c].add_mul(p, &ht[c]);
                            }
                        }
                        out
                    })
                    .collect();
            }
            let mut dist = unit;
            for &w in &children[tree.pivot] {
                dist = convolve(&dist, &msg[w][sigma]);
            }
            let mut total = B::W::zero();
            for c in &dist {
                total.add_ref(c);
            }
            B::W::mul_ref(&k.pi[sigma], &total)
        })
        .collect();
    let mut num = B::W::zero();
    for w in &per_root {
        num.add_ref(w);
    }
    let steps = tree.edges.len();
    backend.finish(num, steps, true, 2 * (steps + 2) * (n + l + 3) * (tree.n_vertices + 1))
}
