//! Exact maximum-weight bipartite matching (Kuhn–Munkres) with dummy-vertex
//! balancing for requests/brokers of unequal size.

use crate::error::{Error, Result};
use crate::scalar::Weight;

/// Dense weight matrix between a left side (requests) and a right side
/// (brokers). After [`balance`] the matrix is square and the padding rows or
/// columns carry weight zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBipartiteGraph<T> {
    left_size: usize,
    right_size: usize,
    real_left: usize,
    real_right: usize,
    weights: Vec<T>,
}

impl<T: Weight> WeightedBipartiteGraph<T> {
    /// Builds a graph from a row-major `left_size x right_size` matrix.
    pub fn new(left_size: usize, right_size: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != left_size * right_size {
            return Err(Error::DimensionMismatch {
                expected: left_size * right_size,
                actual: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite_weight()) {
            return Err(Error::NonFiniteWeight { row: i / right_size, col: i % right_size });
        }
        Ok(WeightedBipartiteGraph {
            left_size,
            right_size,
            real_left: left_size,
            real_right: right_size,
            weights,
        })
    }

    pub fn from_fn(left_size: usize, right_size: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut weights = Vec::with_capacity(left_size * right_size);
        for i in 0..left_size {
            for j in 0..right_size {
                weights.push(f(i, j));
            }
        }
        Self::new(left_size, right_size, weights)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, actual: r.len() });
        }
        Self::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    pub fn left_size(&self) -> usize {
        self.left_size
    }

    pub fn right_size(&self) -> usize {
        self.right_size
    }

    /// Left vertices that are not padding.
    pub fn real_left(&self) -> usize {
        self.real_left
    }

    pub fn real_right(&self) -> usize {
        self.real_right
    }

    pub fn dummy_count(&self) -> usize {
        (self.left_size - self.real_left) + (self.right_size - self.real_right)
    }

    pub fn is_square(&self) -> bool {
        self.left_size == self.right_size
    }

    pub fn weight(&self, left: usize, right: usize) -> T {
        self.weights[left * self.right_size + right]
    }

    /// Pads the smaller side with zero-weight dummy vertices so the matrix
    /// becomes square. Original weights keep their indices.
    pub fn balance(&self) -> Self {
        let n = self.left_size.max(self.right_size);
        if self.is_square() {
            return self.clone();
        }
        let mut weights = vec![T::zero(); n * n];
        for i in 0..self.left_size {
            let src = &self.weights[i * self.right_size..(i + 1) * self.right_size];
            weights[i * n..i * n + self.right_size].copy_from_slice(src);
        }
        WeightedBipartiteGraph {
            left_size: n,
            right_size: n,
            real_left: self.real_left,
            real_right: self.real_right,
            weights,
        }
    }
}

/// Optimal matching restricted to real vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching<T> {
    /// `(left, right)` pairs, sorted by left index, dummies stripped.
    pub pairs: Vec<(usize, usize)>,
    pub total: T,
}

impl<T> Matching<T> {
    pub fn right_of(&self, left: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&left, |&(l, _)| l)
            .ok()
            .map(|i| self.pairs[i].1)
    }
}

/// Maximum-weight perfect matching on a square graph, via the
/// shortest-augmenting-path form of the Hungarian method with row and
/// column potentials. `O(n^3)` in the side length, padding included.
///
/// Padding vertices are removed from the reported pairs; their weights are
/// zero so the total is unaffected.
pub fn solve_max_weight_matching<T: Weight>(graph: &WeightedBipartiteGraph<T>) -> Result<Matching<T>> {
    if !graph.is_square() {
        return Err(Error::NotSquare { rows: graph.left_size, cols: graph.right_size });
    }
    let n = graph.left_size;
    let assign = hungarian(n, n, |i, j| T::zero() - graph.weight(i, j));
    let pairs: Vec<(usize, usize)> = assign
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < graph.real_left && j < graph.real_right)
        .collect();
    let total = pairs.iter().fold(T::zero(), |acc, &(i, j)| acc + graph.weight(i, j));
    Ok(Matching { pairs, total })
}

/// Same total as [`balance`](WeightedBipartiteGraph::balance) followed by
/// [`solve_max_weight_matching`], without materializing the padding: every
/// real vertex on the smaller side takes a real partner in a padded
/// optimum, so only the smaller side is assigned. `O(k^2 m)` for real
/// sides `k <= m`.
pub fn solve_rectangular<T: Weight>(graph: &WeightedBipartiteGraph<T>) -> Matching<T> {
    solve_real_part(graph, graph.real_left, graph.real_right)
}

fn solve_real_part<T: Weight>(graph: &WeightedBipartiteGraph<T>, rl: usize, rr: usize) -> Matching<T> {
    let mut pairs: Vec<(usize, usize)> = if rl <= rr {
        let assign = hungarian(rl, rr, |i, j| T::zero() - graph.weight(i, j));
        assign.into_iter().enumerate().collect()
    } else {
        let assign = hungarian(rr, rl, |j, i| T::zero() - graph.weight(i, j));
        assign.into_iter().enumerate().map(|(j, i)| (i, j)).collect()
    };
    pairs.sort_unstable();
    let total = pairs.iter().fold(T::zero(), |acc, &(i, j)| acc + graph.weight(i, j));
    Matching { pairs, total }
}

/// Minimum-cost assignment of `n` rows into `m >= n` columns. Returns the
/// column of each row.
///
/// Infinite reduced costs are represented by `None`, which keeps the
/// routine usable for exact scalar types without an infinity.
fn hungarian<T: Weight>(n: usize, m: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    debug_assert!(n <= m);
    // 1-based: index 0 is the virtual root column/row.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv: Vec<Option<T>> = vec![None; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = None);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if minv[j].is_none_or(|x| cur < x) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].expect("set above");
                // on ties prefer a free column, which ends the search
                if delta.is_none_or(|d| mj < d || (mj == d && p[j] == 0 && p[j1] != 0)) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column exists while the row is unmatched");
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(x) = minv[j] {
                    minv[j] = Some(x - delta);
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}
