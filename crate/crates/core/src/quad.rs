//! Quadrature grids for the truncated spacing domain.
//!
//! The 1-D grid is a composite Gauss-Legendre rule on `[lo, z_max]`; for
//! block dimension `k >= 2` the state space is the k-fold tensor grid in
//! row-major order. Each 1-D node owns a contiguous cell whose width equals
//! its quadrature weight (the cells partition `[lo, z_max]`), which is what
//! the samplers jitter within to emit absolutely continuous spacing laws.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Keep tensor grids at desk scale.
pub const MAX_STATES: usize = 16_384;

/// Maximum supported block dimension.
pub const MAX_K: usize = 3;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
fn legendre_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(degree >= 1);
    let n = degree;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 1..=n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - i] = x;
        weights[n - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Quadrature grid over `[lo, z_max]`, optionally tensorised to dimension `k`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    cell_edges: Vec<T>,
    lo: T,
    z_max: T,
    k: usize,
}

impl<T: Scalar> QuadratureGrid<T> {
    /// Composite Gauss-Legendre rule: `n_panels` panels of `degree` nodes.
    pub fn gauss_legendre(lo: T, z_max: T, n_panels: usize, degree: usize, k: usize) -> Result<Self> {
        if !(z_max > lo) {
            return Err(Error::InvalidParameter(format!(
                "grid needs z_max {z_max} > lo {lo}"
            )));
        }
        if n_panels == 0 || degree == 0 {
            return Err(Error::InvalidParameter("empty quadrature rule".into()));
        }
        let (ref_nodes, ref_weights) = legendre_rule(degree);
        let width = (z_max - lo) / T::of_usize(n_panels);
        let half = width / T::of(2.0);
        let mut nodes = Vec::with_capacity(n_panels * degree);
        let mut weights = Vec::with_capacity(n_panels * degree);
        for p in 0..n_panels {
            let centre = lo + width * (T::of_usize(p) + T::of(0.5));
            for (&x, &w) in ref_nodes.iter().zip(ref_weights.iter()) {
                nodes.push(centre + half * T::of(x));
                weights.push(half * T::of(w));
            }
        }
        Self::from_parts(lo, z_max, nodes, weights, k)
    }

    /// Midpoint rule with `n` equal cells; handy for degenerate sanity cases.
    pub fn midpoint(lo: T, z_max: T, n: usize, k: usize) -> Result<Self> {
        let h = (z_max - lo) / T::of_usize(n);
        let nodes = (0..n)
            .map(|i| lo + h * (T::of_usize(i) + T::of(0.5)))
            .collect();
        let weights = vec![h; n];
        Self::from_parts(lo, z_max, nodes, weights, k)
    }

    fn from_parts(lo: T, z_max: T, nodes: Vec<T>, weights: Vec<T>, k: usize) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParameter(format!(
                "block dimension k = {k} outside supported 1..={MAX_K}"
            )));
        }
        let n = nodes.len();
        if n.pow(k as u32) > MAX_STATES {
            return Err(Error::InvalidParameter(format!(
                "tensor grid {n}^{k} exceeds the {MAX_STATES}-state budget"
            )));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] <= lo {
            return Err(Error::InvalidParameter(
                "quadrature nodes must be strictly increasing inside (lo, z_max]".into(),
            ));
        }
        let total: T = weights.iter().copied().sum();
        let width = z_max - lo;
        if ((total - width) / width).abs() > T::of(1e-10).max(T::epsilon() * T::of(1024.0)) {
            return Err(Error::InvalidParameter(
                "quadrature weights do not sum to the interval length".into(),
            ));
        }
        // Cells: consecutive weight-length intervals partitioning [lo, z_max].
        let mut cell_edges = Vec::with_capacity(n + 1);
        cell_edges.push(lo);
        let mut acc = lo;
        for &w in &weights {
            acc = acc + w;
            cell_edges.push(acc);
        }
        *cell_edges.last_mut().unwrap() = z_max;
        Ok(QuadratureGrid {
            nodes,
            weights,
            cell_edges,
            lo,
            z_max,
            k,
        })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn z_max(&self) -> T {
        self.z_max
    }

    /// Block dimension of the tensor state space.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of 1-D quadrature points.
    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    /// Number of tensor states (`n_points^k`).
    pub fn n_states(&self) -> usize {
        self.nodes.len().pow(self.k as u32)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> T {
        self.nodes[i]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    /// Jitter cell of 1-D node `i`.
    pub fn cell(&self, i: usize) -> (T, T) {
        (self.cell_edges[i], self.cell_edges[i + 1])
    }

    /// 1-D node index of the cell containing `z` (clamped to the grid).
    pub fn locate(&self, z: T) -> usize {
        let n = self.nodes.len();
        if z <= self.lo {
            return 0;
        }
        if z >= self.z_max {
            return n - 1;
        }
        let idx = self.cell_edges.partition_point(|&e| e < z);
        idx.saturating_sub(1).min(n - 1)
    }

    /// Decompose a state index into per-dimension node indices (row-major).
    pub fn multi_index(&self, state: usize) -> [usize; MAX_K] {
        let n = self.nodes.len();
        let mut out = [0usize; MAX_K];
        let mut rest = state;
        for d in (0..self.k).rev() {
            out[d] = rest % n;
            rest /= n;
        }
        out
    }

    /// Compose per-dimension node indices into a state index.
    pub fn state_index(&self, idx: &[usize]) -> usize {
        let n = self.nodes.len();
        idx[..self.k].iter().fold(0, |acc, &i| acc * n + i)
    }

    /// State with the component order reversed (the `s` map).
    pub fn reverse_state(&self, state: usize) -> usize {
        if self.k == 1 {
            return state;
        }
        let mi = self.multi_index(state);
        let mut rev = [0usize; MAX_K];
        for d in 0..self.k {
            rev[d] = mi[self.k - 1 - d];
        }
        self.state_index(&rev)
    }

    /// Node coordinates of a tensor state.
    pub fn state_nodes(&self, state: usize) -> Vec<T> {
        let mi = self.multi_index(state);
        (0..self.k).map(|d| self.nodes[mi[d]]).collect()
    }

    /// Product quadrature weight of a tensor state.
    pub fn state_weight(&self, state: usize) -> T {
        let mi = self.multi_index(state);
        (0..self.k)
            .map(|d| self.weights[mi[d]])
            .fold(T::one(), |a, b| a * b)
    }

    /// Sum of the spacing components of a state.
    pub fn state_sum(&self, state: usize) -> T {
        let mi = self.multi_index(state);
        (0..self.k).map(|d| self.nodes[mi[d]]).sum()
    }

    /// Mean of the spacing components of a state.
    pub fn state_mean(&self, state: usize) -> T {
        self.state_sum(state) / T::of_usize(self.k)
    }
}
