//! Weight-balanced, strongly connected digraphs and their Laplacians.
//!
//! Weights follow the in-neighbor convention: `a_ij > 0` means node `j`
//! sends information to node `i` (edge `j → i`). The Laplacian is
//! `L = D − A` with `D = diag(row sums)`; for a weight-balanced graph
//! row and column sums coincide, so `L·1 = 0` and `1ᵀL = 0`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{abs, round, sqrt};
use crate::rng;

/// Absolute tolerance on `Σ_j a_ij − Σ_j a_ji`.
pub const BALANCE_TOL: f64 = 1e-12;

const NORM_REL_TOL: f64 = 1e-10;
const NORM_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    n: usize,
    weights: Vec<f64>,
    in_neighbors: Vec<Vec<usize>>,
}

impl Digraph {
    /// Validate a row-major `n × n` weight matrix.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize {
                what: "node count",
                got: 0,
                min: 1,
            });
        }
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "weight matrix",
                expected: n * n,
                got: weights.len(),
            });
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::InvalidWeights("diagonal must be zero"));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and nonnegative"));
        }
        let g = Self::from_weights_unchecked(n, weights);
        let rows = g.row_sums();
        let cols = g.col_sums();
        for i in 0..n {
            let imbalance = cols[i] - rows[i];
            if abs(imbalance) > BALANCE_TOL {
                return Err(Error::NotBalanced { node: i, imbalance });
            }
        }
        if !g.is_strongly_connected() {
            return Err(Error::NotStronglyConnected);
        }
        Ok(g)
    }

    fn from_weights_unchecked(n: usize, weights: Vec<f64>) -> Self {
        let in_neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| weights[i * n + j] > 0.0).collect())
            .collect();
        Self {
            n,
            weights,
            in_neighbors,
        }
    }

    /// Directed ring `i−1 → i` (indices mod `n`) with uniform weight `w`.
    pub fn directed_circle(n: usize, w: f64) -> Result<Self> {
        check_size_and_weight(n, w)?;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            a[i * n + prev] += w;
        }
        Ok(Self::from_weights_unchecked(n, a))
    }

    pub fn complete(n: usize, w: f64) -> Result<Self> {
        check_size_and_weight(n, w)?;
        let a = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { w })
            .collect();
        Ok(Self::from_weights_unchecked(n, a))
    }

    /// Random weight-balanced digraph built as a superposition of directed
    /// cycles with unit weight.
    ///
    /// A random Hamiltonian cycle gives strong connectivity; additional
    /// cycles over random node subsets (length uniform in `2..=n`) are added
    /// until the expected edge count reaches `density · n(n−1)`. Every cycle
    /// adds one unit of in- and out-weight at each node it visits, so balance
    /// holds exactly. Parallel edges accumulate weight.
    pub fn random_balanced(n: usize, density: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize {
                what: "node count",
                got: n,
                min: 2,
            });
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "density",
                value: density,
            });
        }
        let mut rng = rng::stream(seed);
        let mut a = vec![0.0; n * n];
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut rng);
        add_cycle(&mut a, n, &nodes);

        let target_edges = density * (n * (n - 1)) as f64;
        let mean_cycle_len = (n + 2) as f64 / 2.0;
        let extra = round(((target_edges - n as f64) / mean_cycle_len).max(0.0)) as usize;
        for _ in 0..extra {
            let len = rng.gen_range(2..=n);
            nodes.shuffle(&mut rng);
            add_cycle(&mut a, n, &nodes[..len]);
        }
        Ok(Self::from_weights_unchecked(n, a))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    /// Nonzero entries as `(i, j, a_ij)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.in_neighbors[i]
                .iter()
                .map(move |&j| (i, j, self.weight(i, j)))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.weights[i * self.n..(i + 1) * self.n].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, sj) in s.iter_mut().enumerate() {
                *sj += self.weights[i * self.n + j];
            }
        }
        s
    }

    pub fn is_weight_balanced(&self) -> bool {
        self.row_sums()
            .iter()
            .zip(self.col_sums())
            .all(|(r, c)| abs(r - c) <= BALANCE_TOL)
    }

    /// Forward and transposed breadth-first search from node 0.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n;
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            let mut count = 1;
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    // forward: u → v exists iff a_vu > 0
                    let w = if forward { self.weight(v, u) } else { self.weight(u, v) };
                    if w > 0.0 && !seen[v] {
                        seen[v] = true;
                        count += 1;
                        queue.push_back(v);
                    }
                }
            }
            count == n
        };
        reach(true) && reach(false)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            weights: self.weights.iter().map(|w| w * factor).collect(),
            in_neighbors: self.in_neighbors.clone(),
        }
    }

    pub fn laplacian(&self) -> Laplacian {
        Laplacian::new(self)
    }

    /// Scale all weights by `1/‖L‖` so the Laplacian has unit spectral norm.
    pub fn normalized(&self) -> Result<Self> {
        if self.edge_count() == 0 {
            return Err(Error::DegenerateGraph);
        }
        let norm = self.laplacian().spectral_norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateGraph);
        }
        Ok(self.scaled(1.0 / norm))
    }

    /// Mean and maximum of (in-degree + out-degree) on the unweighted support.
    pub fn degree_stats(&self) -> DegreeStats {
        let mut deg = vec![0usize; self.n];
        for (i, j, _) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        let total: usize = deg.iter().sum();
        DegreeStats {
            mean: total as f64 / self.n as f64,
            max: deg.iter().copied().max().unwrap_or(0) as f64,
        }
    }
}

fn check_size_and_weight(n: usize, w: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSize {
            what: "node count",
            got: n,
            min: 2,
        });
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "weight",
            value: w,
        });
    }
    Ok(())
}

/// Add unit weight along the cycle `c[0] → c[1] → … → c[0]`.
fn add_cycle(a: &mut [f64], n: usize, cycle: &[usize]) {
    let k = cycle.len();
    for t in 0..k {
        let from = cycle[t];
        let to = cycle[(t + 1) % k];
        a[to * n + from] += 1.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub mean: f64,
    pub max: f64,
}

/// `L = D − A` with cached sparse rows and spectral norm.
#[derive(Debug, Clone)]
pub struct Laplacian {
    n: usize,
    matrix: Matrix,
    /// `(j, a_ij)` for every in-neighbor `j` of `i`.
    rows: Vec<Vec<(usize, f64)>>,
    /// `(i, a_ij)` for every out-neighbor `i` of `j`.
    cols: Vec<Vec<(usize, f64)>>,
    spectral_norm: f64,
}

impl Laplacian {
    pub fn new(g: &Digraph) -> Self {
        let n = g.n();
        let degree = g.row_sums();
        let matrix = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                degree[i]
            } else {
                -g.weight(i, j)
            }
        });
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| g.in_neighbors(i).iter().map(|&j| (j, g.weight(i, j))).collect())
            .collect();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                cols[j].push((i, w));
            }
        }
        let mut lap = Self {
            n,
            matrix,
            rows,
            cols,
            spectral_norm: 0.0,
        };
        lap.spectral_norm = lap.power_iteration_norm();
        lap
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `(j, a_ij)` for every in-neighbor `j` of node `i`.
    pub fn in_weights(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Largest singular value `‖L‖`.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral_norm
    }

    /// `out = L x`, computed per node as `Σ_j a_ij (x_i − x_j)`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, (o, row)) in out.iter_mut().zip(&self.rows).enumerate() {
            let xi = x[i];
            *o = row.iter().map(|&(j, w)| w * (xi - x[j])).sum();
        }
    }

    /// `out = Lᵀ y`.
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n);
        for (j, (o, col)) in out.iter_mut().zip(&self.cols).enumerate() {
            let yj = y[j];
            *o = col.iter().map(|&(i, w)| w * (yj - y[i])).sum();
        }
    }

    /// Quadratic form `xᵀ L x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut lx = vec![0.0; self.n];
        self.apply(x, &mut lx);
        crate::math::dot(x, &lx)
    }

    /// Power iteration on `LᵀL`.
    ///
    /// The Rayleigh quotient `θ_k = ‖L v_k‖²` increases monotonically; the
    /// loop stops once the extrapolated remaining change `Δ_k ρ/(1−ρ)`, with
    /// `ρ = Δ_k/Δ_{k−1}`, falls below the relative tolerance.
    fn power_iteration_norm(&self) -> f64 {
        let n = self.n;
        if self.rows.iter().all(Vec::is_empty) {
            return 0.0;
        }
        // Deterministic start with no component along 1 forced to zero.
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let h = rng::derive_seed(0x5EED, i as u64);
                (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        normalize(&mut v);
        let mut lv = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut theta_prev = 0.0;
        let mut delta_prev = f64::INFINITY;
        let mut theta = 0.0;
        for _ in 0..NORM_MAX_ITER {
            self.apply(&v, &mut lv);
            theta = crate::math::dot(&lv, &lv);
            self.apply_transpose(&lv, &mut w);
            let wn = crate::math::norm(&w);
            if wn == 0.0 {
                break;
            }
            let delta = theta - theta_prev;
            if delta <= 0.0 {
                break;
            }
            let rho = delta / delta_prev;
            if delta <= NORM_REL_TOL * theta
                && rho < 1.0
                && delta * rho / (1.0 - rho) <= NORM_REL_TOL * theta
            {
                break;
            }
            theta_prev = theta;
            delta_prev = delta;
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / wn;
            }
        }
        sqrt(theta)
    }
}

fn normalize(v: &mut [f64]) {
    let n = crate::math::norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `L ⊗ I_p` acting on stacked vectors `col(λ_1, …, λ_N)`, `λ_i ∈ ℝ^p`.
#[derive(Debug, Clone, Copy)]
pub struct KronLaplacian<'a> {
    lap: &'a Laplacian,
    p: usize,
}

impl<'a> KronLaplacian<'a> {
    pub fn new(lap: &'a Laplacian, p: usize) -> Self {
        assert!(p >= 1, "coupling dimension must be positive");
        Self { lap, p }
    }

    pub fn laplacian(&self) -> &'a Laplacian {
        self.lap
    }

    pub fn block(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.lap.n * self.p
    }

    /// `‖L ⊗ I_p‖ = ‖L‖`.
    pub fn norm(&self) -> f64 {
        self.lap.spectral_norm
    }

    /// Block `i` of the output is `Σ_j a_ij (λ_i − λ_j)`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let p = self.p;
        if p == 1 {
            self.lap.apply(x, out);
            return;
        }
        for (i, row) in self.lap.rows.iter().enumerate() {
            for k in 0..p {
                let xi = x[i * p + k];
                out[i * p + k] = row.iter().map(|&(j, w)| w * (xi - x[j * p + k])).sum();
            }
        }
    }

    /// Dense `L ⊗ I_p`.
    pub fn to_matrix(&self) -> Matrix {
        let p = self.p;
        let m = self.lap.matrix();
        Matrix::from_fn(self.dim(), self.dim(), |a, b| {
            if a % p == b % p {
                m[(a / p, b / p)]
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn circle_of_three_is_identity_minus_shift() {
        let g = Digraph::directed_circle(3, 1.0).unwrap();
        let l = g.laplacian();
        let m = l.matrix();
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
            assert_eq!(m[(i, (i + 2) % 3)], -1.0);
            assert_eq!(m[(i, (i + 1) % 3)], 0.0);
        }
        let mut out = [0.0; 3];
        l.apply(&[1.0, 1.0, 1.0], &mut out);
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn two_cycle_laplacian_and_norm() {
        let g = Digraph::directed_circle(2, 1.0).unwrap();
        let l = g.laplacian();
        assert_eq!(l.matrix().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        assert_close(l.spectral_norm(), 2.0, 1e-10);
        assert_eq!(Digraph::complete(2, 1.0).unwrap(), g);
    }

    #[test]
    fn complete_two_scales_with_weight() {
        let l = Digraph::complete(2, 3.0).unwrap().laplacian();
        assert_eq!(l.matrix().as_slice(), &[3.0, -3.0, -3.0, 3.0]);
    }

    #[test]
    fn degree_stats_match_table_values() {
        let c = Digraph::directed_circle(10, 1.0).unwrap().degree_stats();
        assert_eq!((c.mean, c.max), (2.0, 2.0));
        let k = Digraph::complete(10, 1.0).unwrap().degree_stats();
        assert_eq!((k.mean, k.max), (18.0, 18.0));
        let k = Digraph::complete(50, 1.0).unwrap().degree_stats();
        assert_eq!((k.mean, k.max), (98.0, 98.0));
        let k = Digraph::complete(100, 1.0).unwrap().degree_stats();
        assert_eq!(k.max, 198.0);
    }

    #[test]
    fn complete_thousand_degree() {
        let k = Digraph::complete(1000, 1.0).unwrap();
        let d = k.degree_stats();
        assert_eq!((d.mean, d.max), (1998.0, 1998.0));
    }

    #[test]
    fn small_sizes_and_bad_weights_rejected() {
        assert!(matches!(
            Digraph::directed_circle(1, 1.0),
            Err(Error::InvalidSize { .. })
        ));
        assert!(matches!(Digraph::complete(0, 1.0), Err(Error::InvalidSize { .. })));
        assert!(Digraph::complete(3, 0.0).is_err());
        assert!(Digraph::random_balanced(5, 0.0, 1).is_err());
        assert!(Digraph::random_balanced(5, 1.5, 1).is_err());
    }

    #[test]
    fn from_weights_validates_balance_and_connectivity() {
        // 0 → 1 only: unbalanced.
        let err = Digraph::from_weights(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotBalanced { .. }));
        // Two disjoint 2-cycles: balanced, not strongly connected.
        let mut a = vec![0.0; 16];
        a[1] = 1.0;
        a[4] = 1.0;
        a[2 * 4 + 3] = 1.0;
        a[3 * 4 + 2] = 1.0;
        assert_eq!(Digraph::from_weights(4, a).unwrap_err(), Error::NotStronglyConnected);
        assert!(Digraph::from_weights(2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn random_two_node_graph_is_two_cycle() {
        let g = Digraph::random_balanced(2, 1.0, 9).unwrap();
        assert!(g.weight(0, 1) > 0.0 && g.weight(1, 0) > 0.0);
        assert!(g.is_weight_balanced());
    }

    #[test]
    fn random_graph_is_balanced_and_connected() {
        for seed in 0..20 {
            let g = Digraph::random_balanced(10, 0.4, seed).unwrap();
            // Independent re-validation through the checked constructor.
            Digraph::from_weights(10, g.weights().to_vec()).unwrap();
            let l = g.laplacian();
            let mut out = [0.0; 10];
            l.apply_transpose(&[1.0; 10], &mut out);
            assert!(out.iter().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn random_graph_is_deterministic() {
        let a = Digraph::random_balanced(30, 0.5, 17).unwrap();
        let b = Digraph::random_balanced(30, 0.5, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Digraph::random_balanced(30, 0.5, 18).unwrap());
    }

    #[test]
    fn dense_random_graph_degree_is_large() {
        let d = Digraph::random_balanced(50, 0.5, 3).unwrap().degree_stats();
        // Within an order of magnitude of a dense random digraph on 50 nodes.
        assert!(d.mean > 4.796 && d.mean < 479.6, "{d:?}");
        assert!(d.max >= d.mean);
    }

    #[test]
    fn normalization_gives_unit_norm() {
        let g = Digraph::directed_circle(2, 1.0).unwrap().normalized().unwrap();
        assert_close(g.weight(0, 1), 0.5, 1e-12);
        let k = Digraph::complete(10, 1.0).unwrap().normalized().unwrap();
        assert_close(k.laplacian().spectral_norm(), 1.0, 1e-9);
        let c = Digraph::directed_circle(10, 1.0).unwrap().normalized().unwrap();
        assert!(c.is_weight_balanced());
        assert_close(c.laplacian().spectral_norm(), 1.0, 1e-9);
    }

    #[test]
    fn normalization_is_idempotent() {
        let graphs = [
            Digraph::directed_circle(7, 2.0).unwrap(),
            Digraph::complete(12, 0.3).unwrap(),
            Digraph::random_balanced(15, 0.3, 5).unwrap(),
            Digraph::random_balanced(40, 0.5, 6).unwrap(),
        ];
        for g in graphs {
            let once = g.normalized().unwrap();
            let twice = once.normalized().unwrap();
            for (a, b) in once.weights().iter().zip(twice.weights()) {
                assert_close(*a, *b, 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_graph_cannot_be_normalized() {
        let g = Digraph::from_weights(1, vec![0.0]).unwrap();
        assert_eq!(g.normalized().unwrap_err(), Error::DegenerateGraph);
    }

    #[test]
    fn spectral_norm_matches_dense_eigensolve() {
        for seed in 0..5 {
            let g = Digraph::random_balanced(12, 0.3, seed).unwrap();
            let l = g.laplacian();
            let ltl = l.matrix().transpose().mul(l.matrix());
            let top = *symmetric_eigenvalues(&ltl).last().unwrap();
            assert_close(l.spectral_norm(), top.sqrt(), 1e-8 * top.sqrt());
        }
    }

    #[test]
    fn symmetric_part_has_simple_zero_eigenvalue() {
        for seed in 0..5 {
            let g = Digraph::random_balanced(20, 0.2, seed).unwrap().normalized().unwrap();
            let m = g.laplacian().matrix().clone();
            let sym = m.add(&m.transpose());
            let eig = symmetric_eigenvalues(&sym);
            assert!(eig[0] >= -1e-10, "{}", eig[0]);
            assert!(eig[0].abs() <= 1e-8);
            assert!(eig[1] > 1e-6);
        }
    }

    #[test]
    fn kron_matches_dense() {
        let g = Digraph::random_balanced(5, 0.5, 2).unwrap();
        let l = g.laplacian();
        let k = KronLaplacian::new(&l, 3);
        let x: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; 15];
        k.apply(&x, &mut out);
        let dense = k.to_matrix().mul_vec(&x);
        for (a, b) in out.iter().zip(dense) {
            assert_close(*a, b, 1e-12);
        }
    }
}
