//! Projections, variational-inequality residuals, the Laplacian LCP and the
//! `G1`/`G2` fixed-point characterization of the flow's equilibria.
//!
//! With `λ` frozen, the primal equilibrium condition over
//! `X = {x ∈ Ω : g(x) ≤ 0}` is `VI(X, ∇f + v(·, λ))`, whose unique solution
//! is `G1(λ)`. With `x` frozen, the dual condition is `LCP(−ε u(x), L ⊗ I_p)`,
//! whose selected solution is `G2(x)`. Alternating the two converges for
//! small `ε`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::KronLaplacian;
use crate::linalg::{lstsq_min_norm, Matrix};
use crate::math::{abs, clamp, dist, dot};
use crate::oracle::CouplingSet;
use crate::problem::{Problem, ResourceProblem};

/// Componentwise `max(y, 0)`.
pub fn project_orthant(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v.max(0.0)).collect()
}

/// A closed box `{x : lower ≤ x ≤ upper}` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn orthant(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| clamp(*v, *lo, *hi))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// `‖P_set(x − F(x)) − x‖`; zero exactly when `x` solves `VI(set, F)`.
pub fn vi_residual(set: &BoxSet, f_value: &[f64], x: &[f64]) -> f64 {
    let y: Vec<f64> = x.iter().zip(f_value).map(|(a, b)| a - b).collect();
    dist(&set.project(&y), x)
}

/// Solution of `VI(X, ∇f + v(·, λ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct G1Solution {
    pub x: Vec<f64>,
    /// Multiplier of the coupled constraint in `P_X(x − F(x))` at the
    /// solution, i.e. the KKT multiplier of `min f + λᵀu` over `X`.
    pub coupling_multiplier: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// `G1(λ)` by projected fixed-point iteration
/// `x ← P_X(x − τ(∇f(x) + v(x, λ)))`, `τ = µ_f/κ̂²`.
///
/// With affine `g` the map `v(·, λ)` is constant in `x`, so `κ̂ = κ_f`.
pub fn solve_g1(prob: &Problem, lambda: &[f64], tol: f64) -> Result<G1Solution> {
    let set = CouplingSet::from_problem(prob)?;
    solve_g1_on(prob, &set, lambda, tol)
}

fn solve_g1_on(prob: &Problem, set: &CouplingSet, lambda: &[f64], tol: f64) -> Result<G1Solution> {
    const MAX_ITER: usize = 100_000;
    if lambda.len() != prob.dual_dim() {
        return Err(Error::DimensionMismatch {
            what: "dual vector",
            expected: prob.dual_dim(),
            got: lambda.len(),
        });
    }
    if lambda.iter().any(|l| *l < 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda.iter().cloned().fold(f64::INFINITY, f64::min),
        });
    }
    let c = prob.constants();
    let kappa_hat = c.kappa_f;
    let tau = c.mu_f / (kappa_hat * kappa_hat);
    let n = prob.primal_dim();

    let mut v = vec![0.0; n];
    prob.eval_v_into(&vec![0.0; n], lambda, &mut v);
    let mut x = set.project(&vec![0.0; n])?.point;
    let mut grad = vec![0.0; n];
    let mut y = vec![0.0; n];
    for it in 0..=MAX_ITER {
        prob.grad_f_into(&x, &mut grad);
        for k in 0..n {
            y[k] = x[k] - grad[k] - v[k];
        }
        let unit = set.project(&y)?;
        let residual = dist(&unit.point, &x);
        if residual <= tol {
            return Ok(G1Solution {
                x,
                coupling_multiplier: unit.multiplier,
                residual,
                iterations: it,
            });
        }
        if it == MAX_ITER {
            return Err(Error::SolverFailure {
                solver: "G1 projected iteration",
                iterations: it,
                residual,
            });
        }
        x = if tau == 1.0 {
            unit.point
        } else {
            for k in 0..n {
                y[k] = x[k] - tau * (grad[k] + v[k]);
            }
            set.project(&y)?.point
        };
    }
    unreachable!()
}

/// An approximate solution of `LCP(q, M)` with its residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: Vec<f64>,
    /// `w = M z + q`.
    pub w: Vec<f64>,
    /// `min_k z_k` (nonnegativity holds when ≥ −tol).
    pub min_z: f64,
    /// `min_k w_k`.
    pub min_w: f64,
    /// `|zᵀw|`.
    pub comp: f64,
    pub iterations: usize,
}

impl LcpSolution {
    fn from_parts(z: Vec<f64>, w: Vec<f64>, iterations: usize) -> Self {
        let min_z = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_w = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let comp = abs(dot(&z, &w));
        Self {
            z,
            w,
            min_z,
            min_w,
            comp,
            iterations,
        }
    }

    /// `z ≥ −tol`, `w ≥ −tol`, `|zᵀw| ≤ tol`.
    pub fn satisfies(&self, tol: f64) -> bool {
        self.min_z >= -tol && self.min_w >= -tol && self.comp <= tol
    }
}

/// Solve `LCP(−ε u, L ⊗ I_p)` by `z ← max(0, z − ρ(Lz − εu))`, `ρ = 1/‖L‖`,
/// starting from `z = 0`.
///
/// Feasibility requires `Σ_i u_{i,k} ≤ 0` for every coupling coordinate `k`.
/// When the sum is strictly negative the solution is unique; on the boundary
/// it is unique up to the consensus direction and the iteration from zero
/// selects one representative (compare `Lz` rather than `z` there).
pub fn solve_lcp_laplacian(op: &KronLaplacian<'_>, u: &[f64], eps: f64, tol: f64) -> Result<LcpSolution> {
    const MAX_ITER: usize = 5_000_000;
    let m = op.dim();
    let p = op.block();
    if u.len() != m {
        return Err(Error::DimensionMismatch {
            what: "resource vector",
            expected: m,
            got: u.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "eps", value: eps });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", value: tol });
    }
    for k in 0..p {
        let (sum, mag) = u
            .iter()
            .skip(k)
            .step_by(p)
            .fold((0.0, 0.0), |(s, a), v| (s + v, a + abs(*v)));
        if sum > 1e-12 * mag.max(1.0) {
            return Err(Error::InfeasibleLcp { coordinate: k, sum });
        }
    }
    let norm = op.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateGraph);
    }
    let rho = 1.0 / norm;
    let q: Vec<f64> = u.iter().map(|v| -eps * v).collect();
    let mut z = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for it in 0..=MAX_ITER {
        op.apply(&z, &mut w);
        for (wk, qk) in w.iter_mut().zip(&q) {
            *wk += qk;
        }
        // Natural residual ‖z − max(0, z − w)‖ = ‖min(z, w)‖.
        residual = crate::math::sqrt(z.iter().zip(&w).map(|(a, b)| {
            let r = a.min(*b);
            r * r
        }).sum());
        if residual <= tol {
            let sol = LcpSolution::from_parts(z.clone(), w.clone(), it);
            if sol.satisfies(tol) {
                return Ok(sol);
            }
        }
        if it == MAX_ITER {
            break;
        }
        for (zk, wk) in z.iter_mut().zip(&w) {
            *zk = (*zk - rho * wk).max(0.0);
        }
    }
    Err(Error::SolverFailure {
        solver: "Laplacian LCP projected iteration",
        iterations: MAX_ITER,
        residual,
    })
}

/// Largest dimension accepted by [`lcp_bruteforce`].
pub const BRUTEFORCE_MAX_DIM: usize = 20;

/// All solutions of `LCP(q, M)` found by enumerating the `2^m` supports.
///
/// On support `S`, solve `(Mz + q)_S = 0` with `z_{S̄} = 0` (minimum-norm
/// least squares, so singular blocks report their least-norm
/// representative), then keep candidates with `z_S ≥ −1e−10`,
/// `(Mz + q)_{S̄} ≥ −1e−10` and a consistent block solve. Duplicates within
/// `1e−8` are merged.
pub fn lcp_bruteforce(q: &[f64], m: &Matrix) -> Result<Vec<LcpSolution>> {
    let dim = q.len();
    if dim > BRUTEFORCE_MAX_DIM {
        return Err(Error::LcpTooLarge {
            m: dim,
            max: BRUTEFORCE_MAX_DIM,
        });
    }
    if m.rows() != dim || m.cols() != dim {
        return Err(Error::DimensionMismatch {
            what: "LCP matrix",
            expected: dim,
            got: m.rows(),
        });
    }
    const SIGN_TOL: f64 = 1e-10;
    const DEDUP_TOL: f64 = 1e-8;
    let scale = 1.0 + q.iter().map(|v| abs(*v)).fold(0.0, f64::max);
    let mut found: Vec<LcpSolution> = Vec::new();
    for mask in 0u32..(1u32 << dim) {
        let support: Vec<usize> = (0..dim).filter(|k| mask & (1 << k) != 0).collect();
        let mut z = vec![0.0; dim];
        if !support.is_empty() {
            let sub = m.principal(&support);
            let rhs: Vec<f64> = support.iter().map(|&k| -q[k]).collect();
            let zs = lstsq_min_norm(&sub, &rhs, 1e-12);
            for (&k, v) in support.iter().zip(zs) {
                z[k] = v;
            }
        }
        let mut w = m.mul_vec(&z);
        for (wk, qk) in w.iter_mut().zip(q) {
            *wk += qk;
        }
        let consistent = support.iter().all(|&k| abs(w[k]) <= 1e-9 * scale);
        let signs = support.iter().all(|&k| z[k] >= -SIGN_TOL)
            && (0..dim).filter(|k| mask & (1 << k) == 0).all(|k| w[k] >= -SIGN_TOL);
        if !(consistent && signs) {
            continue;
        }
        let duplicate = found.iter().any(|s| {
            s.z.iter()
                .zip(&z)
                .all(|(a, b)| abs(a - b) <= DEDUP_TOL)
        });
        if !duplicate {
            found.push(LcpSolution::from_parts(z, w, 0));
        }
    }
    Ok(found)
}

/// Solution of the auxiliary equilibrium system plus the shifted multiplier
/// that turns it into an equilibrium of the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    /// `λ†`: the `G2(x)` fixed point of the alternation.
    pub lambda_aux: Vec<f64>,
    /// `λ† + λ‡·1`, where `λ‡` is the coupled-constraint multiplier of the
    /// primal VI over `X`. Equals `lambda_aux` when the coupling is slack.
    pub lambda: Vec<f64>,
    pub coupling_multiplier: f64,
    pub iterations: usize,
}

/// Alternate `x ← G1(λ)`, `λ ← G2(x)` until successive `x` move at most `tol`.
pub fn solve_equilibrium_fixed_point(
    prob: &Problem,
    op: &KronLaplacian<'_>,
    eps: f64,
    tol: f64,
) -> Result<Equilibrium> {
    const MAX_ITER: usize = 10_000;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "eps", value: eps });
    }
    if op.dim() != prob.dual_dim() || op.block() != prob.coupling_dim() {
        return Err(Error::DimensionMismatch {
            what: "Laplacian operator",
            expected: prob.dual_dim(),
            got: op.dim(),
        });
    }
    let set = CouplingSet::from_problem(prob)?;
    let inner = (tol * 1e-2).max(1e-14);
    let mut lambda = vec![0.0; prob.dual_dim()];
    let mut u = vec![0.0; prob.dual_dim()];
    let mut x = solve_g1_on(prob, &set, &lambda, inner)?.x;
    let mut first_step = None;
    for it in 1..=MAX_ITER {
        prob.eval_u_into(&x, &mut u);
        lambda = solve_lcp_laplacian(op, &u, eps, inner)?.z;
        let next = solve_g1_on(prob, &set, &lambda, inner)?;
        let step = dist(&next.x, &x);
        x = next.x;
        let first = *first_step.get_or_insert(step);
        if !step.is_finite() || step > 1e3 * (first + 1.0) {
            return Err(Error::NoContraction { eps, last_step: step });
        }
        if step <= tol {
            let shift = next.coupling_multiplier;
            let shifted = lambda.iter().map(|l| l + shift).collect();
            return Ok(Equilibrium {
                x,
                lambda_aux: lambda,
                lambda: shifted,
                coupling_multiplier: shift,
                iterations: it,
            });
        }
        if it == MAX_ITER {
            return Err(Error::NoContraction { eps, last_step: step });
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Digraph;
    use crate::oracle::solve_centralized_qp;
    use crate::problem::{gen_5g_instance, SlicingInstance};

    #[test]
    fn orthant_projection_examples() {
        assert_eq!(project_orthant(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(project_orthant(&[0.0, 3.5]), vec![0.0, 3.5]);
    }

    #[test]
    fn vi_residual_examples() {
        let set = BoxSet::orthant(2);
        // Interior minimizer of ½‖x − (1,2)‖².
        assert_eq!(vi_residual(&set, &[0.0, 0.0], &[1.0, 2.0]), 0.0);
        // On the boundary with F pointing inward (descent direction leaves the face).
        let r = vi_residual(&set, &[-1.0, 0.0], &[0.0, 2.0]);
        assert!(r > 0.0);
        // On the boundary with F pointing outward: still a solution.
        assert_eq!(vi_residual(&set, &[1.0, 0.0], &[0.0, 2.0]), 0.0);
    }

    #[test]
    fn lcp_two_node_example() {
        let g = Digraph::directed_circle(2, 1.0).unwrap().normalized().unwrap().scaled(2.0);
        let l = g.laplacian();
        let op = KronLaplacian::new(&l, 1);
        // ε u = (1, −2): w = Lz − εu.
        let sol = solve_lcp_laplacian(&op, &[1.0, -2.0], 1.0, 1e-13).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-10 && sol.z[1].abs() < 1e-10, "{:?}", sol.z);
        assert!((sol.w[0]).abs() < 1e-10 && (sol.w[1] - 1.0).abs() < 1e-10);
        let brute = lcp_bruteforce(&[-1.0, 2.0], l.matrix()).unwrap();
        assert_eq!(brute.len(), 1);
        assert!((brute[0].z[0] - 1.0).abs() < 1e-12 && brute[0].z[1].abs() < 1e-12);
    }

    #[test]
    fn lcp_zero_input_returns_zero() {
        let g = Digraph::complete(4, 1.0).unwrap().normalized().unwrap();
        let l = g.laplacian();
        let op = KronLaplacian::new(&l, 1);
        let sol = solve_lcp_laplacian(&op, &[0.0; 4], 0.1, 1e-12).unwrap();
        assert_eq!(sol.z, vec![0.0; 4]);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn lcp_infeasible_input_is_rejected() {
        let g = Digraph::complete(3, 1.0).unwrap();
        let l = g.laplacian();
        let op = KronLaplacian::new(&l, 1);
        let err = solve_lcp_laplacian(&op, &[1.0, 0.5, -1.0], 0.1, 1e-10).unwrap_err();
        assert!(matches!(err, Error::InfeasibleLcp { coordinate: 0, .. }));
        // Matching brute force: q = −εu with 1ᵀu > 0 has no solution.
        let q: Vec<f64> = [1.0, 0.5, -1.0].iter().map(|v| -0.1 * v).collect();
        assert!(lcp_bruteforce(&q, l.matrix()).unwrap().is_empty());
    }

    #[test]
    fn bruteforce_on_zero_q_reports_origin() {
        let l = Digraph::directed_circle(2, 1.0).unwrap().laplacian();
        let sols = lcp_bruteforce(&[0.0, 0.0], l.matrix()).unwrap();
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].z, vec![0.0, 0.0]);
    }

    #[test]
    fn bruteforce_size_limit() {
        let m = Matrix::identity(21);
        assert!(matches!(
            lcp_bruteforce(&[0.0; 21], &m),
            Err(Error::LcpTooLarge { m: 21, .. })
        ));
    }

    #[test]
    fn g1_at_zero_is_the_centralized_optimum() {
        for seed in 0..10 {
            let inst = SlicingInstance::generate(8, seed).unwrap();
            let p = SlicingInstance {
                capacity: inst.capacity * 0.4,
                ..inst
            }
            .to_problem()
            .unwrap();
            let g1 = solve_g1(&p, &vec![0.0; 8], 1e-12).unwrap();
            let kkt = solve_centralized_qp(&p).unwrap();
            assert!(dist(&g1.x, &kkt.x_star) < 1e-6);
            assert!((g1.coupling_multiplier - kkt.mu_star).abs() < 1e-9);
        }
    }

    #[test]
    fn g1_with_slack_coupling_is_clipped_target() {
        let p = SlicingInstance {
            seed: 0,
            alpha: vec![1.0, 2.0, 1.5],
            demand: vec![0.5, 0.2, 0.9],
            capacity: 50.0,
        }
        .to_problem()
        .unwrap();
        let lambda = [0.3, 20.0, 1.0];
        let g1 = solve_g1(&p, &lambda, 1e-12).unwrap();
        let expect = [1.0 - 0.5 * 0.3, 0.0, 1.5 - 0.9];
        assert!(dist(&g1.x, &expect) < 1e-12, "{:?}", g1.x);
        assert_eq!(g1.coupling_multiplier, 0.0);
    }

    #[test]
    fn g1_rejects_negative_multipliers() {
        let p = gen_5g_instance(3, 1).unwrap();
        assert!(solve_g1(&p, &[0.0, -1.0, 0.0], 1e-10).is_err());
    }

    #[test]
    fn equilibrium_with_locally_slack_agents_has_zero_dual() {
        // Every agent satisfies d_i α_i < R/N, so u(x*) < 0 blockwise.
        let p = SlicingInstance {
            seed: 0,
            alpha: vec![1.0, 1.2, 0.8, 1.1],
            demand: vec![0.5, 0.4, 0.6, 0.3],
            capacity: 4.0,
        }
        .to_problem()
        .unwrap();
        let g = Digraph::directed_circle(4, 1.0).unwrap().normalized().unwrap();
        let l = g.laplacian();
        let eq = solve_equilibrium_fixed_point(&p, &KronLaplacian::new(&l, 1), 0.05, 1e-12).unwrap();
        assert_eq!(eq.lambda, vec![0.0; 4]);
        assert!(dist(&eq.x, &[1.0, 1.2, 0.8, 1.1]) < 1e-12);
    }

    #[test]
    fn equilibrium_error_shrinks_with_eps() {
        let p = gen_5g_instance(6, 11).unwrap();
        let g = Digraph::complete(6, 1.0).unwrap().normalized().unwrap();
        let l = g.laplacian();
        let op = KronLaplacian::new(&l, 1);
        let x_star = solve_centralized_qp(&p).unwrap().x_star;
        let errs: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&eps| dist(&solve_equilibrium_fixed_point(&p, &op, eps, 1e-12).unwrap().x, &x_star))
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let ratio = errs[1] / errs[2];
        assert!(ratio > 5.0 && ratio < 20.0, "{errs:?}");
    }
}
