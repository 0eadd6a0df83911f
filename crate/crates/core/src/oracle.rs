//! Centralized ground truth for single-coupling problems.
//!
//! The feasible set `X = {x ∈ Ω : dᵀx ≤ R}` (one coupled constraint, box
//! `Ω`) admits an exact Euclidean projection: with multiplier `µ ≥ 0`,
//! `x(µ) = clamp(y − µ d, lo, hi)` and `s(µ) = dᵀx(µ)` is piecewise linear and
//! nonincreasing, so the active segment is found among the sorted breakpoints
//! and `µ` solved in closed form on it. For the quadratic family the optimum
//! is `x* = P_X(α)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, clamp, dist, dot, norm};
use crate::problem::{Problem, ResourceProblem};

/// `{x : lo ≤ x ≤ hi, dᵀx ≤ bound}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    normal: Vec<f64>,
    bound: f64,
}

/// Projection result with the half-space multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub multiplier: f64,
}

impl CouplingSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, normal: Vec<f64>, bound: f64) -> Result<Self> {
        let n = normal.len();
        for (what, v) in [("lower bounds", &lower), ("upper bounds", &upper)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            lower,
            upper,
            normal,
            bound,
        })
    }

    /// `X` for a problem with one coupled constraint: `d` stacks the rows
    /// `D_i` and `R = Σ r_i`.
    pub fn from_problem(prob: &Problem) -> Result<Self> {
        if prob.coupling_dim() != 1 {
            return Err(Error::Unsupported(
                "exact feasible-set projection needs a single coupled constraint",
            ));
        }
        let (lower, upper) = prob.bounds();
        let normal = prob
            .agents()
            .iter()
            .flat_map(|a| a.constraint().iter().copied())
            .collect();
        let bound = prob.agents().iter().map(|a| a.offset()[0]).sum();
        Self::new(lower, upper, normal, bound)
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn clamp_at(&self, y: &[f64], mu: f64, out: &mut [f64]) {
        for k in 0..y.len() {
            out[k] = clamp(y[k] - mu * self.normal[k], self.lower[k], self.upper[k]);
        }
    }

    fn s(&self, y: &[f64], mu: f64) -> f64 {
        (0..y.len())
            .map(|k| self.normal[k] * clamp(y[k] - mu * self.normal[k], self.lower[k], self.upper[k]))
            .sum()
    }

    /// Exact Euclidean projection onto the set.
    ///
    /// Returns an error only if the set is empty (the half-space misses the
    /// box entirely).
    pub fn project(&self, y: &[f64]) -> Result<Projection> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "projection input",
                expected: self.dim(),
                got: y.len(),
            });
        }
        let mut point = vec![0.0; y.len()];
        self.clamp_at(y, 0.0, &mut point);
        if dot(&self.normal, &point) <= self.bound {
            return Ok(Projection {
                point,
                multiplier: 0.0,
            });
        }

        let mut breaks: Vec<f64> = Vec::with_capacity(2 * y.len());
        for k in 0..y.len() {
            let d = self.normal[k];
            if d == 0.0 {
                continue;
            }
            for b in [self.lower[k], self.upper[k]] {
                if b.is_finite() {
                    let mu = (y[k] - b) / d;
                    if mu > 0.0 {
                        breaks.push(mu);
                    }
                }
            }
        }
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();

        // s(0) > R; find the first breakpoint with s ≤ R.
        let idx = breaks.partition_point(|&mu| self.s(y, mu) > self.bound);
        let left = if idx == 0 { 0.0 } else { breaks[idx - 1] };
        let right = breaks.get(idx).copied();
        // Active set on the open segment (left, right).
        let probe = match right {
            Some(r) => 0.5 * (left + r),
            None => left + 1.0,
        };
        let mut fixed = 0.0;
        let mut free_dy = 0.0;
        let mut free_dd = 0.0;
        for k in 0..y.len() {
            let d = self.normal[k];
            let z = y[k] - probe * d;
            if z <= self.lower[k] {
                fixed += d * self.lower[k];
            } else if z >= self.upper[k] {
                fixed += d * self.upper[k];
            } else {
                free_dy += d * y[k];
                free_dd += d * d;
            }
        }
        // s is continuous with s(left) > R ≥ s(right), so a flat segment can
        // only be the unbounded tail, which means the set is empty.
        if free_dd == 0.0 {
            return Err(Error::NoSlaterPoint {
                slack: fixed - self.bound,
            });
        }
        let mu = (fixed + free_dy - self.bound) / free_dd;
        let mu = match right {
            Some(r) => clamp(mu, left, r),
            None => mu.max(left),
        };
        self.clamp_at(y, mu, &mut point);
        Ok(Projection {
            point,
            multiplier: mu,
        })
    }

    /// `‖P_X(x − F) − x‖`, the natural residual of `VI(X, F)` at `x`.
    pub fn vi_residual(&self, f_value: &[f64], x: &[f64]) -> Result<f64> {
        let y: Vec<f64> = x.iter().zip(f_value).map(|(a, b)| a - b).collect();
        let p = self.project(&y)?;
        Ok(dist(&p.point, x))
    }

    /// Projection onto the box alone.
    fn project_box(&self, y: &mut [f64]) {
        for k in 0..y.len() {
            y[k] = clamp(y[k], self.lower[k], self.upper[k]);
        }
    }

    /// Projection onto the half-space alone.
    fn project_halfspace(&self, y: &mut [f64]) {
        let dd = dot(&self.normal, &self.normal);
        let excess = dot(&self.normal, y) - self.bound;
        if excess > 0.0 && dd > 0.0 {
            let t = excess / dd;
            for (v, d) in y.iter_mut().zip(&self.normal) {
                *v -= t * d;
            }
        }
    }

    /// Dykstra's alternating projection between the box and the half-space.
    ///
    /// Independent of the breakpoint projector; used by the fallback oracle.
    pub fn project_dykstra(&self, y: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = y.len();
        let mut x = y.to_vec();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut a = vec![0.0; n];
        let mut prev = vec![0.0; n];
        for _ in 0..max_iter {
            prev.copy_from_slice(&x);
            for k in 0..n {
                a[k] = x[k] + p[k];
            }
            let mut yb = a.clone();
            self.project_box(&mut yb);
            for k in 0..n {
                p[k] = a[k] - yb[k];
                a[k] = yb[k] + q[k];
            }
            x.copy_from_slice(&a);
            self.project_halfspace(&mut x);
            for k in 0..n {
                q[k] = a[k] - x[k];
            }
            let box_gap: f64 = (0..n)
                .map(|k| {
                    let c = clamp(x[k], self.lower[k], self.upper[k]);
                    (x[k] - c) * (x[k] - c)
                })
                .sum();
            if dist(&x, &prev) <= tol && crate::math::sqrt(box_gap) <= tol {
                self.project_box(&mut x);
                return Ok(x);
            }
        }
        Err(Error::SolverFailure {
            solver: "dykstra projection",
            iterations: max_iter,
            residual: dist(&x, &prev),
        })
    }
}

/// KKT data for the single-coupling quadratic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    pub x_star: Vec<f64>,
    pub mu_star: f64,
    /// `max(0, dᵀx − R)` plus the worst box violation.
    pub primal_residual: f64,
    /// `max(0, −µ)`.
    pub dual_residual: f64,
    /// `|µ (dᵀx − R)|`.
    pub complementarity: f64,
    /// `max_k |x_k − clamp(α_k − µ d_k)|`.
    pub stationarity: f64,
}

impl KktCertificate {
    fn build(set: &CouplingSet, alpha: &[f64], x: Vec<f64>, mu: f64) -> Self {
        let slack = dot(set.normal(), &x) - set.bound();
        let box_violation = x
            .iter()
            .enumerate()
            .map(|(k, v)| (set.lower[k] - v).max(v - set.upper[k]).max(0.0))
            .fold(0.0, f64::max);
        let stationarity = x
            .iter()
            .enumerate()
            .map(|(k, v)| abs(v - clamp(alpha[k] - mu * set.normal[k], set.lower[k], set.upper[k])))
            .fold(0.0, f64::max);
        Self {
            primal_residual: slack.max(0.0) + box_violation,
            dual_residual: (-mu).max(0.0),
            complementarity: abs(mu * slack),
            stationarity,
            x_star: x,
            mu_star: mu,
        }
    }

    /// Largest of the four residuals.
    pub fn max_residual(&self) -> f64 {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.complementarity)
            .max(self.stationarity)
    }

    /// All residuals within `tol`, scaled by the data magnitude.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Breakpoint solver: `x* = P_X(α)` with the coupling multiplier.
pub fn solve_centralized_qp(prob: &Problem) -> Result<KktCertificate> {
    let set = CouplingSet::from_problem(prob)?;
    let alpha = prob.targets();
    let proj = set.project(&alpha)?;
    Ok(KktCertificate::build(&set, &alpha, proj.point, proj.multiplier))
}

/// `P_X(y)` for single-coupling problems.
pub fn project_x(prob: &Problem, y: &[f64]) -> Result<Vec<f64>> {
    Ok(CouplingSet::from_problem(prob)?.project(y)?.point)
}

/// Projected gradient `x ← P_X(x − ∇f(x)/κ_f)` with an independent
/// (Dykstra) projector, stopped when the natural residual is below `tol`.
///
/// The multiplier is recovered by least squares on the stationarity
/// equations of the free coordinates.
pub fn solve_centralized_pg(prob: &Problem, tol: f64) -> Result<KktCertificate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", value: tol });
    }
    let set = CouplingSet::from_problem(prob)?;
    let alpha = prob.targets();
    let n = prob.primal_dim();
    let step = 1.0 / prob.constants().kappa_f;
    let inner_tol = (tol * 1e-3).max(1e-15);
    const MAX_ITER: usize = 100_000;

    let mut x = set.project_dykstra(&vec![0.0; n], inner_tol, 1_000_000)?;
    let mut grad = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        prob.grad_f_into(&x, &mut grad);
        let y: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - g).collect();
        let unit = set.project_dykstra(&y, inner_tol, 1_000_000)?;
        residual = dist(&unit, &x);
        if residual <= tol {
            break;
        }
        x = if step == 1.0 {
            unit
        } else {
            let y: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            set.project_dykstra(&y, inner_tol, 1_000_000)?
        };
    }
    if residual > tol {
        return Err(Error::SolverFailure {
            solver: "projected gradient",
            iterations: MAX_ITER,
            residual,
        });
    }

    let slack = dot(set.normal(), &x) - set.bound();
    let scale = 1.0 + norm(&x);
    let mu = if slack < -tol * scale {
        0.0
    } else {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..n {
            let d = set.normal[k];
            if x[k] > set.lower[k] + tol && x[k] < set.upper[k] - tol {
                num += d * (alpha[k] - x[k]);
                den += d * d;
            }
        }
        if den > 0.0 {
            (num / den).max(0.0)
        } else {
            0.0
        }
    };
    Ok(KktCertificate::build(&set, &alpha, x, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gen_5g_instance, AgentSpec, SlicingInstance};

    fn instance(alpha: &[f64], demand: &[f64], capacity: f64) -> Problem {
        SlicingInstance {
            seed: 0,
            alpha: alpha.to_vec(),
            demand: demand.to_vec(),
            capacity,
        }
        .to_problem()
        .unwrap()
    }

    /// Bisection on `Σ d_i max(0, α_i − µ d_i) = R`, independent of the
    /// breakpoint logic.
    fn bisection_mu(alpha: &[f64], d: &[f64], r: f64) -> f64 {
        let s = |mu: f64| -> f64 { alpha.iter().zip(d).map(|(a, di)| di * (a - mu * di).max(0.0)).sum() };
        if s(0.0) <= r {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while s(hi) > r {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if s(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn two_agent_example() {
        let p = instance(&[1.0, 2.0], &[1.0, 1.0], 1.0);
        let c = solve_centralized_qp(&p).unwrap();
        assert!((bisection_mu(&[1.0, 2.0], &[1.0, 1.0], 1.0) - 1.0).abs() < 1e-12);
        assert!((c.mu_star - 1.0).abs() < 1e-14);
        assert!(c.x_star[0].abs() < 1e-14 && (c.x_star[1] - 1.0).abs() < 1e-14);
        assert!(c.is_valid(1e-10));
    }

    #[test]
    fn slack_constraint_returns_targets() {
        let p = instance(&[1.0, 2.0, 0.5], &[0.5, 0.5, 0.5], 10.0);
        let c = solve_centralized_qp(&p).unwrap();
        assert_eq!(c.mu_star, 0.0);
        assert_eq!(c.x_star, vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn symmetric_instance_halves_targets() {
        let n = 6;
        let p = instance(&vec![1.5; n], &vec![1.0; n], n as f64 * 1.5 / 2.0);
        let c = solve_centralized_qp(&p).unwrap();
        for x in &c.x_star {
            assert!((x - 0.75).abs() < 1e-14);
        }
    }

    #[test]
    fn breakpoint_multiplier_matches_bisection() {
        for seed in 0..50 {
            let inst = SlicingInstance::generate(20, seed).unwrap();
            // Tighten capacity so the coupling is often active.
            let inst = SlicingInstance {
                capacity: inst.capacity * 0.3,
                ..inst
            };
            let p = inst.to_problem().unwrap();
            let c = solve_centralized_qp(&p).unwrap();
            let mu = bisection_mu(&inst.alpha, &inst.demand, inst.capacity);
            assert!((c.mu_star - mu).abs() < 1e-10, "seed {seed}: {} vs {mu}", c.mu_star);
            assert!(c.is_valid(1e-10), "{c:?}");
        }
    }

    #[test]
    fn projection_examples() {
        let set = CouplingSet::new(vec![0.0; 2], vec![f64::INFINITY; 2], vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(set.project(&[0.5, 0.5]).unwrap().point, vec![0.5, 0.5]);
        let p = set.project(&[2.0, 2.0]).unwrap();
        assert_eq!(p.point, vec![1.0, 1.0]);
        assert_eq!(p.multiplier, 1.0);
        assert_eq!(set.project(&[-1.0, 0.5]).unwrap().point, vec![0.0, 0.5]);
    }

    #[test]
    fn projection_handles_bounded_box_and_mixed_signs() {
        // Brute-force check of the projection's KKT system on a small box.
        let set = CouplingSet::new(
            vec![-1.0, 0.0, -2.0, 0.0],
            vec![1.0, 3.0, 2.0, f64::INFINITY],
            vec![1.0, -0.5, 2.0, 0.0],
            0.5,
        )
        .unwrap();
        let y = [1.5, -1.0, 3.0, -4.0];
        let p = set.project(&y).unwrap();
        let s = dot(set.normal(), &p.point);
        assert!(s <= 0.5 + 1e-12);
        assert!(p.multiplier > 0.0 && (s - 0.5).abs() < 1e-12);
        for k in 0..4 {
            let expect = clamp(y[k] - p.multiplier * set.normal()[k], set.lower()[k], set.upper()[k]);
            assert!((p.point[k] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn dykstra_agrees_with_breakpoint_projection() {
        let p = gen_5g_instance(30, 8).unwrap();
        let set = CouplingSet::from_problem(&p).unwrap();
        let y: Vec<f64> = (0..30).map(|k| ((k * 37 % 11) as f64) - 3.0).collect();
        let a = set.project(&y).unwrap().point;
        let b = set.project_dykstra(&y, 1e-14, 1_000_000).unwrap();
        assert!(dist(&a, &b) < 1e-9, "{}", dist(&a, &b));
    }

    #[test]
    fn fallback_matches_breakpoint() {
        for seed in 0..10 {
            let p = gen_5g_instance(15, seed).unwrap();
            let exact = solve_centralized_qp(&p).unwrap();
            let pg = solve_centralized_pg(&p, 1e-10).unwrap();
            assert!(dist(&exact.x_star, &pg.x_star) < 1e-6);
        }
    }

    #[test]
    fn fallback_on_slack_problem_clamps_targets() {
        let p = instance(&[1.0, 2.0], &[0.1, 0.1], 5.0);
        let c = solve_centralized_pg(&p, 1e-12).unwrap();
        assert!(dist(&c.x_star, &[1.0, 2.0]) < 1e-10);
        assert_eq!(c.mu_star, 0.0);
    }

    #[test]
    fn multi_constraint_problems_are_unsupported() {
        let agent = AgentSpec::new(vec![0.0], vec![1.0], vec![0.5], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let p = Problem::new(vec![agent.clone(), agent]).unwrap();
        assert!(matches!(solve_centralized_qp(&p), Err(Error::Unsupported(_))));
        assert!(matches!(solve_centralized_pg(&p, 1e-8), Err(Error::Unsupported(_))));
    }
}
