//! The coupled resource allocation problem
//!
//! ```text
//! min  Σ_i f_i(x_i)   s.t.  Σ_i g_i(x_i) ≤ 0,   x_i ∈ Ω_i
//! ```
//!
//! with agent-local costs `f_i`, affine resource maps `g_i(x_i) = D_i x_i − r_i`
//! (`p` coupled constraints) and box sets `Ω_i`.
//!
//! Flows and diagnostics are written against [`ResourceProblem`]; [`Problem`]
//! is the built-in quadratic family `f_i(x_i) = ½‖x_i − α_i‖²`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{clamp, sqrt};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Strong-convexity modulus of `f`.
    pub mu_f: f64,
    /// Lipschitz constant of `∇f`.
    pub kappa_f: f64,
    /// Lipschitz constant of each `g_i`.
    pub kappa_g: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_f > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mu_f",
                value: self.mu_f,
            });
        }
        if !(self.kappa_f >= self.mu_f) {
            return Err(Error::InvalidParameter {
                name: "kappa_f",
                value: self.kappa_f,
            });
        }
        if !(self.kappa_g >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "kappa_g",
                value: self.kappa_g,
            });
        }
        Ok(())
    }
}

/// The data a distributed flow needs from a problem.
///
/// All stacked vectors are `col(x_1, …, x_N)` (primal, length
/// [`primal_dim`](Self::primal_dim)) or `col(λ_1, …, λ_N)` (dual, length
/// `p·N`). The `*_into` methods assume correct lengths; the free functions in
/// this module check them.
pub trait ResourceProblem {
    fn agent_count(&self) -> usize;
    fn primal_dim(&self) -> usize;
    fn coupling_dim(&self) -> usize;
    fn constants(&self) -> ProblemConstants;

    fn dual_dim(&self) -> usize {
        self.agent_count() * self.coupling_dim()
    }

    /// `f(x) = Σ f_i(x_i)`.
    fn cost(&self, x: &[f64]) -> f64;
    /// Stacked `∇f_i(x_i)`.
    fn grad_f_into(&self, x: &[f64], out: &mut [f64]);
    /// `u(x) = col(g_1(x_1), …, g_N(x_N))`.
    fn eval_u_into(&self, x: &[f64], out: &mut [f64]);
    /// `v(x, λ) = col(∇g_1(x_1) λ_1, …, ∇g_N(x_N) λ_N)`.
    fn eval_v_into(&self, x: &[f64], lambda: &[f64], out: &mut [f64]);
    /// `P_Ω(y)`.
    fn project_local_into(&self, y: &[f64], out: &mut [f64]);
    /// Box bounds `(lower, upper)` of `Ω` per stacked component.
    fn local_bounds(&self, k: usize) -> (f64, f64);
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

pub fn grad_f<P: ResourceProblem + ?Sized>(prob: &P, x: &[f64]) -> Result<Vec<f64>> {
    check_len("primal vector", prob.primal_dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    prob.grad_f_into(x, &mut out);
    Ok(out)
}

pub fn eval_u<P: ResourceProblem + ?Sized>(prob: &P, x: &[f64]) -> Result<Vec<f64>> {
    check_len("primal vector", prob.primal_dim(), x.len())?;
    let mut out = vec![0.0; prob.dual_dim()];
    prob.eval_u_into(x, &mut out);
    Ok(out)
}

pub fn eval_v<P: ResourceProblem + ?Sized>(prob: &P, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    check_len("primal vector", prob.primal_dim(), x.len())?;
    check_len("dual vector", prob.dual_dim(), lambda.len())?;
    if lambda.iter().any(|l| *l < 0.0) {
        log::warn!("eval_v called with a negative multiplier");
    }
    let mut out = vec![0.0; x.len()];
    prob.eval_v_into(x, lambda, &mut out);
    Ok(out)
}

pub fn project_local<P: ResourceProblem + ?Sized>(prob: &P, y: &[f64]) -> Result<Vec<f64>> {
    check_len("primal vector", prob.primal_dim(), y.len())?;
    let mut out = vec![0.0; y.len()];
    prob.project_local_into(y, &mut out);
    Ok(out)
}

/// Total coupling value `g(x) = Σ_i g_i(x_i) ∈ ℝ^p`.
pub fn coupling_value<P: ResourceProblem + ?Sized>(prob: &P, x: &[f64]) -> Result<Vec<f64>> {
    let u = eval_u(prob, x)?;
    Ok(sum_blocks(&u, prob.coupling_dim()))
}

/// Sum the `p`-blocks of a stacked dual vector.
pub fn sum_blocks(u: &[f64], p: usize) -> Vec<f64> {
    let mut s = vec![0.0; p];
    for chunk in u.chunks_exact(p) {
        for (sk, uk) in s.iter_mut().zip(chunk) {
            *sk += uk;
        }
    }
    s
}

/// One agent of the quadratic family.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    target: Vec<f64>,
    /// `D_i`, `p × n_i` row-major.
    constraint: Vec<f64>,
    /// `r_i ∈ ℝ^p`.
    offset: Vec<f64>,
}

impl AgentSpec {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        target: Vec<f64>,
        constraint: Vec<f64>,
        offset: Vec<f64>,
    ) -> Result<Self> {
        let n = target.len();
        let p = offset.len();
        if n == 0 {
            return Err(Error::InvalidAgent {
                agent: 0,
                reason: "empty decision variable",
            });
        }
        if p == 0 {
            return Err(Error::InvalidAgent {
                agent: 0,
                reason: "empty resource map",
            });
        }
        if lower.len() != n || upper.len() != n {
            return Err(Error::InvalidAgent {
                agent: 0,
                reason: "box bounds do not match the decision dimension",
            });
        }
        if constraint.len() != n * p {
            return Err(Error::InvalidAgent {
                agent: 0,
                reason: "constraint matrix must be p × n_i",
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::InvalidAgent {
                agent: 0,
                reason: "lower bound exceeds upper bound",
            });
        }
        if target.iter().chain(&constraint).chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidAgent {
                agent: 0,
                reason: "non-finite problem data",
            });
        }
        Ok(Self {
            lower,
            upper,
            target,
            constraint,
            offset,
        })
    }

    /// Scalar agent on `[0, ∞)` with `g_i(x) = d x − r`.
    pub fn scalar_orthant(target: f64, demand: f64, share: f64) -> Result<Self> {
        Self::new(
            vec![0.0],
            vec![f64::INFINITY],
            vec![target],
            vec![demand],
            vec![share],
        )
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn coupling_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn constraint(&self) -> &[f64] {
        &self.constraint
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Frobenius norm of `D_i`, an upper bound on the Lipschitz constant of `g_i`.
    fn constraint_norm(&self) -> f64 {
        sqrt(self.constraint.iter().map(|v| v * v).sum())
    }
}

/// The quadratic/affine/box problem family.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    agents: Vec<AgentSpec>,
    p: usize,
    offsets: Vec<usize>,
    constants: ProblemConstants,
}

impl Problem {
    /// Constants are derived analytically: `µ_f = κ_f = 1` and `κ_g` is the
    /// largest `‖D_i‖_F`.
    pub fn new(agents: Vec<AgentSpec>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidSize {
                what: "agent count",
                got: 0,
                min: 1,
            });
        }
        let p = agents[0].coupling_dim();
        let mut offsets = Vec::with_capacity(agents.len() + 1);
        offsets.push(0);
        for (i, a) in agents.iter().enumerate() {
            if a.coupling_dim() != p {
                return Err(Error::InvalidAgent {
                    agent: i,
                    reason: "all agents must share the coupling dimension",
                });
            }
            offsets.push(offsets[i] + a.dim());
        }
        let kappa_g = agents.iter().map(AgentSpec::constraint_norm).fold(0.0, f64::max);
        let constants = ProblemConstants {
            mu_f: 1.0,
            kappa_f: 1.0,
            kappa_g,
        };
        Ok(Self {
            agents,
            p,
            offsets,
            constants,
        })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    /// Range of agent `i`'s block in a stacked primal vector.
    pub fn block(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Stacked `α`.
    pub fn targets(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.target.iter().copied()).collect()
    }

    /// Stacked lower and upper bounds of `Ω`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.agents.iter().flat_map(|a| a.lower.iter().copied()).collect();
        let hi = self.agents.iter().flat_map(|a| a.upper.iter().copied()).collect();
        (lo, hi)
    }

    /// Check `g(x̃) < 0` at a candidate Slater point inside `Ω`.
    pub fn check_slater(&self, x_tilde: &[f64]) -> Result<()> {
        let g = coupling_value(self, x_tilde)?;
        let worst = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let interior = x_tilde.iter().enumerate().all(|(k, &v)| {
            let (lo, hi) = self.local_bounds(k);
            (lo == hi && v == lo) || (v > lo && v < hi)
        });
        if worst < 0.0 && interior {
            Ok(())
        } else {
            Err(Error::NoSlaterPoint { slack: worst })
        }
    }
}

impl ResourceProblem for Problem {
    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn primal_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn coupling_dim(&self) -> usize {
        self.p
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn cost(&self, x: &[f64]) -> f64 {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let xi = &x[self.block(i)];
                0.5 * xi.iter().zip(&a.target).map(|(v, t)| (v - t) * (v - t)).sum::<f64>()
            })
            .sum()
    }

    fn grad_f_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, a) in self.agents.iter().enumerate() {
            let r = self.block(i);
            for ((o, v), t) in out[r.clone()].iter_mut().zip(&x[r]).zip(&a.target) {
                *o = v - t;
            }
        }
    }

    fn eval_u_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.p;
        for (i, a) in self.agents.iter().enumerate() {
            let xi = &x[self.block(i)];
            let n = a.dim();
            for k in 0..p {
                let row = &a.constraint[k * n..(k + 1) * n];
                out[i * p + k] = crate::math::dot(row, xi) - a.offset[k];
            }
        }
    }

    fn eval_v_into(&self, _x: &[f64], lambda: &[f64], out: &mut [f64]) {
        let p = self.p;
        for (i, a) in self.agents.iter().enumerate() {
            let n = a.dim();
            let li = &lambda[i * p..(i + 1) * p];
            let oi = &mut out[self.block(i)];
            for (c, o) in oi.iter_mut().enumerate() {
                *o = (0..p).map(|k| a.constraint[k * n + c] * li[k]).sum();
            }
        }
    }

    fn project_local_into(&self, y: &[f64], out: &mut [f64]) {
        for (i, a) in self.agents.iter().enumerate() {
            let r = self.block(i);
            for (((o, v), lo), hi) in out[r.clone()].iter_mut().zip(&y[r]).zip(&a.lower).zip(&a.upper) {
                *o = clamp(*v, *lo, *hi);
            }
        }
    }

    fn local_bounds(&self, k: usize) -> (f64, f64) {
        let i = self.offsets.partition_point(|&o| o <= k) - 1;
        let c = k - self.offsets[i];
        (self.agents[i].lower[c], self.agents[i].upper[c])
    }
}

/// Network-slicing instance with one resource, one data center and one
/// network function: `f_i(x_i) = ½(x_i − α_i)²`, `Σ d_i x_i ≤ R`, `x_i ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicingInstance {
    pub seed: u64,
    pub alpha: Vec<f64>,
    pub demand: Vec<f64>,
    pub capacity: f64,
}

impl SlicingInstance {
    /// Draw `α_i ∈ [0.5, 2]`, `d_i ∈ (0, 1]`, `R ∈ [0.5N, 2N]`.
    ///
    /// A zero demand is redrawn so every agent is actually coupled.
    pub fn generate(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize {
                what: "agent count",
                got: n,
                min: 2,
            });
        }
        let mut rng = rng::stream(seed);
        let alpha = (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect();
        let demand = (0..n)
            .map(|_| loop {
                let d: f64 = rng.gen_range(0.0..=1.0);
                if d > 0.0 {
                    break d;
                }
            })
            .collect();
        let capacity = rng.gen_range(0.5 * n as f64..=2.0 * n as f64);
        Ok(Self {
            seed,
            alpha,
            demand,
            capacity,
        })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Build the problem with the equal split `g_i(x_i) = d_i x_i − R/N`
    /// and verify a Slater point `x̃ = δ·1`.
    pub fn to_problem(&self) -> Result<Problem> {
        let n = self.n();
        if self.demand.len() != n {
            return Err(Error::DimensionMismatch {
                what: "demand vector",
                expected: n,
                got: self.demand.len(),
            });
        }
        let share = self.capacity / n as f64;
        let agents = self
            .alpha
            .iter()
            .zip(&self.demand)
            .map(|(&a, &d)| AgentSpec::scalar_orthant(a, d, share))
            .collect::<Result<Vec<_>>>()?;
        let prob = Problem::new(agents)?;
        let total_demand: f64 = self.demand.iter().sum();
        let delta = if total_demand > 0.0 {
            (0.5 * self.capacity / total_demand).min(1.0)
        } else {
            1.0
        };
        prob.check_slater(&vec![delta; n])?;
        Ok(prob)
    }
}

/// Generate the slicing problem for `n` agents.
pub fn gen_5g_instance(n: usize, seed: u64) -> Result<Problem> {
    SlicingInstance::generate(n, seed)?.to_problem()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_agents() -> Problem {
        Problem::new(vec![
            AgentSpec::scalar_orthant(1.0, 1.0, 0.5).unwrap(),
            AgentSpec::scalar_orthant(2.0, 1.0, 0.5).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn gradient_examples() {
        let p = two_agents();
        assert_eq!(grad_f(&p, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(grad_f(&p, &[0.0, 0.0]).unwrap(), vec![-1.0, -2.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = gen_5g_instance(6, 4).unwrap();
        let x = [0.3, 1.7, 0.0, 2.2, 0.9, 1.1];
        let g = grad_f(&p, &x).unwrap();
        let h = 1e-5;
        for k in 0..x.len() {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.cost(&xp) - p.cost(&xm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "component {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn u_and_v_examples() {
        let p = two_agents();
        assert_eq!(eval_u(&p, &[0.0, 0.0]).unwrap(), vec![-0.5, -0.5]);
        assert_eq!(eval_v(&p, &[0.3, 0.4], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let q = Problem::new(vec![
            AgentSpec::scalar_orthant(1.0, 0.25, 0.5).unwrap(),
            AgentSpec::scalar_orthant(1.0, 0.75, 0.5).unwrap(),
        ])
        .unwrap();
        assert_eq!(eval_v(&q, &[0.0, 0.0], &[2.0, 4.0]).unwrap(), vec![0.5, 3.0]);
    }

    #[test]
    fn boundary_point_has_zero_total_coupling() {
        // d = (0.5, 1, 0.25), R = 3 split equally; x on Σ d_i x_i = R.
        let inst = SlicingInstance {
            seed: 0,
            alpha: vec![1.0; 3],
            demand: vec![0.5, 1.0, 0.25],
            capacity: 3.0,
        };
        let p = inst.to_problem().unwrap();
        let x = [2.0, 1.0, 4.0];
        let total: f64 = eval_u(&p, &x).unwrap().iter().sum();
        assert!(total.abs() < 1e-15);
    }

    #[test]
    fn projection_clamps_to_orthant() {
        let p = two_agents();
        assert_eq!(project_local(&p, &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        assert_eq!(project_local(&p, &[0.5, 2.0]).unwrap(), vec![0.5, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = two_agents();
        assert!(matches!(grad_f(&p, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(eval_u(&p, &[1.0, 2.0, 3.0]).is_err());
        assert!(eval_v(&p, &[1.0, 2.0], &[1.0]).is_err());
        assert!(project_local(&p, &[]).is_err());
    }

    #[test]
    fn agent_validation() {
        assert!(AgentSpec::new(vec![1.0], vec![0.0], vec![0.0], vec![1.0], vec![0.0]).is_err());
        assert!(AgentSpec::new(vec![0.0], vec![1.0], vec![0.0], vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(Problem::new(vec![]).is_err());
    }

    #[test]
    fn generator_ranges_and_determinism() {
        let a = SlicingInstance::generate(10, 3).unwrap();
        assert_eq!(a, SlicingInstance::generate(10, 3).unwrap());
        assert!(a.alpha.iter().all(|v| (0.5..=2.0).contains(v)));
        assert!(a.demand.iter().all(|v| *v > 0.0 && *v <= 1.0));
        assert!((5.0..=20.0).contains(&a.capacity));
        let p = a.to_problem().unwrap();
        let c = p.constants();
        assert_eq!(c.mu_f, 1.0);
        assert!(c.kappa_g <= 1.0);
        assert_eq!(c.kappa_g, a.demand.iter().cloned().fold(0.0, f64::max));
        let g0: f64 = coupling_value(&p, &vec![0.0; 10]).unwrap()[0];
        assert!((g0 + a.capacity).abs() < 1e-12);
    }

    #[test]
    fn general_blocks_with_two_constraints() {
        let agent = AgentSpec::new(
            vec![0.0, -1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let p = Problem::new(vec![agent.clone(), agent]).unwrap();
        assert_eq!(p.primal_dim(), 4);
        assert_eq!(p.dual_dim(), 4);
        let u = eval_u(&p, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(u, vec![2.0, 6.0, -1.0, -1.0]);
        let v = eval_v(&p, &[0.0; 4], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.local_bounds(3), (-1.0, 1.0));
        assert_eq!(p.local_bounds(0), (0.0, 1.0));
    }
}
