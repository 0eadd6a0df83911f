//! The projected singular-perturbation dynamics, the auxiliary-variable
//! baseline, a fixed-step Euler integrator and the Lyapunov/monotonicity
//! diagnostics.
//!
//! The perturbed flow in compact form, with `z = (x, λ) ∈ Λ = Ω × ℝ₊^{pN}`:
//!
//! ```text
//! ẋ  = P_Ω(x − ∇f(x) − v(x, λ)) − x
//! ελ̇ = P_{ℝ₊}(ελ + εu(x) − Lλ) − ελ
//! ```
//!
//! Equivalently `ż = H(z) − z` with `H(z) = P_Λ(z − G(z))` and
//! `G(z) = (∇f(x) + v(x, λ), (1/ε)Lλ − u(x))`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::KronLaplacian;
use crate::math::{dist, dot};
use crate::problem::{sum_blocks, ResourceProblem};
use crate::rng::stream;

/// A point of the flow: primal `x`, dual `λ` and, for the baseline only,
/// the auxiliary `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub aux: Option<Vec<f64>>,
}

impl State {
    pub fn new(x: Vec<f64>, lambda: Vec<f64>) -> Self {
        Self { x, lambda, aux: None }
    }

    pub fn with_aux(x: Vec<f64>, lambda: Vec<f64>, aux: Vec<f64>) -> Self {
        Self {
            x,
            lambda,
            aux: Some(aux),
        }
    }

    /// A zero state with the same block shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            x: vec![0.0; self.x.len()],
            lambda: vec![0.0; self.lambda.len()],
            aux: self.aux.as_ref().map(|a| vec![0.0; a.len()]),
        }
    }

    /// Euclidean norm over all blocks.
    pub fn norm(&self) -> f64 {
        let aux = self.aux.as_deref().map_or(0.0, |a| dot(a, a));
        crate::math::sqrt(dot(&self.x, &self.x) + dot(&self.lambda, &self.lambda) + aux)
    }

    /// Euclidean distance over the `(x, λ)` blocks.
    pub fn dist_primal_dual(&self, other: &State) -> f64 {
        let dx = dist(&self.x, &other.x);
        let dl = dist(&self.lambda, &other.lambda);
        crate::math::sqrt(dx * dx + dl * dl)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.lambda).all(|v| v.is_finite())
            && self.aux.as_deref().map_or(true, |a| a.iter().all(|v| v.is_finite()))
    }

    /// `self += h · d`, blockwise.
    pub fn axpy(&mut self, h: f64, d: &State) {
        for (a, b) in self.x.iter_mut().zip(&d.x) {
            *a += h * b;
        }
        for (a, b) in self.lambda.iter_mut().zip(&d.lambda) {
            *a += h * b;
        }
        if let (Some(a), Some(b)) = (self.aux.as_mut(), d.aux.as_ref()) {
            for (a, b) in a.iter_mut().zip(b) {
                *a += h * b;
            }
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub eps: f64,
    pub h: f64,
    pub stop_tol: f64,
    pub t_max: f64,
    pub diverge_norm: f64,
    /// Record a sample every this many steps (the first and last states are
    /// always recorded).
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            h: 0.001,
            stop_tol: 1e-5,
            t_max: 2000.0,
            diverge_norm: 1e8,
            record_every: 1000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter { name: "eps", value: self.eps });
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::InvalidParameter { name: "h", value: self.h });
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "stop_tol",
                value: self.stop_tol,
            });
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidParameter { name: "t_max", value: self.t_max });
        }
        if !(self.diverge_norm > 0.0) {
            return Err(Error::InvalidParameter {
                name: "diverge_norm",
                value: self.diverge_norm,
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Number of steps corresponding to `t_max`.
    pub fn max_steps(&self) -> u64 {
        let ratio = self.t_max / self.h;
        let rounded = crate::math::round(ratio);
        if crate::math::abs(ratio - rounded) <= 1e-9 * ratio.max(1.0) {
            rounded as u64
        } else {
            libm::ceil(ratio) as u64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Converged,
    Diverged,
    TimeCap,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Diverged => "diverged",
            RunStatus::TimeCap => "timecap",
        }
    }
}

/// A recorded trajectory point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub zdot_norm: f64,
    /// Total coupling value `g(x) = Σ_i g_i(x_i)`.
    pub coupling: Vec<f64>,
    pub state: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    /// Simulated time at termination (`k·h`).
    pub t_ter: f64,
    pub steps: u64,
    pub final_state: State,
    /// `‖ż‖` at the final state (infinite if it could not be evaluated).
    pub zdot_norm: f64,
    /// Equilibrium residual at the final state; for the baseline this is
    /// `‖ż‖` of its own three-block system.
    pub residual: f64,
    pub samples: Vec<Sample>,
    pub note: Option<String>,
}

/// A right-hand side `out = F(s)` of an autonomous flow on [`State`].
pub trait Flow {
    fn rhs(&mut self, s: &State, out: &mut State) -> Result<()>;

    /// Total coupling value `g(x)` for sampling.
    fn coupling(&self, x: &[f64]) -> Vec<f64>;
}

fn check_shapes<P: ResourceProblem + ?Sized>(prob: &P, op: &KronLaplacian<'_>, s: &State) -> Result<()> {
    if s.x.len() != prob.primal_dim() {
        return Err(Error::DimensionMismatch {
            what: "primal vector",
            expected: prob.primal_dim(),
            got: s.x.len(),
        });
    }
    if s.lambda.len() != prob.dual_dim() || op.dim() != prob.dual_dim() {
        return Err(Error::DimensionMismatch {
            what: "dual vector",
            expected: prob.dual_dim(),
            got: s.lambda.len(),
        });
    }
    Ok(())
}

/// Scratch buffers shared by the right-hand sides.
struct Work {
    grad: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
    px: Vec<f64>,
    u: Vec<f64>,
    l_lambda: Vec<f64>,
    l_aux: Vec<f64>,
}

impl Work {
    fn new(n: usize, m: usize) -> Self {
        Self {
            grad: vec![0.0; n],
            v: vec![0.0; n],
            y: vec![0.0; n],
            px: vec![0.0; n],
            u: vec![0.0; m],
            l_lambda: vec![0.0; m],
            l_aux: vec![0.0; m],
        }
    }

    /// `out = P_Ω(x − ∇f(x) − v(x, λ)) − x`.
    fn primal<P: ResourceProblem + ?Sized>(&mut self, prob: &P, s: &State, out: &mut [f64]) {
        prob.grad_f_into(&s.x, &mut self.grad);
        prob.eval_v_into(&s.x, &s.lambda, &mut self.v);
        for k in 0..s.x.len() {
            self.y[k] = s.x[k] - self.grad[k] - self.v[k];
        }
        prob.project_local_into(&self.y, &mut self.px);
        for k in 0..s.x.len() {
            out[k] = self.px[k] - s.x[k];
        }
    }
}

/// The perturbed flow (compact form) as a [`Flow`].
pub struct Algorithm1<'a, P: ResourceProblem + ?Sized> {
    prob: &'a P,
    op: KronLaplacian<'a>,
    eps: f64,
    work: Work,
}

impl<'a, P: ResourceProblem + ?Sized> Algorithm1<'a, P> {
    pub fn new(prob: &'a P, op: KronLaplacian<'a>, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter { name: "eps", value: eps });
        }
        if op.dim() != prob.dual_dim() {
            return Err(Error::DimensionMismatch {
                what: "Laplacian operator",
                expected: prob.dual_dim(),
                got: op.dim(),
            });
        }
        Ok(Self {
            prob,
            op,
            eps,
            work: Work::new(prob.primal_dim(), prob.dual_dim()),
        })
    }
}

impl<P: ResourceProblem + ?Sized> Flow for Algorithm1<'_, P> {
    fn rhs(&mut self, s: &State, out: &mut State) -> Result<()> {
        check_shapes(self.prob, &self.op, s)?;
        let eps = self.eps;
        let w = &mut self.work;
        w.primal(self.prob, s, &mut out.x);
        self.prob.eval_u_into(&s.x, &mut w.u);
        self.op.apply(&s.lambda, &mut w.l_lambda);
        for k in 0..s.lambda.len() {
            let a = eps * s.lambda[k] + eps * w.u[k] - w.l_lambda[k];
            // Equal to (P(a) − ελ)/ε; this grouping keeps λ + h·λ̇ ≥ 0
            // exactly for h ≤ 1.
            out.lambda[k] = a.max(0.0) / eps - s.lambda[k];
        }
        Ok(())
    }

    fn coupling(&self, x: &[f64]) -> Vec<f64> {
        coupling_of(self.prob, x)
    }
}

/// The auxiliary-variable baseline
/// `ẋ = P_Ω(x − ∇f − v) − x`, `λ̇ = P_{ℝ₊}(λ + u − Lλ − L v_aux) − λ`,
/// `v̇_aux = Lλ`, run on the given graph as-is.
pub struct Baseline<'a, P: ResourceProblem + ?Sized> {
    prob: &'a P,
    op: KronLaplacian<'a>,
    work: Work,
}

impl<'a, P: ResourceProblem + ?Sized> Baseline<'a, P> {
    pub fn new(prob: &'a P, op: KronLaplacian<'a>) -> Result<Self> {
        if op.dim() != prob.dual_dim() {
            return Err(Error::DimensionMismatch {
                what: "Laplacian operator",
                expected: prob.dual_dim(),
                got: op.dim(),
            });
        }
        Ok(Self {
            prob,
            op,
            work: Work::new(prob.primal_dim(), prob.dual_dim()),
        })
    }
}

impl<P: ResourceProblem + ?Sized> Flow for Baseline<'_, P> {
    fn rhs(&mut self, s: &State, out: &mut State) -> Result<()> {
        check_shapes(self.prob, &self.op, s)?;
        let aux = s
            .aux
            .as_deref()
            .ok_or(Error::StateShape("baseline state needs the auxiliary block"))?;
        if aux.len() != s.lambda.len() {
            return Err(Error::StateShape("auxiliary block must match the dual block"));
        }
        let out_aux = out
            .aux
            .as_mut()
            .ok_or(Error::StateShape("baseline derivative needs the auxiliary block"))?;
        let w = &mut self.work;
        w.primal(self.prob, s, &mut out.x);
        self.prob.eval_u_into(&s.x, &mut w.u);
        self.op.apply(&s.lambda, &mut w.l_lambda);
        self.op.apply(aux, &mut w.l_aux);
        for k in 0..s.lambda.len() {
            let a = s.lambda[k] + w.u[k] - w.l_lambda[k] - w.l_aux[k];
            out.lambda[k] = a.max(0.0) - s.lambda[k];
            out_aux[k] = w.l_lambda[k];
        }
        Ok(())
    }

    fn coupling(&self, x: &[f64]) -> Vec<f64> {
        coupling_of(self.prob, x)
    }
}

fn coupling_of<P: ResourceProblem + ?Sized>(prob: &P, x: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; prob.dual_dim()];
    prob.eval_u_into(x, &mut u);
    sum_blocks(&u, prob.coupling_dim())
}

/// Perturbed-flow right-hand side (compact form).
pub fn rhs_algorithm1<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    eps: f64,
    s: &State,
) -> Result<State> {
    let mut flow = Algorithm1::new(prob, *op, eps)?;
    let mut out = State::new(vec![0.0; s.x.len()], vec![0.0; s.lambda.len()]);
    flow.rhs(s, &mut out)?;
    Ok(out)
}

/// Perturbed-flow right-hand side in per-agent form:
/// `λ̇_i = (1/ε)·max{−ελ_i, εg_i(x_i) − Σ_j a_ij(λ_i − λ_j)}`.
pub fn rhs_algorithm1_per_agent<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    eps: f64,
    s: &State,
) -> Result<State> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "eps", value: eps });
    }
    check_shapes(prob, op, s)?;
    let p = op.block();
    let lap = op.laplacian();
    let mut work = Work::new(prob.primal_dim(), prob.dual_dim());
    let mut out = State::new(vec![0.0; s.x.len()], vec![0.0; s.lambda.len()]);
    work.primal(prob, s, &mut out.x);
    prob.eval_u_into(&s.x, &mut work.u);
    for i in 0..lap.n() {
        for k in 0..p {
            let li = s.lambda[i * p + k];
            let mut disagreement = 0.0;
            for &(j, a) in lap.in_weights(i) {
                disagreement += a * (li - s.lambda[j * p + k]);
            }
            let b = eps * work.u[i * p + k] - disagreement;
            out.lambda[i * p + k] = (-eps * li).max(b) / eps;
        }
    }
    Ok(out)
}

/// Baseline right-hand side.
pub fn rhs_baseline<P: ResourceProblem + ?Sized>(prob: &P, op: &KronLaplacian<'_>, s: &State) -> Result<State> {
    let mut flow = Baseline::new(prob, *op)?;
    let mut out = s.zeros_like();
    if out.aux.is_none() {
        return Err(Error::StateShape("baseline state needs the auxiliary block"));
    }
    flow.rhs(s, &mut out)?;
    Ok(out)
}

/// Explicit Euler with fixed step `cfg.h`.
///
/// At step `k` (time `k·h`) the state is checked for divergence, the
/// derivative is evaluated, and the run stops as converged when
/// `‖ż‖ ≤ stop_tol`, or at the time cap. The dual block of `ż` is the one
/// actually integrated (already divided by `ε`).
pub fn euler_integrate<F: Flow + ?Sized>(flow: &mut F, s0: State, cfg: &FlowConfig) -> Result<RunResult> {
    cfg.validate()?;
    let max_steps = cfg.max_steps();
    let mut s = s0;
    let mut d = s.zeros_like();
    let mut samples = Vec::new();
    let mut k: u64 = 0;
    loop {
        let t = k as f64 * cfg.h;
        let state_norm = s.norm();
        if !s.is_finite() || state_norm >= cfg.diverge_norm {
            let note = if s.is_finite() {
                format!("state norm {state_norm:.3e} reached the divergence threshold at t = {t}")
            } else {
                format!("non-finite state at t = {t}")
            };
            return Ok(finish(flow, RunStatus::Diverged, t, k, s, f64::INFINITY, samples, Some(note)));
        }
        flow.rhs(&s, &mut d)?;
        let zdot = d.norm();
        if !zdot.is_finite() {
            let note = format!("non-finite derivative at t = {t}");
            return Ok(finish(flow, RunStatus::Diverged, t, k, s, f64::INFINITY, samples, Some(note)));
        }
        if k % cfg.record_every as u64 == 0 {
            samples.push(Sample {
                t,
                zdot_norm: zdot,
                coupling: flow.coupling(&s.x),
                state: s.clone(),
            });
        }
        if zdot <= cfg.stop_tol {
            return Ok(finish(flow, RunStatus::Converged, t, k, s, zdot, samples, None));
        }
        if k >= max_steps {
            return Ok(finish(flow, RunStatus::TimeCap, t, k, s, zdot, samples, None));
        }
        s.axpy(cfg.h, &d);
        k += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn finish<F: Flow + ?Sized>(
    flow: &F,
    status: RunStatus,
    t: f64,
    steps: u64,
    s: State,
    zdot: f64,
    mut samples: Vec<Sample>,
    note: Option<String>,
) -> RunResult {
    if samples.last().map_or(true, |x| x.t != t) {
        samples.push(Sample {
            t,
            zdot_norm: zdot,
            coupling: flow.coupling(&s.x),
            state: s.clone(),
        });
    }
    RunResult {
        status,
        t_ter: t,
        steps,
        final_state: s,
        zdot_norm: zdot,
        residual: zdot,
        samples,
        note,
    }
}

/// Initial state `x(0) = P_Ω(0)`, `λ(0) = 0`.
pub fn initial_state<P: ResourceProblem + ?Sized>(prob: &P) -> State {
    let mut x = vec![0.0; prob.primal_dim()];
    prob.project_local_into(&vec![0.0; prob.primal_dim()], &mut x);
    State::new(x, vec![0.0; prob.dual_dim()])
}

/// Run the perturbed flow from [`initial_state`]; `residual` is the
/// [`equilibrium_residual`] of the final state.
pub fn run_algorithm1<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    cfg: &FlowConfig,
) -> Result<RunResult> {
    let mut flow = Algorithm1::new(prob, *op, cfg.eps)?;
    let mut run = euler_integrate(&mut flow, initial_state(prob), cfg)?;
    if run.status != RunStatus::Diverged {
        run.residual = equilibrium_residual(prob, op, cfg.eps, &run.final_state)?;
    }
    Ok(run)
}

/// Run the baseline from [`initial_state`] with `v_aux(0) = 0`.
pub fn run_baseline<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    cfg: &FlowConfig,
) -> Result<RunResult> {
    let mut flow = Baseline::new(prob, *op)?;
    let s0 = initial_state(prob);
    let aux = vec![0.0; s0.lambda.len()];
    let s0 = State::with_aux(s0.x, s0.lambda, aux);
    euler_integrate(&mut flow, s0, cfg)
}

/// Norm of the equilibrium conditions
/// `(P_Ω(x − ∇f − v) − x, P_{ℝ₊}(ελ + εu − Lλ) − ελ)`, i.e. the perturbed flow's
/// right-hand side with the dual block scaled by `ε`.
pub fn equilibrium_residual<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    eps: f64,
    s: &State,
) -> Result<f64> {
    let d = rhs_algorithm1(prob, op, eps, s)?;
    let px = dot(&d.x, &d.x);
    let pl: f64 = d.lambda.iter().map(|v| (eps * v) * (eps * v)).sum();
    Ok(crate::math::sqrt(px + pl))
}

/// `G(z) = (∇f(x) + v(x, λ), (1/ε)Lλ − u(x))`.
pub fn g_map<P: ResourceProblem + ?Sized>(prob: &P, op: &KronLaplacian<'_>, eps: f64, s: &State) -> Result<State> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "eps", value: eps });
    }
    check_shapes(prob, op, s)?;
    let n = prob.primal_dim();
    let m = prob.dual_dim();
    let mut gx = vec![0.0; n];
    let mut v = vec![0.0; n];
    prob.grad_f_into(&s.x, &mut gx);
    prob.eval_v_into(&s.x, &s.lambda, &mut v);
    for (a, b) in gx.iter_mut().zip(&v) {
        *a += b;
    }
    let mut u = vec![0.0; m];
    let mut gl = vec![0.0; m];
    prob.eval_u_into(&s.x, &mut u);
    op.apply(&s.lambda, &mut gl);
    for (a, b) in gl.iter_mut().zip(&u) {
        *a = *a / eps - b;
    }
    Ok(State::new(gx, gl))
}

/// `Ṽ(z) = (z − H)ᵀG − ½‖z − H‖² + ½‖z − z_ref‖²` with `H = P_Λ(z − G(z))`.
pub fn lyapunov_value<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    eps: f64,
    s: &State,
    zref: &State,
) -> Result<f64> {
    let g = g_map(prob, op, eps, s)?;
    let n = s.x.len();
    let mut y = vec![0.0; n];
    for k in 0..n {
        y[k] = s.x[k] - g.x[k];
    }
    let mut hx = vec![0.0; n];
    prob.project_local_into(&y, &mut hx);
    let mut cross = 0.0;
    let mut gap = 0.0;
    for k in 0..n {
        let r = s.x[k] - hx[k];
        cross += r * g.x[k];
        gap += r * r;
    }
    for k in 0..s.lambda.len() {
        let h = (s.lambda[k] - g.lambda[k]).max(0.0);
        let r = s.lambda[k] - h;
        cross += r * g.lambda[k];
        gap += r * r;
    }
    let d = s.dist_primal_dual(zref);
    Ok(cross - 0.5 * gap + 0.5 * d * d)
}

/// Lyapunov values along recorded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovDiag {
    pub reference: State,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `½‖z(t_k) − z_ref‖²` at each sample.
    pub lower_bounds: Vec<f64>,
}

impl LyapunovDiag {
    /// Largest increase `V(t_{k+1}) − V(t_k)` (negative if strictly decreasing).
    pub fn max_increase(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `V − ½‖z − z_ref‖²` over the samples.
    pub fn min_lower_bound_gap(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.lower_bounds)
            .map(|(v, b)| v - b)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn lyapunov_series<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    eps: f64,
    samples: &[Sample],
    zref: &State,
) -> Result<LyapunovDiag> {
    let mut times = Vec::with_capacity(samples.len());
    let mut values = Vec::with_capacity(samples.len());
    let mut lower_bounds = Vec::with_capacity(samples.len());
    for s in samples {
        times.push(s.t);
        values.push(lyapunov_value(prob, op, eps, &s.state, zref)?);
        let d = s.state.dist_primal_dual(zref);
        lower_bounds.push(0.5 * d * d);
    }
    Ok(LyapunovDiag {
        reference: zref.clone(),
        times,
        values,
        lower_bounds,
    })
}

/// Outcome of [`monotonicity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub trials: usize,
    /// Most negative `(z′−z)ᵀ(G(z′)−G(z)) − µ_f‖x′−x‖² − (1/ε)(λ′−λ)ᵀL(λ′−λ)`.
    pub worst_slack: f64,
}

/// Sample `trials` random pairs in `Λ` and evaluate the strong-monotonicity
/// inequality of `G`. Primal samples are drawn uniformly from
/// `Ω ∩ [lower, lower + span]` per component, duals from `[0, lambda_span]`.
pub fn monotonicity_check<P: ResourceProblem + ?Sized>(
    prob: &P,
    op: &KronLaplacian<'_>,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", value: 0.0 });
    }
    let mu_f = prob.constants().mu_f;
    let mut rng = stream(seed);
    let mut worst = f64::INFINITY;
    let n = prob.primal_dim();
    let m = prob.dual_dim();
    let draw = |rng: &mut crate::rng::StreamRng| -> State {
        let x = (0..n)
            .map(|k| {
                let (lo, hi) = prob.local_bounds(k);
                let lo = if lo.is_finite() { lo } else { -5.0 };
                let hi = if hi.is_finite() { hi } else { lo + 5.0 };
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        let lambda = (0..m).map(|_| rng.gen_range(0.0..=5.0)).collect();
        State::new(x, lambda)
    };
    let mut ldl = vec![0.0; m];
    for trial in 0..trials {
        let a = draw(&mut rng);
        // Every tenth pair repeats the point or shifts duals along consensus.
        let b = match trial % 10 {
            0 => a.clone(),
            1 => {
                let shift = rng.gen_range(0.0..=2.0);
                State::new(a.x.clone(), a.lambda.iter().map(|l| l + shift).collect())
            }
            _ => draw(&mut rng),
        };
        let ga = g_map(prob, op, eps, &a)?;
        let gb = g_map(prob, op, eps, &b)?;
        let mut lhs = 0.0;
        for k in 0..n {
            lhs += (b.x[k] - a.x[k]) * (gb.x[k] - ga.x[k]);
        }
        for k in 0..m {
            lhs += (b.lambda[k] - a.lambda[k]) * (gb.lambda[k] - ga.lambda[k]);
        }
        let dl: Vec<f64> = b.lambda.iter().zip(&a.lambda).map(|(p, q)| p - q).collect();
        op.apply(&dl, &mut ldl);
        let dx = dist(&b.x, &a.x);
        let rhs = mu_f * dx * dx + dot(&dl, &ldl) / eps;
        worst = worst.min(lhs - rhs);
    }
    Ok(MonotonicityReport {
        trials,
        worst_slack: worst,
    })
}

/// `max |a − b|` over the `(x, λ)` blocks of two states.
pub fn max_abs_diff(a: &State, b: &State) -> f64 {
    a.x.iter()
        .zip(&b.x)
        .chain(a.lambda.iter().zip(&b.lambda))
        .map(|(p, q)| crate::math::abs(p - q))
        .fold(0.0, f64::max)
}

/// `true` when `x ∈ Ω` and `λ ≥ 0` exactly.
pub fn in_lambda_set<P: ResourceProblem + ?Sized>(prob: &P, s: &State) -> bool {
    s.lambda.iter().all(|l| *l >= 0.0)
        && s.x.iter().enumerate().all(|(k, v)| {
            let (lo, hi) = prob.local_bounds(k);
            *v >= lo && *v <= hi
        })
}
