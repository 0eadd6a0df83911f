//! Randomized property and oracle suites behind the `check` subcommand.

use balflow_core::cones::{lcp_bruteforce, solve_lcp_laplacian, BoxSet};
use balflow_core::flows::{
    in_lambda_set, max_abs_diff, monotonicity_check, rhs_algorithm1, rhs_algorithm1_per_agent, Algorithm1,
    Baseline, Flow, State,
};
use balflow_core::linalg::symmetric_eigenvalues;
use balflow_core::oracle::{solve_centralized_pg, solve_centralized_qp, CouplingSet};
use balflow_core::problem::gen_5g_instance;
use balflow_core::rng::{derive_seed, stream, StreamRng};
use balflow_core::{Digraph, KronLaplacian, Laplacian};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub samples: usize,
    pub violations: usize,
    /// Largest violation magnitude seen (0 when none).
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}: {} samples, {} violations, worst {:.3e} (tol {:.0e}){}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.samples,
            self.violations,
            self.worst,
            self.tolerance,
            if self.detail.is_empty() { String::new() } else { format!(" [{}]", self.detail) }
        )
    }
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    samples: usize,
    violations: usize,
    worst: f64,
    detail: String,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            samples: 0,
            violations: 0,
            worst: 0.0,
            detail: String::new(),
        }
    }

    /// Record a nonnegative violation amount (0 means satisfied).
    fn record(&mut self, violation: f64) {
        self.samples += 1;
        let v = if violation.is_nan() { f64::INFINITY } else { violation };
        self.worst = self.worst.max(v);
        if v > self.tolerance {
            self.violations += 1;
        }
    }

    fn fail(&mut self, why: String) {
        self.samples += 1;
        self.violations += 1;
        self.worst = f64::INFINITY;
        if self.detail.is_empty() {
            self.detail = why;
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name,
            samples: self.samples,
            violations: self.violations,
            worst: self.worst,
            tolerance: self.tolerance,
            detail: self.detail,
        }
    }
}

fn random_graph(rng: &mut StreamRng, n_min: usize, n_max: usize) -> Digraph {
    let n = rng.gen_range(n_min..=n_max);
    match rng.gen_range(0..3) {
        0 => Digraph::directed_circle(n, rng.gen_range(0.5..2.0)).unwrap(),
        1 => Digraph::complete(n, rng.gen_range(0.5..2.0)).unwrap(),
        _ => Digraph::random_balanced(n, rng.gen_range(0.1..=1.0), rng.gen()).unwrap(),
    }
}

fn uniform_vec(rng: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(y − P(y))ᵀ(P(y) − c) ≥ 0` for `c` in the set and
/// `‖P(y) − P(y′)‖ ≤ ‖y − y′‖`, on boxes, orthants and the coupled set `X`.
pub fn projection_inequalities(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("projection inequalities", 1e-12);
    let mut rng = stream(seed);
    for k in 0..samples {
        let n = rng.gen_range(1..=12);
        let y = uniform_vec(&mut rng, n, -3.0, 3.0);
        let y2 = uniform_vec(&mut rng, n, -3.0, 3.0);
        let (p, p2, c) = match k % 3 {
            0 => {
                let set = BoxSet::orthant(n);
                let c = uniform_vec(&mut rng, n, 0.0, 3.0);
                (set.project(&y), set.project(&y2), c)
            }
            1 => {
                let lower = uniform_vec(&mut rng, n, -2.0, 0.0);
                let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.0..2.0)).collect();
                let c = lower.iter().zip(&upper).map(|(l, u)| rng.gen_range(*l..=*u)).collect();
                let set = BoxSet { lower, upper };
                (set.project(&y), set.project(&y2), c)
            }
            _ => {
                let normal = uniform_vec(&mut rng, n, 0.01, 1.0);
                let bound = rng.gen_range(0.1..3.0);
                let set = CouplingSet::new(vec![0.0; n], vec![f64::INFINITY; n], normal.clone(), bound).unwrap();
                let mut c = uniform_vec(&mut rng, n, 0.0, 2.0);
                let load = dot(&normal, &c);
                if load > bound {
                    let s = bound / load * rng.gen_range(0.0..=1.0);
                    c.iter_mut().for_each(|v| *v *= s);
                }
                match (set.project(&y), set.project(&y2)) {
                    (Ok(a), Ok(b)) => (a.point, b.point, c),
                    (Err(e), _) | (_, Err(e)) => {
                        t.fail(e.to_string());
                        continue;
                    }
                }
            }
        };
        let r: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        let pc: Vec<f64> = p.iter().zip(&c).map(|(a, b)| a - b).collect();
        let variational = (-dot(&r, &pc)).max(0.0);
        let expansion = (dist(&p, &p2) - dist(&y, &y2)).max(0.0);
        t.record(variational.max(expansion));
    }
    t.finish()
}

/// Compact and per-agent forms of the dual dynamics agree.
pub fn compact_per_agent_identity(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("compact vs per-agent dynamics", 1e-12);
    let mut rng = stream(seed);
    for _ in 0..samples {
        let g = random_graph(&mut rng, 2, 12).normalized().unwrap();
        let n = g.n();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let prob = gen_5g_instance(n, rng.gen()).unwrap();
        let eps = [0.1, 0.01, 0.001][rng.gen_range(0..3)];
        let x = uniform_vec(&mut rng, n, 0.0, 3.0);
        let lambda = (0..n)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) })
            .collect();
        let s = State::new(x, lambda);
        match (
            rhs_algorithm1(&prob, &op, eps, &s),
            rhs_algorithm1_per_agent(&prob, &op, eps, &s),
        ) {
            (Ok(a), Ok(b)) => t.record(max_abs_diff(&a, &b)),
            (Err(e), _) | (_, Err(e)) => t.fail(e.to_string()),
        }
    }
    t.finish()
}

/// `(z′−z)ᵀ(G(z′)−G(z)) ≥ µ_f‖x′−x‖² + (1/ε)(λ′−λ)ᵀL(λ′−λ)` on random pairs.
pub fn monotonicity(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("monotonicity of G", 1e-9);
    let mut rng = stream(seed);
    let per_graph = 10;
    let mut done = 0;
    while done < samples {
        let trials = per_graph.min(samples - done);
        let g = random_graph(&mut rng, 2, 12).normalized().unwrap();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let prob = gen_5g_instance(g.n(), rng.gen()).unwrap();
        let eps = [0.1, 0.01, 0.001][rng.gen_range(0..3)];
        match monotonicity_check(&prob, &op, eps, trials, rng.gen()) {
            Ok(rep) => {
                for _ in 0..trials - 1 {
                    t.record(0.0);
                }
                t.record((-rep.worst_slack).max(0.0));
            }
            Err(e) => t.fail(e.to_string()),
        }
        done += trials;
    }
    t.finish()
}

/// `L·1 = 0`, `1ᵀL = 0` and `λ_min(L + Lᵀ) ≥ 0` on random balanced digraphs.
pub fn laplacian_invariants(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("Laplacian invariants", 1e-12);
    let mut rng = stream(seed);
    for _ in 0..samples {
        let g = random_graph(&mut rng, 2, 10);
        let lap = Laplacian::new(&g);
        let n = g.n();
        let scale = g.row_sums().into_iter().fold(1.0, f64::max);
        let ones = vec![1.0; n];
        let mut out = vec![0.0; n];
        lap.apply(&ones, &mut out);
        let row = out.iter().map(|v| v.abs()).fold(0.0, f64::max);
        lap.apply_transpose(&ones, &mut out);
        let col = out.iter().map(|v| v.abs()).fold(0.0, f64::max);
        // Column sums of the dense matrix, independent of the sparse kernels.
        let m = lap.matrix();
        let dense_col = (0..n)
            .map(|j| (0..n).map(|i| m[(i, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let sym = m.add(&m.transpose());
        let min_eig = symmetric_eigenvalues(&sym)[0];
        let psd = (-min_eig).max(0.0);
        t.record(row.max(col).max(dense_col).max(psd) / scale);
    }
    t.finish()
}

/// Every Euler step (random `h ∈ (0, 1]`) from a random point of `Λ` stays
/// in `Λ` exactly, for both flows.
pub fn forward_invariance(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("forward invariance of Lambda", 0.0);
    let mut rng = stream(seed);
    let steps = 25;
    for k in 0..samples {
        let g = random_graph(&mut rng, 2, 10).normalized().unwrap();
        let n = g.n();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let prob = gen_5g_instance(n, rng.gen()).unwrap();
        let eps = [1.0, 0.1, 0.01, 0.001][rng.gen_range(0..4)];
        let h: f64 = if k % 5 == 0 { 1.0 } else { rng.gen_range(1e-4..=1.0) };
        let x = (0..n)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..3.0) })
            .collect();
        let lambda = (0..n)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..3.0) })
            .collect();
        let baseline = k % 2 == 1;
        let mut s = if baseline {
            State::with_aux(x, lambda, uniform_vec(&mut rng, n, -1.0, 1.0))
        } else {
            State::new(x, lambda)
        };
        let mut d = s.zeros_like();
        let mut flow: Box<dyn Flow> = if baseline {
            Box::new(Baseline::new(&prob, op).unwrap())
        } else {
            Box::new(Algorithm1::new(&prob, op, eps).unwrap())
        };
        let mut outside = 0.0;
        for _ in 0..steps {
            if let Err(e) = flow.rhs(&s, &mut d) {
                t.fail(e.to_string());
                break;
            }
            s.axpy(h, &d);
            if !in_lambda_set(&prob, &s) {
                outside = 1.0;
                break;
            }
        }
        t.record(outside);
    }
    t.finish()
}

/// Projected LCP iteration vs support enumeration on small random
/// Laplacians with feasible `u`: same `Lz`, complementarity within `1e−8`.
pub fn lcp_agreement(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("LCP iteration vs brute force", 1e-8);
    let mut rng = stream(seed);
    for k in 0..samples {
        let g = random_graph(&mut rng, 2, 8);
        let n = g.n();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let eps = [1.0, 0.1, 0.01][rng.gen_range(0..3)];
        let mut u = uniform_vec(&mut rng, n, -1.0, 1.0);
        let mean = u.iter().sum::<f64>() / n as f64;
        // Shift to make the sum nonpositive; every tenth case sits on the
        // boundary 1ᵀu = 0.
        let shift = if k % 10 == 0 { mean } else { mean.max(0.0) + rng.gen_range(0.0..0.5) };
        u.iter_mut().for_each(|v| *v -= shift);
        let q: Vec<f64> = u.iter().map(|v| -eps * v).collect();
        let iter = match solve_lcp_laplacian(&op, &u, eps, 1e-12) {
            Ok(s) => s,
            Err(e) => {
                t.fail(format!("iterative: {e}"));
                continue;
            }
        };
        let brute = match lcp_bruteforce(&q, lap.matrix()) {
            Ok(b) if !b.is_empty() => b,
            Ok(_) => {
                t.fail("brute force found no solution".into());
                continue;
            }
            Err(e) => {
                t.fail(format!("brute force: {e}"));
                continue;
            }
        };
        let lz = |z: &[f64]| lap.matrix().mul_vec(z);
        let lz_iter = lz(&iter.z);
        let mut worst: f64 = iter.comp.max((-iter.min_z).max(0.0)).max((-iter.min_w).max(0.0));
        for b in &brute {
            let lz_b = lz(&b.z);
            let diff = lz_iter.iter().zip(&lz_b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            worst = worst.max(diff).max(b.comp);
        }
        t.record(worst);
    }
    t.finish()
}

/// Breakpoint KKT solver vs projected-gradient fallback.
pub fn oracle_agreement(samples: usize, seed: u64) -> CheckOutcome {
    let mut t = Tally::new("breakpoint vs projected-gradient oracle", 1e-6);
    let mut rng = stream(seed);
    let pg_tol = 1e-10;
    for _ in 0..samples {
        let n = rng.gen_range(2..=40);
        let prob = gen_5g_instance(n, rng.gen()).unwrap();
        match (solve_centralized_qp(&prob), solve_centralized_pg(&prob, pg_tol)) {
            (Ok(a), Ok(b)) => {
                let mut v = dist(&a.x_star, &b.x_star);
                if !a.is_valid(1e-10) || !b.is_valid(pg_tol) {
                    v = f64::INFINITY;
                }
                t.record(v);
            }
            (Err(e), _) | (_, Err(e)) => t.fail(e.to_string()),
        }
    }
    t.finish()
}

/// Run every suite with `samples` cases each.
pub fn run_all(samples: usize, seed: u64) -> Vec<CheckOutcome> {
    vec![
        projection_inequalities(samples, derive_seed(seed, 1)),
        compact_per_agent_identity(samples, derive_seed(seed, 2)),
        monotonicity(samples, derive_seed(seed, 3)),
        laplacian_invariants(samples, derive_seed(seed, 4)),
        forward_invariance(samples, derive_seed(seed, 5)),
        lcp_agreement(samples, derive_seed(seed, 6)),
        oracle_agreement(samples, derive_seed(seed, 7)),
    ]
}
