//! Experiment grid: builds instances and graphs, runs the flows, scores them
//! against the centralized optimum and writes the results table.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use balflow_core::flows::{run_algorithm1, run_baseline, RunStatus};
use balflow_core::graph::DegreeStats;
use balflow_core::oracle::solve_centralized_qp;
use balflow_core::problem::coupling_value;
use balflow_core::rng::derive_seed;
use balflow_core::{Digraph, FlowConfig, KronLaplacian, Laplacian, Problem, RunResult, SlicingInstance};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Seed of the default grid.
pub const DEFAULT_SEED: u64 = 24;

/// Largest `N` accepted without `allow_large`.
pub const DEFAULT_MAX_N: usize = 100;

const INSTANCE_LABEL: u64 = 0x1;
const GRAPH_LABEL: u64 = 0x2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GraphKind {
    Circle,
    Random,
    Complete,
}

impl GraphKind {
    pub const ALL: [GraphKind; 3] = [GraphKind::Circle, GraphKind::Random, GraphKind::Complete];

    pub fn as_str(&self) -> &'static str {
        match self {
            GraphKind::Circle => "circle",
            GraphKind::Random => "random",
            GraphKind::Complete => "complete",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "circle" => Ok(GraphKind::Circle),
            "random" => Ok(GraphKind::Random),
            "complete" => Ok(GraphKind::Complete),
            other => Err(format!("unknown graph type `{other}` (circle|random|complete)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    Algorithm1,
    Baseline,
}

impl Algo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::Algorithm1 => "algorithm1",
            Algo::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "algorithm1" | "alg1" => Ok(Algo::Algorithm1),
            "baseline" => Ok(Algo::Baseline),
            other => Err(format!("unknown algorithm `{other}` (algorithm1|baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub ns: Vec<usize>,
    pub graphs: Vec<GraphKind>,
    pub eps: Vec<f64>,
    pub algos: Vec<Algo>,
    pub seed: u64,
    /// Edge density of the random digraphs.
    pub density: f64,
    /// Integrator settings; `eps` is taken from the grid.
    pub flow: FlowConfig,
    /// Permit `N > DEFAULT_MAX_N`.
    pub allow_large: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            ns: vec![10, 50, 100],
            graphs: GraphKind::ALL.to_vec(),
            eps: vec![0.1, 0.01, 0.001],
            algos: vec![Algo::Algorithm1, Algo::Baseline],
            seed: DEFAULT_SEED,
            density: 0.5,
            flow: FlowConfig::default(),
            allow_large: false,
            out: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.ns.is_empty() || self.graphs.is_empty() || self.algos.is_empty() {
            return fail("N, graph and algorithm lists must be nonempty".into());
        }
        if self.algos.contains(&Algo::Algorithm1) && self.eps.is_empty() {
            return fail("eps list must be nonempty when algorithm1 is selected".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return fail(format!("eps must be positive, got {e}"));
        }
        if let Some(n) = self.ns.iter().find(|n| **n < 2) {
            return fail(format!("N must be at least 2, got {n}"));
        }
        if !self.allow_large {
            if let Some(n) = self.ns.iter().find(|n| **n > DEFAULT_MAX_N) {
                return fail(format!("N = {n} exceeds {DEFAULT_MAX_N}; set allow_large = true to run it"));
            }
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return fail(format!("density must lie in (0, 1], got {}", self.density));
        }
        FlowConfig {
            eps: 1.0,
            ..self.flow
        }
        .validate()?;
        Ok(())
    }

    /// All cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut ns = self.ns.clone();
        ns.sort_unstable();
        ns.dedup();
        let mut graphs = self.graphs.clone();
        graphs.sort();
        graphs.dedup();
        let mut algos = self.algos.clone();
        algos.sort();
        algos.dedup();
        let mut eps = self.eps.clone();
        eps.sort_by(|a, b| b.total_cmp(a));
        eps.dedup();
        let mut out = Vec::new();
        for &n in &ns {
            for &graph in &graphs {
                for &algo in &algos {
                    match algo {
                        Algo::Algorithm1 => out.extend(eps.iter().map(|&e| Cell {
                            n,
                            graph,
                            algo,
                            eps: Some(e),
                        })),
                        Algo::Baseline => out.push(Cell {
                            n,
                            graph,
                            algo,
                            eps: None,
                        }),
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub graph: GraphKind,
    pub algo: Algo,
    pub eps: Option<f64>,
}

/// Canonical ordering: `N`, graph (circle < random < complete), algorithm
/// (algorithm1 < baseline), `ε` descending.
pub fn canonical_order(a: &CellResult, b: &CellResult) -> Ordering {
    a.n.cmp(&b.n)
        .then(a.graph.cmp(&b.graph))
        .then(a.algo.cmp(&b.algo))
        .then_with(|| match (a.eps, b.eps) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    Converged,
    Diverged,
    TimeCap,
    /// The cell could not be run (construction or solver error).
    Failed,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::Diverged => "diverged",
            CellStatus::TimeCap => "timecap",
            CellStatus::Failed => "failed",
        }
    }
}

impl From<RunStatus> for CellStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => CellStatus::Converged,
            RunStatus::Diverged => CellStatus::Diverged,
            RunStatus::TimeCap => CellStatus::TimeCap,
        }
    }
}

impl FromStr for CellStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "converged" => Ok(CellStatus::Converged),
            "diverged" => Ok(CellStatus::Diverged),
            "timecap" => Ok(CellStatus::TimeCap),
            "failed" => Ok(CellStatus::Failed),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub graph: GraphKind,
    pub d_mean: f64,
    pub d_max: f64,
    pub algo: Algo,
    pub eps: Option<f64>,
    pub status: CellStatus,
    /// Simulated termination time; infinite when diverged or failed.
    pub t_ter: f64,
    /// Time cap of the run, used for the `>t_max` marker.
    pub t_max: f64,
    /// `100·‖x(t_ter) − x*‖/‖x*‖`; absent when diverged or failed.
    pub e_rel_pct: Option<f64>,
    pub comm_mean: f64,
    pub comm_max: f64,
    pub residual: f64,
    /// Total coupling value `g(x(t_ter))`; not written to CSV.
    pub coupling: Option<f64>,
    /// `min λ(t_ter)`; not written to CSV.
    pub min_lambda: Option<f64>,
    /// Seconds of wall-clock time; not written to CSV.
    pub wall_clock: f64,
    pub note: Option<String>,
}

/// An instance shared by every cell with the same `N`.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub instance: SlicingInstance,
    pub problem: Problem,
    pub x_star: Vec<f64>,
}

pub fn instance_seed(seed: u64, n: usize) -> u64 {
    derive_seed(seed, INSTANCE_LABEL.wrapping_add((n as u64) << 8))
}

pub fn graph_seed(seed: u64, n: usize) -> u64 {
    derive_seed(seed, GRAPH_LABEL.wrapping_add((n as u64) << 8))
}

pub fn prepare_instance(n: usize, seed: u64) -> balflow_core::Result<PreparedInstance> {
    let instance = SlicingInstance::generate(n, instance_seed(seed, n))?;
    let problem = instance.to_problem()?;
    let x_star = solve_centralized_qp(&problem)?.x_star;
    Ok(PreparedInstance {
        instance,
        problem,
        x_star,
    })
}

/// Unnormalized graph of the given kind; `seed` is only used for `Random`.
pub fn build_graph(kind: GraphKind, n: usize, density: f64, seed: u64) -> balflow_core::Result<Digraph> {
    match kind {
        GraphKind::Circle => Digraph::directed_circle(n, 1.0),
        GraphKind::Random => Digraph::random_balanced(n, density, graph_seed(seed, n)),
        GraphKind::Complete => Digraph::complete(n, 1.0),
    }
}

/// Run one cell on a prepared instance and graph (normalized to `‖L‖ = 1`).
pub fn run_cell(
    cell: &Cell,
    prepared: &PreparedInstance,
    graph: &Digraph,
    flow: &FlowConfig,
) -> CellResult {
    let start = Instant::now();
    let degrees = graph.degree_stats();
    let mut result = CellResult {
        n: cell.n,
        graph: cell.graph,
        d_mean: degrees.mean,
        d_max: degrees.max,
        algo: cell.algo,
        eps: cell.eps,
        status: CellStatus::Failed,
        t_ter: f64::INFINITY,
        t_max: flow.t_max,
        e_rel_pct: None,
        comm_mean: f64::INFINITY,
        comm_max: f64::INFINITY,
        residual: f64::INFINITY,
        coupling: None,
        min_lambda: None,
        wall_clock: 0.0,
        note: None,
    };
    match execute(cell, prepared, graph, flow) {
        Ok(run) => fill_from_run(&mut result, &run, prepared, degrees),
        Err(e) => result.note = Some(e.to_string()),
    }
    result.wall_clock = start.elapsed().as_secs_f64();
    result
}

fn execute(
    cell: &Cell,
    prepared: &PreparedInstance,
    graph: &Digraph,
    flow: &FlowConfig,
) -> balflow_core::Result<RunResult> {
    let normalized = graph.normalized()?;
    let lap = Laplacian::new(&normalized);
    let op = KronLaplacian::new(&lap, 1);
    match cell.algo {
        Algo::Algorithm1 => {
            let eps = cell.eps.ok_or(balflow_core::Error::InvalidParameter {
                name: "eps",
                value: f64::NAN,
            })?;
            let cfg = FlowConfig { eps, ..*flow };
            run_algorithm1(&prepared.problem, &op, &cfg)
        }
        Algo::Baseline => run_baseline(&prepared.problem, &op, flow),
    }
}

fn fill_from_run(result: &mut CellResult, run: &RunResult, prepared: &PreparedInstance, degrees: DegreeStats) {
    result.status = run.status.into();
    result.residual = run.residual;
    result.note = run.note.clone();
    if run.status == RunStatus::Diverged {
        return;
    }
    result.t_ter = run.t_ter;
    let factor = match result.algo {
        Algo::Algorithm1 => 1.0,
        Algo::Baseline => 2.0,
    };
    result.comm_mean = factor * degrees.mean * run.t_ter;
    result.comm_max = factor * degrees.max * run.t_ter;
    result.e_rel_pct = Some(relative_error_pct(&run.final_state.x, &prepared.x_star));
    result.coupling = coupling_value(&prepared.problem, &run.final_state.x).ok().map(|g| g[0]);
    result.min_lambda = run.final_state.lambda.iter().cloned().reduce(f64::min);
}

/// `100·‖x − x*‖/‖x*‖`.
pub fn relative_error_pct(x: &[f64], x_star: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    100.0 * num / den
}

/// Run the whole grid on `jobs` worker threads (0 = rayon default). The
/// result order and contents do not depend on `jobs`.
pub fn run_grid(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let cells = spec.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Spec(format!("thread pool: {e}")))?;
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.dedup();
    let results = pool.install(|| {
        let prepared: Vec<(usize, std::result::Result<PreparedInstance, String>)> = ns
            .par_iter()
            .map(|&n| (n, prepare_instance(n, spec.seed).map_err(|e| e.to_string())))
            .collect();
        let mut graph_keys: Vec<(usize, GraphKind)> = cells.iter().map(|c| (c.n, c.graph)).collect();
        graph_keys.dedup();
        let graphs: Vec<((usize, GraphKind), std::result::Result<Digraph, String>)> = graph_keys
            .par_iter()
            .map(|&(n, g)| ((n, g), build_graph(g, n, spec.density, spec.seed).map_err(|e| e.to_string())))
            .collect();
        cells
            .par_iter()
            .map(|cell| {
                let inst = &prepared.iter().find(|(n, _)| *n == cell.n).unwrap().1;
                let graph = &graphs.iter().find(|(k, _)| *k == (cell.n, cell.graph)).unwrap().1;
                match (inst, graph) {
                    (Ok(inst), Ok(graph)) => run_cell(cell, inst, graph, &spec.flow),
                    (Err(e), _) | (_, Err(e)) => failed_cell(cell, &spec.flow, e.clone()),
                }
            })
            .collect::<Vec<_>>()
    });
    let mut results = results;
    results.sort_by(canonical_order);
    for r in &results {
        log::info!(
            "N={} {} {} eps={:?}: {} t_ter={} e_rel={:?}% ({:.2}s)",
            r.n,
            r.graph,
            r.algo,
            r.eps,
            r.status.as_str(),
            r.t_ter,
            r.e_rel_pct,
            r.wall_clock
        );
    }
    Ok(results)
}

fn failed_cell(cell: &Cell, flow: &FlowConfig, note: String) -> CellResult {
    CellResult {
        n: cell.n,
        graph: cell.graph,
        d_mean: f64::NAN,
        d_max: f64::NAN,
        algo: cell.algo,
        eps: cell.eps,
        status: CellStatus::Failed,
        t_ter: f64::INFINITY,
        t_max: flow.t_max,
        e_rel_pct: None,
        comm_mean: f64::INFINITY,
        comm_max: f64::INFINITY,
        residual: f64::INFINITY,
        coupling: None,
        min_lambda: None,
        wall_clock: 0.0,
        note: Some(note),
    }
}

/// Least-squares slope of `ln e_rel` against `ln ε` for one `(N, graph)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub n: usize,
    pub graph: GraphKind,
    pub points: usize,
    pub slope: Option<f64>,
    pub note: Option<String>,
}

/// Least-squares slope of `y` on `x`; `None` with fewer than two distinct `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Fit `e_rel ~ ε^slope` per `(N, graph)` over converged algorithm-1 cells.
pub fn scaling_report(results: &[CellResult]) -> Vec<ScalingFit> {
    let mut keys: Vec<(usize, GraphKind)> = results
        .iter()
        .filter(|r| r.algo == Algo::Algorithm1)
        .map(|r| (r.n, r.graph))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(n, graph)| {
            let points: Vec<(f64, f64)> = results
                .iter()
                .filter(|r| r.n == n && r.graph == graph && r.algo == Algo::Algorithm1)
                .filter(|r| r.status == CellStatus::Converged)
                .filter_map(|r| match (r.eps, r.e_rel_pct) {
                    (Some(e), Some(err)) if err > 0.0 => Some((e.ln(), err.ln())),
                    _ => None,
                })
                .collect();
            let slope = fit_slope(&points);
            let note = slope
                .is_none()
                .then(|| format!("need at least two converged cells with distinct eps, have {}", points.len()));
            ScalingFit {
                n,
                graph,
                points: points.len(),
                slope,
                note,
            }
        })
        .collect()
}

/// `true` when `e_rel` strictly decreases as `ε` decreases for every
/// `(N, graph)` group of converged algorithm-1 cells.
pub fn eps_monotone(results: &[CellResult]) -> bool {
    let mut keys: Vec<(usize, GraphKind)> = results.iter().map(|r| (r.n, r.graph)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().all(|(n, graph)| {
        let mut pts: Vec<(f64, f64)> = results
            .iter()
            .filter(|r| r.n == n && r.graph == graph && r.algo == Algo::Algorithm1)
            .filter_map(|r| Some((r.eps?, r.e_rel_pct?)))
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        pts.windows(2).all(|w| w[1].1 < w[0].1)
    })
}

pub const CSV_HEADER: &str = "N,graph,d_mean,d_max,algo,eps,t_ter,e_rel_pct,comm_mean,comm_max,residual,status";

/// Shortest representation that parses back to the same `f64`.
fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn fmt_t_ter(r: &CellResult) -> String {
    match r.status {
        CellStatus::TimeCap => format!(">{}", fmt_num(r.t_max)),
        CellStatus::Diverged | CellStatus::Failed => "inf".into(),
        CellStatus::Converged => fmt_num(r.t_ter),
    }
}

pub fn csv_row(r: &CellResult) -> String {
    [
        r.n.to_string(),
        r.graph.to_string(),
        fmt_num(r.d_mean),
        fmt_num(r.d_max),
        r.algo.to_string(),
        r.eps.map(fmt_num).unwrap_or_default(),
        fmt_t_ter(r),
        r.e_rel_pct.map(fmt_num).unwrap_or_default(),
        fmt_num(r.comm_mean),
        fmt_num(r.comm_max),
        fmt_num(r.residual),
        r.status.as_str().to_string(),
    ]
    .join(",")
}

pub fn write_csv<W: Write>(mut w: W, results: &[CellResult]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in results {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}

pub fn emit_csv(results: &[CellResult], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, results).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse a results table. Fields not stored in the CSV come back as
/// `None`/zero.
pub fn parse_csv(text: &str, origin: &str) -> Result<Vec<CellResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(origin, 1, "missing or unexpected header")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let ln = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::parse(origin, ln, format!("expected 12 fields, got {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::parse(origin, ln, format!("{what}: {e}")))
        };
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { num(s, what).map(Some) }
        };
        let status: CellStatus = f[11].parse().map_err(|e: String| Error::parse(origin, ln, e))?;
        let (t_ter, t_max) = match f[6].strip_prefix('>') {
            Some(cap) => {
                let cap = num(cap, "t_ter")?;
                (cap, cap)
            }
            None => {
                let t = num(f[6], "t_ter")?;
                (t, f64::NAN)
            }
        };
        out.push(CellResult {
            n: f[0]
                .parse()
                .map_err(|e| Error::parse(origin, ln, format!("N: {e}")))?,
            graph: f[1].parse().map_err(|e: String| Error::parse(origin, ln, e))?,
            d_mean: num(f[2], "d_mean")?,
            d_max: num(f[3], "d_max")?,
            algo: f[4].parse().map_err(|e: String| Error::parse(origin, ln, e))?,
            eps: opt(f[5], "eps")?,
            status,
            t_ter,
            t_max,
            e_rel_pct: opt(f[7], "e_rel_pct")?,
            comm_mean: num(f[8], "comm_mean")?,
            comm_max: num(f[9], "comm_max")?,
            residual: num(f[10], "residual")?,
            coupling: None,
            min_lambda: None,
            wall_clock: 0.0,
            note: None,
        });
    }
    Ok(out)
}
