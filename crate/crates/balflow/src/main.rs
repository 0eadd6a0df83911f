use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use balflow::bench::{self, Algo, Cell, GraphKind, PreparedInstance};
use balflow::{checks, io};
use balflow_core::flows::{lyapunov_series, run_algorithm1, run_baseline};
use balflow_core::oracle::solve_centralized_qp;
use balflow_core::{FlowConfig, KronLaplacian, Laplacian};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "balflow", version, about = "Distributed resource allocation flows over weight-balanced digraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single cell and print its metrics.
    Run(RunArgs),
    /// Run an experiment grid from a spec file and write the CSV table.
    Grid(GridArgs),
    /// Run the randomized property and oracle suites.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Number of agents.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// circle | random | complete
    #[arg(long, default_value = "complete")]
    graph: GraphKind,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// algorithm1 | baseline
    #[arg(long, default_value = "algorithm1")]
    algo: Algo,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    seed: u64,
    /// Euler step.
    #[arg(long, default_value_t = 0.001)]
    step: f64,
    /// Stop when the derivative norm falls to this value.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Simulated time cap.
    #[arg(long, default_value_t = 2000.0)]
    tmax: f64,
    /// Edge density for random digraphs.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Write the one-row results CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Load the instance from a `key = value` file instead of generating it.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Load the graph from an edge list instead of generating it.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// Save the generated instance.
    #[arg(long)]
    save_instance: Option<PathBuf>,
    /// Save the (unnormalized) graph as an edge list.
    #[arg(long)]
    save_graph: Option<PathBuf>,
    /// Write a trajectory dump (t, derivative norm, Lyapunov value, g).
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Sampling stride for the trajectory, in steps.
    #[arg(long, default_value_t = 100)]
    record_every: usize,
}

#[derive(Args)]
struct GridArgs {
    /// Spec file (`key = value` lines).
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV; overrides `out` in the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CheckArgs {
    /// Cases per suite.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Grid(args) => grid(args),
        Command::Check(args) => check(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let prepared = match &args.instance {
        Some(path) => {
            let instance = io::parse_instance(&io::read_text(path)?, &path.display().to_string())?;
            let problem = instance.to_problem()?;
            let x_star = solve_centralized_qp(&problem)?.x_star;
            PreparedInstance {
                instance,
                problem,
                x_star,
            }
        }
        None => bench::prepare_instance(args.n, args.seed)?,
    };
    let n = prepared.instance.n();
    let graph = match &args.graph_file {
        Some(path) => io::parse_edge_list(&io::read_text(path)?, &path.display().to_string())?,
        None => bench::build_graph(args.graph, n, args.density, args.seed)?,
    };
    if graph.n() != n {
        bail!("graph has {} nodes but the instance has {n} agents", graph.n());
    }
    if let Some(path) = &args.save_instance {
        io::write_text(path, &io::format_instance(&prepared.instance))?;
    }
    if let Some(path) = &args.save_graph {
        io::write_text(path, &io::format_edge_list(&graph))?;
    }
    let flow = FlowConfig {
        eps: args.eps,
        h: args.step,
        stop_tol: args.tol,
        t_max: args.tmax,
        record_every: args.record_every,
        ..FlowConfig::default()
    };
    let cell = Cell {
        n,
        graph: args.graph,
        algo: args.algo,
        eps: (args.algo == Algo::Algorithm1).then_some(args.eps),
    };
    let result = bench::run_cell(&cell, &prepared, &graph, &flow);
    let mut stdout = std::io::stdout().lock();
    bench::write_csv(&mut stdout, std::slice::from_ref(&result))?;
    if let Some(note) = &result.note {
        eprintln!("note: {note}");
    }
    if let Some(path) = &args.out {
        bench::emit_csv(std::slice::from_ref(&result), path)?;
    }
    if let Some(path) = &args.trajectory {
        let lap = Laplacian::new(&graph.normalized()?);
        let op = KronLaplacian::new(&lap, 1);
        let run = match args.algo {
            Algo::Algorithm1 => run_algorithm1(&prepared.problem, &op, &flow)?,
            Algo::Baseline => run_baseline(&prepared.problem, &op, &flow)?,
        };
        let lyap = match args.algo {
            Algo::Algorithm1 => Some(lyapunov_series(&prepared.problem, &op, flow.eps, &run.samples, &run.final_state)?),
            Algo::Baseline => None,
        };
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        io::write_trajectory(std::io::BufWriter::new(file), &run.samples, lyap.as_ref())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn grid(args: GridArgs) -> Result<()> {
    let spec = io::read_spec(&args.spec)?;
    let out = args
        .out
        .or_else(|| spec.out.clone())
        .context("no output path: pass --out or set `out` in the spec")?;
    let results = bench::run_grid(&spec, args.jobs)?;
    bench::emit_csv(&results, &out)?;
    for fit in bench::scaling_report(&results) {
        match fit.slope {
            Some(s) => eprintln!("N={} {}: log-log slope of e_rel vs eps = {s:.3} ({} points)", fit.n, fit.graph, fit.points),
            None => eprintln!("N={} {}: {}", fit.n, fit.graph, fit.note.unwrap_or_default()),
        }
    }
    eprintln!("wrote {} rows to {}", results.len(), out.display());
    Ok(())
}

fn check(args: CheckArgs) -> Result<()> {
    let outcomes = checks::run_all(args.samples, args.seed);
    for o in &outcomes {
        println!("{}", o.summary());
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    if failed > 0 {
        bail!("{failed} suite(s) failed");
    }
    Ok(())
}
