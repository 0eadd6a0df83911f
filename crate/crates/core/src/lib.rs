//! Distributed sub-optimal resource allocation over weight-balanced digraphs.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! core:
//!
//! * [`graph`]: weight-balanced digraph generators, Laplacians, normalization.
//! * [`problem`]: agent-local costs, coupled affine resource maps, box sets,
//!   and the network-slicing instance generator.
//! * [`cones`]: projections, variational-inequality residuals, the Laplacian
//!   LCP solver with its brute-force oracle, and the `G1`/`G2` fixed-point
//!   equilibrium computation.
//! * [`flows`]: the projected singular-perturbation dynamics, the baseline
//!   auxiliary-variable flow, the explicit Euler integrator and the
//!   Lyapunov / monotonicity diagnostics.
//! * [`oracle`]: the centralized breakpoint KKT solver, the exact feasible-set
//!   projector and an independent projected-gradient fallback.
//!
//! File formats, the experiment harness and the CLI live in the `balflow`
//! companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cones;
pub mod error;
pub mod flows;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod rng;

mod math;

pub use error::{Error, Result};
pub use flows::{FlowConfig, RunResult, RunStatus, State};
pub use graph::{Digraph, KronLaplacian, Laplacian};
pub use problem::{AgentSpec, Problem, ProblemConstants, ResourceProblem, SlicingInstance};
