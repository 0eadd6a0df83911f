//! Text file formats.
//!
//! * Edge list: a `nodes <n>` line, then one `i j w` line per edge meaning
//!   `a_ij = w` (node `i` receives from node `j`).
//! * Instance and spec files: `key = value` lines; lists are comma
//!   separated. `#` starts a comment in every format.
//! * Trajectory dump: CSV with columns `t,zdot_norm,lyapunov,g`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use balflow_core::flows::{LyapunovDiag, Sample};
use balflow_core::{Digraph, SlicingInstance};

use crate::bench::ExperimentSpec;
use crate::error::{Error, Result};

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_edge_list(g: &Digraph) -> String {
    let mut s = format!("nodes {}\n", g.n());
    for (i, j, w) in g.edges() {
        let _ = writeln!(s, "{i} {j} {w}");
    }
    s
}

pub fn parse_edge_list(text: &str, origin: &str) -> Result<Digraph> {
    let mut n: Option<usize> = None;
    let mut weights = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f[0] == "nodes" {
            if n.is_some() || f.len() != 2 {
                return Err(Error::parse(origin, ln, "expected a single `nodes <n>` line"));
            }
            let count: usize = f[1]
                .parse()
                .map_err(|e| Error::parse(origin, ln, format!("node count: {e}")))?;
            n = Some(count);
            weights = vec![0.0; count * count];
            continue;
        }
        let count = n.ok_or_else(|| Error::parse(origin, ln, "edge before `nodes <n>` line"))?;
        if f.len() != 3 {
            return Err(Error::parse(origin, ln, "expected `i j w`"));
        }
        let idx_of = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|e| Error::parse(origin, ln, format!("node index: {e}")))?;
            if v >= count {
                return Err(Error::parse(origin, ln, format!("node {v} out of range 0..{count}")));
            }
            Ok(v)
        };
        let (i, j) = (idx_of(f[0])?, idx_of(f[1])?);
        let w: f64 = f[2]
            .parse()
            .map_err(|e| Error::parse(origin, ln, format!("weight: {e}")))?;
        weights[i * count + j] += w;
    }
    let n = n.ok_or_else(|| Error::parse(origin, 0, "missing `nodes <n>` line"))?;
    Ok(Digraph::from_weights(n, weights)?)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

pub fn format_instance(inst: &SlicingInstance) -> String {
    format!(
        "seed = {}\nn = {}\ncapacity = {}\nalpha = {}\ndemand = {}\n",
        inst.seed,
        inst.n(),
        inst.capacity,
        join(&inst.alpha),
        join(&inst.demand)
    )
}

/// `(line, key, value)` triples of a `key = value` file.
fn key_values<'a>(text: &'a str, origin: &str) -> Result<Vec<(usize, &'a str, &'a str)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, idx + 1, "expected `key = value`"))?;
        out.push((idx + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(v: &str, origin: &str, ln: usize, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::parse(origin, ln, format!("{key}: `{s}`: {e}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(v: &str, origin: &str, ln: usize, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::parse(origin, ln, format!("{key}: `{v}`: {e}")))
}

pub fn parse_instance(text: &str, origin: &str) -> Result<SlicingInstance> {
    let mut seed = 0u64;
    let mut n: Option<usize> = None;
    let mut capacity: Option<f64> = None;
    let mut alpha: Option<Vec<f64>> = None;
    let mut demand: Option<Vec<f64>> = None;
    for (ln, k, v) in key_values(text, origin)? {
        match k {
            "seed" => seed = parse_one(v, origin, ln, k)?,
            "n" => n = Some(parse_one(v, origin, ln, k)?),
            "capacity" => capacity = Some(parse_one(v, origin, ln, k)?),
            "alpha" => alpha = Some(parse_list(v, origin, ln, k)?),
            "demand" => demand = Some(parse_list(v, origin, ln, k)?),
            other => return Err(Error::parse(origin, ln, format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::parse(origin, 0, format!("missing key `{k}`"));
    let alpha = alpha.ok_or_else(|| missing("alpha"))?;
    let demand = demand.ok_or_else(|| missing("demand"))?;
    let capacity = capacity.ok_or_else(|| missing("capacity"))?;
    if let Some(n) = n {
        if alpha.len() != n || demand.len() != n {
            return Err(Error::parse(
                origin,
                0,
                format!("n = {n} but alpha has {} and demand {} entries", alpha.len(), demand.len()),
            ));
        }
    }
    Ok(SlicingInstance {
        seed,
        alpha,
        demand,
        capacity,
    })
}

/// Parse an experiment spec. Keys: `n`, `graphs`, `eps`, `algos`, `seed`,
/// `density`, `step`, `tol`, `tmax`, `diverge_norm`, `record_every`,
/// `allow_large`, `out`. Missing keys keep their defaults.
pub fn parse_spec(text: &str, origin: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    for (ln, k, v) in key_values(text, origin)? {
        match k {
            "n" => spec.ns = parse_list(v, origin, ln, k)?,
            "graphs" => spec.graphs = parse_list(v, origin, ln, k)?,
            "eps" => spec.eps = parse_list(v, origin, ln, k)?,
            "algos" => spec.algos = parse_list(v, origin, ln, k)?,
            "seed" => spec.seed = parse_one(v, origin, ln, k)?,
            "density" => spec.density = parse_one(v, origin, ln, k)?,
            "step" => spec.flow.h = parse_one(v, origin, ln, k)?,
            "tol" => spec.flow.stop_tol = parse_one(v, origin, ln, k)?,
            "tmax" => spec.flow.t_max = parse_one(v, origin, ln, k)?,
            "diverge_norm" => spec.flow.diverge_norm = parse_one(v, origin, ln, k)?,
            "record_every" => spec.flow.record_every = parse_one(v, origin, ln, k)?,
            "allow_large" => spec.allow_large = parse_one(v, origin, ln, k)?,
            "out" => spec.out = Some(v.into()),
            other => return Err(Error::parse(origin, ln, format!("unknown key `{other}`"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    parse_spec(&read_text(path)?, &path.display().to_string())
}

/// Trajectory CSV: one row per sample; `lyapunov` is empty when no
/// diagnostic is supplied.
pub fn write_trajectory<W: Write>(mut w: W, samples: &[Sample], lyapunov: Option<&LyapunovDiag>) -> std::io::Result<()> {
    writeln!(w, "t,zdot_norm,lyapunov,g")?;
    for (k, s) in samples.iter().enumerate() {
        let v = lyapunov
            .and_then(|d| d.values.get(k))
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        let g = s.coupling.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";");
        writeln!(w, "{},{},{},{}", s.t, s.zdot_norm, v, g)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip() {
        let g = Digraph::random_balanced(9, 0.4, 3).unwrap();
        let text = format_edge_list(&g);
        let back = parse_edge_list(&text, "mem").unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn edge_list_direction_convention() {
        // a_10 = 2 and a_01 = 2: node 1 receives from node 0 and vice versa.
        let g = parse_edge_list("nodes 2\n1 0 2.0\n0 1 2.0 # back edge\n", "mem").unwrap();
        assert_eq!(g.weight(1, 0), 2.0);
        assert_eq!(g.weight(0, 1), 2.0);
    }

    #[test]
    fn unbalanced_edge_list_is_rejected() {
        let err = parse_edge_list("nodes 3\n1 0 1\n2 1 1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Core(_)));
    }

    #[test]
    fn instance_round_trip_is_exact() {
        let inst = SlicingInstance::generate(12, 77).unwrap();
        let back = parse_instance(&format_instance(&inst), "mem").unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn spec_parsing() {
        let spec = parse_spec(
            "# grid\nn = 10, 50\ngraphs = circle,complete\neps = 0.1,0.01\nalgos = algorithm1\nseed = 9\ntmax = 100\n",
            "mem",
        )
        .unwrap();
        assert_eq!(spec.ns, vec![10, 50]);
        assert_eq!(spec.eps, vec![0.1, 0.01]);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.flow.t_max, 100.0);
        assert!(parse_spec("bogus = 1\n", "mem").is_err());
        assert!(parse_spec("eps = -1\n", "mem").is_err());
    }
}
