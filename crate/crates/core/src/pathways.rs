//! Time-integrated currents and pathway graphs.
//!
//! Integrating the net current over a window [t0, t1] gives the population
//! transferred along each directed pair,
//!
//!   dP_ln = integral_{t0}^{t1} j_ln(t) dt,
//!
//! and the pairs with dP_ln above a threshold form a weighted directed graph
//! of transport pathways. A companion gross-flow integral of |j_ln| measures
//! how much probability sloshes back and forth regardless of its net
//! direction — a large gross flow with a small net transfer signals
//! oscillatory exchange rather than directed transport.
//!
//! Currents are only known on the output grid, so the integrals are exact
//! integrals of the piecewise-linear interpolant of j(t) (trapezoidal rule,
//! with linear interpolation at window edges that fall between grid points).

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use ndarray::Array2;

use crate::currents::CurrentRecord;
use crate::error::{Error, Result};

/// Net transfer dP and gross flow integral_{t0}^{t1} |j| dt for every pair.
#[derive(Debug, Clone)]
pub struct IntegratedCurrents {
    pub window: (f64, f64),
    /// dP_ln: net population moved from l to n over the window.
    pub net: Array2<f64>,
    /// integral of |j_ln|: total probability exchanged, direction ignored.
    pub gross: Array2<f64>,
}

fn interp(records: &[CurrentRecord], k: usize, t: f64, l: usize, n: usize) -> f64 {
    // linear interpolation on segment [k, k+1]
    let (t0, t1) = (records[k].time, records[k + 1].time);
    let (j0, j1) = (records[k].j_total[(l, n)], records[k + 1].j_total[(l, n)]);
    if t1 == t0 {
        return j0;
    }
    j0 + (j1 - j0) * (t - t0) / (t1 - t0)
}

/// Integrate all pair currents over [t0, t1].
///
/// The window must lie inside the record grid; integration is trapezoidal
/// on the grid with interpolated values at the window edges.
pub fn integrate_currents(
    records: &[CurrentRecord],
    window: (f64, f64),
) -> Result<IntegratedCurrents> {
    if records.len() < 2 {
        return Err(Error::Invalid(
            "current integration needs at least 2 output times".into(),
        ));
    }
    let (a, b) = window;
    let grid_start = records[0].time;
    let grid_end = records[records.len() - 1].time;
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::Invalid(format!(
            "invalid integration window [{a}, {b}]"
        )));
    }
    if a < grid_start || b > grid_end {
        return Err(Error::Invalid(format!(
            "window [{a}, {b}] outside the trajectory range [{grid_start}, {grid_end}]"
        )));
    }
    let dim = records[0].j_total.nrows();
    let mut net = Array2::zeros((dim, dim));
    let mut gross = Array2::zeros((dim, dim));
    for l in 0..dim {
        for n in 0..dim {
            if l == n {
                continue;
            }
            let mut acc_net = 0.0_f64;
            let mut acc_gross = 0.0_f64;
            for k in 0..records.len() - 1 {
                let (t0, t1) = (records[k].time, records[k + 1].time);
                let lo = t0.max(a);
                let hi = t1.min(b);
                if hi <= lo {
                    continue;
                }
                let j_lo = interp(records, k, lo, l, n);
                let j_hi = interp(records, k, hi, l, n);
                acc_net += 0.5 * (j_lo + j_hi) * (hi - lo);
                // |j| of a linear segment: split at a sign change so the
                // integral of the interpolant's absolute value is exact.
                if j_lo * j_hi < 0.0 {
                    let tc = lo + (hi - lo) * j_lo / (j_lo - j_hi);
                    acc_gross += 0.5 * j_lo.abs() * (tc - lo) + 0.5 * j_hi.abs() * (hi - tc);
                } else {
                    acc_gross += 0.5 * (j_lo.abs() + j_hi.abs()) * (hi - lo);
                }
            }
            net[(l, n)] = acc_net;
            gross[(l, n)] = acc_gross;
        }
    }
    Ok(IntegratedCurrents { window, net, gross })
}

/// One directed pathway edge: net transfer `weight` from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Directed graph of transport pathways over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayGraph {
    pub nodes: Vec<String>,
    /// Edges with weight > threshold, sorted by descending weight
    /// (ties broken by (from, to) index order).
    pub edges: Vec<PathwayEdge>,
    pub window: (f64, f64),
    pub threshold: f64,
}

/// Keep each pair's positive direction: edge l -> n appears iff
/// dP_ln > threshold. Since dP_nl = -dP_ln, each pair contributes at most
/// one edge.
pub fn build_pathway_graph(
    integrated: &IntegratedCurrents,
    labels: &[String],
    threshold: f64,
) -> Result<PathwayGraph> {
    let dim = integrated.net.nrows();
    if labels.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: labels.len(),
        });
    }
    if threshold < 0.0 {
        return Err(Error::Invalid("threshold must be non-negative".into()));
    }
    let mut edges = Vec::new();
    for l in 0..dim {
        for n in 0..dim {
            if l != n && integrated.net[(l, n)] > threshold {
                edges.push(PathwayEdge {
                    from: l,
                    to: n,
                    weight: integrated.net[(l, n)],
                });
            }
        }
    }
    edges.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap()
            .then(a.from.cmp(&b.from))
            .then(a.to.cmp(&b.to))
    });
    Ok(PathwayGraph {
        nodes: labels.to_vec(),
        edges,
        window: integrated.window,
        threshold,
    })
}

impl PathwayGraph {
    /// Graphviz DOT rendering. Edge pen width scales with relative weight,
    /// max(0.5, 8 * w / w_max); an edgeless graph is still valid DOT.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph pathways {{");
        let _ = writeln!(
            out,
            "  // net transfer over t in [{:e}, {:e}], threshold {:e}",
            self.window.0, self.window.1, self.threshold
        );
        let _ = writeln!(out, "  rankdir=LR;");
        for (i, label) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  n{} [label=\"{}\"];", i, label.replace('"', "\\\""));
        }
        let wmax = self
            .edges
            .iter()
            .fold(0.0_f64, |acc, e| acc.max(e.weight));
        for e in &self.edges {
            let penwidth = if wmax > 0.0 {
                (8.0 * e.weight / wmax).max(0.5)
            } else {
                0.5
            };
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{:.4}\", penwidth={:.3}];",
                e.from, e.to, e.weight, penwidth
            );
        }
        let _ = writeln!(out, "}}");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pathway graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("pathway graph json: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::total_currents;
    use crate::model::{
        build_generators, ChannelKind, Coupling, EnvironmentSpec, IntegratorSpec,
        RelaxationChannel, RunParams, SiteNetwork,
    };
    use crate::propagator::propagate;
    use ndarray::Array2;
    use num_complex::Complex64 as C64;

    fn rabi_recs(t_final: f64, dt_output: f64) -> Vec<CurrentRecord> {
        let net = SiteNetwork::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![Coupling { l: 0, n: 1, value: 1.0 }],
        )
        .unwrap();
        let gen = build_generators(&net, &EnvironmentSpec::default()).unwrap();
        let mut rho0: Array2<C64> = Array2::zeros((2, 2));
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let run = RunParams {
            t_final,
            dt_output,
            integrator: IntegratorSpec::FixedStep { dt: 1e-4 },
        };
        let traj = propagate(&rho0, &gen, &run).unwrap();
        total_currents(&traj, &gen).unwrap()
    }

    #[test]
    fn rabi_half_period_transfers_unit_population() {
        // Over a half Rabi period the full population moves 0 -> 1:
        // dP_01 = rho_11(pi/2) - rho_11(0) = 1.
        let t_half = std::f64::consts::FRAC_PI_2;
        let recs = rabi_recs(t_half, 1e-3);
        let ic = integrate_currents(&recs, (0.0, t_half)).unwrap();
        assert!((ic.net[(0, 1)] - 1.0).abs() <= 1e-5, "{}", ic.net[(0, 1)]);
        assert!((ic.net[(1, 0)] + 1.0).abs() <= 1e-5);
    }

    #[test]
    fn full_period_nets_zero_but_gross_flow_is_two() {
        // Over a full period the population returns: net 0, gross 2.
        let t_full = std::f64::consts::PI;
        let recs = rabi_recs(t_full, 1e-3);
        let ic = integrate_currents(&recs, (0.0, t_full)).unwrap();
        assert!(ic.net[(0, 1)].abs() <= 1e-5);
        assert!((ic.gross[(0, 1)] - 2.0).abs() <= 1e-4, "{}", ic.gross[(0, 1)]);
    }

    #[test]
    fn window_additivity() {
        let recs = rabi_recs(1.0, 1e-3);
        // split point chosen off the output grid to exercise interpolation
        let mid = 0.3337;
        let whole = integrate_currents(&recs, (0.05, 0.95)).unwrap();
        let left = integrate_currents(&recs, (0.05, mid)).unwrap();
        let right = integrate_currents(&recs, (mid, 0.95)).unwrap();
        let sum = left.net[(0, 1)] + right.net[(0, 1)];
        assert!((whole.net[(0, 1)] - sum).abs() <= 1e-10);
    }

    #[test]
    fn window_outside_grid_is_an_error() {
        let recs = rabi_recs(1.0, 1e-2);
        assert!(integrate_currents(&recs, (-0.1, 0.5)).is_err());
        assert!(integrate_currents(&recs, (0.5, 1.5)).is_err());
        assert!(integrate_currents(&recs, (0.8, 0.2)).is_err());
    }

    fn chain_graph(threshold: f64) -> PathwayGraph {
        let net = SiteNetwork::new(
            vec!["in".into(), "mid".into(), "out".into()],
            vec![0.0, 0.0, 0.0],
            vec![Coupling { l: 0, n: 1, value: 1.0 }],
        )
        .unwrap();
        let env = EnvironmentSpec {
            dephasing: vec![],
            relaxation: vec![RelaxationChannel {
                source: 1,
                target: 2,
                kind: ChannelKind::Markovian { rate: 2.0 },
            }],
        };
        let gen = build_generators(&net, &env).unwrap();
        let mut rho0: Array2<C64> = Array2::zeros((3, 3));
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let run = RunParams {
            t_final: 6.0,
            dt_output: 1e-2,
            integrator: IntegratorSpec::FixedStep { dt: 1e-3 },
        };
        let traj = propagate(&rho0, &gen, &run).unwrap();
        let recs = total_currents(&traj, &gen).unwrap();
        let ic = integrate_currents(&recs, (0.0, 6.0)).unwrap();
        build_pathway_graph(&ic, &["in".into(), "mid".into(), "out".into()], threshold).unwrap()
    }

    #[test]
    fn chain_transport_appears_as_two_edges() {
        let g = chain_graph(0.05);
        // transport runs 0 -> 1 (coherent) and 1 -> 2 (relaxation sink)
        assert!(g.edges.iter().any(|e| e.from == 0 && e.to == 1));
        assert!(g.edges.iter().any(|e| e.from == 1 && e.to == 2));
        assert!(!g.edges.iter().any(|e| e.from == 1 && e.to == 0));
        // by t = 6 nearly everything has drained into the sink
        let drained: f64 = g
            .edges
            .iter()
            .filter(|e| e.to == 2)
            .map(|e| e.weight)
            .sum();
        assert!(drained > 0.9, "{drained}");
    }

    #[test]
    fn threshold_prunes_edges_and_sorting_is_descending() {
        let all = chain_graph(0.0);
        let pruned = chain_graph(0.5);
        assert!(pruned.edges.len() <= all.edges.len());
        for w in all.edges.windows(2) {
            assert!(w[0].weight >= w[1].weight);
        }
        for e in &pruned.edges {
            assert!(e.weight > 0.5);
        }
    }

    #[test]
    fn dot_output_shape() {
        let g = chain_graph(0.05);
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph pathways {"));
        assert!(dot.contains("n0 [label=\"in\"];"));
        assert!(dot.contains("n0 -> n1"));
        assert!(dot.trim_end().ends_with('}'));
        // strongest edge gets the full pen width
        assert!(dot.contains("penwidth=8.000"));
    }

    #[test]
    fn empty_graph_is_valid_dot() {
        let g = PathwayGraph {
            nodes: vec!["a".into(), "b".into()],
            edges: vec![],
            window: (0.0, 1.0),
            threshold: 1.0,
        };
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph pathways {"));
        assert!(dot.contains("n1 [label=\"b\"];"));
        assert!(!dot.contains("->"));
    }

    #[test]
    fn json_round_trip() {
        let g = chain_graph(0.05);
        let back = PathwayGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn graph_label_count_must_match() {
        let recs = rabi_recs(0.5, 1e-2);
        let ic = integrate_currents(&recs, (0.0, 0.5)).unwrap();
        assert!(build_pathway_graph(&ic, &["only-one".into()], 0.0).is_err());
        assert!(build_pathway_graph(&ic, &["a".into(), "b".into()], -1.0).is_err());
    }
}
