//! On-disk formats: trajectories (text and binary), currents tables,
//! run manifests, and site-group files.
//!
//! Every data file starts with enough metadata (format tag, model hash,
//! integrator, site labels) that downstream commands can verify they are
//! analyzing the run they think they are. The text trajectory format is
//! deliberately plain — one record per line, time then row-major density
//! matrix entries as (re, im) pairs — so externally produced trajectories
//! (e.g. tomographic reconstructions) can be ingested by writing the same
//! layout.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::currents::CurrentRecord;
use crate::error::{Error, Result};
use crate::linalg;
use crate::propagator::Trajectory;

/// Magic bytes opening a binary trajectory file.
pub const TRAJECTORY_MAGIC: &[u8; 8] = b"PFLXTRJ1";
/// First line of a text trajectory file.
pub const TRAJECTORY_TEXT_TAG: &str = "# pathflux trajectory v1";
/// First line of a currents file.
pub const CURRENTS_TEXT_TAG: &str = "# pathflux currents v1";

/// Metadata carried by every trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub model_hash: String,
    pub n_sites: usize,
    pub labels: Vec<String>,
    /// Integrator name and step, e.g. "rk4 dt=1e-4".
    pub integrator: String,
    /// Path or identifier of the manifest of the producing run.
    pub manifest: Option<String>,
}

fn fmt_f64(x: f64) -> String {
    // Shortest representation that round-trips through parsing; keeps text
    // files deterministic and lossless.
    format!("{x:e}")
}

/// Render a trajectory as the v1 text format.
pub fn write_trajectory_text(traj: &Trajectory, header: &TrajectoryHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRAJECTORY_TEXT_TAG}");
    let _ = writeln!(out, "# model_hash = {}", header.model_hash);
    let _ = writeln!(out, "# n_sites = {}", header.n_sites);
    let _ = writeln!(out, "# labels = {}", header.labels.join(","));
    let _ = writeln!(out, "# integrator = {}", header.integrator);
    if let Some(m) = &header.manifest {
        let _ = writeln!(out, "# manifest = {m}");
    }
    let _ = writeln!(
        out,
        "# columns = t then row-major rho entries as re,im pairs"
    );
    let n = header.n_sites;
    for (t, rho) in traj.times.iter().zip(&traj.states) {
        let mut row = fmt_f64(*t);
        for i in 0..n {
            for j in 0..n {
                let _ = write!(row, " {} {}", fmt_f64(rho[(i, j)].re), fmt_f64(rho[(i, j)].im));
            }
        }
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Render a trajectory as the v1 binary format: magic, little-endian u64
/// JSON-header length, the JSON header, then per record (1 + 2 N^2)
/// little-endian f64 values (time, then row-major re,im pairs).
pub fn write_trajectory_binary(traj: &Trajectory, header: &TrajectoryHeader) -> Vec<u8> {
    let head = serde_json::to_vec(header).expect("header serializes");
    let n = header.n_sites;
    let mut out = Vec::with_capacity(
        16 + head.len() + traj.len() * (1 + 2 * n * n) * 8,
    );
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    for (t, rho) in traj.times.iter().zip(&traj.states) {
        out.extend_from_slice(&t.to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                out.extend_from_slice(&rho[(i, j)].re.to_le_bytes());
                out.extend_from_slice(&rho[(i, j)].im.to_le_bytes());
            }
        }
    }
    out
}

/// Parse a trajectory file, auto-detecting text vs binary from its first
/// bytes. Positivity monitoring data is recomputed from the states, so
/// ingested third-party trajectories get it too.
pub fn read_trajectory(bytes: &[u8]) -> Result<(Trajectory, TrajectoryHeader)> {
    if bytes.starts_with(TRAJECTORY_MAGIC) {
        read_trajectory_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Format("trajectory file is neither v1 binary nor utf-8".into()))?;
        read_trajectory_text(text)
    }
}

fn finish_trajectory(
    times: Vec<f64>,
    states: Vec<Array2<C64>>,
    header: TrajectoryHeader,
) -> Result<(Trajectory, TrajectoryHeader)> {
    if times.is_empty() {
        return Err(Error::Format("trajectory file holds no records".into()));
    }
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Format(format!(
                "trajectory times not strictly increasing at t = {}",
                w[1]
            )));
        }
    }
    let min_eigenvalues = states.iter().map(linalg::min_eigval_hermitian).collect();
    Ok((
        Trajectory {
            times,
            states,
            aux: None,
            min_eigenvalues,
        },
        header,
    ))
}

fn read_trajectory_text(text: &str) -> Result<(Trajectory, TrajectoryHeader)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim() == TRAJECTORY_TEXT_TAG => {}
        _ => {
            return Err(Error::Format(format!(
                "missing `{TRAJECTORY_TEXT_TAG}` tag line"
            )))
        }
    }
    let mut model_hash = String::new();
    let mut n_sites = 0usize;
    let mut labels = Vec::new();
    let mut integrator = String::new();
    let mut manifest = None;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "model_hash" => model_hash = value.to_string(),
                    "n_sites" => {
                        n_sites = value.parse().map_err(|_| {
                            Error::Format(format!("bad n_sites value `{value}`"))
                        })?
                    }
                    "labels" => {
                        labels = value.split(',').map(|s| s.trim().to_string()).collect()
                    }
                    "integrator" => integrator = value.to_string(),
                    "manifest" => manifest = Some(value.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if n_sites == 0 {
            return Err(Error::Format("data row before `# n_sites` header".into()));
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        let expect = 1 + 2 * n_sites * n_sites;
        if fields.len() != expect {
            return Err(Error::Format(format!(
                "record has {} fields, expected {expect}",
                fields.len()
            )));
        }
        times.push(fields[0]);
        let mut rho = Array2::zeros((n_sites, n_sites));
        let mut k = 1;
        for i in 0..n_sites {
            for j in 0..n_sites {
                rho[(i, j)] = C64::new(fields[k], fields[k + 1]);
                k += 2;
            }
        }
        states.push(rho);
    }
    let header = TrajectoryHeader {
        model_hash,
        n_sites,
        labels,
        integrator,
        manifest,
    };
    finish_trajectory(times, states, header)
}

fn read_trajectory_binary(bytes: &[u8]) -> Result<(Trajectory, TrajectoryHeader)> {
    let need = |ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(Error::Format("binary trajectory truncated".into()))
        }
    };
    need(bytes.len() >= 16)?;
    let head_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    need(bytes.len() >= 16 + head_len)?;
    let header: TrajectoryHeader = serde_json::from_slice(&bytes[16..16 + head_len])
        .map_err(|e| Error::Format(format!("binary trajectory header: {e}")))?;
    let n = header.n_sites;
    if n == 0 {
        return Err(Error::Format("binary trajectory header has n_sites = 0".into()));
    }
    let body = &bytes[16 + head_len..];
    let record_bytes = (1 + 2 * n * n) * 8;
    if !body.len().is_multiple_of(record_bytes) {
        return Err(Error::Format(format!(
            "binary trajectory body length {} is not a multiple of the {record_bytes}-byte record",
            body.len()
        )));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for rec in body.chunks_exact(record_bytes) {
        let f = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().unwrap());
        times.push(f(0));
        let mut rho = Array2::zeros((n, n));
        let mut k = 1;
        for i in 0..n {
            for j in 0..n {
                rho[(i, j)] = C64::new(f(k), f(k + 1));
                k += 2;
            }
        }
        states.push(rho);
    }
    finish_trajectory(times, states, header)
}

/// Render current records as the v1 currents text format: per time step one
/// row per site pair l < n with every decomposition.
pub fn write_currents_text(records: &[CurrentRecord], header: &TrajectoryHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CURRENTS_TEXT_TAG}");
    let _ = writeln!(out, "# model_hash = {}", header.model_hash);
    let _ = writeln!(out, "# n_sites = {}", header.n_sites);
    let _ = writeln!(out, "# labels = {}", header.labels.join(","));
    if let Some(m) = &header.manifest {
        let _ = writeln!(out, "# manifest = {m}");
    }
    let _ = writeln!(
        out,
        "# columns = t l n j_total j_unitary j_relax j_pop j_coher j_dephas_check"
    );
    for rec in records {
        let n_sites = rec.j_total.nrows();
        for l in 0..n_sites {
            for n in (l + 1)..n_sites {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {} {} {} {}",
                    fmt_f64(rec.time),
                    l,
                    n,
                    fmt_f64(rec.j_total[(l, n)]),
                    fmt_f64(rec.j_unitary[(l, n)]),
                    fmt_f64(rec.j_relax[(l, n)]),
                    fmt_f64(rec.j_pop[(l, n)]),
                    fmt_f64(rec.j_coher[(l, n)]),
                    fmt_f64(rec.j_dephas_check[(l, n)]),
                );
            }
        }
    }
    out
}

/// Parse a v1 currents file back into full antisymmetric record matrices.
pub fn read_currents_text(text: &str) -> Result<(Vec<CurrentRecord>, TrajectoryHeader)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim() == CURRENTS_TEXT_TAG => {}
        _ => {
            return Err(Error::Format(format!(
                "missing `{CURRENTS_TEXT_TAG}` tag line"
            )))
        }
    }
    let mut header = TrajectoryHeader {
        model_hash: String::new(),
        n_sites: 0,
        labels: Vec::new(),
        integrator: String::new(),
        manifest: None,
    };
    let mut records: Vec<CurrentRecord> = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "model_hash" => header.model_hash = value.to_string(),
                    "n_sites" => {
                        header.n_sites = value.parse().map_err(|_| {
                            Error::Format(format!("bad n_sites value `{value}`"))
                        })?
                    }
                    "labels" => {
                        header.labels =
                            value.split(',').map(|s| s.trim().to_string()).collect()
                    }
                    "manifest" => header.manifest = Some(value.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let dim = header.n_sites;
        if dim == 0 {
            return Err(Error::Format("data row before `# n_sites` header".into()));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::Format(format!(
                "currents row has {} fields, expected 9",
                fields.len()
            )));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad time `{}`", fields[0])))?;
        let l: usize = fields[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad site index `{}`", fields[1])))?;
        let n: usize = fields[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad site index `{}`", fields[2])))?;
        if l >= dim || n >= dim || l >= n {
            return Err(Error::Format(format!(
                "bad site pair ({l}, {n}) for {dim} sites"
            )));
        }
        let vals: Vec<f64> = fields[3..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if records.last().map(|r| r.time) != Some(t) {
            let z = || Array2::<f64>::zeros((dim, dim));
            records.push(CurrentRecord {
                time: t,
                j_unitary: z(),
                j_dephas_check: z(),
                j_relax: z(),
                j_total: z(),
                j_pop: z(),
                j_coher: z(),
            });
        }
        let rec = records.last_mut().unwrap();
        for (m, v) in [
            (&mut rec.j_total, vals[0]),
            (&mut rec.j_unitary, vals[1]),
            (&mut rec.j_relax, vals[2]),
            (&mut rec.j_pop, vals[3]),
            (&mut rec.j_coher, vals[4]),
            (&mut rec.j_dephas_check, vals[5]),
        ] {
            m[(l, n)] = v;
            m[(n, l)] = -v;
        }
    }
    if records.is_empty() {
        return Err(Error::Format("currents file holds no records".into()));
    }
    Ok((records, header))
}

/// Provenance record written beside every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub model_hash: String,
    pub parameters: serde_json::Value,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest json: {e}")))
    }
}

/// Parse a groups file — a TOML table mapping group names to lists of site
/// labels or indices — into sub-complexes over the given label order.
pub fn parse_groups(text: &str, labels: &[String]) -> Result<Vec<crate::currents::SubComplex>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum SiteKey {
        Index(usize),
        Label(String),
    }
    let doc: std::collections::BTreeMap<String, Vec<SiteKey>> =
        toml::from_str(text).map_err(|e| Error::Format(format!("groups file: {e}")))?;
    let mut out = Vec::new();
    for (name, keys) in doc {
        let mut sites = Vec::new();
        for key in keys {
            let idx = match key {
                SiteKey::Index(i) => {
                    if i >= labels.len() {
                        return Err(Error::Format(format!(
                            "group `{name}`: site index {i} out of range for {} sites",
                            labels.len()
                        )));
                    }
                    i
                }
                SiteKey::Label(l) => labels
                    .iter()
                    .position(|x| *x == l)
                    .ok_or_else(|| {
                        Error::Format(format!("group `{name}`: unknown site label `{l}`"))
                    })?,
            };
            sites.push(idx);
        }
        out.push(crate::currents::SubComplex::new(name, sites)?);
    }
    Ok(out)
}
