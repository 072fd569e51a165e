//! Network and environment data model.
//!
//! A [`SiteNetwork`] holds the on-site energies H_nn and the real symmetric
//! inter-site couplings H_ln (hbar = 1, everything in angular-frequency
//! units). The [`EnvironmentSpec`] attaches dephasing channels (coupling
//! operator |n><n|) and directed relaxation channels (|target><source|) to
//! the network, each either with a Markovian rate or with a list of
//! exponential bath modes alpha(t) = g exp(-(gamma + i omega) t).
//!
//! Parsed models are immutable and safe to share across threads.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest admissible eigenvalue for an explicit initial density matrix.
pub const PSD_TOLERANCE: f64 = 1e-9;
/// Explicit initial matrices with a Hermiticity defect above this are
/// rejected rather than silently symmetrized.
pub const HERMITICITY_FIX_TOLERANCE: f64 = 1e-12;
/// Tolerance on the trace of an explicit initial matrix.
pub const TRACE_TOLERANCE: f64 = 1e-9;

/// 2*pi*c with c in cm/ps: converts wavenumbers (cm^-1) into angular
/// frequencies (rad/ps). Used when the config declares `unit = "wavenumber"`;
/// the implied time unit is then picoseconds.
pub const WAVENUMBER_TO_ANGULAR: f64 = 2.0 * std::f64::consts::PI * 0.029_979_245_8;

/// One inter-site coupling H_ln, stored with l < n and applied symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub l: usize,
    pub n: usize,
    pub value: f64,
}

/// The coupled-site network: labels, on-site energies, couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteNetwork {
    labels: Vec<String>,
    energies: Vec<f64>,
    couplings: Vec<Coupling>,
}

impl SiteNetwork {
    pub fn new(labels: Vec<String>, energies: Vec<f64>, couplings: Vec<Coupling>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config {
                path: "sites".into(),
                message: "at least one site is required".into(),
            });
        }
        if labels.len() != energies.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                found: energies.len(),
            });
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::Config {
                    path: format!("sites[{i}].label"),
                    message: format!("duplicate site label `{label}`"),
                });
            }
        }
        for (i, e) in energies.iter().enumerate() {
            if !e.is_finite() {
                return Err(Error::Config {
                    path: format!("sites[{i}].energy"),
                    message: "energy must be finite".into(),
                });
            }
        }
        let n_sites = labels.len();
        let mut seen_pairs = Vec::new();
        let mut normalized = Vec::with_capacity(couplings.len());
        for (i, c) in couplings.into_iter().enumerate() {
            if c.l >= n_sites || c.n >= n_sites {
                return Err(Error::Config {
                    path: format!("couplings[{i}]"),
                    message: format!("site index out of range (n_sites = {n_sites})"),
                });
            }
            if c.l == c.n {
                return Err(Error::Config {
                    path: format!("couplings[{i}]"),
                    message: "self-coupling forbidden".into(),
                });
            }
            if !c.value.is_finite() {
                return Err(Error::Config {
                    path: format!("couplings[{i}].value"),
                    message: "coupling must be finite".into(),
                });
            }
            let (l, n) = if c.l < c.n { (c.l, c.n) } else { (c.n, c.l) };
            if seen_pairs.contains(&(l, n)) {
                return Err(Error::Config {
                    path: format!("couplings[{i}]"),
                    message: format!("duplicate coupling for pair ({l}, {n})"),
                });
            }
            seen_pairs.push((l, n));
            normalized.push(Coupling { l, n, value: c.value });
        }
        Ok(SiteNetwork {
            labels,
            energies,
            couplings: normalized,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Assemble the dense real symmetric Hamiltonian matrix.
    pub fn hamiltonian(&self) -> Array2<f64> {
        let n = self.n_sites();
        let mut h = Array2::zeros((n, n));
        for (i, e) in self.energies.iter().enumerate() {
            h[(i, i)] = *e;
        }
        for c in &self.couplings {
            h[(c.l, c.n)] = c.value;
            h[(c.n, c.l)] = c.value;
        }
        h
    }
}

/// One exponential bath mode, alpha(t) = g exp(-(gamma + i omega) t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathMode {
    /// Correlation amplitude (angular frequency squared), g >= 0.
    pub g: f64,
    /// Inverse correlation time, gamma > 0.
    pub gamma: f64,
    /// Mode frequency shift.
    #[serde(default)]
    pub omega: f64,
}

impl BathMode {
    /// Complex decay constant w = gamma + i omega of the correlation function.
    pub fn decay(&self) -> C64 {
        C64::new(self.gamma, self.omega)
    }

    fn validate(&self, path: &str) -> Result<()> {
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::Config {
                path: format!("{path}.g"),
                message: "bath amplitude g must be finite and >= 0".into(),
            });
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config {
                path: format!("{path}.gamma"),
                message: "bath decay gamma must be finite and > 0".into(),
            });
        }
        if !self.omega.is_finite() {
            return Err(Error::Config {
                path: format!("{path}.omega"),
                message: "bath frequency omega must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Markovian rate or exponential-mode bath for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelKind {
    Markovian { rate: f64 },
    NonMarkovian { modes: Vec<BathMode> },
}

impl ChannelKind {
    pub fn is_markovian(&self) -> bool {
        matches!(self, ChannelKind::Markovian { .. })
    }

    fn validate(&self, path: &str) -> Result<()> {
        match self {
            ChannelKind::Markovian { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::Config {
                        path: format!("{path}.rate"),
                        message: "rate must be finite and >= 0".into(),
                    });
                }
            }
            ChannelKind::NonMarkovian { modes } => {
                if modes.is_empty() {
                    return Err(Error::Config {
                        path: format!("{path}.modes"),
                        message: "mode list must be non-empty".into(),
                    });
                }
                for (i, m) in modes.iter().enumerate() {
                    m.validate(&format!("{path}.modes[{i}]"))?;
                }
            }
        }
        Ok(())
    }
}

/// Dephasing channel with coupling operator L = |site><site|.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingChannel {
    pub site: usize,
    pub kind: ChannelKind,
}

/// Directed relaxation channel with coupling operator L = |target><source|.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationChannel {
    pub source: usize,
    pub target: usize,
    pub kind: ChannelKind,
}

/// All environment channels attached to a network. At most one dephasing
/// channel per site and one relaxation channel per ordered pair; multi-mode
/// baths live inside a single channel's mode list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvironmentSpec {
    pub dephasing: Vec<DephasingChannel>,
    pub relaxation: Vec<RelaxationChannel>,
}

impl EnvironmentSpec {
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        for (i, ch) in self.dephasing.iter().enumerate() {
            let path = format!("dephasing[{i}]");
            if ch.site >= n_sites {
                return Err(Error::Config {
                    path: format!("{path}.site"),
                    message: format!("site index out of range (n_sites = {n_sites})"),
                });
            }
            if self.dephasing[..i].iter().any(|c| c.site == ch.site) {
                return Err(Error::Config {
                    path,
                    message: format!("duplicate dephasing channel for site {}", ch.site),
                });
            }
            ch.kind.validate(&path)?;
        }
        for (i, ch) in self.relaxation.iter().enumerate() {
            let path = format!("relaxation[{i}]");
            if ch.source >= n_sites || ch.target >= n_sites {
                return Err(Error::Config {
                    path,
                    message: format!("site index out of range (n_sites = {n_sites})"),
                });
            }
            if ch.source == ch.target {
                return Err(Error::Config {
                    path,
                    message: "self-relaxation forbidden".into(),
                });
            }
            if self.relaxation[..i]
                .iter()
                .any(|c| c.source == ch.source && c.target == ch.target)
            {
                return Err(Error::Config {
                    path,
                    message: format!(
                        "duplicate relaxation channel for pair ({} -> {})",
                        ch.source, ch.target
                    ),
                });
            }
            ch.kind.validate(&path)?;
        }
        Ok(())
    }

    pub fn is_markovian(&self) -> bool {
        self.dephasing.iter().all(|c| c.kind.is_markovian())
            && self.relaxation.iter().all(|c| c.kind.is_markovian())
    }
}

/// Initial reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// rho0 = |n><n|.
    SingleSite(usize),
    /// Equal diagonal mixture over the listed sites.
    UniformSites(Vec<usize>),
    /// An explicit Hermitian, unit-trace, PSD matrix.
    ExplicitMatrix(Array2<C64>),
}

impl InitialState {
    /// Build and validate the initial density matrix.
    pub fn density_matrix(&self, n_sites: usize) -> Result<Array2<C64>> {
        match self {
            InitialState::SingleSite(n) => {
                if *n >= n_sites {
                    return Err(Error::Config {
                        path: "initial.site".into(),
                        message: format!("site index out of range (n_sites = {n_sites})"),
                    });
                }
                let mut rho = Array2::zeros((n_sites, n_sites));
                rho[(*n, *n)] = C64::new(1.0, 0.0);
                Ok(rho)
            }
            InitialState::UniformSites(sites) => {
                if sites.is_empty() {
                    return Err(Error::Config {
                        path: "initial.sites".into(),
                        message: "site list must be non-empty".into(),
                    });
                }
                let mut rho = Array2::zeros((n_sites, n_sites));
                let w = C64::new(1.0 / sites.len() as f64, 0.0);
                for (i, s) in sites.iter().enumerate() {
                    if *s >= n_sites {
                        return Err(Error::Config {
                            path: format!("initial.sites[{i}]"),
                            message: format!("site index out of range (n_sites = {n_sites})"),
                        });
                    }
                    rho[(*s, *s)] = w;
                }
                Ok(rho)
            }
            InitialState::ExplicitMatrix(m) => {
                if m.nrows() != n_sites || m.ncols() != n_sites {
                    return Err(Error::Dimension {
                        expected: n_sites,
                        found: m.nrows(),
                    });
                }
                let defect = linalg::hermiticity_defect(m);
                if defect > HERMITICITY_FIX_TOLERANCE {
                    return Err(Error::Config {
                        path: "initial.matrix".into(),
                        message: format!(
                            "matrix is not Hermitian (max |rho - rho^dag| = {defect:.3e})"
                        ),
                    });
                }
                let mut rho = m.clone();
                linalg::hermitize(&mut rho);
                let tr = linalg::trace(&rho).re;
                if (tr - 1.0).abs() > TRACE_TOLERANCE {
                    return Err(Error::Config {
                        path: "initial.matrix".into(),
                        message: format!("trace must be 1 (got {tr})"),
                    });
                }
                let min_ev = linalg::min_eigval_hermitian(&rho);
                if min_ev < -PSD_TOLERANCE {
                    return Err(Error::Config {
                        path: "initial.matrix".into(),
                        message: format!(
                            "matrix is not positive semidefinite (smallest eigenvalue {min_ev:.4e})"
                        ),
                    });
                }
                Ok(rho)
            }
        }
    }
}

/// Fixed-step RK4 step size, or tolerances from which a step is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntegratorSpec {
    FixedStep { dt: f64 },
    Tolerances { rtol: f64, atol: f64 },
}

/// Time grid and integrator settings for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub t_final: f64,
    pub dt_output: f64,
    pub integrator: IntegratorSpec,
}

impl RunParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::Config {
                path: "run.t_final".into(),
                message: "t_final must be finite and >= 0".into(),
            });
        }
        if !(self.dt_output.is_finite() && self.dt_output > 0.0) {
            return Err(Error::Config {
                path: "run.dt_output".into(),
                message: "dt_output must be finite and > 0".into(),
            });
        }
        match self.integrator {
            IntegratorSpec::FixedStep { dt } => {
                if !(dt.is_finite() && dt > 0.0) {
                    return Err(Error::Config {
                        path: "run.integrator.dt".into(),
                        message: "dt must be finite and > 0".into(),
                    });
                }
            }
            IntegratorSpec::Tolerances { rtol, atol } => {
                if !(rtol.is_finite() && rtol > 0.0 && atol.is_finite() && atol > 0.0) {
                    return Err(Error::Config {
                        path: "run.integrator".into(),
                        message: "rtol and atol must be finite and > 0".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A fully parsed and validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: SiteNetwork,
    pub environment: EnvironmentSpec,
    pub initial: InitialState,
    pub run: RunParams,
    /// Factor applied to all energy-like inputs during parsing (1.0 unless
    /// the config declared `unit = "wavenumber"`). Stored for audit.
    pub unit_factor: f64,
}

impl Model {
    pub fn n_sites(&self) -> usize {
        self.network.n_sites()
    }
}

// ---------------------------------------------------------------------------
// Config document (external interface)
// ---------------------------------------------------------------------------

/// Site reference in a config document: label string or numeric index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteRef {
    Index(usize),
    Label(String),
}

impl SiteRef {
    fn resolve(&self, net: &SiteNetwork, path: &str) -> Result<usize> {
        match self {
            SiteRef::Index(i) => {
                if *i < net.n_sites() {
                    Ok(*i)
                } else {
                    Err(Error::Config {
                        path: path.into(),
                        message: format!(
                            "site index {i} out of range (n_sites = {})",
                            net.n_sites()
                        ),
                    })
                }
            }
            SiteRef::Label(l) => net.label_index(l).ok_or_else(|| Error::Config {
                path: path.into(),
                message: format!("unknown site label `{l}`"),
            }),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SiteDoc {
    label: String,
    energy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CouplingDoc {
    from: SiteRef,
    to: SiteRef,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DephasingDoc {
    site: SiteRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modes: Option<Vec<BathMode>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelaxationDoc {
    from: SiteRef,
    to: SiteRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modes: Option<Vec<BathMode>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InitialDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    site: Option<SiteRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sites: Option<Vec<SiteRef>>,
    /// Row-major matrix of (re, im) pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IntegratorDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atol: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunDoc {
    t_final: f64,
    dt_output: f64,
    integrator: IntegratorDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    sites: Vec<SiteDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    couplings: Vec<CouplingDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dephasing: Vec<DephasingDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relaxation: Vec<RelaxationDoc>,
    initial: InitialDoc,
    run: RunDoc,
}

fn channel_kind_from_doc(
    rate: Option<f64>,
    modes: Option<Vec<BathMode>>,
    path: &str,
    factor: f64,
) -> Result<ChannelKind> {
    let kind = match (rate, modes) {
        (Some(r), None) => ChannelKind::Markovian { rate: r * factor },
        (None, Some(ms)) => ChannelKind::NonMarkovian {
            modes: ms
                .into_iter()
                .map(|m| BathMode {
                    g: m.g * factor * factor,
                    gamma: m.gamma * factor,
                    omega: m.omega * factor,
                })
                .collect(),
        },
        (Some(_), Some(_)) => {
            return Err(Error::Config {
                path: path.into(),
                message: "specify either `rate` or `modes`, not both".into(),
            })
        }
        (None, None) => {
            return Err(Error::Config {
                path: path.into(),
                message: "channel needs either `rate` or `modes`".into(),
            })
        }
    };
    kind.validate(path)?;
    Ok(kind)
}

/// Parse and validate a configuration document (TOML).
///
/// All energy-like inputs (energies, couplings, rates, bath parameters) are
/// converted to angular frequencies when `unit = "wavenumber"` is declared;
/// the applied factor is recorded in [`Model::unit_factor`].
pub fn parse_config(document: &str) -> Result<Model> {
    let doc: ConfigDoc = toml::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;

    let factor = match doc.unit.as_deref() {
        None | Some("angular") => 1.0,
        Some("wavenumber") => WAVENUMBER_TO_ANGULAR,
        Some(other) => {
            return Err(Error::Config {
                path: "unit".into(),
                message: format!("unknown unit `{other}` (expected `angular` or `wavenumber`)"),
            })
        }
    };

    let labels: Vec<String> = doc.sites.iter().map(|s| s.label.clone()).collect();
    let energies: Vec<f64> = doc.sites.iter().map(|s| s.energy * factor).collect();
    // Resolve coupling labels against a provisional network with no couplings.
    let skeleton = SiteNetwork::new(labels.clone(), energies.clone(), Vec::new())?;
    let mut couplings = Vec::with_capacity(doc.couplings.len());
    for (i, c) in doc.couplings.iter().enumerate() {
        let l = c.from.resolve(&skeleton, &format!("couplings[{i}].from"))?;
        let n = c.to.resolve(&skeleton, &format!("couplings[{i}].to"))?;
        couplings.push(Coupling {
            l,
            n,
            value: c.value * factor,
        });
    }
    let network = SiteNetwork::new(labels, energies, couplings)?;

    let mut dephasing = Vec::with_capacity(doc.dephasing.len());
    for (i, d) in doc.dephasing.into_iter().enumerate() {
        let path = format!("dephasing[{i}]");
        let site = d.site.resolve(&network, &format!("{path}.site"))?;
        let kind = channel_kind_from_doc(d.rate, d.modes, &path, factor)?;
        dephasing.push(DephasingChannel { site, kind });
    }
    let mut relaxation = Vec::with_capacity(doc.relaxation.len());
    for (i, r) in doc.relaxation.into_iter().enumerate() {
        let path = format!("relaxation[{i}]");
        let source = r.from.resolve(&network, &format!("{path}.from"))?;
        let target = r.to.resolve(&network, &format!("{path}.to"))?;
        let kind = channel_kind_from_doc(r.rate, r.modes, &path, factor)?;
        relaxation.push(RelaxationChannel {
            source,
            target,
            kind,
        });
    }
    let environment = EnvironmentSpec {
        dephasing,
        relaxation,
    };
    environment.validate(network.n_sites())?;

    let initial = match (doc.initial.site, doc.initial.sites, doc.initial.matrix) {
        (Some(s), None, None) => {
            InitialState::SingleSite(s.resolve(&network, "initial.site")?)
        }
        (None, Some(ss), None) => {
            let mut idx = Vec::with_capacity(ss.len());
            for (i, s) in ss.iter().enumerate() {
                idx.push(s.resolve(&network, &format!("initial.sites[{i}]"))?);
            }
            InitialState::UniformSites(idx)
        }
        (None, None, Some(rows)) => {
            let n = network.n_sites();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config {
                    path: "initial.matrix".into(),
                    message: format!("matrix must be {n}x{n}"),
                });
            }
            let mut m = Array2::zeros((n, n));
            for (i, row) in rows.iter().enumerate() {
                for (j, [re, im]) in row.iter().enumerate() {
                    m[(i, j)] = C64::new(*re, *im);
                }
            }
            InitialState::ExplicitMatrix(m)
        }
        _ => {
            return Err(Error::Config {
                path: "initial".into(),
                message: "specify exactly one of `site`, `sites`, `matrix`".into(),
            })
        }
    };
    // Validate the initial state eagerly so config errors surface at parse time.
    initial.density_matrix(network.n_sites())?;

    let run = RunParams {
        t_final: doc.run.t_final,
        dt_output: doc.run.dt_output,
        integrator: match (doc.run.integrator.dt, doc.run.integrator.rtol, doc.run.integrator.atol)
        {
            (Some(dt), None, None) => IntegratorSpec::FixedStep { dt },
            (None, Some(rtol), Some(atol)) => IntegratorSpec::Tolerances { rtol, atol },
            _ => {
                return Err(Error::Config {
                    path: "run.integrator".into(),
                    message: "specify either `dt` or both `rtol` and `atol`".into(),
                })
            }
        },
    };
    run.validate()?;

    Ok(Model {
        network,
        environment,
        initial,
        run,
        unit_factor: factor,
    })
}

/// Serialize a model back into a TOML document.
///
/// Energies are written in the already-converted angular-frequency units, so
/// the output carries no `unit` key and re-parses to an identical model.
fn split_kind(kind: &ChannelKind) -> (Option<f64>, Option<Vec<BathMode>>) {
    match kind {
        ChannelKind::Markovian { rate } => (Some(*rate), None),
        ChannelKind::NonMarkovian { modes } => (None, Some(modes.clone())),
    }
}

pub fn serialize_config(model: &Model) -> String {
    let net = &model.network;
    let doc = ConfigDoc {
        unit: None,
        sites: net
            .labels()
            .iter()
            .zip(net.energies())
            .map(|(l, e)| SiteDoc {
                label: l.clone(),
                energy: *e,
            })
            .collect(),
        couplings: net
            .couplings()
            .iter()
            .map(|c| CouplingDoc {
                from: SiteRef::Label(net.labels()[c.l].clone()),
                to: SiteRef::Label(net.labels()[c.n].clone()),
                value: c.value,
            })
            .collect(),
        dephasing: model
            .environment
            .dephasing
            .iter()
            .map(|d| {
                let (rate, modes) = split_kind(&d.kind);
                DephasingDoc {
                    site: SiteRef::Label(net.labels()[d.site].clone()),
                    rate,
                    modes,
                }
            })
            .collect(),
        relaxation: model
            .environment
            .relaxation
            .iter()
            .map(|r| {
                let (rate, modes) = split_kind(&r.kind);
                RelaxationDoc {
                    from: SiteRef::Label(net.labels()[r.source].clone()),
                    to: SiteRef::Label(net.labels()[r.target].clone()),
                    rate,
                    modes,
                }
            })
            .collect(),
        initial: match &model.initial {
            InitialState::SingleSite(s) => InitialDoc {
                site: Some(SiteRef::Label(net.labels()[*s].clone())),
                sites: None,
                matrix: None,
            },
            InitialState::UniformSites(ss) => InitialDoc {
                site: None,
                sites: Some(
                    ss.iter()
                        .map(|s| SiteRef::Label(net.labels()[*s].clone()))
                        .collect(),
                ),
                matrix: None,
            },
            InitialState::ExplicitMatrix(m) => InitialDoc {
                site: None,
                sites: None,
                matrix: Some(
                    (0..m.nrows())
                        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                        .collect(),
                ),
            },
        },
        run: RunDoc {
            t_final: model.run.t_final,
            dt_output: model.run.dt_output,
            integrator: match model.run.integrator {
                IntegratorSpec::FixedStep { dt } => IntegratorDoc {
                    dt: Some(dt),
                    rtol: None,
                    atol: None,
                },
                IntegratorSpec::Tolerances { rtol, atol } => IntegratorDoc {
                    dt: None,
                    rtol: Some(rtol),
                    atol: Some(atol),
                },
            },
        },
    };
    toml::to_string(&doc).expect("model serialization cannot fail")
}

/// Stable hex digest of the model (sha256 of its canonical serialization).
pub fn model_hash(model: &Model) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(serialize_config(model).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Identifies which channel a generator entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelId {
    Dephasing { site: usize },
    Relaxation { source: usize, target: usize },
}

/// One channel with its dense coupling operator and (for Markovian channels)
/// the constant auxiliary operator A = gamma/2 L.
#[derive(Debug, Clone)]
pub struct Channel {
    pub id: ChannelId,
    /// Coupling operator L: |n><n| for dephasing, |target><source| for relaxation.
    pub op: Array2<C64>,
    pub op_dag: Array2<C64>,
    pub kind: ChannelKind,
    /// gamma/2 L for Markovian channels; None otherwise.
    pub markov_aux: Option<Array2<C64>>,
    /// Index range of this channel's bath modes in the auxiliary state vector.
    pub mode_range: std::ops::Range<usize>,
}

/// Hamiltonian plus per-channel coupling operators and rate tables.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    n_sites: usize,
    hamiltonian: Array2<f64>,
    hamiltonian_c: Array2<C64>,
    channels: Vec<Channel>,
    n_modes: usize,
}

fn single_entry(n: usize, row: usize, col: usize) -> Array2<C64> {
    let mut m = Array2::zeros((n, n));
    m[(row, col)] = C64::new(1.0, 0.0);
    m
}

/// Build the dense Hamiltonian and all channel coupling operators.
pub fn build_generators(network: &SiteNetwork, env: &EnvironmentSpec) -> Result<GeneratorSet> {
    env.validate(network.n_sites())?;
    let n = network.n_sites();
    let hamiltonian = network.hamiltonian();
    let hamiltonian_c = hamiltonian.mapv(|x| C64::new(x, 0.0));

    let mut channels = Vec::new();
    let mut mode_cursor = 0usize;
    let mut push = |id: ChannelId, op: Array2<C64>, kind: &ChannelKind| {
        let op_dag = linalg::dagger(&op);
        let (markov_aux, mode_range) = match kind {
            ChannelKind::Markovian { rate } => {
                (Some(op.mapv(|z| z * 0.5 * rate)), mode_cursor..mode_cursor)
            }
            ChannelKind::NonMarkovian { modes } => {
                let r = mode_cursor..mode_cursor + modes.len();
                mode_cursor += modes.len();
                (None, r)
            }
        };
        channels.push(Channel {
            id,
            op,
            op_dag,
            kind: kind.clone(),
            markov_aux,
            mode_range,
        });
    };

    for d in &env.dephasing {
        push(
            ChannelId::Dephasing { site: d.site },
            single_entry(n, d.site, d.site),
            &d.kind,
        );
    }
    for r in &env.relaxation {
        // L = |target><source|: single 1 at (target row, source column).
        push(
            ChannelId::Relaxation {
                source: r.source,
                target: r.target,
            },
            single_entry(n, r.target, r.source),
            &r.kind,
        );
    }

    Ok(GeneratorSet {
        n_sites: n,
        hamiltonian,
        hamiltonian_c,
        channels,
        n_modes: mode_cursor,
    })
}

impl GeneratorSet {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn hamiltonian(&self) -> &Array2<f64> {
        &self.hamiltonian
    }

    pub fn hamiltonian_complex(&self) -> &Array2<C64> {
        &self.hamiltonian_c
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Total number of non-Markovian bath modes across all channels.
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn is_markovian(&self) -> bool {
        self.n_modes == 0
    }

    /// Markovian dephasing rate gamma_n^D for a site (0 if no such channel).
    /// Errors if the site carries a non-Markovian dephasing channel.
    pub fn dephasing_rate(&self, site: usize) -> Result<f64> {
        for ch in &self.channels {
            if ch.id == (ChannelId::Dephasing { site }) {
                return match &ch.kind {
                    ChannelKind::Markovian { rate } => Ok(*rate),
                    ChannelKind::NonMarkovian { .. } => Err(Error::Invalid(format!(
                        "site {site} carries a non-Markovian dephasing channel"
                    ))),
                };
            }
        }
        Ok(0.0)
    }

    /// Markovian relaxation rate gamma_{source,target}^R (0 if no channel).
    pub fn relaxation_rate(&self, source: usize, target: usize) -> Result<f64> {
        for ch in &self.channels {
            if ch.id == (ChannelId::Relaxation { source, target }) {
                return match &ch.kind {
                    ChannelKind::Markovian { rate } => Ok(*rate),
                    ChannelKind::NonMarkovian { .. } => Err(Error::Invalid(format!(
                        "pair ({source} -> {target}) carries a non-Markovian relaxation channel"
                    ))),
                };
            }
        }
        Ok(0.0)
    }
}
