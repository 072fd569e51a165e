//! pathflux — probability-current analysis of excitation transport in
//! open quantum networks.
//!
//! The crate propagates the reduced density matrix of a coupled-site
//! network under a Markovian (Lindblad) or convolutionless non-Markovian
//! master equation, decomposes the inter-site probability currents by
//! mechanism (unitary / dephasing / relaxation) and by density-matrix
//! origin (population / coherence), and time-integrates them into pathway
//! graphs.
//!
//! Module map:
//! - [`model`]: configuration schema, validation, Hamiltonian and channel
//!   (generator) construction.
//! - [`propagator`]: fixed-step RK4 integration of the master equation,
//!   including the time-dependent auxiliary operators of non-Markovian
//!   baths.
//! - [`currents`]: the current decompositions and their invariants.
//! - [`pathways`]: windowed time integration and graph export.
//! - [`io`]: trajectory/currents file formats and run manifests.
//! - [`oracle`]: slow, independent reference solutions for tests; never
//!   called by the production pipeline.

pub mod currents;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pathways;
pub mod propagator;

pub use currents::{
    ContinuityReport, CurrentRecord, MarkovianDiagnostics, PairCoherenceRhs, SubComplex,
    UnitaryBound,
};
pub use error::{Error, Result};
pub use io::{Manifest, TrajectoryHeader};
pub use model::{
    build_generators, model_hash, parse_config, serialize_config, BathMode, Channel, ChannelId,
    ChannelKind, Coupling, DephasingChannel, EnvironmentSpec, GeneratorSet, InitialState,
    IntegratorSpec, Model, RelaxationChannel, RunParams, SiteNetwork,
};
pub use pathways::{IntegratedCurrents, PathwayEdge, PathwayGraph};
pub use propagator::{propagate, propagate_aux, AuxOperators, Trajectory};
