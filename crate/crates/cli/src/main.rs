//! `pathflux` — offline pipeline for probability-current analysis:
//! `simulate` propagates a model to a trajectory file, `currents` computes
//! the current decompositions from a trajectory (including externally
//! produced ones), `pathways` integrates currents into a pathway graph, and
//! `check` runs the invariant suite on a model or trajectory.
//!
//! Exit codes: 0 success, 1 check failure, 2 validation/config error,
//! 3 numerical abort.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use pathflux::currents::{
    analytic_continuity_residual, continuity_residual, total_currents, unitary_bound_check,
};
use pathflux::io;
use pathflux::linalg;
use pathflux::model::{build_generators, model_hash, parse_config, IntegratorSpec, Model};
use pathflux::pathways::{build_pathway_graph, integrate_currents};
use pathflux::propagator::{propagate, propagate_aux, resolve_step, Trajectory};
use pathflux::{Error, GeneratorSet};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pathflux",
    version,
    about = "Probability-current analysis of excitation transport in open quantum networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one or more model configs to trajectory files.
    Simulate(SimulateArgs),
    /// Compute current decompositions from a trajectory file.
    Currents(CurrentsArgs),
    /// Integrate a currents file into a pathway graph (DOT + JSON).
    Pathways(PathwaysArgs),
    /// Run the invariant suite on a config (and optional trajectory).
    Check(CheckArgs),
}

#[derive(Args)]
struct OutDirArg {
    /// Output directory (default: current directory). The environment
    /// variable PATHFLUX_OUT_DIR overrides this flag.
    #[arg(long, global = false)]
    out_dir: Option<PathBuf>,
}

impl OutDirArg {
    fn resolve(&self) -> PathBuf {
        std::env::var_os("PATHFLUX_OUT_DIR")
            .map(PathBuf::from)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Model config file(s); each produces its own trajectory + manifest.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[command(flatten)]
    out: OutDirArg,
    /// Override the integrator step from the config.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the final time from the config.
    #[arg(long)]
    t_final: Option<f64>,
    /// Override the output grid spacing from the config.
    #[arg(long)]
    dt_output: Option<f64>,
    /// Trajectory file format.
    #[arg(long, value_parser = ["text", "binary"], default_value = "text")]
    format: String,
    /// Parallelize across configs (each run itself is single-threaded).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CurrentsArgs {
    /// Trajectory file (pathflux text/binary, or an ingested file in the
    /// documented text layout).
    #[arg(long)]
    trajectory: PathBuf,
    /// Model config the trajectory belongs to.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    out: OutDirArg,
    /// Step for reconstructing auxiliary operators of non-Markovian
    /// channels (default: the config's integrator step).
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct PathwaysArgs {
    /// Currents file produced by `pathflux currents`.
    #[arg(long)]
    currents: PathBuf,
    #[command(flatten)]
    out: OutDirArg,
    /// Window start time (default: first record time).
    #[arg(long)]
    t0: Option<f64>,
    /// Window length (default: to the last record time).
    #[arg(long)]
    window: Option<f64>,
    /// Minimum net transfer for an edge to appear in the graph.
    #[arg(long)]
    threshold: f64,
    /// Site-group file (TOML: name = [labels or indices]); emits
    /// group-to-group integrated currents as well.
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Model config to check.
    #[arg(long)]
    config: PathBuf,
    /// Check an existing trajectory against the model instead of
    /// propagating a fresh one.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Step for auxiliary-operator reconstruction on ingested
    /// trajectories of non-Markovian models.
    #[arg(long)]
    dt: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Currents(args) => cmd_currents(&args),
        Command::Pathways(args) => cmd_pathways(&args),
        Command::Check(args) => cmd_check(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pathflux: error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

fn load_model(path: &Path) -> Result<Model, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn integrator_tag(model: &Model) -> String {
    match model.run.integrator {
        IntegratorSpec::FixedStep { dt } => format!("rk4 dt={dt:e}"),
        IntegratorSpec::Tolerances { rtol, atol } => {
            format!("rk4 rtol={rtol:e} atol={atol:e}")
        }
    }
}

fn collect_warnings(traj: &Trajectory) -> Vec<String> {
    let mut warnings = Vec::new();
    for (t, ev) in traj.positivity_warnings() {
        warnings.push(format!(
            "positivity: min eigenvalue {ev:.3e} at t = {t:.6} (monitored, not enforced)"
        ));
    }
    let drift = traj.max_trace_drift();
    if drift > 1e-9 {
        warnings.push(format!("trace drift reached {drift:.3e}"));
    }
    warnings
}

fn run_one_simulation(
    config_path: &Path,
    args: &SimulateArgs,
    out_dir: &Path,
) -> Result<(), Error> {
    let started = Instant::now();
    let mut model = load_model(config_path)?;
    if let Some(dt) = args.dt {
        model.run.integrator = IntegratorSpec::FixedStep { dt };
    }
    if let Some(t_final) = args.t_final {
        model.run.t_final = t_final;
    }
    if let Some(dt_output) = args.dt_output {
        model.run.dt_output = dt_output;
    }
    model.run.validate()?;
    let gen = build_generators(&model.network, &model.environment)?;
    let rho0 = model.initial.density_matrix(model.n_sites())?;
    let traj = propagate(&rho0, &gen, &model.run)?;

    let base = stem(config_path);
    let manifest_name = format!("{base}.manifest.json");
    let header = io::TrajectoryHeader {
        model_hash: model_hash(&model),
        n_sites: model.n_sites(),
        labels: model.network.labels().to_vec(),
        integrator: integrator_tag(&model),
        manifest: Some(manifest_name.clone()),
    };
    std::fs::create_dir_all(out_dir)?;
    let traj_path = if args.format == "binary" {
        let p = out_dir.join(format!("{base}.traj.bin"));
        std::fs::write(&p, io::write_trajectory_binary(&traj, &header))?;
        p
    } else {
        let p = out_dir.join(format!("{base}.traj.txt"));
        std::fs::write(&p, io::write_trajectory_text(&traj, &header))?;
        p
    };
    let warnings = collect_warnings(&traj);
    for w in &warnings {
        eprintln!("pathflux: warning [{base}]: {w}");
    }
    let manifest = io::Manifest {
        tool: "pathflux".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: format!(
            "simulate --config {} --format {}",
            config_path.display(),
            args.format
        ),
        model_hash: header.model_hash.clone(),
        parameters: serde_json::json!({
            "t_final": model.run.t_final,
            "dt_output": model.run.dt_output,
            "integrator": header.integrator,
            "step": resolve_step(&gen, &model.run),
        }),
        wall_time_s: started.elapsed().as_secs_f64(),
        warnings,
    };
    std::fs::write(out_dir.join(&manifest_name), manifest.to_json())?;
    println!(
        "{}: {} output times -> {}",
        base,
        traj.len(),
        traj_path.display()
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode, Error> {
    let out_dir = args.out.resolve();
    if args.jobs <= 1 || args.config.len() <= 1 {
        for config in &args.config {
            run_one_simulation(config, args, &out_dir)?;
        }
        return Ok(ExitCode::SUCCESS);
    }
    // Parameter sweeps: independent configs, no shared mutable state.
    let mut first_err: Option<Error> = None;
    std::thread::scope(|scope| {
        let mut pending: Vec<_> = args.config.iter().collect();
        while !pending.is_empty() {
            let batch: Vec<_> = pending
                .drain(..pending.len().min(args.jobs))
                .collect();
            let handles: Vec<_> = batch
                .into_iter()
                .map(|config| {
                    let out_dir = out_dir.clone();
                    scope.spawn(move || run_one_simulation(config, args, &out_dir))
                })
                .collect();
            for h in handles {
                if let Err(e) = h.join().expect("simulation thread panicked") {
                    if first_err.is_none() {
                        first_err = Some(e);
                    }
                }
            }
        }
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(ExitCode::SUCCESS),
    }
}

/// Load a trajectory and the matching generators; reconstructs auxiliary
/// operators for non-Markovian models (their evolution is independent of
/// rho, so this works for ingested trajectories too).
fn load_run(
    trajectory: &Path,
    config: &Path,
    dt_flag: Option<f64>,
) -> Result<(Model, GeneratorSet, Trajectory, io::TrajectoryHeader), Error> {
    let model = load_model(config)?;
    let gen = build_generators(&model.network, &model.environment)?;
    let bytes = std::fs::read(trajectory)?;
    let (mut traj, header) = io::read_trajectory(&bytes)?;
    if header.n_sites != model.n_sites() {
        return Err(Error::Dimension {
            expected: model.n_sites(),
            found: header.n_sites,
        });
    }
    if !header.model_hash.is_empty() && header.model_hash != model_hash(&model) {
        eprintln!(
            "pathflux: warning: trajectory model hash {} does not match config hash {}",
            header.model_hash,
            model_hash(&model)
        );
    }
    if !gen.is_markovian() {
        let dt = dt_flag.unwrap_or_else(|| resolve_step(&gen, &model.run));
        traj.aux = Some(propagate_aux(&gen, &traj.times, dt)?);
    }
    Ok((model, gen, traj, header))
}

fn cmd_currents(args: &CurrentsArgs) -> Result<ExitCode, Error> {
    let (_, gen, traj, header) = load_run(&args.trajectory, &args.config, args.dt)?;
    let records = total_currents(&traj, &gen)?;

    let out_dir = args.out.resolve();
    std::fs::create_dir_all(&out_dir)?;
    let out_path = out_dir.join(format!("{}.currents.txt", stem(&args.trajectory)));
    std::fs::write(&out_path, io::write_currents_text(&records, &header))?;

    let max_dephas = records
        .iter()
        .flat_map(|r| r.j_dephas_check.iter())
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    println!("currents -> {}", out_path.display());
    println!("max |j_dephas_check| = {max_dephas:.3e}");
    if traj.len() >= 3 {
        let fd = continuity_residual(&traj, &records)?;
        let analytic = analytic_continuity_residual(&traj, &gen, &records)?;
        println!(
            "continuity residual: {:.3e} (central differences, at t = {:.6}, site {}; \
             O(dt^2) constant ~ {:.3e}), {:.3e} (analytic generator)",
            fd.max_residual, fd.at_time, fd.at_site, fd.estimated_constant, analytic
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_pathways(args: &PathwaysArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&args.currents)?;
    let (records, header) = io::read_currents_text(&text)?;
    let t_first = records.first().map(|r| r.time).unwrap_or(0.0);
    let t_last = records.last().map(|r| r.time).unwrap_or(0.0);
    let t0 = args.t0.unwrap_or(t_first);
    let t1 = match args.window {
        Some(w) => t0 + w,
        None => t_last,
    };
    let integrated = integrate_currents(&records, (t0, t1))?;
    let labels = if header.labels.len() == header.n_sites {
        header.labels.clone()
    } else {
        (0..header.n_sites).map(|i| format!("site{i}")).collect()
    };
    let graph = build_pathway_graph(&integrated, &labels, args.threshold)?;
    if graph.edges.is_empty() {
        eprintln!(
            "pathflux: warning: no net transfer above threshold {:e} in window [{t0}, {t1}]",
            args.threshold
        );
    }

    let out_dir = args.out.resolve();
    std::fs::create_dir_all(&out_dir)?;
    let base = stem(&args.currents);
    let dot_path = out_dir.join(format!("{base}.dot"));
    std::fs::write(&dot_path, graph.to_dot())?;
    let json_path = out_dir.join(format!("{base}.graph.json"));
    std::fs::write(&json_path, graph.to_json())?;
    println!("pathway graph -> {} and {}", dot_path.display(), json_path.display());

    if let Some(groups_path) = &args.groups {
        let groups_text = std::fs::read_to_string(groups_path)?;
        let groups = io::parse_groups(&groups_text, &labels)?;
        let mut report = String::from("# pathflux group currents v1\n");
        report.push_str(&format!("# window = [{t0:e}, {t1:e}]\n"));
        report.push_str("# columns = from_group to_group net_transfer\n");
        for a in &groups {
            for b in &groups {
                if a.name == b.name || a.sites.intersection(&b.sites).next().is_some() {
                    continue;
                }
                let mut net = 0.0_f64;
                for l in &a.sites {
                    for n in &b.sites {
                        net += integrated.net[(*l, *n)];
                    }
                }
                report.push_str(&format!("{} {} {:e}\n", a.name, b.name, net));
            }
        }
        let groups_out = out_dir.join(format!("{base}.groups.txt"));
        std::fs::write(&groups_out, report)?;
        println!("group currents -> {}", groups_out.display());
    }
    Ok(ExitCode::SUCCESS)
}

struct CheckTable {
    failed: bool,
}

impl CheckTable {
    fn new() -> Self {
        CheckTable { failed: false }
    }
    fn row(&mut self, name: &str, pass: bool, detail: String) {
        println!("CHECK {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed = true;
        }
    }
    fn warn(&self, name: &str, detail: String) {
        println!("CHECK {name}: WARNING ({detail})");
    }
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode, Error> {
    let model = load_model(&args.config)?;
    let gen = build_generators(&model.network, &model.environment)?;
    let traj = match &args.trajectory {
        Some(path) => {
            let (_, _, traj, _) = load_run(path, &args.config, args.dt)?;
            traj
        }
        None => {
            let rho0 = model.initial.density_matrix(model.n_sites())?;
            propagate(&rho0, &gen, &model.run)?
        }
    };
    let records = total_currents(&traj, &gen)?;
    let mut table = CheckTable::new();

    // Trace conservation (trace-preserving channel set assumed).
    let drift = traj.max_trace_drift();
    table.row("trace-conservation", drift <= 1e-8, format!("max drift {drift:.3e}"));

    // Hermiticity of every stored state.
    let herm = traj
        .states
        .iter()
        .map(linalg::hermiticity_defect)
        .fold(0.0_f64, f64::max);
    table.row("hermiticity", herm <= 1e-10, format!("max defect {herm:.3e}"));

    // Positivity is monitored, never a failure.
    let min_ev = traj
        .min_eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, b| a.min(*b));
    if min_ev < -1e-6 {
        table.warn(
            "positivity",
            format!("min eigenvalue {min_ev:.3e} (transient negativity tolerated)"),
        );
    } else {
        println!("CHECK positivity: PASS (min eigenvalue {min_ev:.3e})");
    }

    // Continuity: the finite-difference residual must stay small relative to
    // the scale of the currents themselves (O(dt_output^2) differencing
    // error is expected; a corrupted trajectory breaks this by orders of
    // magnitude).
    if traj.len() >= 3 {
        let fd = continuity_residual(&traj, &records)?;
        let scale = records
            .iter()
            .flat_map(|r| r.j_total.iter())
            .fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let allowed = 0.05 * scale + 1e-9;
        table.row(
            "continuity",
            fd.max_residual <= allowed,
            format!(
                "residual {:.3e} at t = {:.6} (allowed {:.3e})",
                fd.max_residual, fd.at_time, allowed
            ),
        );
    }

    // Zero dephasing current.
    let max_dephas = records
        .iter()
        .flat_map(|r| r.j_dephas_check.iter())
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    table.row(
        "zero-dephasing-current",
        max_dephas <= 1e-12,
        format!("max |j_dephas| {max_dephas:.3e}"),
    );

    // Unitary bound on PSD states.
    let mut bound_worst = 0.0_f64;
    for (rho, ev) in traj.states.iter().zip(&traj.min_eigenvalues) {
        if *ev < -1e-9 {
            continue;
        }
        for l in 0..gen.n_sites() {
            for n in (l + 1)..gen.n_sites() {
                let chk = unitary_bound_check(rho, gen.hamiltonian(), l, n)?;
                bound_worst = bound_worst.max(chk.magnitude - chk.bound);
            }
        }
    }
    table.row(
        "unitary-bound",
        bound_worst <= 1e-10,
        format!("max excess {bound_worst:.3e}"),
    );

    // Decomposition closures.
    let mut mech = 0.0_f64;
    let mut split = 0.0_f64;
    for rec in &records {
        let sum = &rec.j_unitary + &rec.j_dephas_check + &rec.j_relax;
        mech = mech.max(linalg::max_abs_diff_real(&rec.j_total, &sum));
        let ps = &rec.j_pop + &rec.j_coher;
        split = split.max(linalg::max_abs_diff_real(&rec.j_total, &ps));
    }
    table.row(
        "decomposition-closure",
        mech <= 1e-12 && split <= 1e-10,
        format!("mechanism {mech:.3e}, pop/coher {split:.3e}"),
    );

    if table.failed {
        Ok(ExitCode::from(EXIT_CHECK_FAILED))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
