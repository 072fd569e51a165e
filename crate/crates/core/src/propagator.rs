//! Master-equation time integration.
//!
//! Two right-hand sides are provided:
//!
//! * [`GeneratorSet::lindblad_rhs`] — the Markovian Lindblad generator
//!   d rho/dt = -i[H, rho] + sum_k gamma_k (L rho L^dag - 1/2 {L^dag L, rho}).
//! * [`GeneratorSet::zofe_rhs`] — the convolutionless non-Markovian generator
//!   in which each channel's non-unitary term reads
//!   L rho A^dag + A rho L^dag - L^dag A rho - rho A^dag L
//!   with a time-dependent auxiliary operator A(t) per channel.
//!
//! For an exponential bath mode alpha(t) = g exp(-w t), w = gamma + i omega,
//! the per-mode auxiliary matrix follows the zeroth-order closure
//!
//!   dA/dt = g L - w A - i [H, A],      A(0) = 0,
//!
//! which is exact for pure dephasing at zero inter-site coupling and relaxes
//! to the constant gamma_rate/2 L of the Markov limit (with
//! g = gamma_rate * gamma / 2) as gamma grows. The auxiliary evolution is
//! independent of rho, so auxiliary operators can also be reconstructed
//! offline for an ingested trajectory (see [`propagate_aux`]).
//!
//! Markovian channels carry the constant auxiliary operator gamma/2 L, under
//! which the convolutionless form reduces to the Lindblad form exactly.
//!
//! Integration is fixed-step classical RK4 over the joint state
//! (rho, all auxiliary matrices); rho is re-Hermitized after every step.
//! Positivity of rho is monitored but never enforced: convolutionless
//! dynamics may transiently violate it.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ChannelId, ChannelKind, GeneratorSet, IntegratorSpec, RunParams};

/// Integration aborts when |trace(rho) - 1| exceeds this.
pub const TRACE_DRIFT_ABORT: f64 = 1e-6;
/// Smallest eigenvalues below this are reported as positivity warnings.
pub const POSITIVITY_WARN_THRESHOLD: f64 = -1e-6;

const I: C64 = C64::new(0.0, 1.0);

/// Per-mode auxiliary matrices, laid out per [`crate::model::Channel::mode_range`].
/// A channel's auxiliary operator is the sum of its modes.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxOperators {
    pub modes: Vec<Array2<C64>>,
}

impl AuxOperators {
    /// No non-Markovian modes (fully Markovian model).
    pub fn empty() -> Self {
        AuxOperators { modes: Vec::new() }
    }
}

/// Time grid, density matrices, and (for non-Markovian runs) auxiliary
/// operators sampled on the output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array2<C64>>,
    pub aux: Option<Vec<AuxOperators>>,
    /// Smallest eigenvalue of rho at each output time (positivity monitor).
    pub min_eigenvalues: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.states.first().map_or(0, |s| s.nrows())
    }

    /// Output times at which rho dipped below the positivity warning threshold.
    pub fn positivity_warnings(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.min_eigenvalues)
            .filter(|(_, ev)| **ev < POSITIVITY_WARN_THRESHOLD)
            .map(|(t, ev)| (*t, *ev))
            .collect()
    }

    /// Worst trace drift max_k |trace(rho_k) - 1|.
    pub fn max_trace_drift(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (linalg::trace(s).re - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl GeneratorSet {
    /// All-zero auxiliary matrices (the t = 0 condition: environment
    /// initially uncorrelated with the system).
    pub fn initial_aux(&self) -> AuxOperators {
        let n = self.n_sites();
        AuxOperators {
            modes: vec![Array2::zeros((n, n)); self.n_modes()],
        }
    }

    /// The auxiliary operator of one channel: the Markovian constant
    /// gamma/2 L, or the sum of the channel's per-mode matrices.
    pub fn channel_aux(
        &self,
        ch: &crate::model::Channel,
        aux: &AuxOperators,
    ) -> Array2<C64> {
        match &ch.markov_aux {
            Some(a) => a.clone(),
            None => {
                let n = self.n_sites();
                let mut sum = Array2::zeros((n, n));
                for k in ch.mode_range.clone() {
                    sum += &aux.modes[k];
                }
                sum
            }
        }
    }

    /// Auxiliary operator of the relaxation channel source -> target, if any.
    pub fn relax_aux(
        &self,
        source: usize,
        target: usize,
        aux: &AuxOperators,
    ) -> Option<Array2<C64>> {
        self.channels()
            .iter()
            .find(|ch| ch.id == (ChannelId::Relaxation { source, target }))
            .map(|ch| self.channel_aux(ch, aux))
    }

    /// Markovian Lindblad right-hand side. Errors if any channel is
    /// non-Markovian (use [`GeneratorSet::zofe_rhs`] instead).
    pub fn lindblad_rhs(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        if !self.is_markovian() {
            return Err(Error::Invalid(
                "non-Markovian channel present; use zofe_rhs".into(),
            ));
        }
        let mut out = linalg::commutator(self.hamiltonian_complex(), rho).mapv(|z| -I * z);
        for ch in self.channels() {
            let rate = match &ch.kind {
                ChannelKind::Markovian { rate } => *rate,
                ChannelKind::NonMarkovian { .. } => unreachable!(),
            };
            if rate == 0.0 {
                continue;
            }
            let ldl = ch.op_dag.dot(&ch.op);
            let sandwich = ch.op.dot(rho).dot(&ch.op_dag);
            let anti = ldl.dot(rho) + rho.dot(&ldl);
            out = out + (sandwich - anti.mapv(|z| 0.5 * z)).mapv(|z| rate * z);
        }
        Ok(out)
    }

    /// Non-unitary part of the convolutionless generator for an arbitrary
    /// subset of channels, given the current auxiliary operators.
    fn nonunitary_term<F: Fn(&crate::model::Channel) -> bool>(
        &self,
        rho: &Array2<C64>,
        aux: &AuxOperators,
        select: F,
    ) -> Array2<C64> {
        let n = self.n_sites();
        let mut acc: Array2<C64> = Array2::zeros((n, n));
        for ch in self.channels() {
            if !select(ch) {
                continue;
            }
            let a = self.channel_aux(ch, aux);
            let a_dag = linalg::dagger(&a);
            let x = rho.dot(&a_dag); // rho A^dag
            let y = a.dot(rho); // A rho
            acc = acc + ch.op.dot(&x) + y.dot(&ch.op_dag) - ch.op_dag.dot(&y) - x.dot(&ch.op);
        }
        acc
    }

    /// Convolutionless right-hand side over the joint state: returns the
    /// derivative of rho and of every auxiliary mode matrix.
    pub fn zofe_rhs(&self, rho: &Array2<C64>, aux: &AuxOperators) -> (Array2<C64>, AuxOperators) {
        let rho_dot = linalg::commutator(self.hamiltonian_complex(), rho).mapv(|z| -I * z)
            + self.nonunitary_term(rho, aux, |_| true);
        let mut mode_dots = vec![Array2::zeros((0, 0)); self.n_modes()];
        let h = self.hamiltonian_complex();
        for ch in self.channels() {
            if let ChannelKind::NonMarkovian { modes } = &ch.kind {
                for (mode, k) in modes.iter().zip(ch.mode_range.clone()) {
                    let a = &aux.modes[k];
                    let w = mode.decay();
                    mode_dots[k] = ch.op.mapv(|z| mode.g * z)
                        - a.mapv(|z| w * z)
                        - linalg::commutator(h, a).mapv(|z| I * z);
                }
            }
        }
        (rho_dot, AuxOperators { modes: mode_dots })
    }

    /// Numerically evaluates <n| L_Dephas(rho) |n> for every site from the
    /// convolutionless dephasing term. The paper's zero-dephasing-current
    /// result says these vanish for projector couplings regardless of the
    /// auxiliary operators; this evaluation exists to verify that at runtime.
    pub fn dephasing_diagonal(&self, rho: &Array2<C64>, aux: &AuxOperators) -> Vec<f64> {
        let term = self.nonunitary_term(rho, aux, |ch| {
            matches!(ch.id, ChannelId::Dephasing { .. })
        });
        term.diag().iter().map(|z| z.re).collect()
    }
}

/// Pick the RK4 step for the requested integrator settings.
///
/// For tolerance-based requests the step is derived from a crude rate scale
/// (max |H| row sum plus channel rates) so that the 4th-order local error
/// estimate stays near the requested tolerance; fixed `dt` is recommended
/// for production runs.
pub fn resolve_step(gen: &GeneratorSet, run: &RunParams) -> f64 {
    match run.integrator {
        IntegratorSpec::FixedStep { dt } => dt.min(run.dt_output),
        IntegratorSpec::Tolerances { rtol, atol } => {
            let h = gen.hamiltonian();
            let n = gen.n_sites();
            let mut scale = 0.0_f64;
            for i in 0..n {
                let row: f64 = (0..n).map(|j| h[(i, j)].abs()).sum();
                scale = scale.max(row);
            }
            for ch in gen.channels() {
                match &ch.kind {
                    ChannelKind::Markovian { rate } => scale += rate,
                    ChannelKind::NonMarkovian { modes } => {
                        for m in modes {
                            scale += (m.g / m.gamma).max(m.gamma * 0.1);
                        }
                    }
                }
            }
            let tol = rtol.min(atol).max(1e-15);
            let dt = tol.powf(0.25) / scale.max(1e-12);
            dt.min(run.dt_output)
        }
    }
}

struct Deriv {
    rho: Array2<C64>,
    modes: Vec<Array2<C64>>,
}

fn eval_rhs(gen: &GeneratorSet, rho: &Array2<C64>, aux: &AuxOperators) -> Result<Deriv> {
    if gen.is_markovian() {
        Ok(Deriv {
            rho: gen.lindblad_rhs(rho)?,
            modes: Vec::new(),
        })
    } else {
        let (r, a) = gen.zofe_rhs(rho, aux);
        Ok(Deriv { rho: r, modes: a.modes })
    }
}

fn shifted(
    rho: &Array2<C64>,
    aux: &AuxOperators,
    k: &Deriv,
    step: f64,
) -> (Array2<C64>, AuxOperators) {
    let s = C64::new(step, 0.0);
    let rho2 = rho + &k.rho.mapv(|z| s * z);
    let modes2 = aux
        .modes
        .iter()
        .zip(&k.modes)
        .map(|(a, d)| a + &d.mapv(|z| s * z))
        .collect();
    (rho2, AuxOperators { modes: modes2 })
}

fn rk4_step(
    gen: &GeneratorSet,
    rho: &mut Array2<C64>,
    aux: &mut AuxOperators,
    h: f64,
) -> Result<()> {
    let k1 = eval_rhs(gen, rho, aux)?;
    let (r2, a2) = shifted(rho, aux, &k1, 0.5 * h);
    let k2 = eval_rhs(gen, &r2, &a2)?;
    let (r3, a3) = shifted(rho, aux, &k2, 0.5 * h);
    let k3 = eval_rhs(gen, &r3, &a3)?;
    let (r4, a4) = shifted(rho, aux, &k3, h);
    let k4 = eval_rhs(gen, &r4, &a4)?;

    let w = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    *rho = &*rho + &(&k1.rho + &(k2.rho.mapv(|z| two * z)) + &(k3.rho.mapv(|z| two * z)) + &k4.rho)
        .mapv(|z| w * z);
    for (idx, a) in aux.modes.iter_mut().enumerate() {
        *a = &*a
            + &(&k1.modes[idx]
                + &(k2.modes[idx].mapv(|z| two * z))
                + &(k3.modes[idx].mapv(|z| two * z))
                + &k4.modes[idx])
                .mapv(|z| w * z);
    }
    linalg::hermitize(rho);
    Ok(())
}

/// Output grid: multiples of dt_output up to t_final, with t_final appended
/// when it does not align with the grid.
fn output_times(run: &RunParams) -> Vec<f64> {
    let mut times = vec![0.0];
    if run.t_final <= 0.0 {
        return times;
    }
    let n_out = (run.t_final / run.dt_output + 1e-9).floor() as usize;
    for k in 1..=n_out {
        times.push(k as f64 * run.dt_output);
    }
    let last = *times.last().unwrap();
    if run.t_final - last > 1e-9 * run.dt_output {
        times.push(run.t_final);
    }
    times
}

/// Integrate the master equation from `rho0` over the run's output grid.
///
/// Aborts with [`Error::Numerical`] on NaN/Inf or when the trace drifts by
/// more than [`TRACE_DRIFT_ABORT`].
pub fn propagate(rho0: &Array2<C64>, gen: &GeneratorSet, run: &RunParams) -> Result<Trajectory> {
    run.validate()?;
    let n = gen.n_sites();
    if rho0.nrows() != n || rho0.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: rho0.nrows(),
        });
    }
    let dt = resolve_step(gen, run);
    let times = output_times(run);
    let non_markovian = !gen.is_markovian();

    let mut rho = rho0.clone();
    linalg::hermitize(&mut rho);
    let mut aux = gen.initial_aux();

    let mut states = Vec::with_capacity(times.len());
    let mut aux_out = if non_markovian {
        Some(Vec::with_capacity(times.len()))
    } else {
        None
    };
    let mut min_eigenvalues = Vec::with_capacity(times.len());

    let record =
        |rho: &Array2<C64>, aux: &AuxOperators, states: &mut Vec<Array2<C64>>,
         aux_out: &mut Option<Vec<AuxOperators>>, min_eigenvalues: &mut Vec<f64>| {
            states.push(rho.clone());
            if let Some(out) = aux_out {
                out.push(aux.clone());
            }
            min_eigenvalues.push(linalg::min_eigval_hermitian(rho));
        };

    record(&rho, &aux, &mut states, &mut aux_out, &mut min_eigenvalues);

    for window in times.windows(2) {
        let (t_prev, t_next) = (window[0], window[1]);
        let span = t_next - t_prev;
        let n_sub = (span / dt - 1e-12).ceil().max(1.0) as usize;
        let h = span / n_sub as f64;
        for _ in 0..n_sub {
            rk4_step(gen, &mut rho, &mut aux, h)?;
        }
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical {
                message: "state became NaN/Inf (step size too large?)".into(),
                last_good_time: t_prev,
            });
        }
        let drift = (linalg::trace(&rho).re - 1.0).abs();
        if drift > TRACE_DRIFT_ABORT {
            return Err(Error::Numerical {
                message: format!("trace drift {drift:.3e} exceeds {TRACE_DRIFT_ABORT:.0e}"),
                last_good_time: t_prev,
            });
        }
        record(&rho, &aux, &mut states, &mut aux_out, &mut min_eigenvalues);
    }

    Ok(Trajectory {
        times,
        states,
        aux: aux_out,
        min_eigenvalues,
    })
}

/// Integrate the auxiliary-operator ODE alone on an arbitrary time grid.
///
/// The auxiliary evolution is independent of rho, so the auxiliary operators
/// belonging to an ingested trajectory can be reconstructed from the model
/// alone. `dt` is the RK4 sub-step. `times` must be strictly increasing and
/// start at t >= 0; integration starts from A(0) = 0.
pub fn propagate_aux(gen: &GeneratorSet, times: &[f64], dt: f64) -> Result<Vec<AuxOperators>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Invalid("aux integration step must be > 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::Invalid(
            "trajectory times must be non-negative and strictly increasing".into(),
        ));
    }
    if gen.is_markovian() {
        return Ok(vec![AuxOperators::empty(); times.len()]);
    }
    let h_c = gen.hamiltonian_complex();
    let mode_rhs = |aux: &AuxOperators| -> Vec<Array2<C64>> {
        let mut dots = vec![Array2::zeros((0, 0)); gen.n_modes()];
        for ch in gen.channels() {
            if let ChannelKind::NonMarkovian { modes } = &ch.kind {
                for (mode, k) in modes.iter().zip(ch.mode_range.clone()) {
                    let a = &aux.modes[k];
                    let w = mode.decay();
                    dots[k] = ch.op.mapv(|z| mode.g * z)
                        - a.mapv(|z| w * z)
                        - linalg::commutator(h_c, a).mapv(|z| I * z);
                }
            }
        }
        dots
    };
    let step = |aux: &mut AuxOperators, h: f64| {
        let k1 = mode_rhs(aux);
        let mk = |base: &AuxOperators, k: &[Array2<C64>], s: f64| AuxOperators {
            modes: base
                .modes
                .iter()
                .zip(k)
                .map(|(a, d)| a + &d.mapv(|z| C64::new(s, 0.0) * z))
                .collect(),
        };
        let k2 = mode_rhs(&mk(aux, &k1, 0.5 * h));
        let k3 = mode_rhs(&mk(aux, &k2, 0.5 * h));
        let k4 = mode_rhs(&mk(aux, &k3, h));
        let w = C64::new(h / 6.0, 0.0);
        let two = C64::new(2.0, 0.0);
        for (idx, a) in aux.modes.iter_mut().enumerate() {
            *a = &*a
                + &(&k1[idx] + &(k2[idx].mapv(|z| two * z)) + &(k3[idx].mapv(|z| two * z))
                    + &k4[idx])
                    .mapv(|z| w * z);
        }
    };

    let mut aux = gen.initial_aux();
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    for &t in times {
        let span = t - t_prev;
        if span > 0.0 {
            let n_sub = (span / dt - 1e-12).ceil().max(1.0) as usize;
            let h = span / n_sub as f64;
            for _ in 0..n_sub {
                step(&mut aux, h);
            }
        }
        out.push(aux.clone());
        t_prev = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_generators, BathMode, ChannelKind, Coupling, DephasingChannel, EnvironmentSpec,
        RelaxationChannel, SiteNetwork,
    };
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn dimer(v: f64) -> SiteNetwork {
        SiteNetwork::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![Coupling { l: 0, n: 1, value: v }],
        )
        .unwrap()
    }

    fn fixed(dt: f64, t_final: f64, dt_output: f64) -> RunParams {
        RunParams {
            t_final,
            dt_output,
            integrator: IntegratorSpec::FixedStep { dt },
        }
    }

    #[test]
    fn closed_dimer_commutator_by_hand() {
        // H = [[0,1],[1,0]], rho = |0><0|: -i[H, rho] = [[0, i], [-i, 0]].
        let gen = build_generators(&dimer(1.0), &EnvironmentSpec::default()).unwrap();
        let rho = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let d = gen.lindblad_rhs(&rho).unwrap();
        assert!((d[(0, 0)]).norm() < 1e-15);
        assert!((d[(1, 1)]).norm() < 1e-15);
        assert!((d[(0, 1)] - c(0.0, 1.0)).norm() < 1e-15);
        assert!((d[(1, 0)] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn pure_dephasing_leaves_diagonal_untouched() {
        let net = SiteNetwork::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![]).unwrap();
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::Markovian { rate: 0.7 },
            }],
            relaxation: vec![],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho = array![[c(0.3, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.7, 0.0)]];
        let d = gen.lindblad_rhs(&rho).unwrap();
        assert_eq!(d[(0, 0)], c(0.0, 0.0));
        assert_eq!(d[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn markovian_relaxation_is_a_rate_equation() {
        let net = SiteNetwork::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![]).unwrap();
        let env = EnvironmentSpec {
            dephasing: vec![],
            relaxation: vec![RelaxationChannel {
                source: 1,
                target: 0,
                kind: ChannelKind::Markovian { rate: 0.2 },
            }],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let d = gen.lindblad_rhs(&rho).unwrap();
        assert!((d[(0, 0)] - c(0.2, 0.0)).norm() < 1e-15);
        assert!((d[(1, 1)] - c(-0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn lindblad_rhs_rejects_non_markovian_channels() {
        let net = SiteNetwork::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![]).unwrap();
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::NonMarkovian {
                    modes: vec![BathMode {
                        g: 1.0,
                        gamma: 1.0,
                        omega: 0.0,
                    }],
                },
            }],
            relaxation: vec![],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        assert!(gen.lindblad_rhs(&rho).is_err());
    }

    #[test]
    fn zofe_with_zero_aux_has_no_non_unitary_part() {
        let net = dimer(0.8);
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::NonMarkovian {
                    modes: vec![BathMode {
                        g: 2.0,
                        gamma: 1.5,
                        omega: 0.3,
                    }],
                },
            }],
            relaxation: vec![],
        };
        let gen = build_generators(&net, &env).unwrap();
        let closed = build_generators(&net, &EnvironmentSpec::default()).unwrap();
        let rho = array![[c(0.6, 0.0), c(0.2, 0.1)], [c(0.2, -0.1), c(0.4, 0.0)]];
        let aux = gen.initial_aux();
        let (rho_dot, _) = gen.zofe_rhs(&rho, &aux);
        let unitary = closed.lindblad_rhs(&rho).unwrap();
        assert!(linalg::max_abs_diff(&rho_dot, &unitary) == 0.0);
    }

    #[test]
    fn zofe_with_markovian_constants_matches_lindblad() {
        let net = dimer(1.0);
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 1,
                kind: ChannelKind::Markovian { rate: 0.4 },
            }],
            relaxation: vec![RelaxationChannel {
                source: 0,
                target: 1,
                kind: ChannelKind::Markovian { rate: 0.15 },
            }],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho = array![[c(0.55, 0.0), c(0.1, -0.2)], [c(0.1, 0.2), c(0.45, 0.0)]];
        let (zofe, _) = gen.zofe_rhs(&rho, &gen.initial_aux());
        let lind = gen.lindblad_rhs(&rho).unwrap();
        assert!(linalg::max_abs_diff(&zofe, &lind) < 1e-14);
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let net = dimer(1.0);
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::Markovian { rate: 0.3 },
            }],
            relaxation: vec![RelaxationChannel {
                source: 1,
                target: 0,
                kind: ChannelKind::Markovian { rate: 0.2 },
            }],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho = array![[c(0.7, 0.0), c(0.05, 0.15)], [c(0.05, -0.15), c(0.3, 0.0)]];
        let d = gen.lindblad_rhs(&rho).unwrap();
        assert!(linalg::trace(&d).norm() < 1e-12);
        assert!(linalg::hermiticity_defect(&d) < 1e-15);
    }

    #[test]
    fn zofe_dephasing_only_trace_derivative_vanishes() {
        let net = dimer(0.9);
        let env = EnvironmentSpec {
            dephasing: vec![
                DephasingChannel {
                    site: 0,
                    kind: ChannelKind::NonMarkovian {
                        modes: vec![BathMode {
                            g: 1.0,
                            gamma: 2.0,
                            omega: 0.4,
                        }],
                    },
                },
                DephasingChannel {
                    site: 1,
                    kind: ChannelKind::Markovian { rate: 0.3 },
                },
            ],
            relaxation: vec![],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho = array![[c(0.6, 0.0), c(0.1, 0.25)], [c(0.1, -0.25), c(0.4, 0.0)]];
        // Non-trivial aux: integrate a short distance first.
        let aux = propagate_aux(&gen, &[0.5], 1e-3).unwrap().pop().unwrap();
        let (rho_dot, _) = gen.zofe_rhs(&rho, &aux);
        assert!(linalg::trace(&rho_dot).norm() <= 1e-10);
    }

    #[test]
    fn rabi_oscillation_half_period() {
        let gen = build_generators(&dimer(1.0), &EnvironmentSpec::default()).unwrap();
        let rho0 = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let run = fixed(1e-3, std::f64::consts::FRAC_PI_4, 1e-3);
        let traj = propagate(&rho0, &gen, &run).unwrap();
        let last = traj.states.last().unwrap();
        // rho_00 = cos^2(pi/4) = 0.5
        assert!((last[(0, 0)].re - 0.5).abs() < 1e-8);
        assert!((last[(1, 1)].re - 0.5).abs() < 1e-8);
    }

    #[test]
    fn zero_horizon_trajectory_contains_only_the_initial_state() {
        let gen = build_generators(&dimer(1.0), &EnvironmentSpec::default()).unwrap();
        let rho0 = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let run = fixed(1e-3, 0.0, 1e-3);
        let traj = propagate(&rho0, &gen, &run).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(linalg::max_abs_diff(&traj.states[0], &rho0), 0.0);
    }

    #[test]
    fn pure_dephasing_matches_exact_decoherence_exponent() {
        // V = 0 dimer, one mode (g = 1, gamma = 1, omega = 0) on site 0:
        // |rho_01(1)| = 0.5 exp(-D(1)), D(1) = exp(-1).
        let net = SiteNetwork::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![]).unwrap();
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::NonMarkovian {
                    modes: vec![BathMode {
                        g: 1.0,
                        gamma: 1.0,
                        omega: 0.0,
                    }],
                },
            }],
            relaxation: vec![],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho0 = array![[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]];
        let run = fixed(1e-4, 1.0, 1e-2);
        let traj = propagate(&rho0, &gen, &run).unwrap();
        let coh = traj.states.last().unwrap()[(0, 1)].norm();
        let expected = 0.5 * (-(-1.0_f64).exp()).exp();
        assert!(
            (coh - expected).abs() < 1e-8,
            "coh = {coh}, expected = {expected}"
        );
        // and the closed-form value spelled out: 0.5 e^{-e^{-1}} ~ 0.3461003
        assert!((expected - 0.346_100_3).abs() < 1e-6);
    }

    #[test]
    fn trace_is_conserved_on_mixed_lindblad_model() {
        let net = dimer(1.0);
        let env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::Markovian { rate: 0.5 },
            }],
            relaxation: vec![RelaxationChannel {
                source: 1,
                target: 0,
                kind: ChannelKind::Markovian { rate: 0.2 },
            }],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho0 = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let traj = propagate(&rho0, &gen, &fixed(1e-3, 3.0, 1e-2)).unwrap();
        assert!(traj.max_trace_drift() <= 1e-8);
        for s in &traj.states {
            assert!(linalg::hermiticity_defect(s) <= 1e-10);
        }
    }

    #[test]
    fn markov_limit_converges_to_lindblad() {
        // Single-mode bath with g = gamma_rate * gamma / 2, omega = 0: as gamma
        // grows the ZOFE trajectory approaches the Lindblad trajectory.
        let net = dimer(1.0);
        let rate = 1.0;
        let lind_env = EnvironmentSpec {
            dephasing: vec![DephasingChannel {
                site: 0,
                kind: ChannelKind::Markovian { rate },
            }],
            relaxation: vec![],
        };
        let lind_gen = build_generators(&net, &lind_env).unwrap();
        let rho0 = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let reference = propagate(&rho0, &lind_gen, &fixed(1e-4, 1.0, 1e-2)).unwrap();

        let mut deviations = Vec::new();
        for gamma in [10.0, 100.0] {
            let env = EnvironmentSpec {
                dephasing: vec![DephasingChannel {
                    site: 0,
                    kind: ChannelKind::NonMarkovian {
                        modes: vec![BathMode {
                            g: rate * gamma / 2.0,
                            gamma,
                            omega: 0.0,
                        }],
                    },
                }],
                relaxation: vec![],
            };
            let gen = build_generators(&net, &env).unwrap();
            let dt = (0.05 / gamma).min(1e-4);
            let traj = propagate(&rho0, &gen, &fixed(dt, 1.0, 1e-2)).unwrap();
            let dev = traj
                .states
                .iter()
                .zip(&reference.states)
                .map(|(a, b)| linalg::max_abs_diff(a, b))
                .fold(0.0, f64::max);
            deviations.push(dev);
        }
        assert!(deviations[1] < deviations[0]);
        assert!(deviations[1] < 2e-2);
    }

    #[test]
    fn blowup_reports_last_good_time() {
        // Enormous step on a stiff rate makes RK4 blow up to NaN/Inf or
        // drives the trace off: either way a Numerical error must surface.
        let net = dimer(1.0);
        let env = EnvironmentSpec {
            dephasing: vec![],
            relaxation: vec![RelaxationChannel {
                source: 1,
                target: 0,
                kind: ChannelKind::Markovian { rate: 50.0 },
            }],
        };
        let gen = build_generators(&net, &env).unwrap();
        let rho0 = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let err = propagate(&rho0, &gen, &fixed(1.0, 20.0, 1.0)).unwrap_err();
        match err {
            Error::Numerical { last_good_time, .. } => assert!(last_good_time >= 0.0),
            other => panic!("expected numerical abort, got {other}"),
        }
    }
}
