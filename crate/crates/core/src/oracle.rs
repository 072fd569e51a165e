//! Independent reference solutions used to validate the production solver.
//!
//! Nothing in this module shares code with the propagator: the closed forms
//! come from pencil-and-paper solutions of special cases, and the matrix
//! exponential propagates the vectorized master equation directly. Production
//! code paths never call into this module; it exists for tests, the
//! acceptance suite, and the `check` command.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{BathMode, ChannelKind, GeneratorSet};

const I: C64 = C64::new(0.0, 1.0);

/// Closed two-site system, H = V (|0><1| + |1><0|), started in |0><0|:
///
///   rho_00 = cos^2(Vt), rho_11 = sin^2(Vt), rho_01 = i sin(Vt) cos(Vt).
pub fn rabi_dimer_exact(v: f64, t: f64) -> Array2<C64> {
    let (s, c) = (v * t).sin_cos();
    let mut rho = Array2::zeros((2, 2));
    rho[(0, 0)] = C64::new(c * c, 0.0);
    rho[(1, 1)] = C64::new(s * s, 0.0);
    rho[(0, 1)] = C64::new(0.0, s * c);
    rho[(1, 0)] = C64::new(0.0, -s * c);
    rho
}

/// Net current from site 0 to site 1 of the closed dimer: V sin(2Vt).
pub fn rabi_dimer_current(v: f64, t: f64) -> f64 {
    v * (2.0 * v * t).sin()
}

/// Exact dephasing exponent of one bath mode:
///
///   D(t) = Re[ g ( t/w + (e^{-wt} - 1)/w^2 ) ],   w = gamma + i omega,
///
/// the time integral of the auxiliary amplitude a(t) = g (1 - e^{-wt}) / w.
fn mode_exponent(mode: &BathMode, t: f64) -> f64 {
    let w = mode.decay();
    let d = mode.g * (C64::new(t, 0.0) / w + ((-w * t).exp() - 1.0) / (w * w));
    d.re
}

/// Coherence decay factor of a V = 0 dimer under non-Markovian dephasing:
/// |rho_01(t)| = |rho_01(0)| * factor, with
/// factor = exp(-sum over both sites' modes of D(t)).
pub fn pure_dephasing_decay(
    modes_site_0: &[BathMode],
    modes_site_1: &[BathMode],
    t: f64,
) -> f64 {
    let d: f64 = modes_site_0
        .iter()
        .chain(modes_site_1)
        .map(|m| mode_exponent(m, t))
        .sum();
    (-d).exp()
}

fn simpson<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, panels: usize) -> C64 {
    let n = 2 * panels.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(a + k as f64 * h);
    }
    acc * (h / 3.0)
}

/// The same decay factor from nested quadrature instead of the closed form:
/// a(s) = integral_0^s g e^{-w (s - tau)} d tau, D(t) = Re integral_0^t a(s) ds,
/// both by composite Simpson. Used to cross-check [`pure_dephasing_decay`].
pub fn pure_dephasing_decay_quadrature(
    modes_site_0: &[BathMode],
    modes_site_1: &[BathMode],
    t: f64,
    panels: usize,
) -> f64 {
    let mut d = 0.0;
    for mode in modes_site_0.iter().chain(modes_site_1) {
        let w = mode.decay();
        let a = |s: f64| simpson(|tau| mode.g * (-w * (s - tau)).exp(), 0.0, s, panels);
        d += simpson(a, 0.0, t, panels).re;
    }
    (-d).exp()
}

/// Dense matrix exponential by scaling-and-squaring with a Taylor series.
/// Adequate for the small generators this oracle handles.
pub fn expm(m: &Array2<C64>) -> Array2<C64> {
    let dim = m.nrows();
    let norm = m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())) * dim as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m.mapv(|z| z / 2.0_f64.powi(squarings as i32));
    let mut result = Array2::eye(dim);
    let mut term: Array2<C64> = Array2::eye(dim);
    for k in 1..200 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        result += &term;
        let tnorm = term.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
        if tnorm < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// vec(A X B) = (B^T kron A) vec(X) with column-major vec.
fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn vectorize(m: &Array2<C64>) -> Vec<C64> {
    let dim = m.nrows();
    let mut v = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        for i in 0..dim {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn unvectorize(v: &[C64], dim: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    for j in 0..dim {
        for i in 0..dim {
            m[(i, j)] = v[j * dim + i];
        }
    }
    m
}

/// The vectorized Markovian generator,
///
///   L = -i (I kron H - H^T kron I)
///       + sum_ch gamma [ conj(L) kron L
///                        - 1/2 I kron (L^dag L) - 1/2 (L^dag L)^T kron I ].
pub fn liouvillian_matrix(gen: &GeneratorSet) -> Result<Array2<C64>> {
    if !gen.is_markovian() {
        return Err(Error::Invalid(
            "matrix-exponential oracle requires a fully Markovian model".into(),
        ));
    }
    let dim = gen.n_sites();
    let eye: Array2<C64> = Array2::eye(dim);
    let h = gen.hamiltonian_complex();
    let ht = h.t().to_owned();
    let mut liou =
        (kron(&eye, h) - kron(&ht, &eye)).mapv(|z| -I * z);
    for ch in gen.channels() {
        let rate = match &ch.kind {
            ChannelKind::Markovian { rate } => *rate,
            ChannelKind::NonMarkovian { .. } => unreachable!("guarded above"),
        };
        let l = &ch.op;
        let ldl = ch.op_dag.dot(l);
        let ldl_t = ldl.t().to_owned();
        let lc = l.mapv(|z| z.conj());
        let jump = kron(&lc, l);
        let anti = (kron(&eye, &ldl) + kron(&ldl_t, &eye)).mapv(|z| 0.5 * z);
        liou = liou + (jump - anti).mapv(|z| rate * z);
    }
    Ok(liou)
}

/// rho(t) = unvec( exp(L t) vec(rho_0) ) for a Markovian model with at most
/// 12 sites (the dense N^2 x N^2 exponential grows fast beyond that).
pub fn liouvillian_expm_propagate(
    gen: &GeneratorSet,
    rho0: &Array2<C64>,
    t: f64,
) -> Result<Array2<C64>> {
    if gen.n_sites() > 12 {
        return Err(Error::Invalid(format!(
            "matrix-exponential oracle limited to 12 sites, got {}",
            gen.n_sites()
        )));
    }
    if rho0.nrows() != gen.n_sites() {
        return Err(Error::Dimension {
            expected: gen.n_sites(),
            found: rho0.nrows(),
        });
    }
    let liou = liouvillian_matrix(gen)?.mapv(|z| z * t);
    let prop = expm(&liou);
    let v = vectorize(rho0);
    let dim = gen.n_sites();
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for (r, out_r) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, vc) in v.iter().enumerate() {
            acc += prop[(r, c)] * vc;
        }
        *out_r = acc;
    }
    Ok(unvectorize(&out, dim))
}
