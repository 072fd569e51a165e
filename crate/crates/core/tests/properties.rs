//! Property-based invariants of the current decompositions on randomized
//! density matrices and auxiliary operators.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use pathflux::currents::{total_currents, unitary_bound_check};
use pathflux::model::{
    build_generators, BathMode, ChannelKind, Coupling, DephasingChannel, EnvironmentSpec,
    GeneratorSet, RelaxationChannel, SiteNetwork,
};
use pathflux::propagator::{AuxOperators, Trajectory};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A 3-site model carrying every channel flavor: Markovian and
/// non-Markovian dephasing, Markovian and non-Markovian relaxation.
fn mixed_generators() -> GeneratorSet {
    let net = SiteNetwork::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![0.6, -0.1, 0.3],
        vec![
            Coupling { l: 0, n: 1, value: 1.0 },
            Coupling { l: 1, n: 2, value: 0.4 },
        ],
    )
    .unwrap();
    let env = EnvironmentSpec {
        dephasing: vec![
            DephasingChannel {
                site: 0,
                kind: ChannelKind::Markovian { rate: 0.5 },
            },
            DephasingChannel {
                site: 1,
                kind: ChannelKind::NonMarkovian {
                    modes: vec![BathMode {
                        g: 0.7,
                        gamma: 2.0,
                        omega: 0.3,
                    }],
                },
            },
        ],
        relaxation: vec![
            RelaxationChannel {
                source: 1,
                target: 0,
                kind: ChannelKind::Markovian { rate: 0.25 },
            },
            RelaxationChannel {
                source: 2,
                target: 1,
                kind: ChannelKind::NonMarkovian {
                    modes: vec![BathMode {
                        g: 0.3,
                        gamma: 1.5,
                        omega: -0.4,
                    }],
                },
            },
        ],
    };
    build_generators(&net, &env).unwrap()
}

fn hermitian_from(parts: &[f64; 9]) -> Array2<C64> {
    let mut rho = Array2::zeros((3, 3));
    rho[(0, 0)] = c(parts[0].abs() + 0.05, 0.0);
    rho[(1, 1)] = c(parts[1].abs() + 0.05, 0.0);
    rho[(2, 2)] = c(parts[2].abs() + 0.05, 0.0);
    let off = [(0usize, 1usize), (0, 2), (1, 2)];
    for (k, (i, j)) in off.iter().enumerate() {
        let z = c(parts[3 + 2 * k], parts[4 + 2 * k]);
        rho[(*i, *j)] = z;
        rho[(*j, *i)] = z.conj();
    }
    let tr: f64 = (0..3).map(|i| rho[(i, i)].re).sum();
    rho.mapv(|z| z / tr)
}

/// Positive semidefinite unit-trace matrix G G^dag / tr(G G^dag).
fn psd_from(parts: &[f64; 18]) -> Array2<C64> {
    let mut g = Array2::zeros((3, 3));
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = c(parts[2 * (3 * i + j)], parts[2 * (3 * i + j) + 1]);
        }
    }
    let gd = g.t().mapv(|z: C64| z.conj());
    let p = g.dot(&gd);
    let tr: f64 = (0..3).map(|i| p[(i, i)].re).sum();
    p.mapv(|z| z / (tr + 1e-12))
}

fn aux_from(parts: &[f64; 18], scale: f64) -> Array2<C64> {
    let mut m = Array2::zeros((3, 3));
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = c(
                scale * parts[2 * (3 * i + j)],
                scale * parts[2 * (3 * i + j) + 1],
            );
        }
    }
    m
}

/// Wrap one (rho, aux) sample as a single-record trajectory so the full
/// record pipeline runs on it.
fn one_shot(gen: &GeneratorSet, rho: Array2<C64>, aux: AuxOperators) -> Trajectory {
    let min = pathflux::linalg::min_eigval_hermitian(&rho);
    assert_eq!(rho.nrows(), gen.n_sites());
    Trajectory {
        times: vec![0.0],
        states: vec![rho],
        aux: Some(vec![aux]),
        min_eigenvalues: vec![min],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn all_current_components_are_antisymmetric(
        h in prop::array::uniform9(-1.0..1.0f64),
        a1 in prop::array::uniform18(-1.0..1.0f64),
        a2 in prop::array::uniform18(-1.0..1.0f64),
    ) {
        let gen = mixed_generators();
        let rho = hermitian_from(&h);
        let aux = AuxOperators { modes: vec![aux_from(&a1, 0.8), aux_from(&a2, 0.6)] };
        let recs = total_currents(&one_shot(&gen, rho, aux), &gen).unwrap();
        let rec = &recs[0];
        for m in [&rec.j_total, &rec.j_unitary, &rec.j_dephas_check,
                  &rec.j_relax, &rec.j_pop, &rec.j_coher] {
            for l in 0..3 {
                for n in 0..3 {
                    prop_assert!((m[(l, n)] + m[(n, l)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn decomposition_closures(
        h in prop::array::uniform9(-1.0..1.0f64),
        a1 in prop::array::uniform18(-1.0..1.0f64),
        a2 in prop::array::uniform18(-1.0..1.0f64),
    ) {
        let gen = mixed_generators();
        let rho = hermitian_from(&h);
        let aux = AuxOperators { modes: vec![aux_from(&a1, 0.5), aux_from(&a2, 0.9)] };
        let recs = total_currents(&one_shot(&gen, rho, aux), &gen).unwrap();
        let rec = &recs[0];
        for l in 0..3 {
            for n in 0..3 {
                let sum = rec.j_unitary[(l, n)] + rec.j_dephas_check[(l, n)] + rec.j_relax[(l, n)];
                prop_assert!((rec.j_total[(l, n)] - sum).abs() <= 1e-12);
                let split = rec.j_pop[(l, n)] + rec.j_coher[(l, n)];
                prop_assert!((rec.j_total[(l, n)] - split).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn dephasing_current_vanishes_for_any_state_and_aux(
        h in prop::array::uniform9(-1.0..1.0f64),
        a1 in prop::array::uniform18(-2.0..2.0f64),
        a2 in prop::array::uniform18(-2.0..2.0f64),
    ) {
        let gen = mixed_generators();
        let rho = hermitian_from(&h);
        let aux = AuxOperators { modes: vec![aux_from(&a1, 1.0), aux_from(&a2, 1.0)] };
        let recs = total_currents(&one_shot(&gen, rho, aux), &gen).unwrap();
        for x in recs[0].j_dephas_check.iter() {
            prop_assert!(x.abs() <= 1e-12);
        }
    }

    #[test]
    fn unitary_bound_holds_on_psd_states(
        g in prop::array::uniform18(-1.0..1.0f64),
    ) {
        let gen = mixed_generators();
        let rho = psd_from(&g);
        for l in 0..3 {
            for n in 0..3 {
                if l == n { continue; }
                let chk = unitary_bound_check(&rho, gen.hamiltonian(), l, n).unwrap();
                prop_assert!(!chk.clamped);
                prop_assert!(chk.magnitude <= chk.bound + 1e-10,
                    "|j| = {} > bound = {}", chk.magnitude, chk.bound);
            }
        }
    }
}
