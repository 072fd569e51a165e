//! Benchmarks for the hot kernels: the master-equation right-hand sides,
//! short propagations, the current decompositions, and the superoperator
//! exponential used as a test oracle.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use pathflux::currents::total_currents;
use pathflux::model::{
    build_generators, BathMode, ChannelKind, Coupling, DephasingChannel, EnvironmentSpec,
    GeneratorSet, IntegratorSpec, RelaxationChannel, RunParams, SiteNetwork,
};
use pathflux::oracle;
use pathflux::propagator::propagate;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

fn chain_model(dim: usize, non_markovian: bool) -> GeneratorSet {
    let energies: Vec<f64> = (0..dim).map(|i| 0.1 * i as f64 - 0.3).collect();
    let couplings: Vec<Coupling> = (0..dim - 1)
        .map(|l| Coupling {
            l,
            n: l + 1,
            value: 0.5,
        })
        .collect();
    let net = SiteNetwork::new(labels(dim), energies, couplings).unwrap();
    let dephasing = (0..dim)
        .map(|site| DephasingChannel {
            site,
            kind: if non_markovian {
                ChannelKind::NonMarkovian {
                    modes: vec![BathMode {
                        g: 0.4,
                        gamma: 2.0,
                        omega: 0.1,
                    }],
                }
            } else {
                ChannelKind::Markovian { rate: 0.3 }
            },
        })
        .collect();
    let env = EnvironmentSpec {
        dephasing,
        relaxation: vec![RelaxationChannel {
            source: dim - 1,
            target: 0,
            kind: ChannelKind::Markovian { rate: 0.2 },
        }],
    };
    build_generators(&net, &env).unwrap()
}

fn site_state(dim: usize) -> Array2<C64> {
    let mut rho = Array2::zeros((dim, dim));
    rho[(0, 0)] = C64::new(1.0, 0.0);
    rho
}

fn bench_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for dim in [4usize, 7, 12] {
        let gen = chain_model(dim, false);
        let rho = site_state(dim);
        group.bench_with_input(BenchmarkId::new("lindblad", dim), &dim, |b, _| {
            b.iter(|| gen.lindblad_rhs(std::hint::black_box(&rho)).unwrap())
        });
        let gen_nm = chain_model(dim, true);
        let aux = gen_nm.initial_aux();
        group.bench_with_input(BenchmarkId::new("zofe", dim), &dim, |b, _| {
            b.iter(|| gen_nm.zofe_rhs(std::hint::black_box(&rho), &aux))
        });
    }
    group.finish();
}

fn bench_propagate(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagate");
    group.sample_size(20);
    let run = RunParams {
        t_final: 0.5,
        dt_output: 0.05,
        integrator: IntegratorSpec::FixedStep { dt: 1e-3 },
    };
    for dim in [4usize, 7] {
        for (name, nm) in [("lindblad", false), ("zofe", true)] {
            let gen = chain_model(dim, nm);
            let rho0 = site_state(dim);
            group.bench_with_input(BenchmarkId::new(name, dim), &dim, |b, _| {
                b.iter(|| propagate(std::hint::black_box(&rho0), &gen, &run).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_currents(c: &mut Criterion) {
    let mut group = c.benchmark_group("currents");
    for dim in [4usize, 7] {
        let gen = chain_model(dim, true);
        let run = RunParams {
            t_final: 1.0,
            dt_output: 0.01,
            integrator: IntegratorSpec::FixedStep { dt: 1e-3 },
        };
        let traj = propagate(&site_state(dim), &gen, &run).unwrap();
        group.bench_with_input(BenchmarkId::new("total_currents", dim), &dim, |b, _| {
            b.iter(|| total_currents(std::hint::black_box(&traj), &gen).unwrap())
        });
    }
    group.finish();
}

fn bench_expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_expm");
    group.sample_size(20);
    for dim in [3usize, 5] {
        let gen = chain_model(dim, false);
        let rho0 = site_state(dim);
        group.bench_with_input(BenchmarkId::new("liouvillian", dim), &dim, |b, _| {
            b.iter(|| {
                oracle::liouvillian_expm_propagate(&gen, std::hint::black_box(&rho0), 1.0)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_rhs, bench_propagate, bench_currents, bench_expm);
criterion_main!(benches);
