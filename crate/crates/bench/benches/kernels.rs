use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gwda_core::fem::{build_unit_square_mesh, observation_grid, BoundaryConditions, DarcySolver};
use gwda_core::sampler::{DaChain, DaSettings, ErrorModel, PcnKernel, Prior, Proposal, StatModel};
use gwda_core::{DarcyForward, ForwardMap, KernelConfig, KlBasis, NetworkSpec, SurrogateNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forward(n: usize, k: usize) -> DarcyForward {
    let mesh = build_unit_square_mesh(n).unwrap();
    let kernel = KernelConfig::isotropic(0.1, 2).unwrap();
    let basis = KlBasis::for_mesh(&mesh, &kernel, k, 0.0, 1.0).unwrap();
    let source = vec![0.0; mesh.node_count()];
    let solver = DarcySolver::new(mesh, &BoundaryConditions::left_right(1.0, 0.0), &source).unwrap();
    DarcyForward::new(basis, solver, &observation_grid(5, 0.1, 0.2)).unwrap()
}

fn theta(k: usize) -> Vec<f64> {
    (0..k).map(|i| ((i as f64) * 0.37).sin()).collect()
}

fn fem(c: &mut Criterion) {
    let mut group = c.benchmark_group("fine_forward");
    for n in [20, 50] {
        let f = forward(n, 64);
        let t = theta(64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| f.evaluate(black_box(&t)).unwrap())
        });
    }
    group.finish();

    let f = forward(20, 64);
    let t = theta(64);
    c.bench_function("kl_realize_n20_k64", |b| {
        b.iter(|| f.basis().realize(black_box(&t)).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = SurrogateNet::init(NetworkSpec::dnn1(32, 25).unwrap(), &mut rng);
    let t = theta(32);
    c.bench_function("dnn1_forward_32_25", |b| b.iter(|| net.forward(black_box(&t)).unwrap()));
}

fn da_step(c: &mut Criterion) {
    let fine = forward(20, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = SurrogateNet::init(NetworkSpec::dnn1(32, 25).unwrap(), &mut rng);
    let d_obs = fine.evaluate(&theta(64)).unwrap();
    let model = StatModel::isotropic(d_obs, 1e-3).unwrap();
    let mut chain = DaChain {
        fine: &fine,
        coarse: &net,
        model: &model,
        prior: Prior::standard_normal(64),
        settings: DaSettings::new(4),
        coarse_kernel: Proposal::Pcn(PcnKernel::new(0.15).unwrap()),
        tilde_kernel: Proposal::Pcn(PcnKernel::new(0.15).unwrap()),
        error_model: ErrorModel::new(model.noise_cov().clone()).unwrap(),
    };
    let mut state = chain.init(theta(64)).unwrap();
    c.bench_function("da_eem_step_t4", |b| b.iter(|| chain.step(&mut state, &mut rng).unwrap()));
}

criterion_group!(benches, fem, network, da_step);
criterion_main!(benches);
