use gwda_core::fem::build_unit_square_mesh;
use gwda_core::field::{build_covariance, KernelConfig, KlBasis};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn covariance_matches_double_loop() {
    let mesh = build_unit_square_mesh(6).unwrap();
    let (lx, ly) = (0.15, 0.4);
    let c = build_covariance(mesh.nodes(), &KernelConfig::new(vec![lx, ly]).unwrap(), 5000).unwrap();
    for (i, p) in mesh.nodes().iter().enumerate() {
        for (j, q) in mesh.nodes().iter().enumerate() {
            let expect = (-0.5 * (((p[0] - q[0]) / lx).powi(2) + ((p[1] - q[1]) / ly).powi(2))).exp();
            assert!((c[(i, j)] - expect).abs() < 1e-15);
        }
    }
}

#[test]
fn realisations_reproduce_truncated_covariance() {
    let mesh = build_unit_square_mesh(6).unwrap();
    let sigma = 0.7;
    let basis = KlBasis::for_mesh(&mesh, &KernelConfig::isotropic(0.3, 2).unwrap(), 10, 0.5, sigma).unwrap();
    let psi = basis.eigenvectors();
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(basis.eigenvalues()));
    let expect = psi * lambda * psi.transpose() * (sigma * sigma);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 40_000;
    let m = mesh.node_count();
    let mut sum = nalgebra::DVector::zeros(m);
    let mut outer = DMatrix::zeros(m, m);
    for _ in 0..draws {
        let theta: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = basis.log_field(&theta).unwrap();
        let centred = f.add_scalar(-0.5);
        sum += &centred;
        outer.ger(1.0, &centred, &centred, 1.0);
    }
    let mean = sum / draws as f64;
    let cov = outer / draws as f64;
    assert!(mean.amax() < 0.02, "{}", mean.amax());
    let tol = 0.03 * expect.amax();
    assert!((cov - &expect).amax() < tol);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn truncation_equals_zero_padding(theta in proptest::collection::vec(-3.0f64..3.0, 5)) {
        let mesh = build_unit_square_mesh(5).unwrap();
        let basis = KlBasis::for_mesh(&mesh, &KernelConfig::isotropic(0.25, 2).unwrap(), 12, -0.3, 1.2).unwrap();
        let coarse = basis.truncate(5).unwrap();
        let mut padded = theta.clone();
        padded.resize(12, 0.0);
        let a = coarse.log_field(&theta).unwrap();
        let b = basis.log_field(&padded).unwrap();
        prop_assert!((a - b).amax() < 1e-12);
        let r = basis.realize(&padded).unwrap();
        prop_assert!(r.nodal_t.iter().all(|&t| t > 0.0));
    }
}
