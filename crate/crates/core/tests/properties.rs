use nalgebra::DMatrix;
use num_complex::Complex64;
use ovna_core::apc::{
    apply_transformer, controller_step, orthogonal_fraction, ControllerConfig, TransformerState,
};
use ovna_core::dsp::{
    calibrate, compute_metrics, insertion_loss_of, mdl_of, FrequencyGrid, TransferFunctionEstimate,
};
use ovna_core::fiber::{build_delay_plan, reference_jones, BirefringentFiberSpec};
use ovna_core::linalg::{
    dgd_element, jones_to_stokes, rotator, svd_singular_values, waveplate, BlockTransferMatrix,
    CMatrix, JonesMatrix, JonesVector, C64,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    })
}

/// Ascending eigenvalues of M†M from nalgebra's Hermitian solver.
fn gram_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let n = m.cols();
    let a = DMatrix::<Complex64>::from_fn(m.rows(), n, |i, j| m.as_slice()[i * n + j]);
    let g = a.adjoint() * &a;
    let mut e: Vec<f64> = g.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn vector() -> impl Strategy<Value = JonesVector> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c, d)| JonesVector {
        ex: C64::new(a, b),
        ey: C64::new(c, d),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn singular_values_match_gram_eigenvalues(n in 2usize..=16, seed in any::<u64>()) {
        let m = random_matrix(n, n, seed);
        let sv = svd_singular_values(&m).unwrap();
        let eig = gram_eigenvalues(&m);
        for (s, e) in sv.iter().rev().zip(&eig) {
            let want = e.max(0.0).sqrt();
            prop_assert!((s - want).abs() <= 1e-9 * want, "{s} vs {want}");
        }
        let il_oracle = -10.0 * (eig.iter().sum::<f64>() / n as f64).log10();
        let mdl_oracle = 10.0 * (eig[n - 1] / eig[0]).log10();
        let il = insertion_loss_of(&m).unwrap();
        let mdl = mdl_of(&m).unwrap();
        prop_assert!((il - il_oracle).abs() <= 1e-9 * il_oracle.abs().max(1.0));
        prop_assert!((mdl - mdl_oracle).abs() <= 1e-9 * mdl_oracle.abs().max(1.0));
    }

    #[test]
    fn stokes_vector_is_fully_polarized(v in vector()) {
        let s = jones_to_stokes(&v);
        prop_assert!((s.s1 * s.s1 + s.s2 * s.s2 + s.s3 * s.s3 - s.s0 * s.s0).abs() <= 1e-9);
    }

    #[test]
    fn transformer_preserves_power(
        stages in proptest::collection::vec((-20.0..20.0f64, -10.0..10.0f64), 1..5),
        v in vector(),
    ) {
        let state = TransformerState::new(&stages, 5000.0);
        let out = apply_transformer(&state, &v);
        prop_assert!((out.power() - v.power()).abs() <= 1e-12 * v.power().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn long_chains_stay_unitary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut j = JonesMatrix::identity();
        for k in 0..10_000 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            j = if k % 2 == 0 { waveplate(a, b) * j } else { rotator(a) * j };
        }
        prop_assert!(j.unitarity_error() < 1e-9);
    }

    #[test]
    fn dgd_delays_add(k1 in -11_500_000i64..11_500_000, k2 in -11_500_000i64..11_500_000, nu in 1.9e14..1.96e14f64) {
        // Delays on a 2^-60 s lattice so that their sum is exact.
        let (t1, t2) = (k1 as f64 * 2f64.powi(-60), k2 as f64 * 2f64.powi(-60));
        let a = dgd_element(t1, nu) * dgd_element(t2, nu);
        let b = dgd_element(t1 + t2, nu);
        prop_assert!((a - b).frobenius_norm() < 1e-12);
    }

    #[test]
    fn reference_is_unitary_and_continuous(seed in any::<u64>(), t in 0.0..10e-12f64, nu in 1.91e14..1.96e14f64) {
        let spec = BirefringentFiberSpec { n_segments: 50, rms_dgd_target: t, group_delay: 0.0, seed };
        let j = reference_jones(&spec, nu).unwrap();
        prop_assert!(j.unitarity_error() < 1e-9);
        let k = reference_jones(&spec, nu + 1e6).unwrap();
        prop_assert!((k - j).frobenius_norm() < 1e-4);
    }

    #[test]
    fn controller_never_increases_orthogonal_power(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = JonesMatrix::random_unitary(&mut rng).apply(&JonesVector::horizontal());
        let cfg = ControllerConfig::default();
        let observe = |s: &TransformerState| orthogonal_fraction(&cfg.target, &apply_transformer(s, &input));
        let mut state = TransformerState::default();
        let mut last = observe(&state);
        for _ in 0..50 {
            state = controller_step(&state, &cfg, observe);
            let now = observe(&state);
            prop_assert!(now <= last + 1e-15, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn calibration_is_idempotent(seed in any::<u64>(), n in 1usize..4) {
        let grid = FrequencyGrid::new(1.93e14, 1e9, 8).unwrap();
        let matrices = (0..8)
            .map(|k| {
                BlockTransferMatrix::new(n, grid.frequency(k), random_matrix(2 * n, 2 * n, seed.wrapping_add(k as u64)))
                    .unwrap()
            })
            .collect();
        let raw = TransferFunctionEstimate { grid, matrices, calibration_wavelength: None };
        let lambda = ovna_core::SPEED_OF_LIGHT / grid.frequency(3);
        let once = calibrate(&raw, &raw, lambda).unwrap();
        let twice = calibrate(&once, &once, lambda).unwrap();
        let a = compute_metrics(&raw, &once).unwrap();
        let b = compute_metrics(&raw, &twice).unwrap();
        for (x, y) in a.il_norm.iter().zip(&b.il_norm) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for (x, y) in a.mdl.iter().zip(&b.mdl) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn delay_plans_are_collision_free_up_to_eight_ports() {
    for n in 1..=8 {
        let plan = build_delay_plan(n, 2e-9, 1e-9, 1.0).unwrap();
        let channels = plan.channels();
        assert_eq!(channels.len(), 4 * n * n);
        for (i, (a, da)) in channels.iter().enumerate() {
            for (b, db) in &channels[i + 1..] {
                if a.rx_pol == b.rx_pol {
                    assert!(
                        (da - db).abs() >= plan.guard * (1.0 - 1e-9),
                        "{a:?} and {b:?} collide"
                    );
                }
            }
        }
    }
}
