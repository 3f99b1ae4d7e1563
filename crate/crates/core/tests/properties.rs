//! Randomized property checks across module boundaries.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbdoa::array::{complex_gaussian, simulate_cpi, true_factors, SimulationConfig};
use tbdoa::cp::{als_decompose, match_columns, CpConfig, InitStrategy};
use tbdoa::doa::DoaConfig;
use tbdoa::experiments::{
    pair_estimates, run_resolution_sweep, run_rmse_sweep, AlsSettings, McConfig, SceneTemplate,
    SystemConfig,
};
use tbdoa::tensor::{khatri_rao, vec_of_sandwich, ComplexMatrix, ComplexVector, Tensor3};
use tbdoa::Complex64;

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(r, c, |_, _| complex_gaussian(rng, 1.0))
}

fn mc(angles: &[f64], trials: usize, snr: &[f64]) -> McConfig {
    McConfig {
        system: SystemConfig::default(),
        scene: SceneTemplate {
            angles_deg: angles.to_vec(),
            dopplers: vec![0.1, -0.25],
        },
        trials,
        snr_grid_db: snr.to_vec(),
        master_seed: 2024,
        als: AlsSettings::default(),
        doa: DoaConfig::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn sandwich_vec_identity(seed in any::<u64>(), i in 1usize..7, j in 1usize..7, r in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_matrix(&mut rng, i, r);
        let c = gaussian_matrix(&mut rng, r, j);
        let b = ComplexVector::from_fn(r, |_, _| complex_gaussian(&mut rng, 1.0));
        let lhs = vec_of_sandwich(&a, &b, &c).unwrap();
        let rhs = khatri_rao(&c.transpose(), &a).unwrap() * &b;
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn unfold_index_formula_and_round_trip(seed in any::<u64>(), k in 1usize..5, n in 1usize..5, q in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor3::from_fn((k, n, q), |_, _, _| complex_gaussian(&mut rng, 1.0));
        let (m1, m2, m3) = (t.unfold(1).unwrap(), t.unfold(2).unwrap(), t.unfold(3).unwrap());
        for kk in 0..k {
            for nn in 0..n {
                for qq in 0..q {
                    let v = t.get(kk, nn, qq);
                    prop_assert_eq!(m1[(kk, qq * n + nn)], v);
                    prop_assert_eq!(m2[(nn, qq * k + kk)], v);
                    prop_assert_eq!(m3[(qq, kk * n + nn)], v);
                }
            }
        }
        for (mode, m) in [(1, &m1), (2, &m2), (3, &m3)] {
            prop_assert_eq!(&Tensor3::fold(m, mode, (k, n, q)).unwrap(), &t);
        }
    }
}

/// Noiseless nominal scene decomposed from random starts: at least 9 of 10
/// reach the exact fit with all matched columns congruent to the truth.
#[test]
fn random_init_identifiability_at_nominal_scale() {
    let cfg = mc(&[-15.0, 15.0], 1, &[f64::INFINITY]);
    let system = cfg.system.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coeffs = [
        complex_gaussian(&mut rng, 1.0),
        complex_gaussian(&mut rng, 1.0),
    ];
    let scene = cfg.scene.realize(&coeffs).unwrap();
    let sim = SimulationConfig {
        pulses: 64,
        snr_db: f64::INFINITY,
        seed: 0,
        pulse_duration: 1.0,
    };
    let t = simulate_cpi(&system.geometry, &scene, &system.beamspace, &sim).unwrap();
    let truth = true_factors(&system.geometry, &scene, &system.beamspace, 64).unwrap();
    let good = (0..10u64)
        .filter(|&seed| {
            let r = als_decompose(
                &t,
                &CpConfig {
                    init: InitStrategy::Random,
                    seed,
                    ..CpConfig::new(2)
                },
            )
            .unwrap();
            let m = match_columns(&r.factors, &truth).unwrap();
            r.fit >= 1.0 - 1e-6 && m.scores.iter().flatten().all(|&s| s >= 0.999)
        })
        .count();
    assert!(
        good >= 9,
        "only {good}/10 random starts identified the factors"
    );
}

#[test]
fn default_init_matches_true_columns() {
    let cfg = mc(&[10.0, 11.0], 1, &[f64::INFINITY]);
    let system = cfg.system.build().unwrap();
    let scene = cfg
        .scene
        .realize(&[Complex64::new(0.8, -0.3), Complex64::new(-0.5, 1.1)])
        .unwrap();
    let truth = true_factors(&system.geometry, &scene, &system.beamspace, 64).unwrap();
    let t = tbdoa::tensor::cp_reconstruct(&truth);
    let r = als_decompose(&t, &CpConfig::new(2)).unwrap();
    let m = match_columns(&r.factors, &truth).unwrap();
    assert!(
        m.scores.iter().flatten().all(|&s| s >= 0.999),
        "{:?}",
        m.scores
    );
}

#[test]
fn pairing_is_label_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let truth = [rng.random_range(-60.0..0.0), rng.random_range(0.0..60.0)];
        let est = [
            truth[0] + rng.random_range(-1.0..1.0),
            truth[1] + rng.random_range(-1.0..1.0),
        ];
        let a = pair_estimates(&est, &truth).unwrap();
        let b = pair_estimates(&[est[1], est[0]], &truth).unwrap();
        assert_eq!(a.errors, b.errors);
    }
}

/// At −20 dB the close pair is resolved less often than at 20 dB, and never always.
#[test]
fn resolution_trend_across_snr() {
    let r = run_resolution_sweep(&mc(&[10.0, 11.0], 100, &[-20.0, 20.0])).unwrap();
    let (low, high) = (r.rows[0].prob_resolution, r.rows[1].prob_resolution);
    assert!(low < 1.0 && low <= high, "{low} vs {high}");
}

#[test]
fn rmse_sweep_reports_every_grid_point() {
    let r = run_rmse_sweep(&mc(&[-15.0, 15.0], 5, &[0.0, 30.0])).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r
        .rows
        .iter()
        .all(|row| row.trials == 5 && row.rmse_deg >= 0.0));
    assert!(r.rows[1].rmse_deg < r.rows[0].rmse_deg);
}
