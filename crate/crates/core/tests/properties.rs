mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::sort_extremes;
use platoon::controllers::clamp;
use platoon::estimation::PairFilter;
use platoon::metrics::extreme_means;
use platoon::model::{
    ControllerGains, ControllerKind, KalmanSettings, NoiseModel, Perturbation, ScenarioConfig,
};
use platoon::scenario::{from_toml_str, to_toml_string};
use platoon::simulation::{run_scenario, SimError};
use platoon::{validate_config, Matrix2, StateVector2};

proptest! {
    #[test]
    fn clamp_is_idempotent(a in -1e6f64..1e6) {
        prop_assert_eq!(clamp(clamp(a)), clamp(a));
        prop_assert!(clamp(a).abs() <= 3.0);
    }

    #[test]
    fn clamp_is_monotone(a in -50f64..50.0, b in -50f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(clamp(lo) <= clamp(hi));
    }
}

fn random_psd(rng: &mut ChaCha8Rng, scale: f64) -> Matrix2 {
    let l = Matrix2::new(
        rng.random_range(0.0..scale),
        0.0,
        rng.random_range(-scale..scale),
        rng.random_range(0.0..scale),
    );
    l * l.transpose()
}

#[test]
fn covariance_stays_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let q = random_psd(&mut rng, 0.5);
    let r = random_psd(&mut rng, 2.0) + Matrix2::diag(1e-3, 1e-3);
    let mut filter = PairFilter::new(0.1, q, r, Matrix2::IDENTITY);
    for tick in 0..10_000 {
        let z = StateVector2::new(rng.random_range(-50.0..50.0), rng.random_range(-10.0..10.0));
        filter.filter_tick(z, rng.random_range(-6.0..6.0)).unwrap();
        for p in [filter.covariance(), filter.prior_covariance()] {
            assert!(p.is_symmetric(1e-9), "tick {tick}: {p:?}");
            assert!(p.is_covariance(1e-9), "tick {tick}: {p:?}");
        }
    }
}

#[test]
fn covariance_fuzz_across_settings() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let q = random_psd(&mut rng, 1.0);
        let r = random_psd(&mut rng, 5.0) + Matrix2::diag(1e-2, 1e-2);
        let p0 = random_psd(&mut rng, 3.0);
        let dt = rng.random_range(0.06..0.5);
        let mut filter = PairFilter::new(dt, q, r, p0);
        for _ in 0..500 {
            let z = StateVector2::new(rng.random_range(-50.0..50.0), rng.random_range(-10.0..10.0));
            filter.filter_tick(z, rng.random_range(-6.0..6.0)).unwrap();
            assert!(filter.covariance().is_covariance(1e-9));
        }
    }
}

#[test]
fn extremes_match_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..1000 {
        let n = rng.random_range(3..80);
        let gaps: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..120.0)).collect();
        let (lo, hi) = extreme_means(&gaps).unwrap();
        let (olo, ohi) = sort_extremes(&gaps);
        assert!((lo - olo).abs() < 1e-12 && (hi - ohi).abs() < 1e-12);
        assert!(lo <= hi);
    }
}

fn kind_strategy() -> impl Strategy<Value = ControllerKind> {
    prop::sample::select(ControllerKind::ALL.to_vec())
}

prop_compose! {
    fn config_strategy()(
        n in 4usize..16,
        spacing in 10.0f64..60.0,
        extra in 0.0f64..500.0,
        speed in 0.0f64..40.0,
        dt_steps in 0usize..3,
        seconds in 5u32..25,
        warmup in 0.0f64..6.0,
        kind in kind_strategy(),
        k_d in 0.001f64..1.0,
        k_v in 0.001f64..2.0,
        k_c in 0.0f64..0.5,
        error in 0.0f64..=0.10,
        additive in any::<bool>(),
        delay in 0usize..4,
        seed in 0u64..=i64::MAX as u64,
        q in 0.0f64..0.1,
        braking in any::<bool>(),
    ) -> ScenarioConfig {
        let dt = [0.06, 0.1, 0.2][dt_steps];
        let ticks = (f64::from(seconds) / dt).round();
        ScenarioConfig {
            n_vehicles: n,
            road_length: spacing * (n - 1) as f64 + extra,
            initial_spacing: spacing,
            initial_velocity: speed,
            dt,
            total_duration: ticks * dt,
            warmup_duration: (warmup / dt).round() * dt,
            controller: kind,
            gains: ControllerGains { k_d, k_v, k_c, v_des: speed, p_des: spacing },
            error_fraction: error,
            noise_model: if additive { NoiseModel::Additive } else { NoiseModel::Multiplicative },
            delay_ticks: delay,
            perturbation: braking.then(|| Perturbation { vehicle_index: n / 2, ..Perturbation::reference_braking() }),
            rng_seed: seed,
            kalman: KalmanSettings { q: Matrix2::diag(q, q), ..KalmanSettings::default() },
            ..ScenarioConfig::default()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_toml(cfg in config_strategy()) {
        let text = to_toml_string(&cfg).unwrap();
        prop_assert_eq!(from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn validated_configs_run_cleanly(cfg in config_strategy()) {
        let cfg = validate_config(&cfg).unwrap();
        let record = match run_scenario(&cfg) {
            Ok(record) => record,
            Err(SimError::Collision { record, .. }) => *record,
            Err(other) => return Err(TestCaseError::fail(other.to_string())),
        };
        for entry in &record.ticks {
            prop_assert!(entry.vehicles.iter().all(|v| v.is_finite() && v.velocity >= 0.0));
            prop_assert!(entry.decisions.iter().all(|a| a.is_finite()));
        }
    }
}

fn lag_one_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn innovations_are_white_when_model_matches() {
    let dt = 0.1;
    let (q, r) = (Matrix2::diag(0.02, 0.01), Matrix2::diag(1.0, 0.25));
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut gauss = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let mut filter = PairFilter::new(dt, q, r, Matrix2::IDENTITY);
    let mut truth = StateVector2::new(37.5, 0.0);
    let mut prediction: Option<StateVector2> = None;
    let (mut dp, mut dv) = (Vec::new(), Vec::new());
    for tick in 0..5000 {
        let z = truth + StateVector2::new(gauss(1.0), gauss(0.5));
        if let Some(pred) = prediction {
            if tick > 50 {
                dp.push(z.position - pred.position);
                dv.push(z.velocity - pred.velocity);
            }
        }
        let a = 0.5 * (tick as f64 * 0.01).sin();
        let (_, pred) = filter.filter_tick(z, a).unwrap();
        prediction = Some(pred);
        truth = filter.propagate(truth, a) + StateVector2::new(gauss(0.02f64.sqrt()), gauss(0.1));
    }
    for series in [&dp, &dv] {
        let rho = lag_one_autocorrelation(series);
        assert!((-0.1..=0.1).contains(&rho), "lag-1 autocorrelation {rho}");
    }
}
