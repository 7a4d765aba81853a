use proptest::prelude::*;
use snrlab::analytic_snr::truncated_poisson_moments;
use snrlab::qis_metrics::one_bit_mean;
use snrlab::sensor_model::*;
use snrlab::{SeededRng, SensorConfig};

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

fn values(s: &[Sample]) -> Vec<f64> {
    s.iter().map(|x| x.value() as f64).collect()
}

#[test]
fn config_invariants() {
    assert!(SensorConfig::new(15, 0.0, 0.016, 4, 0.5).is_ok());
    assert!(SensorConfig::new(16, 0.0, 0.0, 4, 0.5).is_err());
    assert!(SensorConfig::new(0, 0.0, 0.0, 4, 0.5).is_err());
    assert!(SensorConfig::new(10, -0.1, 0.0, 4, 0.5).is_err());
    assert!(SensorConfig::new(10, 0.0, -1.0, 4, 0.5).is_err());
    assert!(SensorConfig::new(10, 0.0, 0.0, 4, 0.0).is_err());
    assert_eq!(SensorConfig::ideal(15).unwrap().adc_max(), 15);
}

#[test]
fn truncated_poisson_examples() {
    let mut rng = SeededRng::new(1, 0);
    assert!(sample_truncated_poisson(0.0, 10, &mut rng, 1000)
        .unwrap()
        .iter()
        .all(|s| s.value() == 0));

    let v = values(&sample_truncated_poisson(100.0, 10, &mut rng, 100_000).unwrap());
    assert!((mean_var(&v).0 - 10.0).abs() < 1e-3);

    let n = 1_000_000;
    let v = values(&sample_truncated_poisson(5.0, 10, &mut rng, n).unwrap());
    let (m, var) = mean_var(&v);
    let mu = truncated_poisson_moments(5.0, 10).unwrap().mean;
    assert!((m - mu).abs() < 3.0 * (var / n as f64).sqrt(), "{m} vs {mu}");
}

#[test]
fn one_bit_examples() {
    let n = 1_000_000;
    let mut rng = SeededRng::new(2, 0);
    let cfg = SensorConfig::new(1, 0.0, 0.0, 1, 0.5).unwrap();
    for theta in [0.3, 1.0, 2.5] {
        let (m, _) = mean_var(&values(&sample_one_bit(theta, &cfg, &mut rng, n).unwrap()));
        let p = 1.0 - (-theta as f64).exp();
        assert!((m - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "theta={theta}");
    }
    assert!(sample_one_bit(0.0, &cfg, &mut rng, 1000).unwrap().iter().all(|s| s.value() == 0));

    let noisy = SensorConfig::new(1, 0.2, 0.0, 1, 0.5).unwrap();
    let (m, _) = mean_var(&values(&sample_one_bit(1.0, &noisy, &mut rng, n).unwrap()));
    let p = one_bit_mean(1.0, 0.5, 0.2).unwrap();
    assert!((m - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
}

#[test]
fn noiseless_pipeline_equals_truncated_sampler() {
    let cfg = SensorConfig::new(15, 0.0, 0.0, 4, 0.5).unwrap();
    for theta in [0.4, 7.0, 14.0, 60.0] {
        let a = sample_full_pipeline(theta, &cfg, &mut SeededRng::new(9, 3), 5000).unwrap();
        let b = sample_truncated_poisson(theta, 15, &mut SeededRng::new(9, 3), 5000).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn pipeline_clips_into_adc_range() {
    let cfg = SensorConfig::new(15, 10.0, 0.0, 4, 0.5).unwrap();
    let s = sample_full_pipeline(0.5, &cfg, &mut SeededRng::new(0, 0), 100_000).unwrap();
    assert!(s.iter().all(|x| x.value() <= 15));
    assert!(s.iter().any(|x| x.value() == 0));
    assert!(s.iter().any(|x| x.value() == 15));
}

#[test]
fn distinct_streams_are_uncorrelated() {
    let n = 100_000;
    let a = values(&sample_truncated_poisson(3.0, 1000, &mut SeededRng::new(5, 0), n).unwrap());
    let b = values(&sample_truncated_poisson(3.0, 1000, &mut SeededRng::new(5, 1), n).unwrap());
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
    assert!((cov / (va * vb).sqrt()).abs() < 0.01);
    assert_ne!(a, b);
}

#[test]
fn untruncated_moments_match_poisson() {
    let n = 400_000;
    for theta in [0.5, 12.0, 75.0] {
        let v = values(&sample_truncated_poisson(theta, 1 << 31, &mut SeededRng::new(11, 0), n).unwrap());
        let (m, var) = mean_var(&v);
        let se_mean = (theta / n as f64).sqrt();
        // Var of the sample variance for Poisson: (mu4 - sigma^4) / n with mu4 = theta + 3 theta^2
        let se_var = ((theta + 2.0 * theta * theta) / n as f64).sqrt();
        assert!((m - theta).abs() < 3.0 * se_mean, "theta={theta} mean {m}");
        assert!((var - theta).abs() < 3.0 * se_var, "theta={theta} var {var}");
    }
}

#[test]
fn samplers_reject_bad_exposure() {
    let mut rng = SeededRng::new(0, 0);
    assert!(sample_truncated_poisson(-1.0, 10, &mut rng, 1).is_err());
    assert!(sample_truncated_poisson(f64::NAN, 10, &mut rng, 1).is_err());
    assert!(sample_truncated_poisson(1.0, 0, &mut rng, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_seed_same_samples(seed in any::<u64>(), stream in any::<u64>(), theta in 0.0f64..200.0) {
        let cfg = SensorConfig::new(31, 1.3, 0.2, 5, 0.5).unwrap();
        let a = sample_full_pipeline(theta, &cfg, &mut SeededRng::new(seed, stream), 200).unwrap();
        let b = sample_full_pipeline(theta, &cfg, &mut SeededRng::new(seed, stream), 200).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn samples_respect_ceiling(theta in 0.0f64..100.0, l in 1u64..40, read in 0.0f64..5.0) {
        let bits = 64 - l.leading_zeros();
        let cfg = SensorConfig::new(l, read, 0.0, bits, 0.5).unwrap();
        let mut rng = SeededRng::new(3, 0);
        prop_assert!(sample_full_pipeline(theta, &cfg, &mut rng, 200).unwrap().iter().all(|s| s.value() <= l));
        prop_assert!(sample_truncated_poisson(theta, l, &mut rng, 200).unwrap().iter().all(|s| s.value() <= l));
        prop_assert!(sample_one_bit(theta, &cfg, &mut rng, 200).unwrap().iter().all(|s| s.value() <= 1));
    }
}
