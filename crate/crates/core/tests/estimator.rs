use proptest::prelude::*;
use snrlab::analytic_snr::truncated_poisson_moments;
use snrlab::estimator::*;
use snrlab::sensor_model::{sample_truncated_poisson, Sample};
use snrlab::{Error, SeededRng};

fn samples(v: &[u64]) -> Vec<Sample> {
    v.iter().map(|&x| Sample(x)).collect()
}

#[test]
fn inversion_examples() {
    assert!((invert_mean(&IdentityMean, 3.7, DEFAULT_TOL).unwrap() - 3.7).abs() <= DEFAULT_TOL);

    let one_bit = OneBitMean { threshold: 0.5, read_noise: 0.0 };
    for i in 1..10 {
        let y = i as f64 / 10.0;
        let t = invert_mean(&one_bit, y, DEFAULT_TOL).unwrap();
        assert!((t + (-y as f64).ln_1p()).abs() < 1e-9, "y={y}");
    }

    let tp = TruncatedPoissonMean { full_well: 10 };
    let t = invert_mean(&tp, 6.0, DEFAULT_TOL).unwrap();
    assert!((tp.eval(t) - 6.0).abs() <= 1e-10);
    assert!((truncated_poisson_moments(t, 10).unwrap().mean - 6.0).abs() <= 1e-10);
}

#[test]
fn range_boundary_is_saturation() {
    let tp = TruncatedPoissonMean { full_well: 10 };
    assert!(matches!(invert_mean(&tp, 10.0, DEFAULT_TOL), Err(Error::Saturation { .. })));
    assert!(matches!(invert_mean(&tp, 0.0, DEFAULT_TOL), Err(Error::Saturation { .. })));
    let one_bit = OneBitMean { threshold: 0.5, read_noise: 0.0 };
    assert!(matches!(invert_mean(&one_bit, 1.0, DEFAULT_TOL), Err(Error::Saturation { .. })));
    assert!(matches!(ml_bernoulli(0.0), Err(Error::Saturation { .. })));
    assert!(matches!(ml_bernoulli(1.0), Err(Error::Saturation { .. })));
    let flat = FnMean::new(|t| t, (0.0, 1.0), false);
    assert!(invert_mean(&flat, 0.5, DEFAULT_TOL).is_err());
}

#[test]
fn bernoulli_examples() {
    assert!((ml_bernoulli(1.0 - (-2.0f64).exp()).unwrap() - 2.0).abs() < 1e-14);
    assert!((ml_bernoulli(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    for i in 1..10 {
        let y = i as f64 / 10.0;
        assert!((1.0 - (-ml_bernoulli(y).unwrap()).exp() - y).abs() < 1e-15);
    }
}

#[test]
fn truncated_ml_without_saturation_is_sample_mean() {
    let s = samples(&[0, 3, 4, 6, 2, 5]);
    let t = ml_truncated_poisson(&s, 7).unwrap();
    assert!((t - 20.0 / 6.0).abs() < 1e-10);
    assert!(matches!(ml_truncated_poisson(&samples(&[7, 7]), 7), Err(Error::Saturation { .. })));
}

#[test]
fn small_sample_divergence() {
    // Exhaustive search over sorted 4-sample configurations with L = 7 and
    // mixed saturation.
    let l = 7u64;
    let mean = TruncatedPoissonMean { full_well: l };
    let mut best = (0.0, vec![]);
    for a in 0..l {
        for b in a..=l {
            for c in b..=l {
                let v = [a, b, c, l];
                let s = samples(&v);
                let y_bar = v.iter().sum::<u64>() as f64 / 4.0;
                let (Ok(ml), Ok(mi)) = (ml_truncated_poisson(&s, l), invert_mean(&mean, y_bar, DEFAULT_TOL)) else {
                    continue;
                };
                if (ml - mi).abs() > best.0 {
                    best = ((ml - mi).abs(), v.to_vec());
                }
            }
        }
    }
    assert!(best.0 > 1e-3, "largest gap {best:?}");
    // a specific configuration
    let s = samples(&[1, 2, 7, 7]);
    let ml = ml_truncated_poisson(&s, l).unwrap();
    let mi = invert_mean(&mean, 17.0 / 4.0, DEFAULT_TOL).unwrap();
    assert!((ml - mi).abs() > DEFAULT_TOL * 1e3, "{ml} vs {mi}");
}

#[test]
fn asymptotic_agreement() {
    let l = 7;
    let s = sample_truncated_poisson(4.0, l, &mut SeededRng::new(0, 0), 100_000).unwrap();
    let y_bar = s.iter().map(|x| x.0 as f64).sum::<f64>() / s.len() as f64;
    let ml = ml_truncated_poisson(&s, l).unwrap();
    let mi = invert_mean(&TruncatedPoissonMean { full_well: l }, y_bar, DEFAULT_TOL).unwrap();
    assert!((ml - mi).abs() <= 0.02, "{ml} vs {mi}");
}

#[test]
fn consistency_over_seeds() {
    let (theta, l, n) = (4.0, 7u64, 100_000usize);
    let m = truncated_poisson_moments(theta, l).unwrap();
    // asymptotic std of the mean-invariant estimator
    let sd = (m.variance / n as f64).sqrt() / m.mean_derivative;
    let mean = TruncatedPoissonMean { full_well: l };
    let (mut ok_mi, mut ok_ml) = (0, 0);
    for seed in 0..20 {
        let s = sample_truncated_poisson(theta, l, &mut SeededRng::new(seed, 0), n).unwrap();
        let y_bar = s.iter().map(|x| x.0 as f64).sum::<f64>() / n as f64;
        if (invert_mean(&mean, y_bar, DEFAULT_TOL).unwrap() - theta).abs() <= 3.0 * sd {
            ok_mi += 1;
        }
        if (ml_truncated_poisson(&s, l).unwrap() - theta).abs() <= 3.0 * sd {
            ok_ml += 1;
        }
    }
    assert!(ok_mi >= 18 && ok_ml >= 18, "{ok_mi} {ok_ml}");
}

#[test]
fn estimator_wrapper_uses_default_tol() {
    let e = MeanInvariantEstimator::new(TruncatedPoissonMean { full_well: 7 });
    assert_eq!(e.tol, DEFAULT_TOL);
    let t = e.estimate(3.0).unwrap();
    assert!((e.mean.eval(t) - 3.0).abs() <= DEFAULT_TOL);
}

proptest! {
    #[test]
    fn identity_round_trip(y in 1e-6f64..1e6) {
        let t = invert_mean(&IdentityMean, y, DEFAULT_TOL).unwrap();
        prop_assert!((t - y).abs() <= DEFAULT_TOL);
    }

    #[test]
    fn one_bit_round_trip(y in 1e-6f64..0.999_999, q in 0.1f64..4.0, sigma in 0.0f64..0.6) {
        let mu = OneBitMean { threshold: q, read_noise: sigma };
        prop_assume!(y > mu.eval(1e-9));
        let t = invert_mean(&mu, y, DEFAULT_TOL).unwrap();
        prop_assert!((mu.eval(t) - y).abs() <= DEFAULT_TOL);
    }

    #[test]
    fn truncated_round_trip(frac in 1e-6f64..0.999_99, l in 1u64..200) {
        let mu = TruncatedPoissonMean { full_well: l };
        let y = frac * l as f64;
        let t = invert_mean(&mu, y, DEFAULT_TOL).unwrap();
        prop_assert!((mu.eval(t) - y).abs() <= DEFAULT_TOL);
    }

    #[test]
    fn ml_equals_mean_invariant_bernoulli(y in 1e-4f64..0.9999) {
        let mi = invert_mean(&OneBitMean { threshold: 1.0, read_noise: 0.0 }, y, 1e-13).unwrap();
        let ml = ml_bernoulli(y).unwrap();
        // theta-space error from a mu-space tolerance: |d theta| = tol / (1 - y)
        prop_assert!((mi - ml).abs() <= 1e-12 / (1.0 - y));
    }

    #[test]
    fn ml_equals_mean_invariant_poisson(v in proptest::collection::vec(0u64..50, 1..40)) {
        prop_assume!(v.iter().any(|&x| x > 0));
        let s = samples(&v);
        let ml = ml_poisson(&s).unwrap();
        let mi = invert_mean(&IdentityMean, ml, DEFAULT_TOL).unwrap();
        prop_assert!((ml - mi).abs() <= DEFAULT_TOL);
    }
}
