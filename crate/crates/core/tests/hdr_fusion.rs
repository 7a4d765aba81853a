use proptest::prelude::*;
use snrlab::analytic_snr::snr_exp_truncated_poisson;
use snrlab::hdr_fusion::*;
use snrlab::{Error, ExposureGrid, SeededRng};

fn reference() -> Brackets {
    Brackets::reference()
}

#[test]
fn bracket_validation() {
    assert_eq!(reference().taus, vec![1.0, 0.1, 0.01, 0.001]);
    assert_eq!((reference().full_well, reference().n_frames), (7, 100));
    assert!(Brackets::new(vec![], 7, 100).is_err());
    assert!(Brackets::new(vec![1.0, -0.1], 7, 100).is_err());
    assert!(Brackets::new(vec![1.0], 0, 100).is_err());
    assert!(Brackets::new(vec![1.0], 7, 0).is_err());
}

#[test]
fn weight_examples() {
    let single = Brackets::new(vec![0.3], 7, 100).unwrap();
    for scheme in [Scheme::ExposureReferred, Scheme::OutputReferred] {
        assert_eq!(fusion_weights(2.0, &single, scheme).unwrap().w, vec![1.0]);
    }
    let two = Brackets::new(vec![1.0, 0.1], 7, 100).unwrap();
    let w = fusion_weights(3.0, &two, Scheme::OutputReferred).unwrap().w;
    assert!((w[0] - 10.0 / 11.0).abs() < 1e-15 && (w[1] - 1.0 / 11.0).abs() < 1e-15);

    let w = fusion_weights(5.0, &reference(), Scheme::ExposureReferred).unwrap().w;
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w[0] > w[1] && w[0] > 0.5);
    let s: Vec<f64> = reference()
        .taus
        .iter()
        .map(|t| snr_exp_truncated_poisson(t * 5.0, 7, 100).unwrap().powi(2))
        .collect();
    let total: f64 = s.iter().sum();
    for (a, b) in w.iter().zip(&s) {
        assert!((a - b / total).abs() < 1e-15);
    }

    assert!(matches!(
        fusion_weights(1e9, &reference(), Scheme::OutputReferred),
        Err(Error::AllSaturated { .. })
    ));
}

#[test]
fn interior_schemes_agree() {
    // tau_m theta far below L for every bracket
    for theta in [0.01, 0.05, 0.1] {
        let a = fusion_weights(theta, &reference(), Scheme::ExposureReferred).unwrap().w;
        let b = fusion_weights(theta, &reference(), Scheme::OutputReferred).unwrap().w;
        for (x, y) in a.iter().zip(&b) {
            assert!((x / y - 1.0).abs() < 0.01, "theta={theta}: {x} vs {y}");
        }
    }
}

#[test]
fn noiseless_fusion_is_exact() {
    for theta in [0.05, 3.0, 40.0, 700.0, 5000.0] {
        let set = BracketSet::noiseless(&reference(), theta).unwrap();
        for scheme in [Scheme::ExposureReferred, Scheme::OutputReferred] {
            let w = fusion_weights(theta, &reference(), scheme).unwrap();
            let est = fuse_estimate(&set, &w).unwrap();
            assert!((est / theta - 1.0).abs() < 1e-6, "theta={theta} {scheme:?}: {est}");
        }
    }
}

#[test]
fn fused_estimate_is_unbiased_at_three() {
    let theta = 3.0;
    let mut ests = Vec::new();
    for seed in 0..20 {
        let set = BracketSet::simulate(&reference(), theta, &mut SeededRng::new(seed, 0)).unwrap();
        let w = fusion_weights(theta, &reference(), Scheme::ExposureReferred).unwrap();
        ests.push(fuse_estimate(&set, &w).unwrap());
    }
    let mean = ests.iter().sum::<f64>() / ests.len() as f64;
    assert!((mean / theta - 1.0).abs() < 0.02, "{mean}");
    let sd = (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    assert!((mean - theta).abs() <= 3.0 * sd / 20f64.sqrt());
}

#[test]
fn saturated_bracket_is_suppressed() {
    let theta = 500.0;
    let w = fusion_weights(theta, &reference(), Scheme::ExposureReferred).unwrap();
    assert!(w.w[0] < 1e-3);
    let mut total = 0.0;
    for seed in 0..20 {
        let set = BracketSet::simulate(&reference(), theta, &mut SeededRng::new(seed, 1)).unwrap();
        total += fuse_estimate(&set, &w).unwrap();
    }
    assert!((total / 20.0 / theta - 1.0).abs() < 0.05);
}

#[test]
fn saturated_contributor_reports_its_index() {
    let b = Brackets::new(vec![1.0, 0.1], 7, 100).unwrap();
    let set = BracketSet::new(b.clone(), vec![7.0, 3.0]).unwrap();
    let w = FusionWeights {
        w: vec![0.5, 0.5],
        scheme: Scheme::OutputReferred,
    };
    match fuse_estimate(&set, &w) {
        Err(Error::BracketSaturated { index, .. }) => assert_eq!(index, 0),
        other => panic!("{other:?}"),
    }
    assert_eq!(BracketSet::new(b, vec![0.0, 0.0]).unwrap().bracket_estimate(1).unwrap(), 0.0);
}

#[test]
fn hdr_curve_shapes() {
    let grid = ExposureGrid::log_spaced(1e-2, 1e4, 400).unwrap();
    let e = snr_hdr_curve(&reference(), Scheme::ExposureReferred, &grid).unwrap();
    let o = snr_hdr_curve(&reference(), Scheme::OutputReferred, &grid).unwrap();
    for (a, b) in e.points.iter().zip(&o.points) {
        match (a.snr, b.snr) {
            (Some(x), Some(y)) => assert!(x >= y * (1.0 - 1e-12), "theta={}", a.theta),
            (Some(_), None) => {}
            other => panic!("theta={}: {other:?}", a.theta),
        }
    }
    // sharp cutoff past L / tau_min
    for p in &o.points {
        if p.theta >= 7000.0 {
            assert!(p.snr.is_none());
        }
    }
    // valleys between bracket maxima under the output scheme
    let v: Vec<f64> = o.points.iter().map(|p| p.snr.unwrap_or(0.0)).collect();
    let local_min = (1..v.len() - 1).filter(|&i| v[i] < v[i - 1] && v[i] < v[i + 1] && v[i] > 0.0).count();
    assert!(local_min >= 2, "{local_min}");
}

#[test]
fn single_bracket_curve_collapses() {
    let b = Brackets::new(vec![0.1], 7, 100).unwrap();
    for theta in [0.5, 10.0, 60.0] {
        for scheme in [Scheme::ExposureReferred, Scheme::OutputReferred] {
            let v = snr_hdr(theta, &b, scheme).unwrap().unwrap();
            let direct = snr_exp_truncated_poisson(0.1 * theta, 7, 100).unwrap();
            assert!((v / direct - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn noiseless_image_is_exact() {
    let scene = Image::log_ramp(32, 4, 0.1, 1e4).unwrap();
    for scheme in [Scheme::ExposureReferred, Scheme::OutputReferred] {
        let f = fuse_image_noiseless(&scene, &reference(), scheme).unwrap();
        assert_eq!(f.psnr, f64::INFINITY);
        // the output scheme gives no weight at all past L / tau_min; those
        // pixels fall back to the longest invertible bracket
        let beyond = scene.data.iter().filter(|&&t| t >= 7000.0).count();
        let expect = if scheme == Scheme::OutputReferred { beyond } else { 0 };
        assert!(beyond > 0);
        assert_eq!(f.failures, expect);
    }
}

#[test]
fn constant_scene_schemes_agree() {
    let scene = Image::constant(64, 64, 2.0).unwrap();
    let rng = SeededRng::new(5, 0);
    let e = fuse_image(&scene, &reference(), Scheme::ExposureReferred, &rng).unwrap();
    let o = fuse_image(&scene, &reference(), Scheme::OutputReferred, &rng).unwrap();
    assert!((e.psnr - o.psnr).abs() < 0.5, "{} vs {}", e.psnr, o.psnr);
}

#[test]
fn image_fusion_is_reproducible() {
    let scene = Image::log_ramp(64, 8, 0.1, 1e4).unwrap();
    let rng = SeededRng::new(9, 2);
    let a = fuse_image(&scene, &reference(), Scheme::OutputReferred, &rng).unwrap();
    let b = fuse_image(&scene, &reference(), Scheme::OutputReferred, &rng).unwrap();
    assert_eq!(a, b);
    let c = fuse_image(&scene, &reference(), Scheme::OutputReferred, &SeededRng::new(10, 2)).unwrap();
    assert_ne!(a.estimate, c.estimate);
}

#[test]
fn psnr_conventions() {
    let b = reference();
    assert_eq!(psnr_floor(&b), 1.0 / 200.0);
    let scene = Image::constant(2, 1, 10.0).unwrap();
    let est = Image::new(2, 1, vec![10.0, 100.0]).unwrap();
    // peak log10(10 / 0.005), error 1 decade on half the pixels
    let peak = (10.0f64 / 0.005).log10();
    let expect = 10.0 * (peak * peak / 0.5).log10();
    assert!((log_psnr(&scene, &est, &b).unwrap() - expect).abs() < 1e-12);
    let bad = Image::new(1, 1, vec![1.0]).unwrap();
    assert!(log_psnr(&scene, &bad, &b).is_err());
    assert!(Image::new(2, 2, vec![1.0]).is_err());
}

proptest! {
    #[test]
    fn weights_normalized(theta in 1e-3f64..5e3, exposure in any::<bool>()) {
        let scheme = if exposure { Scheme::ExposureReferred } else { Scheme::OutputReferred };
        let w = fusion_weights(theta, &reference(), scheme).unwrap().w;
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fusion_round_trips(theta in 1e-2f64..5e3) {
        let set = BracketSet::noiseless(&reference(), theta).unwrap();
        let w = fusion_weights(theta, &reference(), Scheme::ExposureReferred).unwrap();
        let est = fuse_estimate(&set, &w).unwrap();
        prop_assert!((est / theta - 1.0).abs() < 1e-6);
    }
}
