use qmera_core::analysis::*;
use qmera_core::compiler::ResourceStats;
use qmera_core::mera::*;
use qmera_core::mitigation::*;
use qmera_core::simulator::NoiseModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn est(value: f64, stderr: f64) -> Estimate {
    Estimate { value, stderr, n_total: 8000, n_kept: 8000, noise_scale: 1.0 }
}

const RS: [usize; 5] = [2, 4, 8, 16, 32];

#[test]
fn exact_power_law() {
    let pts: Vec<(usize, f64)> = RS.iter().map(|&r| (r, 0.7 * (r as f64).powf(-0.25))).collect();
    let f = fit_power_law(&exact_points(&pts), &FitOptions::default()).unwrap();
    assert!((f.chisq.eta - 0.25).abs() < 1e-10);
    assert!((f.chisq.amplitude - 0.7).abs() < 1e-10);
    assert!(f.chisq.eta_err < 1e-10);
    assert!(f.chisq.residuals.iter().all(|(_, r)| r.abs() < 1e-12));
    assert_eq!(f.used, RS.to_vec());
}

#[test]
fn short_distances_and_bad_points_are_excluded() {
    let mut pts: Vec<(usize, Estimate)> = [1usize, 2, 4, 8, 16].iter().map(|&r| (r, est((r as f64).powf(-0.3), 0.01))).collect();
    pts[4].1.value = -0.01;
    let f = fit_power_law(&pts, &FitOptions::default()).unwrap();
    assert_eq!(f.used, vec![2, 4, 8]);
    assert_eq!(f.excluded.iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 16]);
    pts[3].1.value = 0.0;
    assert!(fit_power_law(&pts, &FitOptions::default()).is_err());
}

#[test]
fn error_bars_are_positive_with_noisy_points() {
    let pts: Vec<(usize, Estimate)> = RS.iter().map(|&r| (r, est((r as f64).powf(-0.25), 0.01))).collect();
    let f = fit_power_law(&pts, &FitOptions::default()).unwrap();
    assert!(f.chisq.eta_err > 0.0 && f.bootstrap.eta_err > 0.0);
    assert_eq!(f.bootstrap.method, FitMethod::Bootstrap);
}

#[test]
fn fit_is_scale_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<(usize, Estimate)> =
        RS.iter().map(|&r| (r, est((r as f64).powf(-0.25) * (1.0 + 0.02 * rng.gen::<f64>()), 0.01))).collect();
    let a = fit_power_law(&pts, &FitOptions::default()).unwrap();
    let scaled: Vec<(usize, Estimate)> =
        pts.iter().map(|&(r, e)| (r, Estimate { value: 3.7 * e.value, stderr: 3.7 * e.stderr, ..e })).collect();
    let b = fit_power_law(&scaled, &FitOptions::default()).unwrap();
    assert!((a.chisq.eta - b.chisq.eta).abs() < 1e-12);
    assert!((b.chisq.amplitude / a.chisq.amplitude - 3.7).abs() < 1e-10);
}

#[test]
fn both_methods_agree_on_synthetic_data() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(usize, Estimate)> = RS
            .iter()
            .map(|&r| {
                let c = 0.8 * (r as f64).powf(-0.25);
                let s = 0.01;
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                (r, est(c + s * z, s))
            })
            .collect();
        let f = fit_power_law(&pts, &FitOptions { seed, ..Default::default() }).unwrap();
        let tol = 1.5 * f.chisq.eta_err.max(f.bootstrap.eta_err);
        assert!((f.chisq.eta - f.bootstrap.eta).abs() < tol, "seed {seed}");
        assert!((f.chisq.eta_err / f.bootstrap.eta_err - 1.0).abs() < 0.3);
    }
}

fn record(r: usize, v: f64) -> DistanceRecord {
    let e1 = est(v * 0.9, 0.01);
    let em = est(v * 0.7, 0.02);
    DistanceRecord {
        distance: r,
        j: 0,
        k: r,
        raw: est(v * 0.8, 0.01),
        heralded: e1,
        zne: zne(&e1, &em, 3.0).unwrap(),
        discard_rate_1: 0.1,
        discard_rate_m: 0.25,
        bootstrap: None,
    }
}

fn sample_report(seed: u64) -> Report {
    let cfg = MeraConfig::new(16, 2);
    let net = build_mera(&cfg, random_params(&cfg, 0.2, 1).unwrap()).unwrap();
    let records: Vec<DistanceRecord> = [2usize, 4, 8].iter().map(|&r| record(r, (r as f64).powf(-0.25))).collect();
    let noiseless: Vec<f64> = records.iter().map(|r| (r.distance as f64).powf(-0.24)).collect();
    let res = ResourceStats {
        distance: 8,
        two_qubit_gates: 10,
        width_no_reuse: 9,
        width_greedy: 4,
        width_cap: 6,
        depth_no_reuse: 5,
        depth_greedy: 9,
        depth_cap: 6,
        cap: 6,
    };
    report(&ReportInputs {
        config_hash: "0123456789abcdef".into(),
        network: &net,
        energy: -20.0,
        energy_exact: -20.4,
        m: 3,
        placement: "j = 1, k = j + r".into(),
        noise: NoiseModel::default(),
        records: &records,
        noiseless: &noiseless,
        resources: vec![res],
        fit: FitOptions { seed, ..Default::default() },
    })
    .unwrap()
}

#[test]
fn report_roundtrip_and_determinism() {
    let a = sample_report(3);
    let s = a.to_json().unwrap();
    assert_eq!(s, sample_report(3).to_json().unwrap());
    assert_eq!(Report::validate_json(&s).unwrap(), a);
    assert!((a.eta - 0.25).abs() < 1e-9);
    assert!((a.eta_noiseless - 0.24).abs() < 1e-9);
    assert!((a.energy_err - 0.4 / 20.4).abs() < 1e-12);
    assert_eq!(a.network_hash.len(), 16);
    let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
    v["unexpected"] = 1.into();
    assert!(Report::validate_json(&v.to_string()).is_err());
    v.as_object_mut().unwrap().remove("unexpected");
    v.as_object_mut().unwrap().remove("eta");
    assert!(Report::validate_json(&v.to_string()).is_err());
}

#[test]
fn report_keys_match_published_schema() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let mut required: Vec<String> =
        schema["required"].as_array().unwrap().iter().map(|k| k.as_str().unwrap().to_string()).collect();
    let v: serde_json::Value = serde_json::from_str(&sample_report(0).to_json().unwrap()).unwrap();
    let mut keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    required.sort();
    keys.sort();
    assert_eq!(keys, required);
    for nested in ["noise", "discard_rates", "resource_stats", "points"] {
        let props = &schema["properties"][nested];
        let props = if props["type"] == "array" { &props["items"] } else { props };
        let mut want: Vec<&str> = props["required"].as_array().unwrap().iter().map(|k| k.as_str().unwrap()).collect();
        let obj = if v[nested].is_array() { &v[nested][0] } else { &v[nested] };
        let mut have: Vec<&str> = obj.as_object().unwrap().keys().map(String::as_str).collect();
        want.sort();
        have.sort();
        assert_eq!(have, want, "{nested}");
    }
}

#[test]
fn plot_tables() {
    let rep = sample_report(0);
    let fig3 = fig3_csv(&rep).unwrap();
    assert_eq!(fig3.lines().count(), 4);
    assert!(fig3.starts_with("distance,noiseless,raw,heralded,zne,stderr,in_fit\n2,"));
    let parity = parity_csv(&rep).unwrap();
    assert_eq!(parity.lines().count(), 7);
    assert!(parity.lines().nth(2).unwrap().starts_with("2,3,7.5e-1,"));

    let cfg = MeraConfig::new(16, 4);
    let net = build_mera(&cfg, random_params(&cfg, 3.0, 2).unwrap()).unwrap();
    let h = angles_hist_csv(&net, 10).unwrap();
    let total: usize = h
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|c| c.parse::<usize>().unwrap()).sum::<usize>())
        .sum();
    assert_eq!(total, net.entangler_param_positions().len());
    let m = median_entangler_angle(&net);
    assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&m));
}

#[test]
fn report_needs_records() {
    let cfg = MeraConfig::new(16, 2);
    let net = build_mera(&cfg, vec![0.0; param_count(&cfg).unwrap()]).unwrap();
    let r = report(&ReportInputs {
        config_hash: String::new(),
        network: &net,
        energy: 0.0,
        energy_exact: 1.0,
        m: 3,
        placement: String::new(),
        noise: NoiseModel::default(),
        records: &[],
        noiseless: &[],
        resources: vec![],
        fit: FitOptions::default(),
    });
    assert!(matches!(r, Err(qmera_core::Error::MissingArtifact(_))));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn eta_is_invariant_under_rescaling(eta in 0.05f64..1.0, a in 0.1f64..3.0, s in 0.01f64..100.0, noise in prop::collection::vec(-0.02f64..0.02, 5)) {
            let pts: Vec<(usize, Estimate)> = RS.iter().zip(&noise).map(|(&r, z)| (r, est(a * (r as f64).powf(-eta) * (1.0 + z), 0.01))).collect();
            let scaled: Vec<(usize, Estimate)> = pts.iter().map(|&(r, e)| (r, Estimate { value: s * e.value, stderr: s * e.stderr, ..e })).collect();
            let f = fit_power_law(&pts, &FitOptions::default()).unwrap();
            let g = fit_power_law(&scaled, &FitOptions::default()).unwrap();
            prop_assert!((f.chisq.eta - g.chisq.eta).abs() < 1e-12);
            prop_assert!((g.chisq.amplitude / f.chisq.amplitude - s).abs() < 1e-9 * s);
        }
    }
}
