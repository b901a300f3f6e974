use std::f64::consts::PI;

use hetqkd_core::channel::*;
use hetqkd_core::rng::rng_from;
use hetqkd_core::signal::ComplexSignal;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

const FS: f64 = 2.4576e9;

fn cfg(pol: PolModel) -> ChannelConfig {
    ChannelConfig { pol_model: pol, ..ChannelConfig::default() }
}

fn noise_signal(len: usize, seed: u64) -> ComplexSignal {
    let mut rng = rng_from(seed);
    let v = (0..len).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    ComplexSignal::new(v, FS).unwrap()
}

fn unitarity_error(u: &Jones) -> f64 {
    (u * u.adjoint() - Jones::identity()).norm()
}

#[test]
fn transmission_closed_form() {
    let t = |l: f64, a: f64, p: f64| {
        transmission(&ChannelConfig { length_km: l, alpha_db_per_km: a, excess_t_penalty_db: p, ..ChannelConfig::default() })
    };
    // 8 dB and 11 dB of loss.
    assert!((t(40.0, 0.2, 0.0) - 0.158_489_319_246_111_35).abs() < 1e-12);
    assert!((t(40.0, 0.2, 0.0) - 0.15849).abs() < 5e-6);
    assert_eq!(t(0.0, 0.2, 0.0), 1.0);
    assert!((t(40.0, 0.2, 3.0) - 0.0794).abs() < 5e-5);
    assert!((t(40.0, 0.2, 3.0) - 1.0 / 10f64.powf(1.1)).abs() < 1e-14);
}

#[test]
fn config_validation() {
    assert!(ChannelConfig::default().validate().is_ok());
    assert!(ChannelConfig { length_km: -1.0, ..ChannelConfig::default() }.validate().is_err());
    assert!(ChannelConfig { combined_linewidth: -1.0, ..ChannelConfig::default() }.validate().is_err());
    // Negative penalty would mean gain.
    assert!(ChannelConfig { length_km: 0.0, excess_t_penalty_db: -1.0, ..ChannelConfig::default() }.validate().is_err());
    assert!(cfg(PolModel::Scrambler { step_rate: 0.0 }).validate().is_err());
}

#[test]
fn pol_model_serde_is_tagged() {
    let j = serde_json::to_value(PolModel::Wiener { angular_rate: 3.0 }).unwrap();
    assert_eq!(j["kind"], "wiener");
    let p: PolModel = serde_json::from_str(r#"{"kind":"scrambler","step_rate":10}"#).unwrap();
    assert_eq!(p, PolModel::Scrambler { step_rate: 10.0 });
}

#[test]
fn static_zero_is_identity() {
    let tr = make_jones_trajectory(&cfg(PolModel::Static { theta: 0.0, phi: 0.0 }), 0.0, 1e-4, 1e-6).unwrap();
    assert!(tr.duration() >= 1e-4);
    for u in &tr.matrices {
        assert!((u - Jones::identity()).norm() < 1e-15);
    }
}

#[test]
fn static_matrix_is_rotation_then_retarder() {
    let (th, ph) = (0.4, 1.1);
    let u = static_jones(th, ph);
    assert!(unitarity_error(&u) < 1e-14);
    // Acting on x: (cos th e^{i ph/2}, sin th e^{-i ph/2}).
    let e = Complex64::from_polar(1.0, ph / 2.0);
    assert!((u[(0, 0)] - e * th.cos()).norm() < 1e-14);
    assert!((u[(1, 0)] - e.conj() * th.sin()).norm() < 1e-14);
}

#[test]
fn scrambler_is_haar_ks_below_002() {
    let c = cfg(PolModel::Scrambler { step_rate: 10.0 });
    let tr = make_jones_trajectory(&c, 0.0, 1000.0, 0.1).unwrap();
    let mut v: Vec<f64> = tr.matrices.iter().take(10_000).map(|u| u[(0, 0)].norm_sqr()).collect();
    assert_eq!(v.len(), 10_000);
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let ks = v
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn scrambler_holds_within_a_step_and_changes_across() {
    let c = cfg(PolModel::Scrambler { step_rate: 10.0 });
    let tr = make_jones_trajectory(&c, 3.0, 2e-3, 1e-6).unwrap();
    let first = tr.matrices[0];
    assert!(tr.matrices.iter().all(|u| *u == first));
    let later = make_jones_trajectory(&c, 3.1, 2e-3, 1e-6).unwrap();
    assert!((later.matrices[0] - first).norm() > 1e-3);
    // Same wall-clock time, same SOP.
    let again = make_jones_trajectory(&c, 3.0005, 1e-3, 1e-6).unwrap();
    assert_eq!(again.matrices[0], first);
}

#[test]
fn wiener_mean_step_angle_matches_rate() {
    for (rate, dt) in [(1e3, 1e-4), (100.0, 1e-3), (5e4, 1e-6)] {
        let c = cfg(PolModel::Wiener { angular_rate: rate });
        let tr = make_jones_trajectory(&c, 0.0, 20_000.0 * dt, dt).unwrap();
        let m = &tr.matrices;
        let mean = m.windows(2).map(|w| stokes_rotation_angle(&(w[1] * w[0].adjoint()))).sum::<f64>() / (m.len() - 1) as f64;
        let want = rate * dt;
        assert!(want < 0.5);
        assert!((mean / want - 1.0).abs() < 0.1, "rate {rate}: {mean} vs {want}");
    }
}

#[test]
fn su2_exp_angle_is_vector_norm() {
    let d = [0.1, 0.2, -0.3];
    let u = su2_exp(d);
    assert!(unitarity_error(&u) < 1e-14);
    assert!((stokes_rotation_angle(&u) - (0.14f64).sqrt()).abs() < 1e-12);
    assert_eq!(su2_exp([0.0; 3]), Jones::identity());
}

#[test]
fn zero_duration_trajectory_is_error() {
    assert!(make_jones_trajectory(&ChannelConfig::default(), 0.0, 0.0, 1e-6).is_err());
    assert!(make_jones_trajectory(&ChannelConfig::default(), 0.0, 1.0, 0.0).is_err());
}

#[test]
fn identity_channel_passes_input_to_x() {
    let c = ChannelConfig { length_km: 0.0, combined_linewidth: 0.0, f_s: 0.0, ..ChannelConfig::default() };
    let sig = noise_signal(4096, 1);
    let tr = make_jones_trajectory(&c, 0.0, sig.duration(), 1e-6).unwrap();
    let (x, y) = apply_channel(&sig, &c, &tr).unwrap();
    for (a, b) in x.samples().iter().zip(sig.samples()) {
        assert!((a - b).norm() < 1e-12);
    }
    assert!(y.samples().iter().all(|z| z.norm() == 0.0));
}

#[test]
fn frequency_offset_is_applied_as_beat_factor() {
    let c = ChannelConfig { length_km: 0.0, combined_linewidth: 0.0, f_s: 1e9, ..ChannelConfig::default() };
    let sig = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 1000], FS).unwrap();
    let tr = make_jones_trajectory(&c, 0.0, sig.duration(), 1e-6).unwrap();
    let (x, _) = apply_channel(&sig, &c, &tr).unwrap();
    for (k, z) in x.samples().iter().enumerate() {
        let want = Complex64::from_polar(1.0, 2.0 * PI * 1e9 * k as f64 / FS);
        assert!((z - want).norm() < 1e-9);
    }
}

#[test]
fn forty_five_degree_split() {
    let c = cfg(PolModel::Static { theta: PI / 4.0, phi: 0.0 });
    let sig = noise_signal(8192, 2);
    let tr = make_jones_trajectory(&c, 0.0, sig.duration(), 1e-6).unwrap();
    let (x, y) = apply_channel(&sig, &c, &tr).unwrap();
    let px: f64 = x.samples().iter().map(|z| z.norm_sqr()).sum();
    let py: f64 = y.samples().iter().map(|z| z.norm_sqr()).sum();
    assert!((px / (px + py) - 0.5).abs() < 1e-6);
}

#[test]
fn short_trajectory_is_error() {
    let c = ChannelConfig::default();
    let sig = noise_signal(10_000, 3);
    let tr = make_jones_trajectory(&c, 0.0, 0.5 * sig.duration(), 1e-6).unwrap();
    assert!(matches!(apply_channel(&sig, &c, &tr), Err(hetqkd_core::Error::Parameter(_))));
}

#[test]
fn phase_noise_increment_variance_within_5_percent() {
    let lw = 100e3;
    for tau in [1usize, 4] {
        let n = 1_000_000 * tau + 1;
        let phi = phase_noise(n, FS, lw, 9);
        assert_eq!(phi[0], 0.0);
        let inc: Vec<f64> = (0..1_000_000).map(|k| phi[(k + 1) * tau] - phi[k * tau]).collect();
        let m = inc.iter().sum::<f64>() / inc.len() as f64;
        let var = inc.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (inc.len() - 1) as f64;
        let want = 2.0 * PI * lw * tau as f64 / FS;
        assert!((var / want - 1.0).abs() < 0.05, "tau {tau}: {var} vs {want}");
    }
}

#[test]
fn phase_noise_seeds_decorrelate() {
    let n = 200_001;
    let a = phase_noise(n, FS, 100e3, 1);
    let b = phase_noise(n, FS, 100e3, 2);
    assert_eq!(a, phase_noise(n, FS, 100e3, 1));
    let da: Vec<f64> = a.windows(2).map(|w| w[1] - w[0]).collect();
    let db: Vec<f64> = b.windows(2).map(|w| w[1] - w[0]).collect();
    let dot: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
    let na: f64 = da.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = db.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((dot / (na * nb)).abs() < 0.05);
    assert!(phase_noise(10, FS, 0.0, 1).iter().all(|&p| p == 0.0));
}

fn any_model() -> impl Strategy<Value = PolModel> {
    prop_oneof![
        (-PI..PI, -PI..PI).prop_map(|(theta, phi)| PolModel::Static { theta, phi }),
        (0.0f64..1e5).prop_map(|angular_rate| PolModel::Wiener { angular_rate }),
        (1.0f64..1e5).prop_map(|step_rate| PolModel::Scrambler { step_rate }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectories_are_unitary(model in any_model(), seed in 0u64..1000, start in 0.0f64..100.0) {
        let c = ChannelConfig { seed, pol_model: model, ..ChannelConfig::default() };
        let tr = make_jones_trajectory(&c, start, 1e-4, 1e-6).unwrap();
        for u in &tr.matrices {
            prop_assert!(unitarity_error(u) < 1e-10);
        }
    }

    #[test]
    fn channel_conserves_scaled_energy(model in any_model(), seed in 0u64..1000, len_km in 0.0f64..100.0) {
        let c = ChannelConfig { seed, pol_model: model, length_km: len_km, ..ChannelConfig::default() };
        let sig = noise_signal(3000, seed);
        let tr = make_jones_trajectory(&c, 0.0, sig.duration(), 1e-7).unwrap();
        let (x, y) = apply_channel(&sig, &c, &tr).unwrap();
        let t = transmission(&c);
        for i in 0..sig.len() {
            let out = x.samples()[i].norm_sqr() + y.samples()[i].norm_sqr();
            prop_assert!((out - t * sig.samples()[i].norm_sqr()).abs() < 1e-10 * (1.0 + sig.samples()[i].norm_sqr()));
        }
    }
}
