use std::f64::consts::PI;

use hetqkd_core::error::Error;
use hetqkd_core::rng::rng_from;
use hetqkd_core::signal::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn tone(len: usize, fs: f64, f: f64, phase: f64) -> ComplexSignal {
    let s = (0..len).map(|k| Complex64::from_polar(1.0, 2.0 * PI * f * k as f64 / fs + phase)).collect();
    ComplexSignal::new(s, fs).unwrap()
}

/// Self-convolution of the taps sampled every `sps`, relative to the centre.
fn rrc_isi(rolloff: f64, sps: usize, span: usize) -> (f64, f64) {
    let h = design_rrc(rolloff, sps, span).unwrap();
    let h = h.coefficients();
    let n = h.len();
    let mut p = vec![0.0; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            p[i + j] += h[i] * h[j];
        }
    }
    let centre = n - 1;
    let mut worst: f64 = 0.0;
    let mut k = sps;
    while k <= centre {
        worst = worst.max(p[centre + k].abs()).max(p[centre - k].abs());
        k += sps;
    }
    (p[centre], worst)
}

#[test]
fn signals_reject_bad_rates_and_empty_samples() {
    assert!(ComplexSignal::new(vec![], 1.0).is_err());
    assert!(ComplexSignal::new(vec![c(1.0, 0.0)], 0.0).is_err());
    assert!(RealSignal::new(vec![1.0], -5.0).is_err());
    let s = RealSignal::new(vec![0.0; 2000], 1000.0).unwrap();
    assert_eq!(s.duration(), 2.0);
    assert_eq!(s.time(500), 0.5);
}

#[test]
fn fir_taps_must_be_symmetric() {
    assert!(FirTaps::new(vec![1.0, 2.0, 3.0]).is_err());
    assert!(FirTaps::new(vec![]).is_err());
    let t = FirTaps::new(vec![1.0, 2.0, 2.0, 1.0]).unwrap();
    assert_eq!(t.group_delay(), 1.5);
}

#[test]
fn rrc_has_unit_energy_and_odd_length() {
    let t = design_rrc(0.2, 64, 16).unwrap();
    assert!((t.energy() - 1.0).abs() < 1e-9);
    assert_eq!(t.len(), 16 * 64 + 1);
    assert_eq!(t.group_delay(), 512.0);
}

#[test]
fn rrc_rejects_invalid_parameters() {
    assert!(matches!(design_rrc(0.0, 64, 16), Err(Error::Parameter(_))));
    assert!(matches!(design_rrc(1.5, 64, 16), Err(Error::Parameter(_))));
    assert!(design_rrc(0.2, 1, 16).is_err());
    assert!(design_rrc(0.2, 64, 2).is_err());
    assert!(design_rrc(0.2, 3, 5).is_err());
}

#[test]
fn rrc_matched_pair_centre_dominates_by_100() {
    let (centre, worst) = rrc_isi(0.2, 64, 16);
    assert!(centre / worst > 100.0, "ratio {}", centre / worst);
}

#[test]
fn rrc_matched_pair_isi_below_1e3_at_default_span() {
    let (centre, worst) = rrc_isi(0.2, 64, 32);
    assert!(worst / centre < 1e-3, "ISI {}", worst / centre);
}

#[test]
fn rrc_half_power_point_at_half_symbol_rate() {
    // A matched RRC pair is a raised cosine, which is 6 dB down at Rs/2;
    // each RRC alone is 3 dB down there.
    let fs = 64.0;
    let t = design_rrc(0.2, 64, 16).unwrap();
    let g0 = t.response(0.0, fs).norm();
    let mut lo = 0.3;
    let mut hi = 0.7;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let db = 20.0 * (t.response(mid, fs).norm() / g0).log10();
        if db > -3.0103 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 0.5).abs() < 0.01, "-3 dB at {lo} Rs");
}

#[test]
fn impulse_returns_taps_centred_on_impulse() {
    let taps = FirTaps::new(vec![0.1, 0.3, 0.5, 0.3, 0.1]).unwrap();
    let mut x = vec![c(0.0, 0.0); 64];
    x[20] = c(1.0, 0.0);
    let y = fir_apply(&ComplexSignal::new(x, 1.0).unwrap(), &taps).unwrap();
    let y = y.samples();
    for (k, &tap) in taps.coefficients().iter().enumerate() {
        assert!((y[18 + k].re - tap).abs() < 1e-12);
    }
    assert!(y[17].norm() < 1e-12 && y[23].norm() < 1e-12);
}

#[test]
fn lowpass_passes_dc_exactly() {
    let lp = design_lowpass(1e6, 2.4576e9, 4096).unwrap();
    assert!((lp.dc_gain() - 1.0).abs() < 1e-12);
    let x = RealSignal::new(vec![3.5; 20_000], 2.4576e9).unwrap();
    let y = fir_apply_real(&x, &lp).unwrap();
    let e = lp.edge_len();
    for v in &y.samples()[e..20_000 - e] {
        assert!((v - 3.5).abs() < 1e-9);
    }
}

#[test]
fn lowpass_even_length_bumped_to_odd() {
    let lp = design_lowpass(1e6, 2.4576e9, 4096).unwrap();
    assert_eq!(lp.len(), 4097);
    assert_eq!(lp.group_delay().fract(), 0.0);
}

#[test]
fn lowpass_cutoff_beyond_nyquist_is_error() {
    assert!(design_lowpass(2e9, 2.4576e9, 512).is_err());
    assert!(design_lowpass(0.0, 1.0, 512).is_err());
}

#[test]
fn lowpass_tone_at_twice_cutoff_is_40db_down() {
    // Normalised regime (cutoff 1 % of fs, 513 taps): the transition band is
    // narrower than the cutoff, so 2x cutoff sits in the stop band.
    let fs = 1.0;
    let fc = 0.01;
    let lp = design_lowpass(fc, fs, 513).unwrap();
    let n = 200_000;
    let x = tone(n, fs, 2.0 * fc, 0.0);
    let y = fir_apply(&x, &lp).unwrap();
    let e = lp.edge_len();
    let p_in = x.samples()[e..n - e].iter().map(|z| z.norm_sqr()).sum::<f64>();
    let p_out = y.samples()[e..n - e].iter().map(|z| z.norm_sqr()).sum::<f64>();
    let db = 10.0 * (p_out / p_in).log10();
    assert!(db <= -40.0, "{db} dB");
}

#[test]
fn default_dsp_lowpass_rejects_clock_quantum_spacing() {
    // 1 MHz lowpass at 2.4576 GS/s: well beyond 40 dB by 4x cutoff and far
    // more at the 19.2 MHz band spacing.
    let lp = design_lowpass(1e6, 2.4576e9, 4096).unwrap();
    let db = |f: f64| 20.0 * lp.response(f, 2.4576e9).norm().log10();
    assert!(db(4e6) < -40.0);
    assert!(db(19.2e6) < -70.0);
    assert!(db(0.5e6) > -1.5);
}

#[test]
fn bandpass_passes_centre_and_rejects_four_halfwidths_out() {
    let fs = 2.4576e9;
    let (f0, w) = (100e6, 2e6);
    let bp = design_bandpass(f0, w, fs, 4096).unwrap();
    assert!((bp.response(f0, fs).norm() - 1.0).abs() < 0.05);
    let db = 20.0 * bp.response(f0 + 4.0 * w, fs).norm().log10();
    assert!(db < -40.0, "{db}");
    // Tone-injection version of the same check.
    let n = 400_000;
    let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * (f0 + 4.0 * w) * k as f64 / fs).cos()).collect();
    let y = fir_apply_real(&RealSignal::new(x.clone(), fs).unwrap(), &bp).unwrap();
    let e = bp.edge_len();
    let pin: f64 = x[e..n - e].iter().map(|v| v * v).sum();
    let pout: f64 = y.samples()[e..n - e].iter().map(|v| v * v).sum();
    assert!(10.0 * (pout / pin).log10() < -40.0);
}

#[test]
fn bandpass_passband_ripple_below_half_db() {
    let fs = 1.0;
    let bp = design_bandpass(0.2, 0.02, fs, 1024).unwrap();
    let g = |f: f64| 20.0 * bp.response(f, fs).norm().log10();
    for k in -4..=4 {
        let f = 0.2 + 0.0025 * k as f64;
        assert!(g(f).abs() < 0.5, "{} dB at {f}", g(f));
    }
}

#[test]
fn bandpass_centre_at_or_beyond_nyquist_is_error() {
    assert!(design_bandpass(1.3e9, 1e6, 2.4576e9, 512).is_err());
    assert!(design_bandpass(1.2288e9, 1e6, 2.4576e9, 512).is_err());
    assert!(design_bandpass(0.5e6, 1e6, 2.4576e9, 512).is_err());
}

#[test]
fn fft_filter_matches_direct_convolution() {
    let mut rng = rng_from(5);
    let x: Vec<Complex64> = (0..5000).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let taps = design_lowpass(0.05, 1.0, 301).unwrap();
    let a = FftFilter::new(&taps).apply(&x);
    let b = fir_apply_direct(&x, &taps);
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).norm() < 1e-10);
    }
}

#[test]
fn mix_follows_exact_per_sample_relation() {
    let fs = 2.4576e9;
    let x = tone(5000, fs, 3e6, 0.2);
    let y = mix(&x, 1.7e6, 0.4);
    for (k, (a, b)) in x.samples().iter().zip(y.samples()).enumerate() {
        let want = a * Complex64::from_polar(1.0, -(2.0 * PI * 1.7e6 * k as f64 / fs + 0.4));
        assert!((b - want).norm() < 1e-9);
    }
}

#[test]
fn mix_of_tone_at_its_frequency_is_constant() {
    let x = tone(10_000, 1e6, 12_345.0, 0.7);
    let y = mix(&x, 12_345.0, 0.0);
    for z in y.samples() {
        assert!((z - Complex64::from_polar(1.0, 0.7)).norm() < 1e-9);
    }
}

#[test]
fn mix_identity_and_inverse() {
    let mut rng = rng_from(9);
    let x: Vec<Complex64> = (0..4096).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let s = ComplexSignal::new(x.clone(), 1e3).unwrap();
    assert_eq!(mix(&s, 0.0, 0.0).samples(), s.samples());
    let back = mix(&mix(&s, 77.7, 0.3), -77.7, -0.3);
    for (a, b) in back.samples().iter().zip(&x) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn mix_real_matches_complex_promotion() {
    let r = RealSignal::new((0..1000).map(|k| (k as f64 * 0.1).sin()).collect(), 10.0).unwrap();
    let a = mix_real(&r, 1.3, 0.1);
    let b = mix(&r.to_complex(), 1.3, 0.1);
    assert_eq!(a, b);
}

#[test]
fn tone_frequency_fit_within_1hz() {
    let fs = 2.4576e9;
    let f = 1.234567e6;
    let x = tone(100_000, fs, f, 0.3);
    let ph = unwrap_phase(&x).unwrap();
    let t: Vec<f64> = (0..ph.len()).map(|k| k as f64 / fs).collect();
    let (slope, _) = linear_fit(&ph, &t).unwrap();
    assert!((slope / (2.0 * PI) - f).abs() < 1.0);
}

#[test]
fn constant_phase_fit() {
    let x = ComplexSignal::new(vec![Complex64::from_polar(2.0, -1.1); 1000], 1e3).unwrap();
    let ph = unwrap_phase(&x).unwrap();
    let t: Vec<f64> = (0..1000).map(|k| k as f64 / 1e3).collect();
    let (s, b) = linear_fit(&ph, &t).unwrap();
    assert!(s.abs() < 1e-9);
    assert!((b + 1.1).abs() < 1e-12);
}

#[test]
fn noisy_tone_fit_within_100hz() {
    // 20 dB SNR, complex white noise of total variance 0.01.
    let fs = 2.4576e9;
    let f = 5e6;
    let mut rng = rng_from(11);
    let s = 0.1 / 2f64.sqrt();
    let x: Vec<Complex64> = (0..100_000)
        .map(|k| {
            Complex64::from_polar(1.0, 2.0 * PI * f * k as f64 / fs)
                + c(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let ph = unwrap_phase(&ComplexSignal::new(x, fs).unwrap()).unwrap();
    let t: Vec<f64> = (0..ph.len()).map(|k| k as f64 / fs).collect();
    let (slope, _) = linear_fit(&ph, &t).unwrap();
    assert!((slope / (2.0 * PI) - f).abs() < 100.0);
}

#[test]
fn zero_sample_unwrap_is_degenerate_with_index() {
    let mut v = vec![c(1.0, 0.0); 10];
    v[6] = c(0.0, 0.0);
    let e = unwrap_phase(&ComplexSignal::new(v, 1.0).unwrap()).unwrap_err();
    assert!(matches!(e, Error::Degenerate { index: 6, .. }));
}

#[test]
fn welch_locates_tone_and_preserves_power() {
    let fs = 1e6;
    let x = tone(1 << 16, fs, 125e3, 0.0);
    let (f, p) = welch(x.samples(), fs, 1024).unwrap();
    let (i, _) = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!((f[i] - 125e3).abs() <= fs / 1024.0);
    let df = fs / 1024.0;
    let total: f64 = p.iter().sum::<f64>() * df;
    assert!((total - 1.0).abs() < 0.01, "{total}");
}

#[test]
fn welch_real_white_noise_level() {
    let mut rng = rng_from(3);
    let fs = 1e6;
    let x: Vec<f64> = (0..1 << 18).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let (f, p) = welch_real(&RealSignal::new(x, fs).unwrap(), 1024).unwrap();
    assert_eq!(f[0], 0.0);
    assert_eq!(f.len(), 513);
    assert_eq!(f[512], fs / 2.0);
    // Integrated one-sided PSD equals the variance.
    let total: f64 = p.iter().sum::<f64>() * fs / 1024.0;
    assert!((total / 4.0 - 1.0).abs() < 0.02, "{total}");
    // One-sided PSD of variance-4 white noise is 2*4/fs.
    let mid: f64 = p[10..p.len() - 10].iter().sum::<f64>() / (p.len() - 20) as f64;
    assert!((mid / (8.0 / fs) - 1.0).abs() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixing_preserves_energy(seed in 0u64..1000, f in -1e9f64..1e9, ph in -10.0f64..10.0, len in 1usize..3000) {
        let mut rng = rng_from(seed);
        let x: Vec<Complex64> = (0..len).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let s = ComplexSignal::new(x, 2.4576e9).unwrap();
        let e_in: f64 = s.samples().iter().map(|z| z.norm_sqr()).sum();
        let e_out: f64 = mix(&s, f, ph).samples().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((e_in - e_out).abs() <= 1e-9 * e_in.max(1.0));
    }

    #[test]
    fn fir_is_linear(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0, ntaps in 3usize..200) {
        let mut rng = rng_from(seed);
        let mut g = || -> Vec<Complex64> { (0..1500).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect() };
        let (x, y) = (g(), g());
        let taps = design_lowpass(0.1, 1.0, ntaps).unwrap();
        let f = FftFilter::new(&taps);
        let lhs = f.apply(&x.iter().zip(&y).map(|(u, v)| u * a + v * b).collect::<Vec<_>>());
        let (fx, fy) = (f.apply(&x), f.apply(&y));
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (fx[i] * a + fy[i] * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn unwrap_recovers_ramp(start in -50.0f64..50.0, steps in prop::collection::vec(-3.1f64..3.1, 2..500)) {
        let mut ramp = vec![start];
        for d in &steps {
            let last = *ramp.last().unwrap();
            ramp.push(last + d);
        }
        let z: Vec<Complex64> = ramp.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        let u = unwrap_phase(&ComplexSignal::new(z, 1.0).unwrap()).unwrap();
        let k = ((ramp[0] - u[0]) / (2.0 * PI)).round();
        for (r, v) in ramp.iter().zip(&u) {
            prop_assert!((r - v - 2.0 * PI * k).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_fit_recovers_exact_line(s in -1e3f64..1e3, b in -10.0f64..10.0, n in 2usize..300) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|x| s * x + b).collect();
        let (fs, fb) = linear_fit(&y, &t).unwrap();
        prop_assert!((fs - s).abs() < 1e-7 * s.abs().max(1.0));
        prop_assert!((fb - b).abs() < 1e-7 * b.abs().max(1.0) + 1e-9 * s.abs());
    }
}
