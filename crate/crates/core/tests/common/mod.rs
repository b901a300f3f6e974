//! Synthetic linear-model snapshots shared by the estimator tests.
#![allow(dead_code)]

use hetqkd_core::rng::rng_from;
use hetqkd_core::security::*;
use hetqkd_core::transmitter::psk_point;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Circular complex Gaussian with per-quadrature variance `v`.
pub fn cgauss(rng: &mut impl Rng, v: f64) -> Complex64 {
    let s = v.sqrt();
    Complex64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
}

/// One raw snapshot in ADC-like units plus its own calibration from
/// independent shot and thermal draws. Per quadrature, shot noise is 1 and
/// thermal noise `eps_th` before the arbitrary `scale`.
pub fn snapshot(transmission: f64, eps: f64, eps_th: f64, n: usize, cal_n: usize, params: &SecurityParams, seed: u64) -> (Vec<Complex64>, Vec<Complex64>, NoiseCalibration) {
    let mut rng = rng_from(seed);
    let scale = 37.0;
    let t = (2.0 * params.eta * transmission * params.mean_photons).sqrt();
    // Excess noise enters as eta T eps / 2 per quadrature.
    let v_noise = 1.0 + eps_th + params.eta * transmission * eps / 2.0;
    let a: Vec<Complex64> = (0..n).map(|_| psk_point(rng.random_range(0..params.order), params.order)).collect();
    let raw: Vec<Complex64> = a.iter().map(|x| scale * (t * x + cgauss(&mut rng, v_noise))).collect();
    let shot: Vec<Complex64> = (0..cal_n).map(|_| scale * cgauss(&mut rng, 1.0 + eps_th)).collect();
    let th: Vec<Complex64> = (0..cal_n).map(|_| scale * cgauss(&mut rng, eps_th)).collect();
    let cal = NoiseCalibration::from_variances(per_quadrature_variance(&shot), per_quadrature_variance(&th)).unwrap();
    let b = snu_normalize(&raw, &cal);
    (a, b, cal)
}

/// Mean estimates over `count` independent snapshots of 65536 pairs.
pub fn ensemble(transmission: f64, eps: f64, eps_th: f64, count: u64, params: &SecurityParams, seed: u64) -> Vec<ChannelEstimate> {
    (0..count)
        .map(|k| {
            let (a, b, cal) = snapshot(transmission, eps, eps_th, 65536, 4 * 65536, params, seed * 1000 + k);
            estimate_channel(&a, &b, params, &cal).unwrap()
        })
        .collect()
}
