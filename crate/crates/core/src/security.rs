//! Shot-noise-unit calibration, linear-model channel estimation, mutual
//! information, the Holevo bound for the M-PSK ensemble and the secret key
//! fraction `K = beta I_BA - chi_BE`.
//!
//! Variances are per quadrature unless stated otherwise: calibrated shot
//! noise is 1 SNU per quadrature, so the complex variance `sigma2_hat` of the
//! received points is `2 + eta T eps + 2 eps_th` in the absence of signal
//! correlation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{noise_points, DspConfig};
use crate::error::{Error, Result};
use crate::frontend::{CaptureKind, DualPolCapture};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    /// Per-quadrature post-DSP shot-noise variance (ADC counts^2).
    pub sigma2_shot: f64,
    /// Per-quadrature post-DSP thermal-noise variance (ADC counts^2).
    pub sigma2_thermal: f64,
    pub eps_thermal: f64,
}

impl NoiseCalibration {
    /// From the variance of a shot capture (LO on, so it includes thermal
    /// noise) and of a thermal capture.
    pub fn from_variances(shot_capture_var: f64, thermal_var: f64) -> Result<Self> {
        let sigma2_shot = shot_capture_var - thermal_var;
        if !(sigma2_shot > 0.0) {
            return Err(Error::Calibration(format!(
                "shot variance {sigma2_shot} is not positive; captures swapped or not shot-noise limited"
            )));
        }
        if !(thermal_var >= 0.0) {
            return Err(Error::Calibration("negative thermal variance".into()));
        }
        Ok(Self { sigma2_shot, sigma2_thermal: thermal_var, eps_thermal: thermal_var / sigma2_shot })
    }
}

/// Per-quadrature variance `sum |z - mean|^2 / (2 (n - 1))`.
pub fn per_quadrature_variance(points: &[Complex64]) -> f64 {
    let n = points.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean: Complex64 = points.iter().sum::<Complex64>() / n as f64;
    points.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (2.0 * (n - 1) as f64)
}

/// Running sums for a per-quadrature variance over many capture chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VarianceAccumulator {
    n: usize,
    sum: Complex64,
    sum_sq: f64,
}

impl VarianceAccumulator {
    pub fn add(&mut self, points: &[Complex64]) {
        self.n += points.len();
        self.sum += points.iter().sum::<Complex64>();
        self.sum_sq += points.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Same estimator as [`per_quadrature_variance`].
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        (self.sum_sq - self.sum.norm_sqr() / n) / (2.0 * (n - 1.0))
    }
}

/// Calibrate each branch from one shot and one thermal capture.
pub fn calibrate(shot: &DualPolCapture, thermal: &DualPolCapture, dsp: &DspConfig, f_s_nominal: f64) -> Result<[NoiseCalibration; 2]> {
    calibrate_pooled(std::slice::from_ref(shot), std::slice::from_ref(thermal), dsp, f_s_nominal)
}

/// As [`calibrate`], pooling the points of several captures of each kind.
pub fn calibrate_pooled(shot: &[DualPolCapture], thermal: &[DualPolCapture], dsp: &DspConfig, f_s_nominal: f64) -> Result<[NoiseCalibration; 2]> {
    if shot.is_empty() || thermal.is_empty() {
        return Err(Error::Calibration("need at least one capture of each kind".into()));
    }
    if shot.iter().any(|c| c.kind != CaptureKind::ShotOnly) {
        return Err(Error::Calibration("shot calibration needs ShotOnly captures".into()));
    }
    if thermal.iter().any(|c| c.kind != CaptureKind::ThermalOnly) {
        return Err(Error::Calibration("thermal calibration needs ThermalOnly captures".into()));
    }
    let pooled = |caps: &[DualPolCapture], y: bool| -> Result<f64> {
        let mut acc = VarianceAccumulator::default();
        for c in caps {
            acc.add(&noise_points(if y { &c.y } else { &c.x }, dsp, f_s_nominal)?);
        }
        Ok(acc.variance())
    };
    Ok([
        NoiseCalibration::from_variances(pooled(shot, false)?, pooled(thermal, false)?)?,
        NoiseCalibration::from_variances(pooled(shot, true)?, pooled(thermal, true)?)?,
    ])
}

/// Divide by the square root of the per-quadrature shot variance.
pub fn snu_normalize(points: &[Complex64], cal: &NoiseCalibration) -> Vec<Complex64> {
    let s = cal.sigma2_shot.sqrt();
    points.iter().map(|z| z / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    /// `b[i + lag]` pairs with `a[i]`.
    pub lag: i64,
    pub global_phase: f64,
    pub peak_ratio: f64,
    pub a: Vec<Complex64>,
    /// Received points, de-rotated by `global_phase`, aligned with `a`.
    pub b: Vec<Complex64>,
}

const MIN_OVERLAP: usize = 256;

/// Cross-correlation `c[lag] = sum_i conj(a[i]) b[i + lag]` for every lag with
/// at least `MIN_OVERLAP` overlapping symbols (`MIN(len)` if shorter).
fn xcorr(a: &[Complex64], b: &[Complex64]) -> (i64, Vec<Complex64>) {
    let (na, nb) = (a.len(), b.len());
    let overlap = MIN_OVERLAP.min(na).min(nb).max(1);
    let n = (na + nb).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa = vec![Complex64::new(0.0, 0.0); n];
    let mut fb = vec![Complex64::new(0.0, 0.0); n];
    fa[..na].copy_from_slice(a);
    fb[..nb].copy_from_slice(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fb.iter_mut().zip(&fa) {
        *x *= y.conj() / n as f64;
    }
    inv.process(&mut fb);
    let lo = -(na as i64 - overlap as i64);
    let hi = nb as i64 - overlap as i64;
    let out = (lo..=hi).map(|lag| fb[lag.rem_euclid(n as i64) as usize]).collect();
    (lo, out)
}

/// Align received points `b` with the reference symbols `a` by the peak of
/// their cross-correlation, and remove the constant phase.
pub fn frame_sync(b: &[Complex64], a: &[Complex64]) -> Result<SyncResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("frame_sync needs non-empty sequences"));
    }
    let (lo, c) = xcorr(a, b);
    let (best, peak) = c
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .map(|(i, z)| (i, *z))
        .unwrap();
    let others: Vec<f64> = c.iter().enumerate().filter(|&(i, _)| i != best).map(|(_, z)| z.norm_sqr()).collect();
    let rms = if others.is_empty() { 0.0 } else { (others.iter().sum::<f64>() / others.len() as f64).sqrt() };
    let peak_ratio = if rms > 0.0 { peak.norm() / rms } else { f64::INFINITY };
    if !(peak_ratio >= 5.0) {
        return Err(Error::SyncFailure { ratio: peak_ratio });
    }
    let lag = lo + best as i64;
    let global_phase = peak.arg();
    let (a, b) = pair_at_lag(a, b, lag, global_phase);
    Ok(SyncResult { lag, global_phase, peak_ratio, a, b })
}

/// Pairs `(a[i], b[i + lag] e^{-i phase})` over the overlap.
pub fn pair_at_lag(a: &[Complex64], b: &[Complex64], lag: i64, phase: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let rot = Complex64::from_polar(1.0, -phase);
    let start = (-lag).max(0) as usize;
    let end = (b.len() as i64 - lag).min(a.len() as i64).max(0) as usize;
    let mut pa = Vec::with_capacity(end.saturating_sub(start));
    let mut pb = Vec::with_capacity(end.saturating_sub(start));
    for i in start..end {
        pa.push(a[i]);
        pb.push(b[(i as i64 + lag) as usize] * rot);
    }
    (pa, pb)
}

/// Phase of `sum conj(a[i]) b[i + lag]`.
pub fn phase_at_lag(a: &[Complex64], b: &[Complex64], lag: i64) -> f64 {
    let (pa, pb) = pair_at_lag(a, b, lag, 0.0);
    pa.iter().zip(&pb).map(|(x, y)| x.conj() * y).sum::<Complex64>().arg()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolevoModel {
    /// Detector inefficiency and electronic noise are trusted and not
    /// attributed to the eavesdropper.
    TrustedDetector,
    /// Eve is bounded against an ideal heterodyne at the channel output.
    IdealHeterodyne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecurityParams {
    pub eta: f64,
    pub mean_photons: f64,
    pub beta: f64,
    pub order: usize,
    pub fock_cutoff: usize,
    pub holevo: HolevoModel,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self { eta: 0.72, mean_photons: 0.33, beta: 0.95, order: 8, fock_cutoff: 40, holevo: HolevoModel::TrustedDetector }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param("eta must lie in (0, 1]"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::param("beta must lie in (0, 1]"));
        }
        if !(self.mean_photons > 0.0) {
            return Err(Error::param("mean photon number must be positive"));
        }
        if self.order < 2 {
            return Err(Error::param("constellation order must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub t_hat: f64,
    pub sigma2_hat: f64,
    pub transmission: f64,
    pub eps_hat: f64,
}

/// Linear-model estimates from SNU pairs `b = t a + z`.
pub fn estimate_channel(a: &[Complex64], b: &[Complex64], params: &SecurityParams, cal: &NoiseCalibration) -> Result<ChannelEstimate> {
    if a.len() != b.len() {
        return Err(Error::param("symbol and measurement sequences differ in length"));
    }
    let n = a.len();
    if n < 1024 {
        return Err(Error::param(format!("need at least 1024 pairs, got {n}")));
    }
    let ea = a.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    if (ea - 1.0).abs() > 0.01 {
        return Err(Error::param(format!("E|a|^2 = {ea}, expected 1")));
    }
    let nf = n as f64;
    let t_hat = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>().re / nf;
    if !(t_hat > 0.0) {
        return Err(Error::EstimateDegenerate(format!("t_hat = {t_hat} (no positive correlation)")));
    }
    let sigma2_hat = a.iter().zip(b).map(|(x, y)| (y - x * t_hat).norm_sqr()).sum::<f64>() / nf;
    let transmission = t_hat * t_hat / (params.eta * 2.0 * params.mean_photons);
    let eps_hat = (sigma2_hat - 2.0 - 2.0 * cal.eps_thermal) / (params.eta * transmission);
    Ok(ChannelEstimate { t_hat, sigma2_hat, transmission, eps_hat })
}

/// `I_BA = log2(1 + 2 T eta <n> / (2 + T eta eps + 2 eps_th))`.
pub fn mutual_info_raw(transmission: f64, eps: f64, eps_thermal: f64, params: &SecurityParams) -> Result<f64> {
    let den = 2.0 + transmission * params.eta * eps + 2.0 * eps_thermal;
    if !(den > 0.0) {
        return Err(Error::param(format!("non-positive noise denominator {den}")));
    }
    let i = (1.0 + 2.0 * transmission * params.eta * params.mean_photons / den).log2();
    if !i.is_finite() {
        return Err(Error::param("mutual information is not finite"));
    }
    Ok(i)
}

pub fn mutual_info(est: &ChannelEstimate, params: &SecurityParams, cal: &NoiseCalibration) -> Result<f64> {
    mutual_info_raw(est.transmission, est.eps_hat, cal.eps_thermal, params)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Eigenvalues of the M-PSK ensemble state, from the closed form
/// `lambda_k = e^{-a^2} sum_m a^{2(mM+k)} / (mM+k)!` truncated at `fock_cutoff`.
pub fn ensemble_spectrum(mean_photons: f64, order: usize, fock_cutoff: usize) -> Result<Vec<f64>> {
    if !(mean_photons > 0.0) || order < 2 {
        return Err(Error::param("need mean_photons > 0 and order >= 2"));
    }
    if (fock_cutoff as f64) < 10.0 * mean_photons.max(1.0) {
        return Err(Error::param(format!("Fock cutoff {fock_cutoff} below 10 max(1, <n>)")));
    }
    let ln_a2 = mean_photons.ln();
    let mut lam = vec![0.0; order];
    for n in 0..=fock_cutoff {
        lam[n % order] += (-mean_photons + n as f64 * ln_a2 - ln_factorial(n)).exp();
    }
    let deficit = 1.0 - lam.iter().sum::<f64>();
    if deficit > 1e-10 {
        return Err(Error::Cutoff { cutoff: fock_cutoff, deficit });
    }
    Ok(lam)
}

/// Density matrix of the M-PSK ensemble in a Fock basis `|0>..|cutoff>`.
pub fn ensemble_density_matrix(mean_photons: f64, order: usize, fock_cutoff: usize) -> DMatrix<Complex64> {
    let dim = fock_cutoff + 1;
    let alpha = mean_photons.sqrt();
    let coeffs: Vec<Vec<Complex64>> = (0..order)
        .map(|k| {
            let beta = Complex64::from_polar(alpha, (2.0 * k as f64 + 1.0) * PI / order as f64);
            (0..dim)
                .map(|n| {
                    let mag = (-mean_photons / 2.0 + n as f64 * alpha.ln() - 0.5 * ln_factorial(n)).exp();
                    Complex64::from_polar(mag, n as f64 * beta.arg())
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(dim, dim, |m, n| {
        let v = coeffs.iter().map(|c| c[m] * c[n].conj()).sum::<Complex64>() / order as f64;
        // Entries this small square to subnormals and make the eigensolver
        // return NaN.
        if v.norm() < 1e-100 { Complex64::new(0.0, 0.0) } else { v }
    })
}

fn hermitian_eigen(rho: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let e = SymmetricEigen::new(rho);
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

/// Eigenvalues of the truncated density matrix, largest first.
pub fn ensemble_spectrum_fock(mean_photons: f64, order: usize, fock_cutoff: usize) -> Vec<f64> {
    let (mut ev, _) = hermitian_eigen(ensemble_density_matrix(mean_photons, order, fock_cutoff));
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `Z = <Phi| a1 a2 + a1^dag a2^dag |Phi>` for the canonical purification
/// `|Phi> = (sqrt(rho) x I) sum_n |n>|n>`, evaluated in the Fock basis as
/// `2 Re Tr(C^dag A C A^T)` with `C = sqrt(rho)`. Returned as a magnitude.
pub fn z_correlation(mean_photons: f64, order: usize, fock_cutoff: usize) -> Result<f64> {
    ensemble_spectrum(mean_photons, order, fock_cutoff)?;
    let dim = fock_cutoff + 1;
    let (ev, v) = hermitian_eigen(ensemble_density_matrix(mean_photons, order, fock_cutoff));
    let sq = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        ev.iter().map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    ));
    let c = &v * sq * v.adjoint();
    let a = DMatrix::from_fn(dim, dim, |m, n| {
        if n == m + 1 {
            Complex64::new((n as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let t = (c.adjoint() * &a * &c * a.transpose()).trace();
    Ok(2.0 * t.re.abs())
}

/// `g(nu)`, the entropy of a thermal mode with symplectic eigenvalue `nu`.
pub fn g_entropy(nu: f64) -> Result<f64> {
    if nu < 1.0 - 1e-9 || !nu.is_finite() {
        return Err(Error::Unphysical { nu });
    }
    if nu <= 1.0 {
        return Ok(0.0);
    }
    let p = (nu + 1.0) / 2.0;
    let m = (nu - 1.0) / 2.0;
    Ok(p * p.log2() - if m > 0.0 { m * m.log2() } else { 0.0 })
}

/// Symplectic spectrum of a `2n x 2n` covariance matrix in `(x1, p1, x2, p2, ..)`
/// ordering, ascending. Uses the eigenvalues of `(G^1/2 O G^1/2)^T (G^1/2 O G^1/2)`,
/// which are the squared symplectic eigenvalues, each twice.
pub fn symplectic_eigenvalues(gamma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n2 = gamma.nrows();
    if n2 % 2 != 0 || gamma.ncols() != n2 {
        return Err(Error::param("covariance matrix must be square with even size"));
    }
    let sym = (gamma + gamma.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    if e.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Unphysical { nu: e.eigenvalues.min() });
    }
    let root = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * e.eigenvectors.transpose();
    let omega = DMatrix::from_fn(n2, n2, |i, j| {
        if i % 2 == 0 && j == i + 1 {
            1.0
        } else if i % 2 == 1 && j + 1 == i {
            -1.0
        } else {
            0.0
        }
    });
    let k = &root * omega * &root;
    let m = k.transpose() * &k;
    let mut ev: Vec<f64> = SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev.iter().step_by(2).copied().collect())
}

fn entropy(gamma: &DMatrix<f64>) -> Result<f64> {
    symplectic_eigenvalues(gamma)?.into_iter().map(g_entropy).sum()
}

fn two_mode(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 4, &[
        a, 0.0, c, 0.0, //
        0.0, a, 0.0, -c, //
        c, 0.0, b, 0.0, //
        0.0, -c, 0.0, b,
    ])
}

/// Schur complement for ideal heterodyne on the modes `meas` of `gamma`:
/// `G_R - s (G_B + I)^-1 s^T`.
fn heterodyne_condition(gamma: &DMatrix<f64>, keep: &[usize], meas: &[usize]) -> Result<DMatrix<f64>> {
    let idx = |modes: &[usize]| modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect::<Vec<_>>();
    let (r, b) = (idx(keep), idx(meas));
    let gr = DMatrix::from_fn(r.len(), r.len(), |i, j| gamma[(r[i], r[j])]);
    let gb = DMatrix::from_fn(b.len(), b.len(), |i, j| gamma[(b[i], b[j])]) + DMatrix::identity(b.len(), b.len());
    let s = DMatrix::from_fn(r.len(), b.len(), |i, j| gamma[(r[i], b[j])]);
    let inv = gb.try_inverse().ok_or_else(|| Error::param("singular heterodyne block"))?;
    Ok(gr - &s * inv * s.transpose())
}

/// Covariance-matrix parameters `(a, b, c)` of the entanglement-based picture:
/// `a = V = 2<n> + 1`, `b = T(V - 1) + 1 + T eps`, `c = sqrt(T) Z`.
///
/// `eps` here is the estimator's excess noise, which equals the usual
/// per-quadrature channel excess noise referred to the input.
pub fn cm_parameters(transmission: f64, eps: f64, params: &SecurityParams) -> Result<(f64, f64, f64)> {
    let v = 2.0 * params.mean_photons + 1.0;
    let z = z_correlation(params.mean_photons, params.order, params.fock_cutoff)?;
    Ok((v, transmission * (v - 1.0) + 1.0 + transmission * eps, transmission.sqrt() * z))
}

/// Eve's Holevo information on Bob's heterodyne outcomes.
///
/// `transmission` is clipped to `[0, 1]` and `eps` to `>= 0`. Electronic noise
/// enters as `v_el = 2 eps_thermal` per quadrature.
pub fn holevo_bound_raw(transmission: f64, eps: f64, eps_thermal: f64, params: &SecurityParams) -> Result<f64> {
    params.validate()?;
    let t = transmission.clamp(0.0, 1.0);
    let eps = eps.max(0.0);
    if t == 0.0 {
        return Ok(0.0);
    }
    let (a, b, c) = cm_parameters(t, eps, params)?;
    holevo_from_cm(a, b, c, eps_thermal, params)
}

/// Holevo information for the two-mode covariance matrix `(a, b, c)` under
/// the configured detector model.
pub fn holevo_from_cm(a: f64, b: f64, c: f64, eps_thermal: f64, params: &SecurityParams) -> Result<f64> {
    let gab = two_mode(a, b, c);
    let s_ab = entropy(&gab)?;
    match params.holevo {
        HolevoModel::IdealHeterodyne => {
            let cond = heterodyne_condition(&gab, &[0], &[1])?;
            Ok(s_ab - entropy(&cond)?)
        }
        HolevoModel::TrustedDetector => {
            let v_el = 2.0 * eps_thermal.max(0.0);
            // Electronic noise as one arm of an EPR pair (F0, G) entering the
            // detector loss beam splitter. Keep eta off 1 so v stays finite.
            let eta = if v_el > 0.0 { params.eta.min(1.0 - 1e-6) } else { params.eta };
            let v = if v_el > 0.0 { 1.0 + v_el / (1.0 - eta) } else { 1.0 };
            let w = (v * v - 1.0).max(0.0).sqrt();
            let mut g = DMatrix::<f64>::zeros(8, 8);
            g.view_mut((0, 0), (4, 4)).copy_from(&gab);
            g.view_mut((4, 4), (4, 4)).copy_from(&two_mode(v, v, w));
            let (st, sr) = (eta.sqrt(), (1.0 - eta).sqrt());
            let mut s = DMatrix::<f64>::identity(8, 8);
            for q in 0..2 {
                let (bq, fq) = (2 + q, 4 + q);
                s[(bq, bq)] = st;
                s[(bq, fq)] = sr;
                s[(fq, bq)] = -sr;
                s[(fq, fq)] = st;
            }
            let g2 = &s * g * s.transpose();
            let cond = heterodyne_condition(&g2, &[0, 2, 3], &[1])?;
            Ok(s_ab - entropy(&cond)?)
        }
    }
}

pub fn holevo_bound(est: &ChannelEstimate, params: &SecurityParams, cal: &NoiseCalibration) -> Result<f64> {
    holevo_bound_raw(est.transmission, est.eps_hat, cal.eps_thermal, params)
}

/// `(K, secure)` with `K = beta I_BA - chi_BE`, unclipped.
pub fn key_rate(i_ba: f64, chi_be: f64, params: &SecurityParams) -> (f64, bool) {
    let k = params.beta * i_ba - chi_be;
    (k, k > 0.0)
}

/// Key fraction at given channel parameters (the theory curve).
pub fn key_rate_at(transmission: f64, eps: f64, eps_thermal: f64, params: &SecurityParams) -> Result<f64> {
    let i = mutual_info_raw(transmission, eps, eps_thermal, params)?;
    let chi = holevo_bound_raw(transmission, eps, eps_thermal, params)?;
    Ok(key_rate(i, chi, params).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecuritySnapshot {
    pub calibration: NoiseCalibration,
    pub estimate: ChannelEstimate,
    pub i_ba: f64,
    pub chi_be: f64,
    pub k: f64,
    pub secure: bool,
}

/// Estimate, then evaluate `I_BA`, `chi_BE` and `K` for one set of SNU pairs.
pub fn evaluate(a: &[Complex64], b: &[Complex64], params: &SecurityParams, cal: &NoiseCalibration) -> Result<SecuritySnapshot> {
    let estimate = estimate_channel(a, b, params, cal)?;
    let i_ba = mutual_info(&estimate, params, cal)?;
    let chi_be = holevo_bound(&estimate, params, cal)?;
    let (k, secure) = key_rate(i_ba, chi_be, params);
    Ok(SecuritySnapshot { calibration: *cal, estimate, i_ba, chi_be, k, secure })
}
