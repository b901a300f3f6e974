//! Fiber link: loss, polarization evolution as a piecewise-constant Jones
//! trajectory, the signal/LO frequency offset and the combined laser phase
//! noise (a single Wiener process on the beat note).

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, sub_seed, SimRng};
use crate::signal::{mix_into, ComplexSignal};

pub type Jones = Matrix2<Complex64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolModel {
    /// Fixed rotation `theta` followed by retardance `phi` (radians).
    Static { theta: f64, phi: f64 },
    /// Random walk on SU(2) with great-circle Stokes path rate `angular_rate` (rad/s).
    Wiener { angular_rate: f64 },
    /// Independent Haar-random SOP held for `1 / step_rate` seconds.
    Scrambler { step_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub length_km: f64,
    pub alpha_db_per_km: f64,
    pub excess_t_penalty_db: f64,
    pub f_s: f64,
    pub combined_linewidth: f64,
    pub pol_model: PolModel,
    pub jones_update_period: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            length_km: 40.0,
            alpha_db_per_km: 0.2,
            excess_t_penalty_db: 0.0,
            f_s: 1e9,
            combined_linewidth: 100e3,
            pol_model: PolModel::Static { theta: 0.0, phi: 0.0 },
            jones_update_period: 1e-6,
            seed: 2,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0) {
            return Err(Error::param("fiber length must be non-negative"));
        }
        if !(self.combined_linewidth >= 0.0) {
            return Err(Error::param("linewidth must be non-negative"));
        }
        if !(self.jones_update_period > 0.0) {
            return Err(Error::param("Jones update period must be positive"));
        }
        let t = transmission(self);
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::param(format!("total transmission {t} outside [0, 1]")));
        }
        match self.pol_model {
            PolModel::Wiener { angular_rate } if !(angular_rate >= 0.0) => {
                Err(Error::param("Wiener angular rate must be non-negative"))
            }
            PolModel::Scrambler { step_rate } if !(step_rate > 0.0) => {
                Err(Error::param("scrambler step rate must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Power transmission `10^(-(alpha L + penalty) / 10)`.
pub fn transmission(cfg: &ChannelConfig) -> f64 {
    10f64.powf(-(cfg.alpha_db_per_km * cfg.length_km + cfg.excess_t_penalty_db) / 10.0)
}

/// Piecewise-constant polarization transforms; matrix `j` holds on
/// `[j * update_period, (j + 1) * update_period)` relative to the signal start.
#[derive(Debug, Clone, PartialEq)]
pub struct JonesTrajectory {
    pub matrices: Vec<Jones>,
    pub update_period: f64,
}

impl JonesTrajectory {
    pub fn duration(&self) -> f64 {
        self.matrices.len() as f64 * self.update_period
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Rotation by `theta` followed by a `phi` retarder, so x input leaves as
/// `(cos theta e^{i phi/2}, sin theta e^{-i phi/2})`.
pub fn static_jones(theta: f64, phi: f64) -> Jones {
    let (s, co) = theta.sin_cos();
    let rot = Jones::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0));
    let ret = Jones::new(Complex64::from_polar(1.0, phi / 2.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, -phi / 2.0));
    ret * rot
}

/// Haar-distributed SU(2) element from a normalized Gaussian quaternion.
pub fn haar_su2(rng: &mut SimRng) -> Jones {
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [a, b, cc, d] = q;
    Jones::new(c(a, b), c(cc, d), c(-cc, d), c(a, -b))
}

/// `exp(-i (d . sigma) / 2)` for a rotation vector `d` on the Poincare sphere.
pub fn su2_exp(d: [f64; 3]) -> Jones {
    let theta = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if theta < 1e-300 {
        return Jones::identity();
    }
    let (s, co) = (theta / 2.0).sin_cos();
    let (nx, ny, nz) = (d[0] / theta, d[1] / theta, d[2] / theta);
    // cos(t/2) I - i sin(t/2) (n . sigma)
    Jones::new(
        c(co, -s * nz),
        c(-s * ny, -s * nx),
        c(s * ny, -s * nx),
        c(co, s * nz),
    )
}

/// Rotation angle of the Stokes-space rotation induced by a unitary.
pub fn stokes_rotation_angle(u: &Jones) -> f64 {
    let det = u.determinant();
    let su = u / det.sqrt();
    let tr = su.trace();
    2.0 * (tr.re.abs() / 2.0).clamp(0.0, 1.0).acos()
}

/// Build the polarization trajectory for a signal starting at wall-clock
/// `start_time` and lasting `duration` seconds.
pub fn make_jones_trajectory(cfg: &ChannelConfig, start_time: f64, duration: f64, update_period: f64) -> Result<JonesTrajectory> {
    if !(duration > 0.0) {
        return Err(Error::param("trajectory duration must be positive"));
    }
    if !(update_period > 0.0) {
        return Err(Error::param("update period must be positive"));
    }
    let steps = (duration / update_period).ceil() as usize + 1;
    let matrices = match cfg.pol_model {
        PolModel::Static { theta, phi } => vec![static_jones(theta, phi); steps],
        PolModel::Scrambler { step_rate } => {
            let mut cache: HashMap<i64, Jones> = HashMap::new();
            (0..steps)
                .map(|j| {
                    let t = start_time + j as f64 * update_period;
                    let idx = (t * step_rate).floor() as i64;
                    *cache
                        .entry(idx)
                        .or_insert_with(|| haar_su2(&mut rng_from(sub_seed(cfg.seed, "scrambler", idx as u64))))
                })
                .collect()
        }
        PolModel::Wiener { angular_rate } => {
            let mut rng = rng_from(sub_seed(cfg.seed, "wiener", start_time.to_bits()));
            let mut u = haar_su2(&mut rng);
            // Mean of a 3-D Maxwell magnitude is 2 s sqrt(2 / pi).
            let s = angular_rate * update_period * (PI / 8.0).sqrt();
            let mut out = Vec::with_capacity(steps);
            for _ in 0..steps {
                out.push(u);
                let d = [
                    s * rng.sample::<f64, _>(StandardNormal),
                    s * rng.sample::<f64, _>(StandardNormal),
                    s * rng.sample::<f64, _>(StandardNormal),
                ];
                u = su2_exp(d) * u;
            }
            out
        }
    };
    Ok(JonesTrajectory { matrices, update_period })
}

/// Laser phase random walk sampled at `sample_rate`, starting at zero.
pub fn phase_noise(len: usize, sample_rate: f64, linewidth: f64, seed: u64) -> Vec<f64> {
    let mut phi = vec![0.0; len];
    if linewidth == 0.0 {
        return phi;
    }
    let sd = (2.0 * PI * linewidth / sample_rate).sqrt();
    let mut rng = rng_from(sub_seed(seed, "phase", 0));
    let mut acc = 0.0;
    for p in phi.iter_mut().skip(1) {
        acc += sd * rng.sample::<f64, _>(StandardNormal);
        *p = acc;
    }
    phi
}

/// Launch on x, apply loss, the Jones trajectory (zero-order hold) and the
/// beat factor `exp(i(2 pi f_S t + phi(t)))`. Returns the (x, y) fields.
pub fn apply_channel(sig: &ComplexSignal, cfg: &ChannelConfig, traj: &JonesTrajectory) -> Result<(ComplexSignal, ComplexSignal)> {
    cfg.validate()?;
    if traj.duration() + 1e-15 < sig.duration() || traj.matrices.is_empty() {
        return Err(Error::param(format!(
            "Jones trajectory covers {} s but the signal lasts {} s",
            traj.duration(),
            sig.duration()
        )));
    }
    let fs = sig.sample_rate();
    let len = sig.len();
    let amp = transmission(cfg).sqrt();
    let phi = phase_noise(len, fs, cfg.combined_linewidth, cfg.seed);
    let s = sig.samples();
    let beat = mix_into(len, fs, -cfg.f_s, 0.0, |i| s[i] * Complex64::from_polar(amp, phi[i]));
    drop(phi);
    let per_step = traj.update_period * fs;
    let mut x = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    for (i, z) in beat.iter().enumerate() {
        let j = ((i as f64 / per_step).floor() as usize).min(traj.matrices.len() - 1);
        let u = &traj.matrices[j];
        x.push(u[(0, 0)] * z);
        y.push(u[(1, 0)] * z);
    }
    Ok((ComplexSignal::new(x, fs)?, ComplexSignal::new(y, fs)?))
}
