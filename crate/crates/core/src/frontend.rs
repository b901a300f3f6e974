//! Polarization-diverse receiver front end: PBS split, two ideal balanced
//! heterodyne detectors with Gaussian shot and thermal noise, and a clipping
//! ADC. Also produces the noise-only captures used for calibration, and reads
//! and writes captures as raw little-endian i16 plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, sub_seed};
use crate::signal::{ComplexSignal, FftFilter, FirTaps, RealSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: f64,
    pub adc_bits: u32,
    /// Clip level in counts; the ADC range is `[-full_scale, full_scale - 1]`.
    pub adc_full_scale: f64,
    pub shot_sigma_counts: f64,
    pub thermal_sigma_counts: f64,
    pub eta: f64,
    /// Counts per unit of photon-normalized field. `None` uses the SNU-consistent
    /// value `2 * shot_sigma_counts`.
    pub conversion_gain: Option<f64>,
    /// Optional FIR shaping applied to injected noise (renormalized to unit energy).
    pub noise_shaping_taps: Option<Vec<f64>>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 2.4576e9,
            adc_bits: 12,
            adc_full_scale: 2048.0,
            shot_sigma_counts: 40.0,
            thermal_sigma_counts: 40.0 / 10f64.sqrt(),
            eta: 0.72,
            conversion_gain: None,
            noise_shaping_taps: None,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param(format!("detection efficiency {} outside (0, 1]", self.eta)));
        }
        if !(self.shot_sigma_counts >= 0.0 && self.thermal_sigma_counts >= 0.0) {
            return Err(Error::param("noise sigmas must be non-negative"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::param("sample rate must be positive"));
        }
        if !(2..=16).contains(&self.adc_bits) {
            return Err(Error::param("ADC resolution must be 2..=16 bits"));
        }
        if !(self.adc_full_scale > 0.0) {
            return Err(Error::param("ADC full scale must be positive"));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.conversion_gain.unwrap_or(2.0 * self.shot_sigma_counts)
    }

    /// Inclusive ADC code range.
    pub fn adc_range(&self) -> (f64, f64) {
        let half = 2f64.powi(self.adc_bits as i32 - 1).min(self.adc_full_scale.round());
        (-half, half - 1.0)
    }

    /// Configured thermal-to-shot variance ratio.
    pub fn eps_thermal(&self) -> f64 {
        (self.thermal_sigma_counts / self.shot_sigma_counts).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureKind {
    Signal,
    ShotOnly,
    ThermalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub sample_rate: f64,
    pub adc_bits: u32,
    pub kind: CaptureKind,
    pub seed: u64,
    pub clipped_fraction: f64,
    #[serde(default)]
    pub configs: serde_json::Value,
}

/// Pair of ADC streams, one per PBS output.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolCapture {
    pub x: RealSignal,
    pub y: RealSignal,
    pub kind: CaptureKind,
    pub meta: CaptureMeta,
}

struct Adc {
    lo: f64,
    hi: f64,
    clipped: usize,
}

impl Adc {
    fn convert(&mut self, v: f64) -> f64 {
        let r = v.round();
        if r < self.lo {
            self.clipped += 1;
            self.lo
        } else if r > self.hi {
            self.clipped += 1;
            self.hi
        } else {
            r
        }
    }
}

fn noise(len: usize, sigma: f64, seed: u64, shaping: Option<&[f64]>) -> Result<Vec<f64>> {
    if sigma == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let mut rng = rng_from(seed);
    let n: Vec<f64> = (0..len).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    match shaping {
        None => Ok(n),
        Some(taps) => {
            let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
            let taps = FirTaps::new(taps.iter().map(|t| t / norm).collect())?;
            let c: Vec<Complex64> = n.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            Ok(FftFilter::new(&taps).apply(&c).into_iter().map(|z| z.re).collect())
        }
    }
}

fn branch(field: Option<&[Complex64]>, len: usize, scale: f64, sigma: f64, seed: u64, cfg: &FrontendConfig, adc: &mut Adc) -> Result<RealSignal> {
    // Shot and thermal noise are independent zero-mean Gaussians, so one draw
    // with the summed variance has the same law as their sum.
    let n = noise(len, sigma, seed, cfg.noise_shaping_taps.as_deref())?;
    let counts: Vec<f64> = match field {
        Some(f) => f.iter().zip(&n).map(|(z, v)| adc.convert(scale * z.re + v)).collect(),
        None => n.iter().map(|&v| adc.convert(v)).collect(),
    };
    RealSignal::new(counts, cfg.sample_rate)
}

fn finish(x: RealSignal, y: RealSignal, kind: CaptureKind, seed: u64, adc: &Adc, cfg: &FrontendConfig) -> Result<DualPolCapture> {
    let total = (x.len() + y.len()) as f64;
    let clipped_fraction = adc.clipped as f64 / total;
    if clipped_fraction > 1e-3 {
        return Err(Error::Clipping { fraction: 100.0 * clipped_fraction });
    }
    let meta = CaptureMeta {
        sample_rate: cfg.sample_rate,
        adc_bits: cfg.adc_bits,
        kind,
        seed,
        clipped_fraction,
        configs: serde_json::to_value(cfg)?,
    };
    Ok(DualPolCapture { x, y, kind, meta })
}

/// Balanced detection of both PBS outputs with the local oscillator.
pub fn detect(field_x: &ComplexSignal, field_y: &ComplexSignal, cfg: &FrontendConfig, seed: u64) -> Result<DualPolCapture> {
    cfg.validate()?;
    for f in [field_x, field_y] {
        if (f.sample_rate() - cfg.sample_rate).abs() > 1e-9 * cfg.sample_rate {
            return Err(Error::param(format!(
                "field sampled at {} Hz but the ADC runs at {} Hz",
                f.sample_rate(),
                cfg.sample_rate
            )));
        }
    }
    if field_x.len() != field_y.len() {
        return Err(Error::param("polarization fields differ in length"));
    }
    let (lo, hi) = cfg.adc_range();
    let mut adc = Adc { lo, hi, clipped: 0 };
    let scale = cfg.gain() * cfg.eta.sqrt();
    let sigma = cfg.shot_sigma_counts.hypot(cfg.thermal_sigma_counts);
    let len = field_x.len();
    let x = branch(Some(field_x.samples()), len, scale, sigma, sub_seed(seed, "adc-x", 0), cfg, &mut adc)?;
    let y = branch(Some(field_y.samples()), len, scale, sigma, sub_seed(seed, "adc-y", 0), cfg, &mut adc)?;
    finish(x, y, CaptureKind::Signal, seed, &adc, cfg)
}

/// Noise-only capture: LO on and transmitter off (`ShotOnly`), or both lasers off.
pub fn capture_noise(cfg: &FrontendConfig, kind: CaptureKind, duration: f64, seed: u64) -> Result<DualPolCapture> {
    cfg.validate()?;
    if !(duration > 0.0) {
        return Err(Error::param("capture duration must be positive"));
    }
    let sigma = match kind {
        CaptureKind::ShotOnly => cfg.shot_sigma_counts.hypot(cfg.thermal_sigma_counts),
        CaptureKind::ThermalOnly => cfg.thermal_sigma_counts,
        CaptureKind::Signal => return Err(Error::param("capture_noise needs a noise-only kind")),
    };
    let len = ((duration * cfg.sample_rate).round() as usize).max(1);
    let (lo, hi) = cfg.adc_range();
    let mut adc = Adc { lo, hi, clipped: 0 };
    let x = branch(None, len, 0.0, sigma, sub_seed(seed, "noise-x", 0), cfg, &mut adc)?;
    let y = branch(None, len, 0.0, sigma, sub_seed(seed, "noise-y", 0), cfg, &mut adc)?;
    finish(x, y, kind, seed, &adc, cfg)
}

/// Paths written by [`write_capture`] for a given stem.
pub fn capture_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}_x.i16")),
        dir.join(format!("{stem}_y.i16")),
        dir.join(format!("{stem}.json")),
    )
}

fn to_i16_bytes(sig: &RealSignal) -> Vec<u8> {
    sig.samples()
        .iter()
        .flat_map(|&v| (v.clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes())
        .collect()
}

fn from_i16_bytes(bytes: &[u8], sample_rate: f64) -> Result<RealSignal> {
    if bytes.len() % 2 != 0 {
        return Err(Error::Config("capture file has an odd byte count".into()));
    }
    let v = bytes.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]) as f64).collect();
    RealSignal::new(v, sample_rate).map_err(|e| Error::Config(e.to_string()))
}

pub fn write_capture(cap: &DualPolCapture, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (px, py, pm) = capture_paths(dir, stem);
    fs::write(px, to_i16_bytes(&cap.x))?;
    fs::write(py, to_i16_bytes(&cap.y))?;
    fs::write(pm, serde_json::to_string_pretty(&cap.meta)?)?;
    Ok(())
}

pub fn read_capture(dir: &Path, stem: &str) -> Result<DualPolCapture> {
    let (px, py, pm) = capture_paths(dir, stem);
    let meta: CaptureMeta = serde_json::from_str(&fs::read_to_string(pm)?)?;
    let x = from_i16_bytes(&fs::read(px)?, meta.sample_rate)?;
    let y = from_i16_bytes(&fs::read(py)?, meta.sample_rate)?;
    if x.len() != y.len() {
        return Err(Error::Config("capture branches differ in length".into()));
    }
    Ok(DualPolCapture { x, y, kind: meta.kind, meta })
}
