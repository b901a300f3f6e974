//! Alice's transmitter: M-PSK symbols with a fixed public header, RRC pulse
//! shaping, upconversion to the quantum IF and a frequency-multiplexed pilot,
//! then attenuation to the target mean photon number.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, sub_seed};
use crate::signal::{design_rrc, mix_into, ComplexSignal, FftFilter};

/// Seed of the public synchronization header; shared by every frame.
const HEADER_SEED: u64 = 0x4845_4144_4552;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TxConfig {
    pub symbol_rate: f64,
    pub f_q: f64,
    pub f_p: f64,
    pub mean_photons: f64,
    /// Linear pilot power over quantum-band power.
    pub pilot_to_signal_power_ratio: f64,
    pub constellation_order: usize,
    pub rolloff: f64,
    pub rrc_span: usize,
    pub header_len: usize,
    pub seed: u64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 38.4e6,
            f_q: 38.4e6,
            f_p: 0.0,
            mean_photons: 0.33,
            pilot_to_signal_power_ratio: 100.0,
            constellation_order: 8,
            rolloff: 0.2,
            rrc_span: 32,
            header_len: 1024,
            seed: 1,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_rate > 0.0) {
            return Err(Error::param("symbol_rate must be positive"));
        }
        if self.f_p == self.f_q {
            return Err(Error::param("pilot and quantum frequencies must differ"));
        }
        if !(self.mean_photons > 0.0) {
            return Err(Error::param("mean photon number must be positive"));
        }
        if !(self.pilot_to_signal_power_ratio >= 0.0) {
            return Err(Error::param("pilot power ratio must be non-negative"));
        }
        let m = self.constellation_order;
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::param(format!("constellation order {m} must be a power of two >= 2")));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::param("rolloff must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Samples per symbol at `sample_rate`; must be an integer >= 2.
    pub fn samples_per_symbol(&self, sample_rate: f64) -> Result<usize> {
        samples_per_symbol(sample_rate, self.symbol_rate)
    }
}

pub(crate) fn samples_per_symbol(sample_rate: f64, symbol_rate: f64) -> Result<usize> {
    let r = sample_rate / symbol_rate;
    let n = r.round();
    if (r - n).abs() > 1e-9 * r || n < 2.0 {
        return Err(Error::param(format!(
            "sample rate / symbol rate = {r} must be an integer >= 2"
        )));
    }
    Ok(n as usize)
}

/// One frame of unit-modulus PSK symbols; the first `header_len` are public.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolFrame {
    pub symbols: Vec<Complex64>,
    /// Constellation index `k` of each symbol (`exp(i(2 pi k + pi) / M)`).
    pub labels: Vec<u16>,
    pub header_len: usize,
    pub order: usize,
}

impl SymbolFrame {
    pub fn header(&self) -> &[Complex64] {
        &self.symbols[..self.header_len]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub fn psk_point(k: usize, order: usize) -> Complex64 {
    Complex64::from_polar(1.0, (2.0 * k as f64 + 1.0) * PI / order as f64)
}

/// Draw `count` symbols; deterministic under `cfg.seed`.
pub fn gen_symbols(cfg: &TxConfig, count: usize) -> Result<SymbolFrame> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::param("symbol count must be positive"));
    }
    if count < cfg.header_len {
        return Err(Error::param(format!(
            "symbol count {count} shorter than the {}-symbol header",
            cfg.header_len
        )));
    }
    let m = cfg.constellation_order;
    let mut header_rng = rng_from(sub_seed(HEADER_SEED, "header", m as u64));
    let mut data_rng = rng_from(sub_seed(cfg.seed, "symbols", 0));
    let labels: Vec<u16> = (0..count)
        .map(|i| {
            let rng = if i < cfg.header_len { &mut header_rng } else { &mut data_rng };
            rng.random_range(0..m) as u16
        })
        .collect();
    let symbols = labels.iter().map(|&k| psk_point(k as usize, m)).collect();
    Ok(SymbolFrame { symbols, labels, header_len: cfg.header_len, order: m })
}

/// Pulse-shape the frame, move it to `f_q` and add the pilot at `f_p`.
///
/// The quantum band has unit energy per symbol period; the pilot amplitude is
/// set so its power over one symbol is `pilot_to_signal_power_ratio` times that.
/// Symbol `k` is centred on sample `k * sps`.
pub fn modulate(frame: &SymbolFrame, cfg: &TxConfig, sample_rate: f64) -> Result<ComplexSignal> {
    cfg.validate()?;
    let sps = cfg.samples_per_symbol(sample_rate)?;
    if frame.is_empty() {
        return Err(Error::param("empty symbol frame"));
    }
    let taps = design_rrc(cfg.rolloff, sps, cfg.rrc_span)?;
    let len = frame.len() * sps;
    let mut up = vec![Complex64::new(0.0, 0.0); len];
    for (k, &a) in frame.symbols.iter().enumerate() {
        up[k * sps] = a;
    }
    let shaped = FftFilter::new(&taps).apply(&up);
    drop(up);
    let a_p = (cfg.pilot_to_signal_power_ratio / sps as f64).sqrt();
    // mix_into applies exp(-i w t); negative frequencies move the band up.
    let band = mix_into(len, sample_rate, -cfg.f_q, 0.0, |i| shaped[i]);
    let pilot = mix_into(len, sample_rate, -cfg.f_p, 0.0, |_| Complex64::new(a_p, 0.0));
    let out: Vec<Complex64> = band.iter().zip(&pilot).map(|(b, p)| b + p).collect();
    ComplexSignal::new(out, sample_rate)
}

/// Energy per symbol period inside the quantum band `|f - f_q| <= (1 + rolloff + 0.5) Rs / 2`.
pub fn quantum_band_energy_per_symbol(sig: &ComplexSignal, cfg: &TxConfig) -> Result<f64> {
    let sps = cfg.samples_per_symbol(sig.sample_rate())?;
    let n = sig.len();
    let mut spec = sig.samples().to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut spec);
    let fs = sig.sample_rate();
    let half_band = 0.5 * cfg.symbol_rate * (1.0 + cfg.rolloff + 0.5);
    let mut energy = 0.0;
    for (k, z) in spec.iter().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } * fs / n as f64;
        if (f - cfg.f_q).abs() <= half_band {
            energy += z.norm_sqr();
        }
    }
    energy /= n as f64;
    Ok(energy / (n as f64 / sps as f64))
}

/// Rescale so the quantum band carries `mean_photons` per symbol period, with
/// `|field|^2` summed over one symbol counted in photons. The pilot scales too.
pub fn scale_to_photons(sig: &ComplexSignal, cfg: &TxConfig) -> Result<ComplexSignal> {
    let e = quantum_band_energy_per_symbol(sig, cfg)?;
    if !(e > 0.0) {
        return Err(Error::Degenerate { index: 0, reason: "quantum band carries no power".into() });
    }
    let g = (cfg.mean_photons / e).sqrt();
    let out = sig.samples().iter().map(|z| z * g).collect();
    ComplexSignal::new(out, sig.sample_rate())
}
