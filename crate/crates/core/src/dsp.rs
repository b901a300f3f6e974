//! Per-polarization receiver DSP: pilot frequency estimation, the four
//! oscillator copies, pilot phase extraction and compensation, matched
//! filtering and clock recovery from the zero crossings of the clock tone.
//!
//! Each branch is filtered and phase-referenced to its own pilot;
//! [`recover_dual`] then samples both on a shared symbol grid into a
//! [`ConstellationFrame`] for the combiner.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::DualPolCapture;
use crate::signal::{
    design_bandpass, design_lowpass, design_rrc, fir_apply_real, linear_fit, median, mix, mix_real,
    unwrap_samples, welch_real, ComplexSignal, FftFilter, FirTaps, RealSignal,
};
use crate::transmitter::samples_per_symbol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub f_q: f64,
    pub f_p: f64,
    pub symbol_rate: f64,
    pub pilot_bpf_halfwidth: f64,
    pub pilot_lpf_cutoff: f64,
    pub clock_bpf_halfwidth: f64,
    pub rrc_rolloff: f64,
    /// Matched-filter span in symbols.
    pub rrc_span: usize,
    pub filter_taps: usize,
    /// Samples used for the pilot frequency fit.
    pub fit_span: usize,
    pub welch_segment: usize,
    /// Half-width of the pilot search window around the nominal beat (Hz).
    pub pilot_search_halfwidth: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            f_q: 38.4e6,
            f_p: 0.0,
            symbol_rate: 38.4e6,
            pilot_bpf_halfwidth: 1e6,
            pilot_lpf_cutoff: 2e6,
            clock_bpf_halfwidth: 1e6,
            rrc_rolloff: 0.2,
            rrc_span: 32,
            filter_taps: 4096,
            fit_span: 1 << 20,
            welch_segment: 4096,
            pilot_search_halfwidth: 5e6,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f_q == self.f_p {
            return Err(Error::param("f_Q and f_P coincide"));
        }
        for (name, v) in [
            ("pilot_bpf_halfwidth", self.pilot_bpf_halfwidth),
            ("pilot_lpf_cutoff", self.pilot_lpf_cutoff),
            ("clock_bpf_halfwidth", self.clock_bpf_halfwidth),
        ] {
            if !(v > 0.0) {
                return Err(Error::param(format!("{name} must be positive")));
            }
        }
        // The clock is the pilot moved to -f_Q/2, so in every copy the pilot
        // (or clock) tone sits |f_Q - f_P| away from the quantum band centre.
        let q_half = 0.5 * self.symbol_rate * (1.0 + self.rrc_rolloff);
        let widest = self.pilot_lpf_cutoff.max(self.pilot_bpf_halfwidth).max(self.clock_bpf_halfwidth);
        if (self.f_q - self.f_p).abs() - q_half <= 2.0 * widest {
            return Err(Error::param("pilot/clock band overlaps the quantum band"));
        }
        Ok(())
    }
}

fn seg(sig: &RealSignal, n: usize) -> Result<RealSignal> {
    RealSignal::new(sig.samples()[..n.min(sig.len())].to_vec(), sig.sample_rate())
}

/// Absolute pilot beat frequency `f~_P` from a real ADC branch.
pub fn estimate_pilot_freq(branch: &RealSignal, cfg: &DspConfig, f_s_nominal: f64) -> Result<f64> {
    let fs = branch.sample_rate();
    let x = seg(branch, cfg.fit_span)?;
    let nominal = cfg.f_p + f_s_nominal;

    let (freqs, psd) = welch_real(&x, cfg.welch_segment.min(x.len()))?;
    let floor = median(&psd);
    let (mut peak_f, mut peak_p) = (nominal, 0.0);
    for (f, p) in freqs.iter().zip(&psd) {
        if (f - nominal).abs() <= cfg.pilot_search_halfwidth && *p > peak_p {
            peak_f = *f;
            peak_p = *p;
        }
    }
    let peak_db = if floor > 0.0 { 10.0 * (peak_p / floor).log10() } else if peak_p > 0.0 { f64::INFINITY } else { 0.0 };
    if !(peak_db > 6.0) {
        return Err(Error::PilotNotFound { peak_db });
    }
    let hw = cfg.pilot_bpf_halfwidth;
    let center = if (peak_f - nominal).abs() > hw / 2.0 { peak_f } else { nominal };

    let bp = design_bandpass(center, hw, fs, cfg.filter_taps)?;
    let lp = design_lowpass(hw, fs, cfg.filter_taps)?;
    let edge = bp.edge_len() + lp.edge_len();
    if x.len() <= 2 * edge + 2 {
        return Err(Error::param("fit span shorter than the filter transients"));
    }
    let filtered = fir_apply_real(&x, &bp)?;
    let bb = mix_real(&filtered, center, 0.0);
    let bb = FftFilter::new(&lp).apply(bb.samples());
    let valid = &bb[edge..bb.len() - edge];
    let phase = unwrap_samples(valid).map_err(|e| match e {
        Error::Degenerate { index, reason } => Error::Degenerate { index: index + edge, reason },
        e => e,
    })?;
    let t: Vec<f64> = (edge..edge + valid.len()).map(|i| i as f64 / fs).collect();
    let (slope, _) = linear_fit(&phase, &t)?;
    Ok(center + slope / (2.0 * PI))
}

/// The three complex copies of one branch: pilot at baseband, pilot moved to
/// `-f_Q/2` for the clock, and the quantum band at baseband.
pub struct Downconverted {
    pub pilot_bb: ComplexSignal,
    pub clock_if: ComplexSignal,
    pub quantum_bb: ComplexSignal,
}

pub fn branch_downconvert(branch: &RealSignal, f_pilot: f64, cfg: &DspConfig) -> Downconverted {
    Downconverted {
        pilot_bb: mix_real(branch, f_pilot, 0.0),
        clock_if: mix_real(branch, f_pilot + cfg.f_q / 2.0, 0.0),
        quantum_bb: mix_real(branch, f_pilot + (cfg.f_q - cfg.f_p), 0.0),
    }
}

pub(crate) fn pilot_lpf(cfg: &DspConfig, fs: f64) -> Result<FirTaps> {
    design_lowpass(cfg.pilot_lpf_cutoff, fs, cfg.filter_taps)
}

pub(crate) fn clock_lpf(cfg: &DspConfig, fs: f64) -> Result<FirTaps> {
    design_lowpass(cfg.clock_bpf_halfwidth, fs, cfg.filter_taps)
}

pub fn matched_taps(cfg: &DspConfig, fs: f64) -> Result<FirTaps> {
    design_rrc(cfg.rrc_rolloff, samples_per_symbol(fs, cfg.symbol_rate)?, cfg.rrc_span)
}

/// Unwrapped phase of the low-passed pilot.
pub fn pilot_phase(pilot_bb: &ComplexSignal, cfg: &DspConfig) -> Result<Vec<f64>> {
    let lp = pilot_lpf(cfg, pilot_bb.sample_rate())?;
    unwrap_samples(&FftFilter::new(&lp).apply(pilot_bb.samples()))
}

pub fn phase_compensate(sig: &ComplexSignal, phase: &[f64]) -> Result<ComplexSignal> {
    if sig.len() != phase.len() {
        return Err(Error::param(format!(
            "phase length {} does not match signal length {}",
            phase.len(),
            sig.len()
        )));
    }
    let out = sig.samples().iter().zip(phase).map(|(z, p)| z * Complex64::from_polar(1.0, -p)).collect();
    ComplexSignal::new(out, sig.sample_rate())
}

/// Complex single-sided band-pass around `-f_Q/2`: shift the band to DC,
/// low-pass, shift back. A real band-pass would also admit `+f_Q/2`, which is
/// where the quantum band sits in this copy.
pub fn clock_bandpass(clock_if: &ComplexSignal, cfg: &DspConfig) -> Result<ComplexSignal> {
    let lp = clock_lpf(cfg, clock_if.sample_rate())?;
    let centred = mix(clock_if, -cfg.f_q / 2.0, 0.0);
    let filtered = ComplexSignal::new(FftFilter::new(&lp).apply(centred.samples()), clock_if.sample_rate())?;
    Ok(mix(&filtered, cfg.f_q / 2.0, 0.0))
}

pub fn matched_filter(quantum: &ComplexSignal, cfg: &DspConfig) -> Result<ComplexSignal> {
    let taps = matched_taps(cfg, quantum.sample_rate())?;
    ComplexSignal::new(FftFilter::new(&taps).apply(quantum.samples()), quantum.sample_rate())
}

/// Symbol-rate samples taken at the zero crossings of `imag(clock)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resampled {
    pub clock: Vec<Complex64>,
    pub quantum: Vec<Complex64>,
    /// Interpolated crossing positions in input samples.
    pub positions: Vec<f64>,
}

/// Find sign changes of `imag(clock)` inside `range`, interpolate the crossing
/// linearly and take the nearest sample of both signals. Crossings closer
/// than `min_spacing` samples to the previous one are treated as noise chatter.
pub fn clock_resample_range(clock: &[Complex64], quantum: &[Complex64], range: Range<usize>, min_spacing: f64) -> Result<Resampled> {
    if clock.len() != quantum.len() {
        return Err(Error::param("clock and quantum signals differ in length"));
    }
    let end = range.end.min(clock.len());
    let mut out = Resampled::default();
    let mut last = f64::NEG_INFINITY;
    let mut k = range.start;
    while k + 1 < end {
        let (a, b) = (clock[k].im, clock[k + 1].im);
        let hit = if a == 0.0 {
            Some(k as f64)
        } else if (a < 0.0) != (b < 0.0) && b != 0.0 {
            Some(k as f64 + a / (a - b))
        } else {
            None
        };
        if let Some(pos) = hit {
            if pos - last >= min_spacing {
                let n = (pos.round() as usize).min(clock.len() - 1);
                out.clock.push(clock[n]);
                out.quantum.push(quantum[n]);
                out.positions.push(pos);
                last = pos;
            }
        }
        k += 1;
    }
    if out.positions.len() < 2 {
        return Err(Error::Degenerate { index: range.start, reason: "fewer than two clock zero crossings".into() });
    }
    Ok(out)
}

/// [`clock_resample_range`] over the whole signal.
pub fn clock_resample(clock: &ComplexSignal, quantum: &ComplexSignal, cfg: &DspConfig) -> Result<Resampled> {
    let sps = clock.sample_rate() / cfg.symbol_rate;
    clock_resample_range(clock.samples(), quantum.samples(), 0..clock.len(), sps / 2.0)
}

/// Clock and quantum points of one branch, tagged with symbol indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoints {
    pub clock: Vec<Complex64>,
    pub quantum: Vec<Complex64>,
    pub symbol_index: Vec<i64>,
    pub f_pilot: f64,
}

/// Samples on both ends affected by filter transients along the chain.
pub fn transient_len(cfg: &DspConfig, fs: f64) -> Result<usize> {
    let lp = pilot_lpf(cfg, fs)?.edge_len();
    let clk = clock_lpf(cfg, fs)?.edge_len();
    let mf = matched_taps(cfg, fs)?.edge_len();
    Ok((lp + mf).max(lp.max(clk)))
}

/// Phase-compensated clock tone and matched-filtered quantum band of one
/// branch, at the ADC rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSignals {
    pub clock: ComplexSignal,
    pub quantum: ComplexSignal,
    pub f_pilot: f64,
}

pub fn branch_signals(branch: &RealSignal, f_pilot: f64, cfg: &DspConfig) -> Result<BranchSignals> {
    let fs = branch.sample_rate();
    let sps = fs / cfg.symbol_rate;
    let edge = transient_len(cfg, fs)?;
    if branch.len() <= 2 * edge + 2 * sps.ceil() as usize {
        return Err(Error::param("capture shorter than the filter transients"));
    }
    let phase = pilot_phase(&mix_real(branch, f_pilot, 0.0), cfg)?;
    let clock = phase_compensate(&clock_bandpass(&mix_real(branch, f_pilot + cfg.f_q / 2.0, 0.0), cfg)?, &phase)?;
    let quantum = phase_compensate(&mix_real(branch, f_pilot + (cfg.f_q - cfg.f_p), 0.0), &phase)?;
    drop(phase);
    Ok(BranchSignals { clock, quantum: matched_filter(&quantum, cfg)?, f_pilot })
}

fn symbol_indices(positions: &[f64], sps: f64) -> Vec<i64> {
    positions.iter().map(|p| (p / sps).round() as i64).collect()
}

/// The complete per-branch chain, given the pilot beat frequency.
pub fn recover_branch_at(branch: &RealSignal, f_pilot: f64, cfg: &DspConfig) -> Result<BranchPoints> {
    let fs = branch.sample_rate();
    let sps = fs / cfg.symbol_rate;
    let edge = transient_len(cfg, fs)?;
    let s = branch_signals(branch, f_pilot, cfg)?;
    let r = clock_resample_range(s.clock.samples(), s.quantum.samples(), edge..branch.len() - edge, sps / 2.0)?;
    Ok(BranchPoints { clock: r.clock, quantum: r.quantum, symbol_index: symbol_indices(&r.positions, sps), f_pilot })
}

/// Estimate the pilot frequency, then run [`recover_branch_at`].
pub fn recover_branch(branch: &RealSignal, cfg: &DspConfig, f_s_nominal: f64) -> Result<BranchPoints> {
    let f = estimate_pilot_freq(branch, cfg, f_s_nominal)?;
    recover_branch_at(branch, f, cfg)
}

/// One point per symbol for each of the four constellations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstellationFrame {
    pub x_c: Vec<Complex64>,
    pub y_c: Vec<Complex64>,
    pub x_q: Vec<Complex64>,
    pub y_q: Vec<Complex64>,
    pub symbol_index: Vec<i64>,
}

impl ConstellationFrame {
    pub fn len(&self) -> usize {
        self.x_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_c.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x_c.len();
        if [self.y_c.len(), self.x_q.len(), self.y_q.len(), self.symbol_index.len()].iter().any(|&l| l != n) {
            return Err(Error::param("constellation sequences differ in length"));
        }
        Ok(())
    }
}

/// Pilot frequencies found on each branch (`None` where no pilot was detected).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotEstimates {
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Recover both branches. A branch whose pilot is too weak to detect borrows
/// the other branch's frequency estimate; both missing is an error.
pub fn recover_dual(cap: &DualPolCapture, cfg: &DspConfig, f_s_nominal: f64) -> Result<(ConstellationFrame, PilotEstimates)> {
    cfg.validate()?;
    let fx = estimate_pilot_freq(&cap.x, cfg, f_s_nominal);
    let fy = estimate_pilot_freq(&cap.y, cfg, f_s_nominal);
    let est = PilotEstimates { x: fx.as_ref().ok().copied(), y: fy.as_ref().ok().copied() };
    let (fx, fy) = match (fx, fy) {
        (Ok(a), Ok(b)) => (a, b),
        (Ok(a), Err(_)) => (a, a),
        (Err(_), Ok(b)) => (b, b),
        (Err(e), Err(_)) => return Err(e),
    };
    let fs = cap.x.sample_rate();
    let sps = fs / cfg.symbol_rate;
    let edge = transient_len(cfg, fs)?;
    let sx = branch_signals(&cap.x, fx, cfg)?;
    let sy = branch_signals(&cap.y, fy, cfg)?;
    if sx.clock.len() != sy.clock.len() {
        return Err(Error::param("capture branches differ in length"));
    }
    // Both ADCs share one sample clock and pilot compensation puts the two
    // clock tones in phase, so their sum is a maximal-ratio timing reference.
    let timing: Vec<Complex64> = sx.clock.samples().iter().zip(sy.clock.samples()).map(|(a, b)| a + b).collect();
    let r = clock_resample_range(&timing, sx.quantum.samples(), edge..timing.len() - edge, sps / 2.0)?;
    drop(timing);
    let at = |v: &ComplexSignal| -> Vec<Complex64> {
        r.positions.iter().map(|p| v.samples()[(p.round() as usize).min(v.len() - 1)]).collect()
    };
    let frame = ConstellationFrame {
        x_c: at(&sx.clock),
        y_c: at(&sy.clock),
        x_q: r.quantum.clone(),
        y_q: at(&sy.quantum),
        symbol_index: symbol_indices(&r.positions, sps),
    };
    if frame.len() < 2 {
        return Err(Error::Degenerate { index: 0, reason: "fewer than two symbols recovered".into() });
    }
    Ok((frame, est))
}

/// Noise-capture path: mix at the nominal beat, skip pilot compensation
/// (identity phase), matched-filter, and sample on the nominal symbol grid.
pub fn noise_points(branch: &RealSignal, cfg: &DspConfig, f_s_nominal: f64) -> Result<Vec<Complex64>> {
    let fs = branch.sample_rate();
    let sps = samples_per_symbol(fs, cfg.symbol_rate)?;
    let edge = transient_len(cfg, fs)?;
    if branch.len() <= 2 * edge + sps {
        return Err(Error::param("noise capture shorter than the filter transients"));
    }
    let q = matched_filter(&mix_real(branch, cfg.f_p + f_s_nominal + (cfg.f_q - cfg.f_p), 0.0), cfg)?;
    let first = edge.div_ceil(sps) * sps;
    Ok(q.samples()[first..branch.len() - edge].iter().step_by(sps).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_band_plan_is_valid() {
        DspConfig::default().validate().unwrap();
    }

    #[test]
    fn resample_rejects_chatter() {
        let clock: Vec<Complex64> = [1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0]
            .iter()
            .map(|&v| Complex64::new(0.0, v))
            .collect();
        let q = clock.clone();
        let r = clock_resample_range(&clock, &q, 0..clock.len(), 3.0).unwrap();
        // 1.5 and 2.5 are too close to 0.5; 3.5 is exactly min_spacing away.
        assert_eq!(r.positions, vec![0.5, 3.5, 7.5]);
    }
}
