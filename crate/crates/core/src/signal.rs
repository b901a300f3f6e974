//! Sampled signal containers and the DSP primitives everything else is built
//! from: RRC and windowed-sinc FIR design, FFT convolution, complex mixing,
//! phase unwrapping, least-squares line fits and Welch spectra.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled complex waveform. Sample `i` sits at `t = i / sample_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate: f64,
}

/// Uniformly sampled real waveform (ADC counts or normalized amplitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSignal {
    samples: Vec<f64>,
    sample_rate: f64,
}

fn check_rate(sample_rate: f64) -> Result<()> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::param(format!("sample rate must be positive, got {sample_rate}")));
    }
    Ok(())
}

macro_rules! signal_common {
    ($ty:ident, $elem:ty) => {
        impl $ty {
            pub fn new(samples: Vec<$elem>, sample_rate: f64) -> Result<Self> {
                check_rate(sample_rate)?;
                if samples.is_empty() {
                    return Err(Error::param("signal must contain at least one sample"));
                }
                Ok(Self { samples, sample_rate })
            }

            pub fn samples(&self) -> &[$elem] {
                &self.samples
            }

            pub fn samples_mut(&mut self) -> &mut [$elem] {
                &mut self.samples
            }

            pub fn into_samples(self) -> Vec<$elem> {
                self.samples
            }

            pub fn sample_rate(&self) -> f64 {
                self.sample_rate
            }

            pub fn len(&self) -> usize {
                self.samples.len()
            }

            pub fn is_empty(&self) -> bool {
                self.samples.is_empty()
            }

            pub fn duration(&self) -> f64 {
                self.samples.len() as f64 / self.sample_rate
            }

            /// Time of sample `i` in seconds.
            pub fn time(&self, i: usize) -> f64 {
                i as f64 / self.sample_rate
            }
        }
    };
}

signal_common!(ComplexSignal, Complex64);
signal_common!(RealSignal, f64);

impl RealSignal {
    pub fn to_complex(&self) -> ComplexSignal {
        ComplexSignal {
            samples: self.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

impl ComplexSignal {
    /// Mean of `|x|^2` over the samples.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Symmetric (linear-phase) real FIR taps. Odd lengths give an integer group delay.
#[derive(Debug, Clone, PartialEq)]
pub struct FirTaps {
    coefficients: Vec<f64>,
}

impl FirTaps {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::param("FIR taps must not be empty"));
        }
        let n = coefficients.len();
        for k in 0..n / 2 {
            let (a, b) = (coefficients[k], coefficients[n - 1 - k]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::param(format!("taps not symmetric at index {k}")));
            }
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `(len - 1) / 2` samples; a half-integer for even lengths.
    pub fn group_delay(&self) -> f64 {
        (self.coefficients.len() as f64 - 1.0) / 2.0
    }

    /// Output samples at each edge that see the zero padding.
    pub fn edge_len(&self) -> usize {
        (self.coefficients.len() - 1) / 2
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }

    pub fn dc_gain(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// Complex frequency response at `freq` (Hz), referenced to the tap centre.
    pub fn response(&self, freq: f64, sample_rate: f64) -> Complex64 {
        let d = self.group_delay();
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, &c)| c * Complex64::from_polar(1.0, -2.0 * PI * freq / sample_rate * (k as f64 - d)))
            .sum()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-15 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Root-raised-cosine pulse with `span_symbols * samples_per_symbol + 1` taps,
/// normalized to unit energy.
pub fn design_rrc(rolloff: f64, samples_per_symbol: usize, span_symbols: usize) -> Result<FirTaps> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::param(format!("RRC roll-off must lie in (0, 1], got {rolloff}")));
    }
    if samples_per_symbol < 2 {
        return Err(Error::param("RRC needs at least 2 samples per symbol"));
    }
    if span_symbols < 4 {
        return Err(Error::param("RRC span must be at least 4 symbols"));
    }
    if (samples_per_symbol * span_symbols) % 2 != 0 {
        return Err(Error::param("RRC span x samples per symbol must be even"));
    }
    let half = (samples_per_symbol * span_symbols / 2) as i64;
    let b = rolloff;
    let sps = samples_per_symbol as f64;
    let coefficients: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps;
            if n == 0 {
                1.0 - b + 4.0 * b / PI
            } else if ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                let a = PI / (4.0 * b);
                b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    FirTaps::new(coefficients.into_iter().map(|c| c / norm).collect())
}

fn blackman(n: usize, len: usize) -> f64 {
    if len == 1 {
        return 1.0;
    }
    let x = 2.0 * PI * n as f64 / (len - 1) as f64;
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

fn odd_len(num_taps: usize) -> usize {
    num_taps | 1
}

/// Blackman-windowed sinc lowpass with unit DC gain. `cutoff` is the -6 dB
/// point. Even tap counts are bumped to the next odd length so the group
/// delay is an integer number of samples.
pub fn design_lowpass(cutoff: f64, sample_rate: f64, num_taps: usize) -> Result<FirTaps> {
    check_rate(sample_rate)?;
    if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(Error::param(format!(
            "lowpass cutoff {cutoff} Hz must lie in (0, {}) Hz",
            sample_rate / 2.0
        )));
    }
    if num_taps < 3 {
        return Err(Error::param("lowpass needs at least 3 taps"));
    }
    let len = odd_len(num_taps);
    let d = (len - 1) as f64 / 2.0;
    let fc = cutoff / sample_rate;
    let mut h: Vec<f64> = (0..len)
        .map(|n| 2.0 * fc * sinc(2.0 * fc * (n as f64 - d)) * blackman(n, len))
        .collect();
    let gain: f64 = h.iter().sum();
    h.iter_mut().for_each(|c| *c /= gain);
    FirTaps::new(h)
}

/// Real bandpass: the `halfwidth` lowpass shifted to `center` (unit gain there).
pub fn design_bandpass(center: f64, halfwidth: f64, sample_rate: f64, num_taps: usize) -> Result<FirTaps> {
    check_rate(sample_rate)?;
    if !(halfwidth > 0.0 && center - halfwidth > 0.0 && center + halfwidth < sample_rate / 2.0) {
        return Err(Error::param(format!(
            "bandpass {center} +/- {halfwidth} Hz must lie inside (0, {}) Hz",
            sample_rate / 2.0
        )));
    }
    let lp = design_lowpass(halfwidth, sample_rate, num_taps)?;
    let d = lp.group_delay();
    let h: Vec<f64> = lp
        .coefficients()
        .iter()
        .enumerate()
        .map(|(n, &c)| 2.0 * c * (2.0 * PI * center / sample_rate * (n as f64 - d)).cos())
        .collect();
    // Re-symmetrize against rounding in the cosine argument.
    let len = h.len();
    let h: Vec<f64> = (0..len).map(|k| 0.5 * (h[k] + h[len - 1 - k])).collect();
    FirTaps::new(h)
}

/// Precomputed overlap-save FFT convolution for one tap set.
pub struct FftFilter {
    taps_len: usize,
    n: usize,
    spectrum: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftFilter {
    pub fn new(taps: &FirTaps) -> Self {
        let taps_len = taps.len();
        let n = (4 * taps_len).next_power_of_two().max(1024);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scale = 1.0 / n as f64;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
        for (s, &c) in spectrum.iter_mut().zip(taps.coefficients()) {
            *s = Complex64::new(c * scale, 0.0);
        }
        fwd.process(&mut spectrum);
        Self { taps_len, n, spectrum, fwd, inv }
    }

    /// Same-length, delay-compensated linear convolution with zero padding.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let l = self.taps_len;
        let d = (l - 1) / 2;
        let n = self.n;
        let step = n - l + 1;
        let len = x.len();
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        let mut start = 0usize;
        while start < len {
            // Block input covers x[start - d .. start - d + n].
            let origin = start as i64 - d as i64;
            for (i, b) in buf.iter_mut().enumerate() {
                let idx = origin + i as i64;
                *b = if idx >= 0 && (idx as usize) < len { x[idx as usize] } else { Complex64::new(0.0, 0.0) };
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for (b, h) in buf.iter_mut().zip(&self.spectrum) {
                *b *= h;
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let count = step.min(len - start);
            out[start..start + count].copy_from_slice(&buf[l - 1..l - 1 + count]);
            start += step;
        }
        out
    }
}

/// Filter a complex signal; output is aligned with the input timeline and
/// its first/last `taps.edge_len()` samples are transient.
pub fn fir_apply(sig: &ComplexSignal, taps: &FirTaps) -> Result<ComplexSignal> {
    if taps.is_empty() {
        return Err(Error::param("FIR taps must not be empty"));
    }
    let out = FftFilter::new(taps).apply(sig.samples());
    ComplexSignal::new(out, sig.sample_rate())
}

/// Real-signal counterpart of [`fir_apply`].
pub fn fir_apply_real(sig: &RealSignal, taps: &FirTaps) -> Result<RealSignal> {
    let c = fir_apply(&sig.to_complex(), taps)?;
    RealSignal::new(c.into_samples().into_iter().map(|z| z.re).collect(), sig.sample_rate())
}

/// Direct-form version of [`fir_apply`], used as a test oracle.
pub fn fir_apply_direct(x: &[Complex64], taps: &FirTaps) -> Vec<Complex64> {
    let h = taps.coefficients();
    let d = (h.len() - 1) / 2;
    (0..x.len())
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in h.iter().enumerate() {
                let idx = m as i64 + d as i64 - k as i64;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += x[idx as usize] * c;
                }
            }
            acc
        })
        .collect()
}

/// Number of samples between exact re-anchors of the phasor recursion.
const MIX_ANCHOR: usize = 512;

/// Multiply by `exp(-i(2 pi freq t_k + phase0))` with `t_k = k / fs`.
pub(crate) fn mix_into<F: Fn(usize) -> Complex64>(len: usize, sample_rate: f64, freq: f64, phase0: f64, input: F) -> Vec<Complex64> {
    let cycles_per_sample = freq / sample_rate;
    let step = Complex64::from_polar(1.0, -2.0 * PI * cycles_per_sample);
    let mut out = Vec::with_capacity(len);
    let mut k = 0;
    while k < len {
        let cyc = (cycles_per_sample * k as f64).fract();
        let mut rot = Complex64::from_polar(1.0, -(2.0 * PI * cyc + phase0));
        let end = (k + MIX_ANCHOR).min(len);
        for i in k..end {
            out.push(input(i) * rot);
            rot *= step;
        }
        k = end;
    }
    out
}

/// `out[k] = in[k] * exp(-i(2 pi freq t_k + phase0))`.
pub fn mix(sig: &ComplexSignal, freq: f64, phase0: f64) -> ComplexSignal {
    let s = sig.samples();
    let out = mix_into(s.len(), sig.sample_rate(), freq, phase0, |i| s[i]);
    ComplexSignal { samples: out, sample_rate: sig.sample_rate() }
}

/// [`mix`] for a real input.
pub fn mix_real(sig: &RealSignal, freq: f64, phase0: f64) -> ComplexSignal {
    let s = sig.samples();
    let out = mix_into(s.len(), sig.sample_rate(), freq, phase0, |i| Complex64::new(s[i], 0.0));
    ComplexSignal { samples: out, sample_rate: sig.sample_rate() }
}

/// Continuous phase of each sample; consecutive values differ by less than pi.
pub fn unwrap_phase(sig: &ComplexSignal) -> Result<Vec<f64>> {
    unwrap_samples(sig.samples())
}

pub(crate) fn unwrap_samples(samples: &[Complex64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut offset = 0.0;
    let mut prev = 0.0;
    for (i, z) in samples.iter().enumerate() {
        if z.norm_sqr() == 0.0 || !z.is_finite() {
            return Err(Error::Degenerate { index: i, reason: "zero-magnitude sample has no phase".into() });
        }
        let a = z.arg();
        if i > 0 {
            let d = a - prev;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = a;
        out.push(a + offset);
    }
    Ok(out)
}

/// Ordinary least squares `y ~ slope * t + intercept`.
pub fn linear_fit(y: &[f64], t: &[f64]) -> Result<(f64, f64)> {
    if y.len() != t.len() {
        return Err(Error::param("linear_fit: length mismatch"));
    }
    if y.len() < 2 {
        return Err(Error::param("linear_fit needs at least two points"));
    }
    let n = y.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        stt += (ti - tm) * (ti - tm);
        sty += (ti - tm) * (yi - ym);
    }
    if stt == 0.0 {
        return Err(Error::param("linear_fit: all abscissae equal"));
    }
    let slope = sty / stt;
    Ok((slope, ym - slope * tm))
}

/// Welch PSD estimate with a Hann window and 50 % overlap.
///
/// Returns two-sided frequencies in ascending order over `[-fs/2, fs/2)` and
/// the power spectral density (units^2 / Hz).
pub fn welch(samples: &[Complex64], sample_rate: f64, nperseg: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rate(sample_rate)?;
    if nperseg < 8 || samples.len() < nperseg {
        return Err(Error::param(format!("welch: need at least nperseg={nperseg} (>= 8) samples")));
    }
    let win: Vec<f64> = (0..nperseg).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / nperseg as f64).cos()).collect();
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nperseg);
    let hop = nperseg / 2;
    let mut acc = vec![0.0; nperseg];
    let mut buf = vec![Complex64::new(0.0, 0.0); nperseg];
    let mut segments = 0usize;
    let mut start = 0;
    while start + nperseg <= samples.len() {
        for ((b, s), w) in buf.iter_mut().zip(&samples[start..start + nperseg]).zip(&win) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (segments as f64 * wss * sample_rate);
    let half = nperseg / 2;
    let mut freqs = Vec::with_capacity(nperseg);
    let mut psd = Vec::with_capacity(nperseg);
    for j in 0..nperseg {
        let kk = j as i64 - half as i64;
        let k = kk.rem_euclid(nperseg as i64) as usize;
        freqs.push(kk as f64 * sample_rate / nperseg as f64);
        psd.push(acc[k] * scale);
    }
    Ok((freqs, psd))
}

/// One-sided Welch PSD of a real signal over `[0, fs/2]`; total power is preserved.
pub fn welch_real(sig: &RealSignal, nperseg: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let c: Vec<Complex64> = sig.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let (f, p) = welch(&c, sig.sample_rate(), nperseg)?;
    let mut out_f = Vec::new();
    let mut out_p = Vec::new();
    let half = sig.sample_rate() / 2.0;
    let mut nyquist = None;
    for (fi, pi) in f.iter().zip(&p) {
        if (fi.abs() - half).abs() < 1e-9 * sig.sample_rate() {
            // Even-length grids carry the Nyquist bin once, at -fs/2.
            nyquist = Some(*pi);
        } else if *fi >= 0.0 {
            out_f.push(*fi);
            out_p.push(if *fi == 0.0 { *pi } else { 2.0 * pi });
        }
    }
    if let Some(pn) = nyquist {
        out_f.push(half);
        out_p.push(pn);
    }
    Ok((out_f, out_p))
}

/// Median of a slice (NaN-free input assumed).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
