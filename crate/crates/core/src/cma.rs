//! Clock-driven constant-modulus combiner.
//!
//! Two `N`-tap filters, one per polarization branch, are stacked into a single
//! `2N` vector `h = [h_x; h_y]` and applied to sliding input blocks
//! `u = [x(n), x(n-1), .., x(n-N+1); y(n), .., y(n-N+1)]`. The clock
//! constellation drives the stochastic-gradient update and the same filter is
//! applied to the quantum constellation:
//!
//! ```text
//! s_C(n) = h^H u_C(n)      s_Q(n) = h^H u_Q(n)
//! e(n)   = R - |s_C(n)|    (or R - s_C(n) in literal mode)
//! h     <- h + mu e(n) s_C(n)^* u_C(n)
//! ```
//!
//! with `R = mean|x_C| + mean|y_C|` over the whole frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::ConstellationFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// `e = R - |s_C|`, real.
    Amplitude,
    /// `e = R - s_C`, complex.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaConfig {
    pub taps: usize,
    pub mu: f64,
    pub error_mode: ErrorMode,
}

impl Default for CmaConfig {
    fn default() -> Self {
        Self { taps: 8, mu: 1e-3, error_mode: ErrorMode::Amplitude }
    }
}

impl CmaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::param("CMA needs at least one tap"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::param("CMA step size must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaState {
    /// `[h_x; h_y]`, `2N` coefficients.
    pub h: Vec<Complex64>,
    pub u_c: Vec<Complex64>,
    pub u_q: Vec<Complex64>,
    pub n: usize,
}

impl CmaState {
    /// First tap of each branch filter at one, everything else zero.
    pub fn new(taps: usize) -> Self {
        let mut h = vec![Complex64::new(0.0, 0.0); 2 * taps];
        h[0] = Complex64::new(1.0, 0.0);
        h[taps] = Complex64::new(1.0, 0.0);
        Self { h, u_c: vec![Complex64::new(0.0, 0.0); 2 * taps], u_q: vec![Complex64::new(0.0, 0.0); 2 * taps], n: 0 }
    }

    pub fn taps(&self) -> usize {
        self.h.len() / 2
    }

    pub fn h_x(&self) -> &[Complex64] {
        &self.h[..self.taps()]
    }

    pub fn h_y(&self) -> &[Complex64] {
        &self.h[self.taps()..]
    }
}

/// Shift `x` into the front of the branch block `block` (newest first).
fn push(block: &mut [Complex64], x: Complex64) {
    block.rotate_right(1);
    block[0] = x;
}

fn dot_h(h: &[Complex64], u: &[Complex64]) -> Complex64 {
    h.iter().zip(u).map(|(a, b)| a.conj() * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaOutput {
    pub s_q: Vec<Complex64>,
    pub s_c: Vec<Complex64>,
    pub state: CmaState,
    pub error_trace: Vec<f64>,
    /// `(sum |h_x|^2, sum |h_y|^2)` of the taps that produced each output.
    pub tap_energy: Vec<(f64, f64)>,
    pub target: f64,
}

pub fn cma_run(frame: &ConstellationFrame, cfg: &CmaConfig) -> Result<CmaOutput> {
    cfg.validate()?;
    frame.validate()?;
    if frame.is_empty() {
        return Err(Error::param("empty constellation frame"));
    }
    let n_taps = cfg.taps;
    let len = frame.len();
    let mean_abs = |v: &[Complex64]| v.iter().map(|z| z.norm()).sum::<f64>() / v.len() as f64;
    let target = mean_abs(&frame.x_c) + mean_abs(&frame.y_c);

    let mut st = CmaState::new(n_taps);
    let mut s_q = Vec::with_capacity(len);
    let mut s_c = Vec::with_capacity(len);
    let mut trace = Vec::with_capacity(len);
    let mut tap_energy = Vec::with_capacity(len);
    let energy = |h: &[Complex64]| h.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for n in 0..len {
        {
            let (ux, uy) = st.u_c.split_at_mut(n_taps);
            push(ux, frame.x_c[n]);
            push(uy, frame.y_c[n]);
            let (qx, qy) = st.u_q.split_at_mut(n_taps);
            push(qx, frame.x_q[n]);
            push(qy, frame.y_q[n]);
        }
        let sc = dot_h(&st.h, &st.u_c);
        let sq = dot_h(&st.h, &st.u_q);
        tap_energy.push((energy(st.h_x()), energy(st.h_y())));
        let e = match cfg.error_mode {
            ErrorMode::Amplitude => Complex64::new(target - sc.norm(), 0.0),
            ErrorMode::Literal => Complex64::new(target, 0.0) - sc,
        };
        let g = e * sc.conj() * cfg.mu;
        for (h, u) in st.h.iter_mut().zip(&st.u_c) {
            *h += g * u;
        }
        if st.h.iter().any(|h| !h.is_finite()) || !sq.is_finite() {
            return Err(Error::Divergence { step: n });
        }
        s_q.push(sq);
        s_c.push(sc);
        trace.push(e.norm());
        st.n = n + 1;
    }
    Ok(CmaOutput { s_q, s_c, state: st, error_trace: trace, tap_energy, target })
}

/// `(mean over the last quarter, first index where the trailing 1024-sample
/// moving average is within 10 % of its final value)`.
pub fn cma_error_trace_stats(trace: &[f64]) -> Result<(f64, usize)> {
    if trace.is_empty() {
        return Err(Error::param("empty error trace"));
    }
    const W: usize = 1024;
    let mut ma = Vec::with_capacity(trace.len());
    let mut acc = 0.0;
    for (i, &v) in trace.iter().enumerate() {
        acc += v;
        if i >= W {
            acc -= trace[i - W];
        }
        ma.push(acc / (i + 1).min(W) as f64);
    }
    let fin = *ma.last().unwrap();
    let settled = ma.iter().position(|&m| (m - fin).abs() <= 0.1 * fin.abs()).unwrap_or(trace.len() - 1);
    let q = trace.len() - (trace.len() / 4).max(1);
    let tail = &trace[q..];
    Ok((tail.iter().sum::<f64>() / tail.len() as f64, settled))
}

/// Per-branch weights applied before [`cma_run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchWeights {
    pub x: f64,
    pub y: f64,
}

/// Maximal-ratio pre-weighting from the clock amplitudes:
/// `w_p = A_p / (A_x^2 + A_y^2)` with `A_p = mean|p_C|`.
///
/// Both branches are phase-referenced to their own pilot, so the clock pair
/// already sits on the CMA's constant-modulus set for any static SOP and the
/// plain `[1, 1]` start would converge only to equal-gain combining. Scaling
/// each branch by its clock amplitude makes the starting point the
/// maximal-ratio combiner, with `R` close to one.
pub fn mrc_preweight(frame: &ConstellationFrame) -> (ConstellationFrame, BranchWeights) {
    let mean_abs = |v: &[Complex64]| v.iter().map(|z| z.norm()).sum::<f64>() / v.len().max(1) as f64;
    let (ax, ay) = (mean_abs(&frame.x_c), mean_abs(&frame.y_c));
    let p = ax * ax + ay * ay;
    let w = if p > 0.0 { BranchWeights { x: ax / p, y: ay / p } } else { BranchWeights { x: 1.0, y: 1.0 } };
    let scale = |v: &[Complex64], k: f64| v.iter().map(|z| z * k).collect::<Vec<_>>();
    (
        ConstellationFrame {
            x_c: scale(&frame.x_c, w.x),
            y_c: scale(&frame.y_c, w.y),
            x_q: scale(&frame.x_q, w.x),
            y_q: scale(&frame.y_q, w.y),
            symbol_index: frame.symbol_index.clone(),
        },
        w,
    )
}

/// Noise-power gain of the combined output for each branch:
/// `(sum_k |h_x,k|^2 w_x^2, sum_k |h_y,k|^2 w_y^2)`.
pub fn output_noise_gains(state: &CmaState, w: BranchWeights) -> (f64, f64) {
    let e = |h: &[Complex64]| h.iter().map(|z| z.norm_sqr()).sum::<f64>();
    (e(state.h_x()) * w.x * w.x, e(state.h_y()) * w.y * w.y)
}

/// [`output_noise_gains`] for every output sample, using the taps that
/// produced it. The taps keep moving after convergence, and the shot-noise
/// reference of each output has to follow them.
pub fn output_noise_gain_trace(out: &CmaOutput, w: BranchWeights) -> Vec<(f64, f64)> {
    out.tap_energy.iter().map(|&(ex, ey)| (ex * w.x * w.x, ey * w.y * w.y)).collect()
}
