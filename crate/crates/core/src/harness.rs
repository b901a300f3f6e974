//! Session orchestration: configuration, noise calibration, per-snapshot
//! simulation and processing, session summaries and file export.
//!
//! A snapshot runs transmitter -> channel -> front end -> per-branch DSP ->
//! combiner -> frame sync -> estimation. Single-polarization estimates are
//! taken from each branch on its own, with the same symbol window.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, make_jones_trajectory, transmission, ChannelConfig, PolModel};
use crate::cma::{cma_error_trace_stats, cma_run, mrc_preweight, output_noise_gain_trace, CmaConfig};
use crate::dsp::{noise_points, recover_dual, ConstellationFrame, DspConfig};
use crate::error::{Error, Result};
use crate::frontend::{capture_noise, detect, CaptureKind, DualPolCapture, FrontendConfig};
use crate::rng::sub_seed;
use crate::security::{
    evaluate, frame_sync, key_rate_at, pair_at_lag, phase_at_lag, snu_normalize, NoiseCalibration, SecurityParams,
    SecuritySnapshot, VarianceAccumulator,
};
use crate::signal::welch_real;
use crate::transmitter::{gen_symbols, modulate, scale_to_photons, SymbolFrame, TxConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub schema_version: u32,
    pub tx: TxConfig,
    pub channel: ChannelConfig,
    pub frontend: FrontendConfig,
    pub dsp: DspConfig,
    pub cma: CmaConfig,
    pub security: SecurityParams,
    pub snapshot_duration: f64,
    pub snapshot_interval: f64,
    pub snapshot_count: usize,
    /// Replace the channel's polarization model by the scrambler.
    pub scrambled: bool,
    pub scrambler_step_rate: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Shot and thermal captures (each `snapshot_duration` long) pooled for calibration.
    pub calibration_captures: usize,
    /// Combiner outputs discarded as start-up transient before trimming to `max_symbols`.
    pub warmup_symbols: usize,
    pub max_symbols: usize,
    /// Worker threads for sessions; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tx: TxConfig::default(),
            channel: ChannelConfig::default(),
            frontend: FrontendConfig::default(),
            dsp: DspConfig::default(),
            cma: CmaConfig::default(),
            security: SecurityParams::default(),
            snapshot_duration: 2e-3,
            snapshot_interval: 10.0,
            snapshot_count: 200,
            scrambled: false,
            scrambler_step_rate: 10.0,
            output_dir: PathBuf::from("out"),
            seed: 2024,
            calibration_captures: 16,
            warmup_symbols: 8192,
            max_symbols: 65536,
            threads: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl SessionConfig {
    /// Check each module config and the cross-module consistency.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| config_err(e.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        wrap(self.tx.validate())?;
        wrap(self.channel.validate())?;
        wrap(self.frontend.validate())?;
        wrap(self.dsp.validate())?;
        wrap(self.cma.validate())?;
        wrap(self.security.validate())?;
        wrap(self.tx.samples_per_symbol(self.frontend.sample_rate).map(|_| ()))?;
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !same(self.tx.symbol_rate, self.dsp.symbol_rate) || !same(self.tx.f_q, self.dsp.f_q) || !same(self.tx.f_p, self.dsp.f_p) {
            return Err(config_err("tx and dsp disagree on symbol rate, f_Q or f_P"));
        }
        if !same(self.tx.mean_photons, self.security.mean_photons) || self.tx.constellation_order != self.security.order {
            return Err(config_err("tx and security disagree on mean photons or constellation order"));
        }
        if !same(self.frontend.eta, self.security.eta) {
            return Err(config_err("frontend and security disagree on eta"));
        }
        if !(self.snapshot_duration > 0.0 && self.snapshot_interval >= 0.0) {
            return Err(config_err("snapshot duration must be positive and interval non-negative"));
        }
        if self.snapshot_count == 0 || self.calibration_captures == 0 {
            return Err(config_err("snapshot_count and calibration_captures must be positive"));
        }
        if self.scrambled && !(self.scrambler_step_rate > 0.0) {
            return Err(config_err("scrambler step rate must be positive"));
        }
        if self.symbols_per_snapshot() < self.warmup_symbols + self.tx.header_len.max(2048) {
            return Err(config_err("snapshot too short for the warm-up, header and estimation"));
        }
        Ok(())
    }

    pub fn symbols_per_snapshot(&self) -> usize {
        (self.snapshot_duration * self.tx.symbol_rate).round() as usize
    }

    /// Channel transmission set by the configuration.
    pub fn configured_transmission(&self) -> f64 {
        transmission(&self.channel)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(s) if s == SCHEMA_VERSION as u64 => {}
            Some(s) => return Err(config_err(format!("unsupported schema_version {s}"))),
            None => return Err(config_err("missing schema_version")),
        }
        let cfg: SessionConfig = serde_json::from_value(v).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn sop_channel(&self) -> ChannelConfig {
        let mut ch = self.channel.clone();
        ch.seed = sub_seed(self.seed, "sop", 0);
        if self.scrambled {
            ch.pol_model = PolModel::Scrambler { step_rate: self.scrambler_step_rate };
        }
        ch
    }

    fn snapshot_channel(&self, index: usize) -> ChannelConfig {
        let mut ch = self.channel.clone();
        ch.seed = sub_seed(self.seed, "channel", index as u64);
        ch
    }

    fn snapshot_tx(&self, index: usize) -> TxConfig {
        let mut tx = self.tx.clone();
        tx.seed = sub_seed(self.seed, "tx", index as u64);
        tx
    }
}

/// Per-branch noise calibration shared by a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionCalibration {
    pub x: NoiseCalibration,
    pub y: NoiseCalibration,
    pub points_per_branch: usize,
}

/// Generate and process `calibration_captures` pairs of noise captures.
pub fn calibrate_session(cfg: &SessionConfig) -> Result<SessionCalibration> {
    let f_s = cfg.channel.f_s;
    let one = |kind: CaptureKind, r: usize| -> Result<[VarianceAccumulator; 2]> {
        let tag = if kind == CaptureKind::ShotOnly { "cal-shot" } else { "cal-thermal" };
        let cap = capture_noise(&cfg.frontend, kind, cfg.snapshot_duration, sub_seed(cfg.seed, tag, r as u64))?;
        let mut ax = VarianceAccumulator::default();
        let mut ay = VarianceAccumulator::default();
        ax.add(&noise_points(&cap.x, &cfg.dsp, f_s)?);
        ay.add(&noise_points(&cap.y, &cfg.dsp, f_s)?);
        Ok([ax, ay])
    };
    let pooled = |kind: CaptureKind| -> Result<[VarianceAccumulator; 2]> {
        let parts: Vec<[VarianceAccumulator; 2]> =
            (0..cfg.calibration_captures).into_par_iter().map(|r| one(kind, r)).collect::<Result<_>>()?;
        Ok(parts.iter().fold([VarianceAccumulator::default(); 2], |acc, p| [acc[0].merge(&p[0]), acc[1].merge(&p[1])]))
    };
    let shot = pooled(CaptureKind::ShotOnly)?;
    let thermal = pooled(CaptureKind::ThermalOnly)?;
    Ok(SessionCalibration {
        x: NoiseCalibration::from_variances(shot[0].variance(), thermal[0].variance())?,
        y: NoiseCalibration::from_variances(shot[1].variance(), thermal[1].variance())?,
        points_per_branch: shot[0].count(),
    })
}

/// Outcome of one snapshot. Security fields are absent when recovery failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotResult {
    pub index: usize,
    #[serde(rename = "T_hat_x")]
    pub t_hat_x: Option<f64>,
    #[serde(rename = "T_hat_y")]
    pub t_hat_y: Option<f64>,
    #[serde(rename = "T_hat_rec")]
    pub t_hat_rec: Option<f64>,
    pub eps_hat: Option<f64>,
    #[serde(rename = "I_BA")]
    pub i_ba: Option<f64>,
    #[serde(rename = "chi_BE")]
    pub chi_be: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub secure: bool,
    pub cma_settled_index: Option<usize>,
    pub failure_reason: Option<String>,
    pub eps_hat_x: Option<f64>,
    pub eps_hat_y: Option<f64>,
    #[serde(rename = "K_x")]
    pub k_x: Option<f64>,
    #[serde(rename = "K_y")]
    pub k_y: Option<f64>,
    pub eps_thermal: Option<f64>,
    pub n_pairs: Option<usize>,
}

impl SnapshotResult {
    fn failed(index: usize, reason: String) -> Self {
        Self {
            index,
            t_hat_x: None,
            t_hat_y: None,
            t_hat_rec: None,
            eps_hat: None,
            i_ba: None,
            chi_be: None,
            k: None,
            secure: false,
            cma_settled_index: None,
            failure_reason: Some(reason),
            eps_hat_x: None,
            eps_hat_y: None,
            k_x: None,
            k_y: None,
            eps_thermal: None,
            n_pairs: None,
        }
    }

    pub fn secure_x(&self) -> bool {
        self.k_x.is_some_and(|k| k > 0.0)
    }

    pub fn secure_y(&self) -> bool {
        self.k_y.is_some_and(|k| k > 0.0)
    }
}

/// Simulated capture of one snapshot plus Alice's symbols.
pub struct SimulatedSnapshot {
    pub frame: SymbolFrame,
    pub capture: DualPolCapture,
}

/// Transmit, propagate and detect one snapshot at wall-clock `index * interval`.
pub fn simulate_snapshot(cfg: &SessionConfig, index: usize) -> Result<SimulatedSnapshot> {
    let fs = cfg.frontend.sample_rate;
    let tx = cfg.snapshot_tx(index);
    let frame = gen_symbols(&tx, cfg.symbols_per_snapshot())?;
    let sig = scale_to_photons(&modulate(&frame, &tx, fs)?, &tx)?;
    let t0 = index as f64 * cfg.snapshot_interval;
    let traj = make_jones_trajectory(&cfg.sop_channel(), t0, sig.duration(), cfg.channel.jones_update_period)?;
    let (fx, fy) = apply_channel(&sig, &cfg.snapshot_channel(index), &traj)?;
    drop(sig);
    let capture = detect(&fx, &fy, &cfg.frontend, sub_seed(cfg.seed, "frontend", index as u64))?;
    Ok(SimulatedSnapshot { frame, capture })
}

/// Per-snapshot diagnostics kept alongside the exported record.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDetail {
    pub recovered: SecuritySnapshot,
    pub x: Option<SecuritySnapshot>,
    pub y: Option<SecuritySnapshot>,
    pub lag: i64,
    pub cma_settled_index: usize,
    pub n_pairs: usize,
    pub frame: ConstellationFrame,
}

fn window(b: &[Complex64], a: &[Complex64], lag: i64, phase: f64, warm: usize, max: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let warm = warm.min(b.len());
    let (mut pa, mut pb) = pair_at_lag(a, &b[warm..], lag - warm as i64, phase);
    pa.truncate(max);
    pb.truncate(max);
    (pa, pb)
}

/// Run the receiver chain and estimation on a capture.
pub fn process_capture(cfg: &SessionConfig, frame: &SymbolFrame, cap: &DualPolCapture, cal: &SessionCalibration) -> Result<SnapshotDetail> {
    let (cf, _) = recover_dual(cap, &cfg.dsp, cfg.channel.f_s)?;
    let (pre, w) = mrc_preweight(&cf);
    let out = cma_run(&pre, &cfg.cma)?;
    // Per-output shot-noise reference from the taps in use at that output.
    let mut thermal_ratio = Vec::with_capacity(out.s_q.len());
    let b: Vec<Complex64> = out
        .s_q
        .iter()
        .zip(output_noise_gain_trace(&out, w))
        .map(|(z, (gx, gy))| {
            let shot = gx * cal.x.sigma2_shot + gy * cal.y.sigma2_shot;
            thermal_ratio.push((gx * cal.x.sigma2_thermal + gy * cal.y.sigma2_thermal) / shot);
            z / shot.sqrt()
        })
        .collect();
    let sync = frame_sync(&b, &frame.symbols)?;
    let warm = cfg.warmup_symbols;
    let (pa, pb) = window(&b, &frame.symbols, sync.lag, sync.global_phase, warm, cfg.max_symbols);
    let used = &thermal_ratio[warm.min(thermal_ratio.len())..];
    let eps_th = used.iter().take(cfg.max_symbols).sum::<f64>() / used.len().min(cfg.max_symbols).max(1) as f64;
    let cal_rec = NoiseCalibration { sigma2_shot: 1.0, sigma2_thermal: eps_th, eps_thermal: eps_th };
    let recovered = evaluate(&pa, &pb, &cfg.security, &cal_rec)?;
    let single = |q: &[Complex64], c: &NoiseCalibration| -> Option<SecuritySnapshot> {
        let bq = snu_normalize(q, c);
        let phase = phase_at_lag(&frame.symbols, &bq, sync.lag);
        let (pa, pb) = window(&bq, &frame.symbols, sync.lag, phase, warm, cfg.max_symbols);
        evaluate(&pa, &pb, &cfg.security, c).ok()
    };
    let x = single(&cf.x_q, &cal.x);
    let y = single(&cf.y_q, &cal.y);
    let settled = cma_error_trace_stats(&out.error_trace)?.1;
    Ok(SnapshotDetail { recovered, x, y, lag: sync.lag, cma_settled_index: settled, n_pairs: pa.len(), frame: cf })
}

fn to_result(index: usize, d: &SnapshotDetail) -> SnapshotResult {
    let r = &d.recovered;
    SnapshotResult {
        index,
        t_hat_x: d.x.map(|s| s.estimate.transmission),
        t_hat_y: d.y.map(|s| s.estimate.transmission),
        t_hat_rec: Some(r.estimate.transmission),
        eps_hat: Some(r.estimate.eps_hat),
        i_ba: Some(r.i_ba),
        chi_be: Some(r.chi_be),
        k: Some(r.k),
        secure: r.secure,
        cma_settled_index: Some(d.cma_settled_index),
        failure_reason: None,
        eps_hat_x: d.x.map(|s| s.estimate.eps_hat),
        eps_hat_y: d.y.map(|s| s.estimate.eps_hat),
        k_x: d.x.map(|s| s.k),
        k_y: d.y.map(|s| s.k),
        eps_thermal: Some(r.calibration.eps_thermal),
        n_pairs: Some(d.n_pairs),
    }
}

/// Simulate and process one snapshot; recovery failures become data.
pub fn run_snapshot(cfg: &SessionConfig, index: usize, cal: &SessionCalibration) -> Result<SnapshotResult> {
    cfg.validate()?;
    let sim = match simulate_snapshot(cfg, index) {
        Ok(s) => s,
        Err(e @ Error::Clipping { .. }) => return Ok(SnapshotResult::failed(index, e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(match process_capture(cfg, &sim.frame, &sim.capture, cal) {
        Ok(d) => to_result(index, &d),
        Err(e) => SnapshotResult::failed(index, e.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if v.is_finite() {
                let i = ((v - lo) / width).floor();
                let i = i.clamp(0.0, (bins - 1) as f64) as usize;
                counts[i] += 1;
            }
        }
        Self { edges, counts }
    }

    /// Centre of the fullest bin.
    pub fn mode(&self) -> Option<f64> {
        let (i, &c) = self.counts.iter().enumerate().max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))?;
        (c > 0).then(|| 0.5 * (self.edges[i] + self.edges[i + 1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub configured_transmission: f64,
    pub snapshots: usize,
    pub failures: usize,
    pub secure_count: usize,
    pub secure_fraction: f64,
    pub secure_count_x: usize,
    pub secure_count_y: usize,
    pub mean_t_hat_rec: Option<f64>,
    pub mean_eps_hat: Option<f64>,
    pub mean_eps_thermal: Option<f64>,
    /// Key fraction at the session-mean transmission and excess noise.
    pub k_at_mean: Option<f64>,
    pub hist_t_rec: Histogram,
    pub hist_t_x: Histogram,
    pub hist_t_y: Histogram,
    /// `(index, eps_hat, secure)`
    pub eps_series: Vec<(usize, f64, bool)>,
    /// `(T_hat_rec, K)`
    pub scatter: Vec<(f64, f64)>,
    /// `(T, K(T))` at the session-mean excess and thermal noise.
    pub theory_curve: Vec<(f64, f64)>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(cfg: &SessionConfig, results: &[SnapshotResult]) -> SessionSummary {
    let t_conf = cfg.configured_transmission();
    let ok: Vec<&SnapshotResult> = results.iter().filter(|r| r.failure_reason.is_none()).collect();
    let t_rec: Vec<f64> = ok.iter().filter_map(|r| r.t_hat_rec).collect();
    let eps: Vec<f64> = ok.iter().filter_map(|r| r.eps_hat).collect();
    let eth: Vec<f64> = ok.iter().filter_map(|r| r.eps_thermal).collect();
    let tx: Vec<f64> = ok.iter().filter_map(|r| r.t_hat_x).collect();
    let ty: Vec<f64> = ok.iter().filter_map(|r| r.t_hat_y).collect();
    let hi = t_rec.iter().chain(&tx).chain(&ty).fold(1.5 * t_conf, |m, &v| m.max(v));
    let bins = 30;
    let (mt, me, mth) = (mean(&t_rec), mean(&eps), mean(&eth));
    let k_at_mean = match (mt, me, mth) {
        (Some(t), Some(e), Some(th)) => key_rate_at(t, e, th, &cfg.security).ok(),
        _ => None,
    };
    let theory_curve = match (me, mth) {
        (Some(e), Some(th)) => (1..=100)
            .filter_map(|i| {
                let t = hi * i as f64 / 100.0;
                key_rate_at(t.min(1.0), e, th, &cfg.security).ok().map(|k| (t.min(1.0), k))
            })
            .collect(),
        _ => Vec::new(),
    };
    let secure_count = ok.iter().filter(|r| r.secure).count();
    SessionSummary {
        configured_transmission: t_conf,
        snapshots: results.len(),
        failures: results.len() - ok.len(),
        secure_count,
        secure_fraction: if results.is_empty() { 0.0 } else { secure_count as f64 / results.len() as f64 },
        secure_count_x: ok.iter().filter(|r| r.secure_x()).count(),
        secure_count_y: ok.iter().filter(|r| r.secure_y()).count(),
        mean_t_hat_rec: mt,
        mean_eps_hat: me,
        mean_eps_thermal: mth,
        k_at_mean,
        hist_t_rec: Histogram::new(&t_rec, 0.0, hi, bins),
        hist_t_x: Histogram::new(&tx, 0.0, hi, bins),
        hist_t_y: Histogram::new(&ty, 0.0, hi, bins),
        eps_series: ok.iter().filter_map(|r| r.eps_hat.map(|e| (r.index, e, r.secure))).collect(),
        scatter: ok.iter().filter_map(|r| Some((r.t_hat_rec?, r.k?))).collect(),
        theory_curve,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutput {
    pub schema_version: u32,
    pub config: SessionConfig,
    pub calibration: SessionCalibration,
    pub results: Vec<SnapshotResult>,
    pub summary: SessionSummary,
}

fn pool(cfg: &SessionConfig) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| config_err(e.to_string()))
}

/// Run snapshots `indices` in a worker pool; results come back in index order.
pub fn run_snapshots(cfg: &SessionConfig, indices: &[usize], cal: &SessionCalibration) -> Result<Vec<SnapshotResult>> {
    cfg.validate()?;
    pool(cfg)?.install(|| indices.par_iter().map(|&i| run_snapshot(cfg, i, cal)).collect())
}

/// Calibrate, then run `snapshot_count` snapshots and summarize.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutput> {
    cfg.validate()?;
    let calibration = pool(cfg)?.install(|| calibrate_session(cfg))?;
    let indices: Vec<usize> = (0..cfg.snapshot_count).collect();
    let results = run_snapshots(cfg, &indices, &calibration)?;
    let summary = summarize(cfg, &results);
    Ok(SessionOutput { schema_version: SCHEMA_VERSION, config: cfg.clone(), calibration, results, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// CSV column order of [`SnapshotResult`].
pub const CSV_COLUMNS: [&str; 17] = [
    "index",
    "T_hat_x",
    "T_hat_y",
    "T_hat_rec",
    "eps_hat",
    "I_BA",
    "chi_BE",
    "K",
    "secure",
    "cma_settled_index",
    "failure_reason",
    "eps_hat_x",
    "eps_hat_y",
    "K_x",
    "K_y",
    "eps_thermal",
    "n_pairs",
];

pub fn write_results_csv<W: Write>(results: &[SnapshotResult], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in results {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<SnapshotResult>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Write results (CSV) or the full session with configs embedded (JSON).
pub fn export(out: &SessionOutput, format: ExportFormat, path: &Path) -> Result<()> {
    if out.results.is_empty() {
        return Err(Error::param("no results to export"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    match format {
        ExportFormat::Csv => write_results_csv(&out.results, fs::File::create(path)?),
        ExportFormat::Json => Ok(fs::write(path, serde_json::to_string_pretty(out)?)?),
    }
}

pub fn read_session_json(path: &Path) -> Result<SessionOutput> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// One-sided Welch periodogram of both branches as CSV
/// (`frequency_hz,psd_x,psd_y`, counts^2/Hz).
pub fn spectrum_dump(cap: &DualPolCapture, nperseg: usize, path: &Path) -> Result<()> {
    let (f, px) = welch_real(&cap.x, nperseg)?;
    let (_, py) = welch_real(&cap.y, nperseg)?;
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["frequency_hz", "psd_x", "psd_y"])?;
    for i in 0..f.len() {
        wr.write_record([f[i].to_string(), px[i].to_string(), py[i].to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Aggregated result for one point of a transmission sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub length_km: f64,
    pub configured_transmission: f64,
    pub mean_t_hat: Option<f64>,
    pub mean_eps_hat: Option<f64>,
    pub mean_eps_thermal: Option<f64>,
    /// Key fraction at this point's mean estimates.
    pub k: Option<f64>,
    pub snapshots: usize,
    pub failures: usize,
}

/// Run `cfg.snapshot_count` snapshots at each fiber length with one shared calibration.
pub fn run_sweep(cfg: &SessionConfig, lengths_km: &[f64]) -> Result<(SessionCalibration, Vec<SweepPoint>, Vec<Vec<SnapshotResult>>)> {
    cfg.validate()?;
    let cal = pool(cfg)?.install(|| calibrate_session(cfg))?;
    let mut points = Vec::new();
    let mut all = Vec::new();
    for (p, &len) in lengths_km.iter().enumerate() {
        let mut c = cfg.clone();
        c.channel.length_km = len;
        c.seed = sub_seed(cfg.seed, "sweep", p as u64);
        c.validate()?;
        let indices: Vec<usize> = (0..c.snapshot_count).collect();
        let res = run_snapshots(&c, &indices, &cal)?;
        let s = summarize(&c, &res);
        points.push(SweepPoint {
            length_km: len,
            configured_transmission: c.configured_transmission(),
            mean_t_hat: s.mean_t_hat_rec,
            mean_eps_hat: s.mean_eps_hat,
            mean_eps_thermal: s.mean_eps_thermal,
            k: s.k_at_mean,
            snapshots: s.snapshots,
            failures: s.failures,
        });
        all.push(res);
    }
    Ok((cal, points, all))
}
