//! `hetqkd`: command-line front end for the receiver simulator.
//!
//! Exit codes: 0 on success, 1 for configuration or processing errors, 2 for
//! I/O failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hetqkd_core::frontend::{capture_noise, read_capture, write_capture, CaptureKind};
use hetqkd_core::harness::{
    calibrate_session, export, run_snapshot, run_sweep, simulate_snapshot, spectrum_dump, summarize,
    write_results_csv, ExportFormat, SessionCalibration, SessionConfig, SessionOutput, SCHEMA_VERSION,
};
use hetqkd_core::security::{calibrate, holevo_bound_raw, key_rate, mutual_info_raw};
use hetqkd_core::{run_session, Error};

#[derive(Parser)]
#[command(name = "hetqkd", version, about = "Polarization-diverse heterodyne CV-QKD receiver simulator")]
struct Cli {
    /// Session configuration (JSON with `schema_version`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the polarization scrambler as the SOP model.
    #[arg(long, global = true)]
    scrambled: bool,
    /// Output directory (defaults to the config's `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Signal,
    Shot,
    Thermal,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and process one snapshot.
    Simulate {
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Also write the raw ADC capture next to the results.
        #[arg(long)]
        write_capture: bool,
        /// Reuse a calibration written by `calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Calibrate, run all snapshots and write results plus a summary.
    Session,
    /// Noise calibration from captures on disk, or from fresh synthetic captures.
    Calibrate {
        /// Directory holding the captures.
        #[arg(long, requires_all = ["shot", "thermal"])]
        captures: Option<PathBuf>,
        /// Stem of the shot-noise capture.
        #[arg(long)]
        shot: Option<String>,
        /// Stem of the thermal-noise capture.
        #[arg(long)]
        thermal: Option<String>,
    },
    /// Evaluate the key fraction on a transmission by excess-noise grid.
    Keyrate {
        #[arg(long, default_value_t = 0.05)]
        t_min: f64,
        #[arg(long, default_value_t = 0.5)]
        t_max: f64,
        #[arg(long, default_value_t = 10)]
        t_steps: usize,
        /// Comma-separated excess-noise values (SNU).
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.02")]
        eps: Vec<f64>,
        /// Thermal noise (SNU); defaults to the front end's configured value.
        #[arg(long)]
        eps_thermal: Option<f64>,
    },
    /// Run sessions over a grid of fiber lengths.
    Sweep {
        /// Comma-separated fiber lengths in km.
        #[arg(long, value_delimiter = ',', default_value = "15,25,40,55,65")]
        lengths: Vec<f64>,
    },
    /// Welch periodogram of a capture (both branches).
    Spectrum {
        /// Read `<dir>/<stem>_{x,y}.i16` instead of simulating.
        #[arg(long, requires = "stem")]
        capture: Option<PathBuf>,
        #[arg(long)]
        stem: Option<String>,
        #[arg(long, value_enum, default_value_t = Kind::Signal)]
        kind: Kind,
        #[arg(long, default_value_t = 65536)]
        nperseg: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => 2,
        Error::Json(j) if j.is_io() => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<SessionConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            SessionConfig::from_json(&text)?
        }
        None => SessionConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.scrambled {
        cfg.scrambled = true;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), Error> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Simulate { index, write_capture: wc, calibration } => {
            let cal: SessionCalibration = match calibration {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => calibrate_session(&cfg)?,
            };
            if *wc {
                let sim = simulate_snapshot(&cfg, *index)?;
                write_capture(&sim.capture, &out, &format!("snapshot_{index:04}"))?;
            }
            let r = run_snapshot(&cfg, *index, &cal)?;
            let results = vec![r];
            let summary = summarize(&cfg, &results);
            let so = SessionOutput { schema_version: SCHEMA_VERSION, config: cfg.clone(), calibration: cal, results, summary };
            let path = out.join(format!("snapshot_{index:04}.{}", ext(cli.format)));
            export(&so, cli.format.into(), &path)?;
            write_results_csv(&so.results, std::io::stdout())?;
        }
        Command::Session => {
            let so = run_session(&cfg)?;
            export(&so, cli.format.into(), &out.join(format!("session.{}", ext(cli.format))))?;
            write_json(&out.join("summary.json"), &so.summary)?;
            let s = &so.summary;
            println!(
                "snapshots {} failures {} secure {} ({:.1}%) mean T {:?} mean eps {:?} K at means {:?}",
                s.snapshots,
                s.failures,
                s.secure_count,
                100.0 * s.secure_fraction,
                s.mean_t_hat_rec,
                s.mean_eps_hat,
                s.k_at_mean
            );
        }
        Command::Calibrate { captures, shot, thermal } => {
            let cal = match (captures, shot, thermal) {
                (Some(dir), Some(s), Some(t)) => {
                    let [x, y] = calibrate(&read_capture(dir, s)?, &read_capture(dir, t)?, &cfg.dsp, cfg.channel.f_s)?;
                    SessionCalibration { x, y, points_per_branch: 0 }
                }
                _ => calibrate_session(&cfg)?,
            };
            write_json(&out.join("calibration.json"), &cal)?;
            println!("{}", serde_json::to_string_pretty(&cal)?);
        }
        Command::Keyrate { t_min, t_max, t_steps, eps, eps_thermal } => {
            let eth = eps_thermal.unwrap_or(cfg.frontend.eps_thermal());
            let steps = (*t_steps).max(1);
            let mut rows = Vec::new();
            for &e in eps {
                for i in 0..steps {
                    let t = if steps == 1 { *t_min } else { t_min + (t_max - t_min) * i as f64 / (steps - 1) as f64 };
                    let ib = mutual_info_raw(t, e, eth, &cfg.security)?;
                    let chi = holevo_bound_raw(t, e, eth, &cfg.security)?;
                    let (k, secure) = key_rate(ib, chi, &cfg.security);
                    rows.push(serde_json::json!({
                        "T": t, "eps": e, "eps_thermal": eth, "I_BA": ib, "chi_BE": chi, "K": k, "secure": secure
                    }));
                }
            }
            let path = out.join(format!("keyrate.{}", ext(cli.format)));
            match cli.format {
                Format::Json => write_json(&path, &rows)?,
                Format::Csv => {
                    std::fs::create_dir_all(&out)?;
                    let mut w = csv::Writer::from_path(&path)?;
                    w.write_record(["T", "eps", "eps_thermal", "I_BA", "chi_BE", "K", "secure"])?;
                    for r in &rows {
                        let f = |k: &str| r[k].to_string();
                        w.write_record([f("T"), f("eps"), f("eps_thermal"), f("I_BA"), f("chi_BE"), f("K"), f("secure")])?;
                    }
                    w.flush()?;
                }
            }
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Sweep { lengths } => {
            let (cal, points, all) = run_sweep(&cfg, lengths)?;
            write_json(&out.join("sweep.json"), &serde_json::json!({ "calibration": cal, "points": points }))?;
            for (p, res) in points.iter().zip(all) {
                let mut c = cfg.clone();
                c.channel.length_km = p.length_km;
                let summary = summarize(&c, &res);
                let so = SessionOutput { schema_version: SCHEMA_VERSION, config: c, calibration: cal, results: res, summary };
                export(&so, cli.format.into(), &out.join(format!("sweep_{:.1}km.{}", p.length_km, ext(cli.format))))?;
                println!("{:.1} km  T {:.4}  T_hat {:?}  eps {:?}  K {:?}", p.length_km, p.configured_transmission, p.mean_t_hat, p.mean_eps_hat, p.k);
            }
        }
        Command::Spectrum { capture, stem, kind, nperseg } => {
            let cap = match (capture, stem) {
                (Some(dir), Some(s)) => read_capture(dir, s)?,
                _ => match kind {
                    Kind::Signal => simulate_snapshot(&cfg, 0)?.capture,
                    Kind::Shot => capture_noise(&cfg.frontend, CaptureKind::ShotOnly, cfg.snapshot_duration, cfg.seed)?,
                    Kind::Thermal => capture_noise(&cfg.frontend, CaptureKind::ThermalOnly, cfg.snapshot_duration, cfg.seed)?,
                },
            };
            std::fs::create_dir_all(&out)?;
            let path = out.join("spectrum.csv");
            spectrum_dump(&cap, *nperseg, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
