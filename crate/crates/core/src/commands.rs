//! Command implementations behind the `ringjsa` binary.
//!
//! Each command writes its files into the output directory and returns the
//! summary lines destined for standard output. Exit codes: 2 I/O or parse,
//! 3 window or envelope, 4 configuration, 5 instrument, 6 insufficient
//! data, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use crate::config::{published_defaults, ConfigError, DeviceConfig, PumpKind, TripletSource};
use crate::instrument::{resolution_sweep, simulate_scan, InstrumentError, ScanPlan};
use crate::io;
use crate::jsa::{build_grid, compute_jsa_with, jsd, pump_envelope, JsaError, JsaMatrix, JsaOptions, Triplet};
use crate::pump::{apply_bandpass, PumpSpec};
use crate::resonator::{Resonance, Role};
use crate::schmidt::{k_bound, purity_banded_cw, schmidt_decompose, SchmidtError};
use crate::specfit::{
    dip_windows, fit_envelope, fit_lorentzian_dip, fit_power_law, parse_power_series, parse_spectrum, DriveMode,
    FitResult, SpecfitError,
};
use crate::units::pm_to_omega_width;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("cannot open {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error in {path}: {source}")]
    Parse { path: PathBuf, source: SpecfitError },
    #[error("{0}")]
    Window(SpecfitError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("instrument: {0}")]
    Instrument(#[from] InstrumentError),
    #[error("{0}")]
    Data(SpecfitError),
    #[error(transparent)]
    Jsa(#[from] JsaError),
    #[error(transparent)]
    Schmidt(#[from] SchmidtError),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Io { .. } | CommandError::Parse { .. } => 2,
            CommandError::Window(_) => 3,
            CommandError::Config(_) => 4,
            CommandError::Instrument(_) => 5,
            CommandError::Data(_) => 6,
            CommandError::Jsa(_) | CommandError::Schmidt(_) => 1,
        }
    }

    fn from_specfit(path: &Path, e: SpecfitError) -> Self {
        match e {
            SpecfitError::Parse { .. } => CommandError::Parse {
                path: path.to_path_buf(),
                source: e,
            },
            SpecfitError::Insufficient(_) => CommandError::Data(e),
            _ => CommandError::Window(e),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CommandError {
    CommandError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<fs::File, CommandError> {
    fs::File::open(path).map_err(|e| io_err(path, e))
}

/// Configuration from a file, or the published parameter set.
pub fn load_config(
    path: Option<&Path>,
    paper_defaults_flag: bool,
    pump: Option<PumpKind>,
    seed: Option<u64>,
) -> Result<DeviceConfig, CommandError> {
    let mut cfg = match (path, paper_defaults_flag) {
        (Some(p), false) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let cfg = DeviceConfig::from_json(&text)?;
            if let Some(kind) = pump {
                let actual = if cfg.pump.is_cw() { PumpKind::Cw } else { PumpKind::Pulsed };
                if actual != kind {
                    return Err(ConfigError {
                        path: "pump.kind".into(),
                        reason: format!("--pump {kind:?} disagrees with the configuration file"),
                    }
                    .into());
                }
            }
            cfg
        }
        (None, true) => published_defaults(pump.unwrap_or(PumpKind::Pulsed)),
        (Some(_), true) => {
            return Err(ConfigError {
                path: "<root>".into(),
                reason: "--config and --paper-defaults are mutually exclusive".into(),
            }
            .into())
        }
        (None, false) => {
            return Err(ConfigError {
                path: "<root>".into(),
                reason: "no configuration: pass --config <path> or --paper-defaults".into(),
            }
            .into())
        }
    };
    if seed.is_some() {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), CommandError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn sidecar(path: &Path, value: &serde_json::Value) -> Result<(), CommandError> {
    io::write_sidecar(path, value).map_err(|e| io_err(path, e))
}

/// Spectrum fits: envelope plus one Lorentzian per dip.
pub struct SpectrumFits {
    pub envelope: crate::specfit::EnvelopeFit,
    pub dips: Vec<FitResult>,
}

pub fn fit_spectrum_file(path: &Path) -> Result<SpectrumFits, CommandError> {
    let spec = parse_spectrum(open(path)?).map_err(|e| CommandError::from_specfit(path, e))?;
    let envelope = fit_envelope(&spec).map_err(|e| CommandError::from_specfit(path, e))?;
    let windows = dip_windows(&envelope.flattened);
    let dips = windows
        .iter()
        .map(|&w| fit_lorentzian_dip(&envelope.flattened, w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CommandError::from_specfit(path, e))?;
    Ok(SpectrumFits { envelope, dips })
}

pub fn cmd_fit_spectrum(spectrum: &Path, out: &Path) -> Result<Vec<String>, CommandError> {
    let fits = fit_spectrum_file(spectrum)?;
    ensure_dir(out)?;
    let b = &fits.envelope.baseline;
    sidecar(
        &out.join("envelope.json"),
        &json!({
            "kind": "envelope",
            "source": spectrum.display().to_string(),
            "baseline": b,
            "bell_center_nm": b.bell_center_nm(),
            "bell_fwhm_nm": b.bell_fwhm_nm(),
            "iterations": fits.envelope.iterations,
            "envelope_points": fits.envelope.envelope_points,
            "resolution_pm": fits.envelope.flattened.resolution_pm,
        }),
    )?;
    let mut lines = Vec::new();
    for (k, f) in fits.dips.iter().enumerate() {
        sidecar(&out.join(format!("dip_{k:02}.json")), &json!({ "kind": "dip-fit", "index": k, "fit": f }))?;
        lines.push(format!(
            "dip {k}: lambda0={:.4} nm Q={:.0}±{:.0} E={:.3} regime={}",
            f.lambda0_nm,
            f.q,
            f.q_sigma,
            f.extinction,
            serde_json::to_value(f.regime).unwrap().as_str().unwrap_or("?")
        ));
    }
    Ok(lines)
}

/// Resolve the triplet, fitting a spectrum when the config says so.
pub fn resolve_triplet(cfg: &DeviceConfig) -> Result<Triplet, CommandError> {
    if let Some(t) = cfg.comb_triplet()? {
        return Ok(t);
    }
    let TripletSource::FitFromSpectrum { path } = &cfg.triplet else {
        unreachable!("comb and explicit sources resolve in config");
    };
    let fits = fit_spectrum_file(path)?;
    let lref = cfg.dispersion.lambda_ref_nm;
    let mut dips = fits.dips;
    dips.sort_by(|a, b| a.lambda0_nm.total_cmp(&b.lambda0_nm));
    let ip = (0..dips.len())
        .min_by(|&a, &b| (dips[a].lambda0_nm - lref).abs().total_cmp(&(dips[b].lambda0_nm - lref).abs()))
        .ok_or_else(|| CommandError::Window(SpecfitError::Envelope("no dips".into())))?;
    if ip == 0 || ip + 1 >= dips.len() {
        return Err(ConfigError {
            path: "triplet.path".into(),
            reason: "the dip nearest lambda_ref has no neighbour on both sides".into(),
        }
        .into());
    }
    let f = cfg.geometry.linewidth_broadening;
    let res = |d: &FitResult, role| {
        Resonance::new(d.lambda0_nm, d.q, d.extinction.clamp(0.0, 1.0), role)
            .map(|r| r.broadened(f))
            .map_err(JsaError::from)
    };
    Ok(Triplet::new(
        res(&dips[ip + 1], Role::Signal)?,
        res(&dips[ip], Role::Pump)?,
        res(&dips[ip - 1], Role::Idler)?,
    )?)
}

fn jsa_options(cfg: &DeviceConfig) -> JsaOptions {
    JsaOptions {
        pump_enhancement: cfg.jsa.pump_enhancement,
        pump_points: cfg.jsa.pump_points,
    }
}

fn model_jsa(cfg: &DeviceConfig, triplet: &Triplet, spec: &PumpSpec, points: usize) -> Result<JsaMatrix, CommandError> {
    let grid = build_grid(triplet, cfg.jsa.span_linewidths, points)?;
    let mut alpha = pump_envelope(spec, &grid, cfg.jsa.pump_points)?;
    if let Some(bpf) = &cfg.bandpass {
        alpha = apply_bandpass(&alpha, bpf).map_err(JsaError::from)?;
    }
    Ok(compute_jsa_with(&alpha, triplet, &grid, &jsa_options(cfg))?)
}

/// cw line replaced by a resolvable surrogate of `display_linewidth_pm`.
pub fn display_surrogate(cfg: &DeviceConfig) -> PumpSpec {
    match &cfg.pump {
        PumpSpec::CwLine {
            lambda_p_nm,
            power_uw,
            lineshape,
            ..
        } => PumpSpec::CwLine {
            lambda_p_nm: *lambda_p_nm,
            coherence_time_us: 2.0 / pm_to_omega_width(cfg.jsa.display_linewidth_pm, *lambda_p_nm) * 1e-6,
            power_uw: *power_uw,
            lineshape: *lineshape,
        },
        other => other.clone(),
    }
}

/// The JSA a measurement would see: the model itself for pulsed pumps, the
/// display surrogate for cw.
pub fn measurement_jsa(cfg: &DeviceConfig, triplet: &Triplet) -> Result<(JsaMatrix, bool), CommandError> {
    if cfg.pump.is_cw() {
        Ok((model_jsa(cfg, triplet, &display_surrogate(cfg), cfg.jsa.display_points)?, true))
    } else {
        Ok((model_jsa(cfg, triplet, &cfg.pump, cfg.jsa.points)?, false))
    }
}

fn jsa_meta(cfg: &DeviceConfig, triplet: &Triplet, jsa: &JsaMatrix, display_only: bool, pump: &PumpSpec) -> serde_json::Value {
    json!({
        "kind": "jsa",
        "triplet": triplet,
        "pump": pump,
        "model_pump": cfg.pump,
        "bandpass": cfg.bandpass,
        "norm": jsa.norm,
        "display_only": display_only,
        "energy_mismatch_rad_per_ps": triplet.energy_mismatch(),
        "grid": { "points": jsa.signal.len(), "span_linewidths": cfg.jsa.span_linewidths },
        "axes": "rows follow signal_nm (second header row), columns follow idler_nm (first header row)",
        "metadata": cfg.metadata,
    })
}

pub struct JsaOutcome {
    pub k: f64,
    pub two_scale: bool,
}

pub fn run_jsa(cfg: &DeviceConfig, out: &Path) -> Result<JsaOutcome, CommandError> {
    let triplet = resolve_triplet(cfg)?;
    ensure_dir(out)?;
    let csv = out.join("jsa.csv");
    let (k, two_scale) = if cfg.pump.is_cw() {
        let cw = purity_banded_cw(&triplet, &cfg.pump, &cfg.banded, cfg.jsa.pump_enhancement)?;
        let surrogate = display_surrogate(cfg);
        let display = model_jsa(cfg, &triplet, &surrogate, cfg.jsa.display_points)?;
        io::write_jsa_csv(&csv, &display).map_err(|e| io_err(&csv, e))?;
        let mut meta = jsa_meta(cfg, &triplet, &display, true, &surrogate);
        meta["display_linewidth_pm"] = json!(cfg.jsa.display_linewidth_pm);
        sidecar(&out.join("jsa.json"), &meta)?;
        sidecar(
            &out.join("schmidt.json"),
            &json!({
                "kind": "schmidt",
                "method": "banded-two-scale",
                "k": cw.k,
                "purity": cw.purity,
                "linewidth_ratio": cw.linewidth_ratio,
                "quadrature": cfg.banded,
            }),
        )?;
        (cw.k, true)
    } else {
        let jsa = model_jsa(cfg, &triplet, &cfg.pump, cfg.jsa.points)?;
        let s = schmidt_decompose(&jsa)?;
        io::write_jsa_csv(&csv, &jsa).map_err(|e| io_err(&csv, e))?;
        sidecar(&out.join("jsa.json"), &jsa_meta(cfg, &triplet, &jsa, false, &cfg.pump))?;
        let mut summary = io::schmidt_summary(&s, Some(&jsa));
        summary["kind"] = json!("schmidt");
        summary["method"] = json!("svd");
        summary["k_bound_model"] = json!(k_bound(&jsd(&jsa).density)?);
        sidecar(&out.join("schmidt.json"), &summary)?;
        (s.k, false)
    };
    let script = out.join("plot_jsa.py");
    io::write_plot_script(&script, "jsa.csv", "Joint spectral density", true).map_err(|e| io_err(&script, e))?;
    Ok(JsaOutcome { k, two_scale })
}

pub fn cmd_jsa(cfg: &DeviceConfig, out: &Path) -> Result<Vec<String>, CommandError> {
    let r = run_jsa(cfg, out)?;
    Ok(vec![format!("K={}", format_k(r.k))])
}

fn format_k(k: f64) -> String {
    if k < 100.0 {
        format!("{k:.4}")
    } else {
        format!("{k:.1}")
    }
}

fn scan_plan(cfg: &DeviceConfig, triplet: &Triplet) -> Result<ScanPlan, CommandError> {
    let s = &cfg.scan;
    Ok(ScanPlan::centered(
        triplet,
        s.half_span_pm,
        s.seed_step_pm,
        s.fp_points,
        s.seed_accuracy_pm,
        s.noise.clone(),
    )?)
}

pub struct MeasureOutcome {
    pub k_bound: f64,
    pub k_bound_model: f64,
}

pub fn run_measure(cfg: &DeviceConfig, out: &Path) -> Result<MeasureOutcome, CommandError> {
    let triplet = resolve_triplet(cfg)?;
    let (jsa, display_only) = measurement_jsa(cfg, &triplet)?;
    let plan = scan_plan(cfg, &triplet)?;
    let seed = cfg.rng_seed.unwrap_or(0);
    let m = simulate_scan(&jsa, &plan, &cfg.fp, seed)?;
    let kb = m.k_bound()?;
    let kb_model = k_bound(&jsd(&jsa).density)?;
    ensure_dir(out)?;
    let csv = out.join("measured.csv");
    io::write_measured_csv(&csv, &m).map_err(|e| io_err(&csv, e))?;
    sidecar(
        &out.join("measured.json"),
        &json!({
            "kind": "measured-jsd",
            "noise": m.meta,
            "fp": cfg.fp,
            "fp_fsr_pm": cfg.fp.fsr_pm(),
            "scan": cfg.scan,
            "triplet": triplet,
            "model_display_only": display_only,
            "axes": "rows follow seed_nm (second header row), columns follow idler_nm (first header row)",
        }),
    )?;
    sidecar(
        &out.join("kbound.json"),
        &json!({ "kind": "k-bound", "k_bound": kb, "k_bound_model_jsd": kb_model }),
    )?;
    let script = out.join("plot_measured.py");
    io::write_plot_script(&script, "measured.csv", "Measured joint spectral density", false)
        .map_err(|e| io_err(&script, e))?;
    Ok(MeasureOutcome {
        k_bound: kb,
        k_bound_model: kb_model,
    })
}

pub fn cmd_measure(cfg: &DeviceConfig, out: &Path) -> Result<Vec<String>, CommandError> {
    let r = run_measure(cfg, out)?;
    Ok(vec![format!("K_bound={:.4}", r.k_bound)])
}

/// Drive mode from the series' JSON sidecar (`mode` key), if present.
fn sidecar_mode(series: &Path) -> Result<Option<DriveMode>, CommandError> {
    let meta = series.with_extension("json");
    if !meta.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&meta).map_err(|e| io_err(&meta, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CommandError::Io {
        path: meta.clone(),
        message: e.to_string(),
    })?;
    match v.get("mode") {
        None => Ok(None),
        Some(m) => serde_json::from_value(m.clone()).map(Some).map_err(|e| {
            ConfigError {
                path: "mode".into(),
                reason: e.to_string(),
            }
            .into()
        }),
    }
}

pub fn cmd_scaling(series: &Path, mode: Option<DriveMode>, out: &Path) -> Result<Vec<String>, CommandError> {
    let file = open(series)?;
    let mode = match sidecar_mode(series)? {
        Some(m) => m,
        None => mode.unwrap_or(DriveMode::Pulsed),
    };
    let data = parse_power_series(file, mode).map_err(|e| CommandError::from_specfit(series, e))?;
    let fit = fit_power_law(&data).map_err(|e| CommandError::from_specfit(series, e))?;
    ensure_dir(out)?;
    sidecar(
        &out.join("scaling.json"),
        &json!({ "kind": "power-law", "mode": mode, "points": data.drive.len(), "fit": fit }),
    )?;
    let sat = fit.saturation_index.map_or("none".to_string(), |i| i.to_string());
    Ok(vec![format!(
        "exponent={:.4} sigma={:.4} saturation_index={sat} class={}",
        fit.exponent,
        fit.exponent_sigma,
        serde_json::to_value(fit.class).unwrap().as_str().unwrap_or("?")
    )])
}

pub fn cmd_sweep_resolution(cfg: &DeviceConfig, fwhms_pm: &[f64], out: &Path) -> Result<Vec<String>, CommandError> {
    let triplet = resolve_triplet(cfg)?;
    let (jsa, _) = measurement_jsa(cfg, &triplet)?;
    let plan = scan_plan(cfg, &triplet)?;
    let sweep = resolution_sweep(&jsa, fwhms_pm, &plan, &cfg.fp, cfg.rng_seed.unwrap_or(0))?;
    ensure_dir(out)?;
    let csv = out.join("sweep.csv");
    let mut text = String::from("fwhm_pm,k_bound\n");
    for p in &sweep {
        text.push_str(&format!("{:.6},{:.10e}\n", p.fwhm_pm, p.k_bound));
    }
    fs::write(&csv, text).map_err(|e| io_err(&csv, e))?;
    sidecar(&out.join("sweep.json"), &json!({ "kind": "resolution-sweep", "points": sweep }))?;
    Ok(sweep
        .iter()
        .map(|p| format!("fwhm_pm={} K_bound={:.4}", p.fwhm_pm, p.k_bound))
        .collect())
}
