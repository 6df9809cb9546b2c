//! Device and experiment configuration document.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::{FpFilter, NoiseModel};
use crate::jsa::{JsaError, Triplet};
use crate::pump::{BandPass, CwLineshape, PumpSpec};
use crate::resonator::{
    resonance_comb, CouplingRegime, DispersionParams, GvdTerm, Resonance, ResonatorError, RingGeometry, Role,
};
use crate::schmidt::BandedQuadrature;

#[derive(Debug, Error, PartialEq)]
#[error("config field `{path}`: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

fn field(path: &str, reason: impl ToString) -> ConfigError {
    ConfigError {
        path: path.into(),
        reason: reason.to_string(),
    }
}

/// Where the resonance triplet comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TripletSource {
    /// Adjacent comb lines around `lambda_ref`, all with the same Q.
    Comb {
        q: f64,
        #[serde(default)]
        extinction: f64,
    },
    Explicit {
        signal: Resonance,
        pump: Resonance,
        idler: Resonance,
    },
    /// Fit the three dips nearest `lambda_ref` in a measured spectrum.
    FitFromSpectrum { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JsaSettings {
    pub span_linewidths: f64,
    pub points: usize,
    pub pump_points: usize,
    pub pump_enhancement: bool,
    /// Display grid for cw runs whose line is unresolvable.
    pub display_points: usize,
    pub display_linewidth_pm: f64,
}

impl Default for JsaSettings {
    fn default() -> Self {
        Self {
            span_linewidths: 5.0,
            points: 512,
            pump_points: 256,
            pump_enhancement: true,
            display_points: 1024,
            display_linewidth_pm: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub half_span_pm: f64,
    pub seed_step_pm: f64,
    pub seed_accuracy_pm: f64,
    pub fp_points: usize,
    #[serde(default)]
    pub noise: NoiseModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub geometry: RingGeometry,
    pub dispersion: DispersionParams,
    pub triplet: TripletSource,
    pub pump: PumpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandpass: Option<BandPass>,
    pub fp: FpFilter,
    pub scan: ScanSettings,
    #[serde(default)]
    pub jsa: JsaSettings,
    #[serde(default)]
    pub banded: BandedQuadrature,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    /// Free-form experiment notes carried into sidecars.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metadata: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpKind {
    Pulsed,
    Cw,
}

impl DeviceConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field(if path == "." { "<root>" } else { &path }, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.validate().map_err(|e| field("geometry", e))?;
        self.dispersion.validate().map_err(|e| field("dispersion", e))?;
        match &self.triplet {
            TripletSource::Comb { q, extinction } => {
                if !(*q > 0.0) {
                    return Err(field("triplet.q", "must be positive"));
                }
                if !(0.0..=1.0).contains(extinction) {
                    return Err(field("triplet.extinction", "must lie in [0, 1]"));
                }
            }
            TripletSource::Explicit { signal, pump, idler } => {
                Triplet::new(signal.clone(), pump.clone(), idler.clone()).map_err(|e| field("triplet", e))?;
            }
            TripletSource::FitFromSpectrum { path } => {
                if path.as_os_str().is_empty() {
                    return Err(field("triplet.path", "empty path"));
                }
            }
        }
        self.pump.validate().map_err(|e| field("pump", e))?;
        if let Some(b) = &self.bandpass {
            if !(b.fwhm_pm > 0.0) {
                return Err(field("bandpass.fwhm_pm", "must be positive"));
            }
        }
        let fp = &self.fp;
        if !(fp.reflectivity > 0.0 && fp.reflectivity < 1.0) {
            return Err(field("fp.reflectivity", "must lie in (0, 1)"));
        }
        if !(fp.fwhm_pm > 0.0) || !fp.fwhm_pm.is_finite() {
            return Err(field("fp.fwhm_pm", "must be positive"));
        }
        if !(fp.jitter_rms_pm >= 0.0) || !fp.jitter_rms_pm.is_finite() {
            return Err(field("fp.jitter_rms_pm", "must be finite and non-negative"));
        }
        fp.validate().map_err(|e| field("fp", e))?;
        let s = &self.scan;
        if !(s.half_span_pm > 0.0) {
            return Err(field("scan.half_span_pm", "must be positive"));
        }
        if !(s.seed_step_pm > 0.0) {
            return Err(field("scan.seed_step_pm", "must be positive"));
        }
        if !(s.seed_accuracy_pm >= 0.0) || s.seed_step_pm < s.seed_accuracy_pm {
            return Err(field("scan.seed_accuracy_pm", "must be non-negative and not exceed the seed step"));
        }
        if s.fp_points < 2 {
            return Err(field("scan.fp_points", "need at least 2"));
        }
        if let NoiseModel::ShotRead { gain, read_noise_rms } = s.noise {
            if !(gain > 0.0) {
                return Err(field("scan.noise.gain", "must be positive"));
            }
            if !(read_noise_rms >= 0.0) {
                return Err(field("scan.noise.read_noise_rms", "must be non-negative"));
            }
        }
        let needs_seed = s.noise != NoiseModel::Noiseless || s.seed_accuracy_pm > 0.0 || self.fp.jitter_rms_pm > 0.0;
        if needs_seed && self.rng_seed.is_none() {
            return Err(field("rng_seed", "required when noise, seed error or jitter is enabled"));
        }
        let j = &self.jsa;
        if !(j.span_linewidths >= 3.0) {
            return Err(field("jsa.span_linewidths", "must be ≥ 3"));
        }
        for (name, n) in [("jsa.points", j.points), ("jsa.display_points", j.display_points)] {
            if n < 64 || !n.is_power_of_two() {
                return Err(field(name, "must be a power of two ≥ 64"));
            }
        }
        if j.pump_points < 16 {
            return Err(field("jsa.pump_points", "need at least 16"));
        }
        if !(j.display_linewidth_pm > 0.0) {
            return Err(field("jsa.display_linewidth_pm", "must be positive"));
        }
        Ok(())
    }

    /// Resolve the triplet for comb and explicit sources. Spectrum-fitted
    /// triplets are resolved by the command layer.
    pub fn comb_triplet(&self) -> Result<Option<Triplet>, ConfigError> {
        let broaden = |r: Resonance| r.broadened(self.geometry.linewidth_broadening);
        match &self.triplet {
            TripletSource::Comb { q, extinction } => {
                let t = comb_triplet(&self.dispersion, &self.geometry, *q, *extinction)
                    .map_err(|e| field("triplet", e))?;
                Ok(Some(t))
            }
            TripletSource::Explicit { signal, pump, idler } => Triplet::new(
                broaden(signal.clone()),
                broaden(pump.clone()),
                broaden(idler.clone()),
            )
            .map(Some)
            .map_err(|e| field("triplet", e)),
            TripletSource::FitFromSpectrum { .. } => Ok(None),
        }
    }
}

/// Pump on the comb line at `lambda_ref`, signal one line to the red,
/// idler one line to the blue.
pub fn comb_triplet(
    disp: &DispersionParams,
    geom: &RingGeometry,
    q: f64,
    extinction: f64,
) -> Result<Triplet, JsaError> {
    let l = disp.lambda_ref_nm;
    let lines = resonance_comb(disp, geom, (l - 30.0, l + 30.0))?;
    let find = |offset: i64| {
        lines
            .iter()
            .find(|c| c.mode_offset == offset)
            .map(|c| c.lambda_nm)
            .ok_or(ResonatorError::Parameter {
                name: "band",
                reason: format!("comb line {offset} outside ±30 nm of lambda_ref"),
            })
    };
    let f = geom.linewidth_broadening;
    let res = |nm: f64, role| Resonance::new(nm, q, extinction, role).map(|r| r.broadened(f));
    Triplet::new(
        res(find(-1)?, Role::Signal)?,
        res(find(0)?, Role::Pump)?,
        res(find(1)?, Role::Idler)?,
    )
}

/// The published device and experiment parameters.
pub fn published_defaults(kind: PumpKind) -> DeviceConfig {
    let pump = match kind {
        PumpKind::Pulsed => PumpSpec::PulsedGaussian {
            lambda_p_nm: 1552.0,
            spectral_fwhm_pm: 90.0,
            pulse_duration_ps: Some(14.0),
            pulse_energy_pj: 0.8,
            repetition_rate_mhz: 10.0,
            chirp_ps2: 0.0,
        },
        PumpKind::Cw => PumpSpec::CwLine {
            lambda_p_nm: 1552.0,
            coherence_time_us: 1.0,
            power_uw: 80.0,
            lineshape: CwLineshape::Lorentzian,
        },
    };
    DeviceConfig {
        geometry: RingGeometry::new(15.0, CouplingRegime::Critical),
        dispersion: DispersionParams {
            n_eff: 2.54,
            group_velocity: 116.0,
            gvd: GvdTerm::quoted(1.84, "µm²/ps"),
            lambda_ref_nm: 1552.0,
        },
        triplet: TripletSource::Comb {
            q: 40800.0,
            extinction: 0.0,
        },
        pump,
        bandpass: None,
        fp: FpFilter {
            reflectivity: 0.9,
            fwhm_pm: 5.0,
            jitter_rms_pm: 0.5,
            order_window_pm: None,
        },
        scan: ScanSettings {
            half_span_pm: 70.0,
            seed_step_pm: 2.0,
            seed_accuracy_pm: 2.0,
            fp_points: 141,
            noise: NoiseModel::ShotRead {
                gain: 1000.0,
                read_noise_rms: 3.0,
            },
        },
        jsa: JsaSettings::default(),
        banded: BandedQuadrature::default(),
        output_dir: None,
        rng_seed: Some(1),
        metadata: serde_json::json!({ "grating_coupler_loss_db": 5.0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults_round_trip() {
        for kind in [PumpKind::Pulsed, PumpKind::Cw] {
            let cfg = published_defaults(kind);
            cfg.validate().unwrap();
            let back = DeviceConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn comb_triplet_is_energy_matched() {
        let t = published_defaults(PumpKind::Pulsed).comb_triplet().unwrap().unwrap();
        assert!((t.pump.lambda0_nm - 1552.0).abs() < 1e-9);
        assert!(t.signal.lambda0_nm > t.pump.lambda0_nm && t.pump.lambda0_nm > t.idler.lambda0_nm);
        assert!(t.energy_mismatch().abs() < 1e-9);
        assert!((t.signal.lambda0_nm - t.idler.lambda0_nm - 2.0 * 9.89).abs() < 0.1);
    }

    #[test]
    fn errors_name_the_field() {
        let mut v: serde_json::Value = serde_json::from_str(&published_defaults(PumpKind::Cw).to_json()).unwrap();
        v["fp"]["reflectivity"] = serde_json::json!("high");
        let e = DeviceConfig::from_json(&v.to_string()).unwrap_err();
        assert_eq!(e.path, "fp.reflectivity");

        let mut cfg = published_defaults(PumpKind::Pulsed);
        cfg.rng_seed = None;
        assert_eq!(cfg.validate().unwrap_err().path, "rng_seed");
        let mut cfg = published_defaults(PumpKind::Pulsed);
        cfg.jsa.points = 500;
        assert_eq!(cfg.validate().unwrap_err().path, "jsa.points");
        let mut cfg = published_defaults(PumpKind::Pulsed);
        cfg.geometry.radius_um = -1.0;
        assert_eq!(cfg.validate().unwrap_err().path, "geometry");
    }
}
