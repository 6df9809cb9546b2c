//! Pump and seed spectral envelopes.
//!
//! A [`SpectralAmplitude`] is a complex field envelope sampled at angular
//! frequency offsets (rad/ps) from its center wavelength. Constructors
//! return envelopes normalized so that `∫|α(ω)|² dω = 1` under the
//! trapezoid rule on their own grid.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{nm_to_omega, pm_to_omega_width};

#[derive(Debug, Error, PartialEq)]
pub enum PumpError {
    #[error("invalid pump parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("frequency grid must be strictly increasing with at least 2 points")]
    Grid,
    #[error(
        "grid covers [{min:.4e}, {max:.4e}] rad/ps but needs at least ±{needed:.4e} (3 spectral FWHM)"
    )]
    Coverage { min: f64, max: f64, needed: f64 },
    #[error(
        "cw line is unresolved: {samples} grid samples inside one line FWHM, need 8; \
         use the two-scale banded purity path (schmidt::purity_banded_cw) instead"
    )]
    Unresolved { samples: usize },
    #[error("band-pass filter does not overlap the spectrum")]
    EmptySpectrum,
    #[error("operation expects a {expected} pump")]
    WrongKind { expected: &'static str },
}

fn param(name: &'static str, reason: impl Into<String>) -> PumpError {
    PumpError::Parameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormTag {
    UnitIntegral,
    Unnormalized,
}

/// Trapezoid weights for a strictly increasing grid.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// `n` equally spaced offsets in `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, n: usize) -> Vec<f64> {
    let step = 2.0 * half_width / (n - 1) as f64;
    (0..n).map(|i| -half_width + step * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAmplitude {
    pub center_nm: f64,
    /// Angular frequency offsets from `center_nm`, rad/ps, strictly increasing.
    pub offsets: Vec<f64>,
    pub values: Vec<Complex64>,
    pub norm: NormTag,
    /// Set when the offsets are equally spaced, enabling O(1) lookup.
    #[serde(skip)]
    uniform_step: Option<f64>,
}

impl SpectralAmplitude {
    pub fn new(center_nm: f64, offsets: Vec<f64>, values: Vec<Complex64>) -> Result<Self, PumpError> {
        check_grid(&offsets)?;
        if values.len() != offsets.len() {
            return Err(param("values", "length differs from offsets"));
        }
        let uniform_step = detect_uniform(&offsets);
        Ok(Self {
            center_nm,
            offsets,
            values,
            norm: NormTag::Unnormalized,
            uniform_step,
        })
    }

    pub fn center_omega(&self) -> f64 {
        nm_to_omega(self.center_nm)
    }

    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `∫|α|² dω` by the trapezoid rule.
    pub fn power_integral(&self) -> f64 {
        trapezoid_weights(&self.offsets)
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.norm_sqr())
            .sum()
    }

    pub fn normalized(mut self) -> Result<Self, PumpError> {
        let p = self.power_integral();
        if !(p > 0.0) || !p.is_finite() {
            return Err(PumpError::EmptySpectrum);
        }
        let s = 1.0 / p.sqrt();
        for v in &mut self.values {
            *v *= s;
        }
        self.norm = NormTag::UnitIntegral;
        Ok(self)
    }

    /// Linear interpolation of the amplitude at offset `w`; zero outside the
    /// sampled support.
    #[inline]
    pub fn sample(&self, w: f64) -> Complex64 {
        let n = self.offsets.len();
        let first = self.offsets[0];
        let last = self.offsets[n - 1];
        if w < first || w > last {
            return Complex64::new(0.0, 0.0);
        }
        let (k, frac) = match self.uniform_step {
            Some(h) => {
                let t = (w - first) / h;
                let k = (t.floor() as usize).min(n - 1);
                (k, t - k as f64)
            }
            None => {
                let k = self.offsets.partition_point(|&x| x <= w).saturating_sub(1);
                let k = k.min(n - 1);
                let frac = if k + 1 < n {
                    (w - self.offsets[k]) / (self.offsets[k + 1] - self.offsets[k])
                } else {
                    0.0
                };
                (k, frac)
            }
        };
        if k + 1 >= n {
            return self.values[n - 1];
        }
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Power-spectrum FWHM measured from the samples (rad/ps), linearly
    /// interpolating the half-maximum crossings.
    pub fn power_fwhm(&self) -> f64 {
        let p = self.power();
        let (imax, &pmax) = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        let half = 0.5 * pmax;
        let x = &self.offsets;
        let mut left = x[0];
        for i in (0..imax).rev() {
            if p[i] < half {
                left = x[i] + (half - p[i]) / (p[i + 1] - p[i]) * (x[i + 1] - x[i]);
                break;
            }
        }
        let mut right = x[x.len() - 1];
        for i in imax + 1..p.len() {
            if p[i] < half {
                right = x[i - 1] + (p[i - 1] - half) / (p[i - 1] - p[i]) * (x[i] - x[i - 1]);
                break;
            }
        }
        right - left
    }

    /// Power-weighted mean offset, rad/ps.
    pub fn centroid(&self) -> f64 {
        let w = trapezoid_weights(&self.offsets);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((wi, x), v) in w.iter().zip(&self.offsets).zip(&self.values) {
            let p = wi * v.norm_sqr();
            num += p * x;
            den += p;
        }
        num / den
    }
}

fn check_grid(x: &[f64]) -> Result<(), PumpError> {
    if x.len() < 2 || x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PumpError::Grid);
    }
    Ok(())
}

fn detect_uniform(x: &[f64]) -> Option<f64> {
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let uniform = x
        .iter()
        .enumerate()
        .all(|(i, &v)| (v - (x[0] + h * i as f64)).abs() <= 1e-9 * h);
    uniform.then_some(h)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CwLineshape {
    /// Exponentially decaying field correlation.
    #[default]
    Lorentzian,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PumpSpec {
    PulsedGaussian {
        lambda_p_nm: f64,
        /// FWHM of the power spectrum, pm.
        spectral_fwhm_pm: f64,
        /// Quoted pulse duration; informational only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pulse_duration_ps: Option<f64>,
        pulse_energy_pj: f64,
        repetition_rate_mhz: f64,
        /// Quadratic spectral phase `φ(ω) = chirp·ω²/2`, ps².
        #[serde(default)]
        chirp_ps2: f64,
    },
    CwLine {
        lambda_p_nm: f64,
        coherence_time_us: f64,
        power_uw: f64,
        #[serde(default)]
        lineshape: CwLineshape,
    },
}

impl PumpSpec {
    pub fn lambda_p_nm(&self) -> f64 {
        match self {
            PumpSpec::PulsedGaussian { lambda_p_nm, .. } | PumpSpec::CwLine { lambda_p_nm, .. } => {
                *lambda_p_nm
            }
        }
    }

    pub fn is_cw(&self) -> bool {
        matches!(self, PumpSpec::CwLine { .. })
    }

    pub fn validate(&self) -> Result<(), PumpError> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(param(name, format!("{v} must be finite and positive")))
            }
        };
        match *self {
            PumpSpec::PulsedGaussian {
                lambda_p_nm,
                spectral_fwhm_pm,
                pulse_duration_ps,
                pulse_energy_pj,
                repetition_rate_mhz,
                chirp_ps2,
            } => {
                positive("lambda_p_nm", lambda_p_nm)?;
                positive("spectral_fwhm_pm", spectral_fwhm_pm)?;
                positive("pulse_energy_pj", pulse_energy_pj)?;
                positive("repetition_rate_mhz", repetition_rate_mhz)?;
                if let Some(d) = pulse_duration_ps {
                    positive("pulse_duration_ps", d)?;
                }
                if !chirp_ps2.is_finite() {
                    return Err(param("chirp_ps2", "must be finite"));
                }
            }
            PumpSpec::CwLine {
                lambda_p_nm,
                coherence_time_us,
                power_uw,
                ..
            } => {
                positive("lambda_p_nm", lambda_p_nm)?;
                positive("coherence_time_us", coherence_time_us)?;
                positive("power_uw", power_uw)?;
            }
        }
        Ok(())
    }

    /// FWHM of the power spectrum in angular frequency, rad/ps.
    ///
    /// For a cw line this is `2/τ_c`, i.e. `Δν = 1/(π τ_c)`.
    pub fn power_fwhm_omega(&self) -> f64 {
        match *self {
            PumpSpec::PulsedGaussian {
                lambda_p_nm,
                spectral_fwhm_pm,
                ..
            } => pm_to_omega_width(spectral_fwhm_pm, lambda_p_nm),
            PumpSpec::CwLine {
                coherence_time_us, ..
            } => 2.0 / (coherence_time_us * 1e6),
        }
    }

    /// Copy of a cw spec with the line FWHM scaled by `factor`.
    pub fn with_scaled_linewidth(&self, factor: f64) -> Self {
        match self.clone() {
            PumpSpec::CwLine {
                lambda_p_nm,
                coherence_time_us,
                power_uw,
                lineshape,
            } => PumpSpec::CwLine {
                lambda_p_nm,
                coherence_time_us: coherence_time_us / factor,
                power_uw,
                lineshape,
            },
            PumpSpec::PulsedGaussian {
                lambda_p_nm,
                spectral_fwhm_pm,
                pulse_duration_ps,
                pulse_energy_pj,
                repetition_rate_mhz,
                chirp_ps2,
            } => PumpSpec::PulsedGaussian {
                lambda_p_nm,
                spectral_fwhm_pm: spectral_fwhm_pm * factor,
                pulse_duration_ps,
                pulse_energy_pj,
                repetition_rate_mhz,
                chirp_ps2,
            },
        }
    }
}

/// Unit-integral Gaussian amplitude with the requested power-spectrum FWHM.
pub fn gaussian_pulse_spectrum(spec: &PumpSpec, grid: &[f64]) -> Result<SpectralAmplitude, PumpError> {
    let PumpSpec::PulsedGaussian {
        lambda_p_nm,
        chirp_ps2,
        ..
    } = *spec
    else {
        return Err(PumpError::WrongKind { expected: "pulsed" });
    };
    spec.validate()?;
    check_grid(grid)?;
    let fwhm = spec.power_fwhm_omega();
    let needed = 3.0 * fwhm;
    let (min, max) = (grid[0], grid[grid.len() - 1]);
    if min > -needed || max < needed {
        return Err(PumpError::Coverage { min, max, needed });
    }
    // |α|² = exp(-4 ln2 ω²/Δ²)
    let values = grid
        .iter()
        .map(|&w| {
            let mag = (-2.0 * LN_2 * w * w / (fwhm * fwhm)).exp();
            Complex64::from_polar(mag, 0.5 * chirp_ps2 * w * w)
        })
        .collect();
    SpectralAmplitude::new(lambda_p_nm, grid.to_vec(), values)?.normalized()
}

/// Unit-integral cw laser line with power FWHM `Δν = 1/(π τ_c)`.
pub fn cw_line_spectrum(spec: &PumpSpec, grid: &[f64]) -> Result<SpectralAmplitude, PumpError> {
    let PumpSpec::CwLine {
        lambda_p_nm,
        lineshape,
        ..
    } = *spec
    else {
        return Err(PumpError::WrongKind { expected: "cw" });
    };
    spec.validate()?;
    check_grid(grid)?;
    let fwhm = spec.power_fwhm_omega();
    let samples = grid.iter().filter(|w| w.abs() <= 0.5 * fwhm).count();
    if samples < 8 {
        return Err(PumpError::Unresolved { samples });
    }
    let half = 0.5 * fwhm;
    let values = grid
        .iter()
        .map(|&w| match lineshape {
            CwLineshape::Lorentzian => Complex64::new(half, 0.0) / Complex64::new(half, w),
            CwLineshape::Gaussian => Complex64::new((-2.0 * LN_2 * w * w / (fwhm * fwhm)).exp(), 0.0),
        })
        .collect();
    SpectralAmplitude::new(lambda_p_nm, grid.to_vec(), values)?.normalized()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterShape {
    #[default]
    Gaussian,
    SuperGaussian4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPass {
    pub center_nm: f64,
    /// Power-transmission FWHM, pm.
    pub fwhm_pm: f64,
    #[serde(default)]
    pub shape: FilterShape,
}

impl BandPass {
    /// Amplitude transmission at angular offset `dw` from the filter center.
    pub fn amplitude(&self, dw: f64) -> f64 {
        let f = pm_to_omega_width(self.fwhm_pm, self.center_nm);
        let x = 2.0 * dw / f;
        let exponent = match self.shape {
            FilterShape::Gaussian => x * x,
            FilterShape::SuperGaussian4 => x.powi(4),
        };
        // |H|² = 2^(-x^p)
        (-0.5 * LN_2 * exponent).exp()
    }
}

/// Pointwise filter product, renormalized to unit integral.
pub fn apply_bandpass(alpha: &SpectralAmplitude, bpf: &BandPass) -> Result<SpectralAmplitude, PumpError> {
    if !(bpf.fwhm_pm > 0.0) || !bpf.center_nm.is_finite() {
        return Err(param("bandpass", "fwhm must be positive and center finite"));
    }
    let shift = nm_to_omega(bpf.center_nm) - alpha.center_omega();
    let values: Vec<Complex64> = alpha
        .offsets
        .iter()
        .zip(&alpha.values)
        .map(|(&w, &v)| v * bpf.amplitude(w - shift))
        .collect();
    let peak_in = alpha.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let peak_out = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak_out > 1e-12 * peak_in) {
        return Err(PumpError::EmptySpectrum);
    }
    SpectralAmplitude::new(alpha.center_nm, alpha.offsets.clone(), values)?.normalized()
}

/// Time–bandwidth product of a pulse description, for reporting.
pub fn time_bandwidth_product(spec: &PumpSpec) -> Option<f64> {
    match *spec {
        PumpSpec::PulsedGaussian {
            pulse_duration_ps: Some(t),
            ..
        } => Some(spec.power_fwhm_omega() / (2.0 * PI) * t),
        _ => None,
    }
}
