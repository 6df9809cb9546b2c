//! Discretized joint spectral amplitude of the signal/idler pair.
//!
//! The amplitude on a signal×idler grid is
//!
//! ```text
//! φ(ω_s, ω_i) = N · L_s(ω_s) L_i(ω_i) · C(ω_s + ω_i)
//! C(Ω)        = ∫ α(ω) α(Ω − ω) L_p(ω) L_p(Ω − ω) dω
//! ```
//!
//! where `L_x` are the single-pole resonance factors, `α` is the pump
//! envelope and `C` is evaluated by trapezoid quadrature over the pump's own
//! frequency grid. `N` normalizes `Σ|φ|² Δω_s Δω_i` to one.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pump::{
    cw_line_spectrum, gaussian_pulse_spectrum, symmetric_grid, trapezoid_weights, NormTag, PumpError,
    PumpSpec, SpectralAmplitude,
};
use crate::resonator::{Resonance, ResonatorError, Role};
use crate::units::{omega_to_nm, omega_width_to_pm};

#[derive(Debug, Error, PartialEq)]
pub enum JsaError {
    #[error(transparent)]
    Pump(#[from] PumpError),
    #[error(transparent)]
    Resonator(#[from] ResonatorError),
    #[error("invalid triplet: {0}")]
    Triplet(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(
        "cw pump line ({line_pm:.3e} pm) is narrower than the JSA grid bin ({bin_pm:.3e} pm); \
         compute K with the two-scale path schmidt::purity_banded_cw or use a display surrogate"
    )]
    UnresolvedCw { line_pm: f64, bin_pm: f64 },
    #[error("pump envelope does not overlap the resonance triplet")]
    Empty,
}

/// Signal, pump and idler resonances used for one pair-generation process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub signal: Resonance,
    pub pump: Resonance,
    pub idler: Resonance,
}

impl Triplet {
    pub fn new(signal: Resonance, pump: Resonance, idler: Resonance) -> Result<Self, JsaError> {
        let t = Self { signal, pump, idler };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), JsaError> {
        self.signal.validate()?;
        self.pump.validate()?;
        self.idler.validate()?;
        let (s, p, i) = (self.signal.lambda0_nm, self.pump.lambda0_nm, self.idler.lambda0_nm);
        if !((s > p && p > i) || (s < p && p < i)) {
            return Err(JsaError::Triplet(format!(
                "pump {p} nm must lie strictly between signal {s} nm and idler {i} nm"
            )));
        }
        Ok(())
    }

    /// `2ω_P − ω_S − ω_I`, rad/ps. Reported, never asserted.
    pub fn energy_mismatch(&self) -> f64 {
        2.0 * self.pump.omega0() - self.signal.omega0() - self.idler.omega0()
    }

    pub fn broadened(&self, factor: f64) -> Self {
        Self {
            signal: self.signal.broadened(factor),
            pump: self.pump.broadened(factor),
            idler: self.idler.broadened(factor),
        }
    }

    /// Signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        let mut signal = self.idler.clone();
        let mut idler = self.signal.clone();
        signal.role = Role::Signal;
        idler.role = Role::Idler;
        Self {
            signal,
            pump: self.pump.clone(),
            idler,
        }
    }
}

/// One frequency axis. Wavelengths ascend; the matching angular frequencies
/// therefore descend with a constant step `d_omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub nm: Vec<f64>,
    pub omega: Vec<f64>,
    pub d_omega: f64,
}

impl Axis {
    /// Uniform in angular frequency, `±half` around `center`.
    pub fn uniform(center_omega: f64, half: f64, n: usize) -> Self {
        let step = 2.0 * half / (n - 1) as f64;
        let omega: Vec<f64> = (0..n).map(|k| center_omega + half - step * k as f64).collect();
        let nm = omega.iter().map(|&w| omega_to_nm(w)).collect();
        Self {
            nm,
            omega,
            d_omega: step,
        }
    }

    pub fn len(&self) -> usize {
        self.nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nm.is_empty()
    }

    /// Wavelength coverage `max − min`, nm.
    pub fn span_nm(&self) -> f64 {
        self.nm[self.nm.len() - 1] - self.nm[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsaGrid {
    pub signal: Axis,
    pub idler: Axis,
}

/// Axes centered on the signal and idler resonances spanning `±span`
/// linewidths of each.
pub fn build_grid(triplet: &Triplet, span_linewidths: f64, n: usize) -> Result<JsaGrid, JsaError> {
    if !(span_linewidths >= 3.0) || !span_linewidths.is_finite() {
        return Err(JsaError::Grid(format!("span {span_linewidths} must be ≥ 3 linewidths")));
    }
    if n < 64 || !n.is_power_of_two() {
        return Err(JsaError::Grid(format!("{n} points: need a power of two ≥ 64")));
    }
    triplet.validate()?;
    let axis = |r: &Resonance| Axis::uniform(r.omega0(), span_linewidths * r.angular_fwhm(), n);
    Ok(JsaGrid {
        signal: axis(&triplet.signal),
        idler: axis(&triplet.idler),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JsaMatrix {
    pub signal: Axis,
    pub idler: Axis,
    /// Rows follow the signal axis, columns the idler axis.
    pub amplitude: DMatrix<Complex64>,
    pub norm: NormTag,
}

impl JsaMatrix {
    pub fn new(signal: Axis, idler: Axis, amplitude: DMatrix<Complex64>) -> Result<Self, JsaError> {
        if amplitude.nrows() != signal.len() || amplitude.ncols() != idler.len() {
            return Err(JsaError::Grid("matrix shape does not match axes".into()));
        }
        for ax in [&signal, &idler] {
            if ax.nm.windows(2).any(|w| w[1] <= w[0]) {
                return Err(JsaError::Grid("axes must be strictly increasing in wavelength".into()));
            }
        }
        Ok(Self {
            signal,
            idler,
            amplitude,
            norm: NormTag::Unnormalized,
        })
    }

    pub fn cell_measure(&self) -> f64 {
        self.signal.d_omega * self.idler.d_omega
    }

    /// `Σ|φ|² Δω_s Δω_i`.
    pub fn norm_integral(&self) -> f64 {
        self.amplitude.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_measure()
    }

    pub fn normalized(mut self) -> Result<Self, JsaError> {
        let total = self.norm_integral();
        if !(total > 0.0) || !total.is_finite() {
            return Err(JsaError::Empty);
        }
        let s = Complex64::new(1.0 / total.sqrt(), 0.0);
        self.amplitude *= s;
        self.norm = NormTag::UnitIntegral;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JsaOptions {
    /// Include the two pump-resonance factors `L_p` under the convolution.
    pub pump_enhancement: bool,
    /// Pump grid size used by [`compute_jsa_for_spec`].
    pub pump_points: usize,
}

impl Default for JsaOptions {
    fn default() -> Self {
        Self {
            pump_enhancement: true,
            pump_points: 256,
        }
    }
}

/// `C(Ω)` at `omega_offset = Ω − 2ω_L`, where `ω_L` is the pump envelope's
/// center. Trapezoid quadrature over the envelope's own grid; the second
/// factor is linearly interpolated.
pub fn pump_self_convolution(
    pump: &SpectralAmplitude,
    pump_res: &Resonance,
    omega_offset: f64,
    pump_enhancement: bool,
) -> Complex64 {
    let weighted = weighted_pump(pump, pump_res, pump_enhancement);
    self_convolution_with(&weighted, pump, pump_res, omega_offset, pump_enhancement)
}

/// `w_k α(ω_k) L_p(ω_L + ω_k)` for every pump node.
fn weighted_pump(pump: &SpectralAmplitude, pump_res: &Resonance, pump_enhancement: bool) -> Vec<Complex64> {
    let center = pump.center_omega();
    trapezoid_weights(&pump.offsets)
        .iter()
        .zip(&pump.offsets)
        .zip(&pump.values)
        .map(|((&w, &x), &a)| {
            let lp = if pump_enhancement {
                pump_res.lorentzian_at(center + x)
            } else {
                Complex64::new(1.0, 0.0)
            };
            a * lp * w
        })
        .collect()
}

#[inline]
fn self_convolution_with(
    weighted: &[Complex64],
    pump: &SpectralAmplitude,
    pump_res: &Resonance,
    omega_offset: f64,
    pump_enhancement: bool,
) -> Complex64 {
    let center = pump.center_omega();
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, &x) in weighted.iter().zip(&pump.offsets) {
        let other = omega_offset - x;
        let a = pump.sample(other);
        if a.re == 0.0 && a.im == 0.0 {
            continue;
        }
        let term = if pump_enhancement {
            a * pump_res.lorentzian_at(center + other)
        } else {
            a
        };
        acc += b * term;
    }
    acc
}

pub fn compute_jsa(pump: &SpectralAmplitude, triplet: &Triplet, grid: &JsaGrid) -> Result<JsaMatrix, JsaError> {
    compute_jsa_with(pump, triplet, grid, &JsaOptions::default())
}

/// Normalized JSA from an explicit pump envelope. Rows are evaluated in
/// parallel.
pub fn compute_jsa_with(
    pump: &SpectralAmplitude,
    triplet: &Triplet,
    grid: &JsaGrid,
    opts: &JsaOptions,
) -> Result<JsaMatrix, JsaError> {
    triplet.validate()?;
    let two_center = 2.0 * pump.center_omega();
    let weighted = weighted_pump(pump, &triplet.pump, opts.pump_enhancement);
    let (sig, idl) = (&grid.signal, &grid.idler);
    let idler_factors: Vec<Complex64> = idl.omega.iter().map(|&w| triplet.idler.lorentzian_at(w)).collect();

    let rows: Vec<Vec<Complex64>> = sig
        .omega
        .par_iter()
        .map(|&ws| {
            let ls = triplet.signal.lorentzian_at(ws);
            idl.omega
                .iter()
                .zip(&idler_factors)
                .map(|(&wi, &li)| {
                    let c = self_convolution_with(
                        &weighted,
                        pump,
                        &triplet.pump,
                        ws + wi - two_center,
                        opts.pump_enhancement,
                    );
                    ls * li * c
                })
                .collect()
        })
        .collect();

    let amplitude = DMatrix::from_fn(sig.len(), idl.len(), |i, j| rows[i][j]);
    JsaMatrix::new(sig.clone(), idl.clone(), amplitude)?.normalized()
}

/// Build the pump envelope for `spec` and evaluate the JSA.
///
/// Pulsed envelopes are sampled over ±4 spectral FWHM. A cw line must be
/// at least as wide as the JSA grid bin; narrower lines belong to the
/// two-scale path in [`crate::schmidt::purity_banded_cw`].
pub fn compute_jsa_for_spec(
    spec: &PumpSpec,
    triplet: &Triplet,
    grid: &JsaGrid,
    opts: &JsaOptions,
) -> Result<JsaMatrix, JsaError> {
    let alpha = pump_envelope(spec, grid, opts.pump_points)?;
    compute_jsa_with(&alpha, triplet, grid, opts)
}

pub fn pump_envelope(spec: &PumpSpec, grid: &JsaGrid, points: usize) -> Result<SpectralAmplitude, JsaError> {
    spec.validate()?;
    let fwhm = spec.power_fwhm_omega();
    match spec {
        PumpSpec::PulsedGaussian { .. } => Ok(gaussian_pulse_spectrum(spec, &symmetric_grid(4.0 * fwhm, points))?),
        PumpSpec::CwLine { lambda_p_nm, .. } => {
            let bin = grid.signal.d_omega.max(grid.idler.d_omega);
            if fwhm < bin {
                return Err(JsaError::UnresolvedCw {
                    line_pm: omega_width_to_pm(fwhm, *lambda_p_nm),
                    bin_pm: omega_width_to_pm(bin, *lambda_p_nm),
                });
            }
            // ±16 FWHM, at least 12 samples per FWHM
            let n = points.max(385);
            Ok(cw_line_spectrum(spec, &symmetric_grid(16.0 * fwhm, n))?)
        }
    }
}

/// Joint spectral density `|φ|²` on the JSA axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Jsd {
    pub signal: Axis,
    pub idler: Axis,
    pub density: DMatrix<f64>,
}

pub fn jsd(jsa: &JsaMatrix) -> Jsd {
    Jsd {
        signal: jsa.signal.clone(),
        idler: jsa.idler.clone(),
        density: jsa.amplitude.map(|v| v.norm_sqr()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    pub signal: Vec<f64>,
    pub idler: Vec<f64>,
}

/// Row and column sums scaled by the bin width of the summed axis.
pub fn marginals(jsd: &Jsd) -> Marginals {
    let d = &jsd.density;
    let signal = (0..d.nrows()).map(|i| d.row(i).sum() * jsd.idler.d_omega).collect();
    let idler = (0..d.ncols()).map(|j| d.column(j).sum() * jsd.signal.d_omega).collect();
    Marginals { signal, idler }
}

/// FWHM (in the units of `x`) of a sampled single-peaked curve, with linear
/// interpolation at the half-maximum crossings.
pub fn curve_fwhm(x: &[f64], y: &[f64]) -> f64 {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let half = 0.5 * ymax;
    let mut left = x[0];
    for i in (0..imax).rev() {
        if y[i] < half {
            left = x[i] + (half - y[i]) / (y[i + 1] - y[i]) * (x[i + 1] - x[i]);
            break;
        }
    }
    let mut right = x[x.len() - 1];
    for i in imax + 1..y.len() {
        if y[i] < half {
            right = x[i - 1] + (y[i - 1] - half) / (y[i - 1] - y[i]) * (x[i] - x[i - 1]);
            break;
        }
    }
    (right - left).abs()
}
