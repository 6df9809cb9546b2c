//! Transmission-spectrum and power-scaling fits.

use std::io::Read;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, Matrix3, OMatrix, Vector3, U3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resonator::CouplingRegime;

#[derive(Debug, Error, PartialEq)]
pub enum SpecfitError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("envelope fit failed: {0}; supply a manual baseline")]
    Envelope(String),
    #[error("window [{lo:.4}, {hi:.4}] nm: {reason}")]
    Window { lo: f64, hi: f64, reason: String },
    #[error("dip fit did not converge: {0}")]
    Fit(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

const MIN_ROWS: usize = 16;
/// A dip starts below this flattened transmission.
const DIP_LEVEL: f64 = 0.8;
/// ...and is closed only by a return above this one.
const DIP_RELEASE: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelength_nm: Vec<f64>,
    pub transmission: Vec<f64>,
    pub resolution_pm: f64,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, transmission: Vec<f64>) -> Result<Self, SpecfitError> {
        let bad = |line: usize, reason: String| SpecfitError::Parse {
            line: line as u64 + 1,
            reason,
        };
        if wavelength_nm.len() != transmission.len() {
            return Err(bad(0, "wavelength and transmission lengths differ".into()));
        }
        if wavelength_nm.len() < MIN_ROWS {
            return Err(bad(
                wavelength_nm.len(),
                format!("<{MIN_ROWS} rows ({} data rows)", wavelength_nm.len()),
            ));
        }
        for (i, w) in wavelength_nm.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(bad(i + 1, "wavelengths not strictly increasing".into()));
            }
        }
        let mut steps: Vec<f64> = wavelength_nm.windows(2).map(|w| w[1] - w[0]).collect();
        steps.sort_by(f64::total_cmp);
        let resolution_pm = steps[steps.len() / 2] * 1e3;
        Ok(Self {
            wavelength_nm,
            transmission,
            resolution_pm,
        })
    }

    pub fn len(&self) -> usize {
        self.wavelength_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelength_nm.is_empty()
    }
}

/// Two-column numeric rows with file line numbers. A non-numeric first row
/// is taken as a header.
fn read_pairs(input: impl Read) -> Result<Vec<(u64, f64, f64)>, SpecfitError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| SpecfitError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 2 {
            return Err(SpecfitError::Parse {
                line,
                reason: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(SpecfitError::Parse {
                        line,
                        reason: "non-finite value".into(),
                    });
                }
                rows.push((line, v[0], v[1]));
            }
            Err(_) if k == 0 => continue,
            Err(e) => {
                return Err(SpecfitError::Parse {
                    line,
                    reason: format!("not a number: {e}"),
                })
            }
        }
    }
    Ok(rows)
}

/// Two-column CSV (wavelength nm, linear transmission), `#` comments.
pub fn parse_spectrum(input: impl Read) -> Result<Spectrum, SpecfitError> {
    let rows = read_pairs(input)?;
    if rows.len() < MIN_ROWS {
        return Err(SpecfitError::Parse {
            line: rows.last().map_or(0, |r| r.0),
            reason: format!("<{MIN_ROWS} rows ({} data rows)", rows.len()),
        });
    }
    for w in rows.windows(2) {
        if !(w[1].1 > w[0].1) {
            return Err(SpecfitError::Parse {
                line: w[1].0,
                reason: format!("wavelength {} nm does not exceed the previous {} nm", w[1].1, w[0].1),
            });
        }
    }
    if let Some(r) = rows.iter().find(|r| r.2 < 0.0) {
        return Err(SpecfitError::Parse {
            line: r.0,
            reason: "negative transmission".into(),
        });
    }
    Spectrum::new(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect())
}

/// `exp(c0 + c1 z + c2 z²)` with `z = (λ − center_nm)/scale_nm`. A Gaussian
/// bell when `c2 < 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub center_nm: f64,
    pub scale_nm: f64,
    pub coefficients: [f64; 3],
}

impl Baseline {
    pub fn eval(&self, lambda_nm: f64) -> f64 {
        let z = (lambda_nm - self.center_nm) / self.scale_nm;
        let [a, b, c] = self.coefficients;
        (a + b * z + c * z * z).exp()
    }

    /// Peak wavelength of the bell, if curved downwards.
    pub fn bell_center_nm(&self) -> Option<f64> {
        let [_, b, c] = self.coefficients;
        (c < 0.0).then(|| self.center_nm - b / (2.0 * c) * self.scale_nm)
    }

    /// Bell FWHM, if curved downwards.
    pub fn bell_fwhm_nm(&self) -> Option<f64> {
        let c = self.coefficients[2];
        (c < 0.0).then(|| 2.0 * (std::f64::consts::LN_2 / -c).sqrt() * self.scale_nm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub baseline: Baseline,
    pub flattened: Spectrum,
    pub iterations: usize,
    /// Samples kept as upper envelope after clipping.
    pub envelope_points: usize,
}

/// Contiguous dip regions (index ranges) of a flattened spectrum.
pub fn dip_regions(flat: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_below = 0;
    for (i, &t) in flat.iter().enumerate() {
        if t < DIP_LEVEL {
            if start.is_none() {
                start = Some(i);
            }
            last_below = i;
        } else if t > DIP_RELEASE {
            if let Some(s) = start.take() {
                out.push((s, last_below));
            }
        }
    }
    if let Some(s) = start {
        out.push((s, last_below));
    }
    out
}

/// Gaussian bell fitted to the upper envelope by weighted least squares in
/// log transmission, clipping points more than 2σ below the fit.
pub fn fit_envelope(spec: &Spectrum) -> Result<EnvelopeFit, SpecfitError> {
    let n = spec.len();
    let lo = spec.wavelength_nm[0];
    let hi = spec.wavelength_nm[n - 1];
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let z: Vec<f64> = spec.wavelength_nm.iter().map(|&l| (l - center) / scale).collect();
    let mut keep: Vec<bool> = spec.transmission.iter().map(|&t| t > 0.0).collect();
    let mut coefficients = [0.0; 3];
    let mut iterations = 0;

    for it in 1..=20 {
        iterations = it;
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for i in (0..n).filter(|&i| keep[i]) {
            let t = spec.transmission[i];
            let w = t * t;
            let row = Vector3::new(1.0, z[i], z[i] * z[i]);
            ata += w * row * row.transpose();
            atb += w * t.ln() * row;
        }
        let sol = ata
            .lu()
            .solve(&atb)
            .ok_or_else(|| SpecfitError::Envelope("singular normal equations".into()))?;
        coefficients = [sol[0], sol[1], sol[2]];
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SpecfitError::Envelope("non-finite baseline".into()));
        }
        let base = |i: usize| (sol[0] + sol[1] * z[i] + sol[2] * z[i] * z[i]).exp();
        let ratio: Vec<f64> = (0..n).map(|i| spec.transmission[i] / base(i) - 1.0).collect();
        let kept: Vec<f64> = (0..n).filter(|&i| keep[i]).map(|i| ratio[i]).collect();
        let sigma = (kept.iter().map(|r| r * r).sum::<f64>() / kept.len() as f64).sqrt().max(1e-6);
        let next: Vec<bool> = (0..n)
            .map(|i| spec.transmission[i] > 0.0 && ratio[i] >= -2.0 * sigma)
            .collect();
        if next == keep {
            break;
        }
        keep = next;
    }

    let envelope_points = keep.iter().filter(|&&k| k).count();
    if envelope_points < 8 {
        return Err(SpecfitError::Envelope(format!(
            "only {envelope_points} samples survive clipping"
        )));
    }
    let baseline = Baseline {
        center_nm: center,
        scale_nm: scale,
        coefficients,
    };
    let flat: Vec<f64> = spec
        .wavelength_nm
        .iter()
        .zip(&spec.transmission)
        .map(|(&l, &t)| (t / baseline.eval(l)).clamp(0.0, 1.5))
        .collect();
    let dips = dip_regions(&flat).len();
    if dips < 3 {
        return Err(SpecfitError::Envelope(format!(
            "spectrum shows {dips} resonance dips, need at least 3"
        )));
    }
    Ok(EnvelopeFit {
        baseline,
        flattened: Spectrum {
            wavelength_nm: spec.wavelength_nm.clone(),
            transmission: flat,
            resolution_pm: spec.resolution_pm,
        },
        iterations,
        envelope_points,
    })
}

/// One window per dip, centered on its minimum and reaching at most
/// halfway to the neighbouring dips.
pub fn dip_windows(flat: &Spectrum) -> Vec<(f64, f64)> {
    let regions = dip_regions(&flat.transmission);
    let minima: Vec<usize> = regions
        .iter()
        .map(|&(a, b)| (a..=b).min_by(|&i, &j| flat.transmission[i].total_cmp(&flat.transmission[j])).unwrap())
        .collect();
    let l = &flat.wavelength_nm;
    minima
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let (a, b) = regions[k];
            let width = (l[b] - l[a]).max(4.0 * flat.resolution_pm * 1e-3);
            let mut half = 10.0 * width;
            if k > 0 {
                half = half.min(0.45 * (l[m] - l[minima[k - 1]]));
            }
            if k + 1 < minima.len() {
                half = half.min(0.45 * (l[minima[k + 1]] - l[m]));
            }
            (l[m] - half, l[m] + half)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub lambda0_nm: f64,
    pub lambda0_sigma_nm: f64,
    pub fwhm_nm: f64,
    pub fwhm_sigma_nm: f64,
    pub q: f64,
    pub q_sigma: f64,
    pub extinction: f64,
    pub extinction_sigma: f64,
    pub regime: CouplingRegime,
    pub residual_rms: f64,
}

/// Dip-depth heuristic. The transmission magnitude alone cannot tell under-
/// from over-coupling.
pub fn coupling_regime(extinction: f64) -> CouplingRegime {
    if extinction < 0.05 {
        CouplingRegime::Critical
    } else if extinction < 0.5 {
        CouplingRegime::Indeterminate
    } else {
        CouplingRegime::Under
    }
}

/// `T = 1 − (1−E)/(1 + (2(x−x0)/w)²)` in pm offsets from a reference.
struct DipProblem {
    x: Vec<f64>,
    y: Vec<f64>,
    p: Vector3<f64>,
}

impl DipProblem {
    fn parts(&self, x: f64) -> (f64, f64) {
        let u = 2.0 * (x - self.p[0]) / self.p[1];
        (u, 1.0 / (1.0 + u * u))
    }
}

impl LeastSquaresProblem<f64, Dyn, U3> for DipProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U3>;
    type ParameterStorage = Owned<f64, U3>;

    fn set_params(&mut self, p: &Vector3<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector3<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let depth = 1.0 - self.p[2];
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(&self.y).map(|(&x, &y)| {
                let (_, d) = self.parts(x);
                1.0 - depth * d - y
            }),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U3>> {
        let depth = 1.0 - self.p[2];
        let w = self.p[1];
        let mut j = OMatrix::<f64, Dyn, U3>::zeros(self.x.len());
        for (i, &x) in self.x.iter().enumerate() {
            let (u, d) = self.parts(x);
            let d2 = d * d;
            j[(i, 0)] = -depth * 4.0 * u * d2 / w;
            j[(i, 1)] = -depth * 2.0 * u * u * d2 / w;
            j[(i, 2)] = d;
        }
        Some(j)
    }
}

/// Lorentzian dip fit by Levenberg-Marquardt inside `window_nm`.
pub fn fit_lorentzian_dip(flat: &Spectrum, window_nm: (f64, f64)) -> Result<FitResult, SpecfitError> {
    let (lo, hi) = window_nm;
    let window_err = |reason: &str| SpecfitError::Window {
        lo,
        hi,
        reason: reason.into(),
    };
    let idx: Vec<usize> = (0..flat.len())
        .filter(|&i| flat.wavelength_nm[i] >= lo && flat.wavelength_nm[i] <= hi)
        .collect();
    if idx.len() < 8 {
        return Err(window_err("fewer than 8 samples"));
    }
    let lam: Vec<f64> = idx.iter().map(|&i| flat.wavelength_nm[i]).collect();
    let t: Vec<f64> = idx.iter().map(|&i| flat.transmission[i]).collect();
    match dip_regions(&t).len() {
        0 => return Err(window_err("no dip below 0.8")),
        1 => {}
        k => return Err(window_err(&format!("{k} dips, expected exactly one"))),
    }

    // initial guess: minimum, floor, half-depth crossings
    let imin = (0..t.len()).min_by(|&a, &b| t[a].total_cmp(&t[b])).unwrap();
    let floor = t[imin].clamp(0.0, 0.99);
    let half = 1.0 - 0.5 * (1.0 - floor);
    let left = (0..imin).rev().find(|&i| t[i] > half).unwrap_or(0);
    let right = (imin..t.len()).find(|&i| t[i] > half).unwrap_or(t.len() - 1);
    let reference = lam[imin];
    let x: Vec<f64> = lam.iter().map(|&l| (l - reference) * 1e3).collect();
    let w0 = (x[right] - x[left]).max(2.0 * flat.resolution_pm);

    let problem = DipProblem {
        x: x.clone(),
        y: t.clone(),
        p: Vector3::new(0.0, w0, floor),
    };
    let (fitted, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    if !report.termination.was_successful() {
        return Err(SpecfitError::Fit(format!("{:?}", report.termination)));
    }
    let p = fitted.params();
    if !p.iter().all(|v| v.is_finite()) || !(p[1] > 0.0) {
        return Err(SpecfitError::Fit("non-physical parameters".into()));
    }
    let r = fitted.residuals().expect("finite");
    let m = x.len() as f64;
    let ssr = r.norm_squared();
    let s2 = ssr / (m - 3.0);
    let jac = fitted.jacobian().expect("finite");
    let cov = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| SpecfitError::Fit("singular Jacobian".into()))?
        * s2;

    let lambda0 = reference + p[0] * 1e-3;
    let fwhm = p[1] * 1e-3;
    let var_l = cov[(0, 0)] * 1e-6;
    let var_w = cov[(1, 1)] * 1e-6;
    let cov_lw = cov[(0, 1)] * 1e-6;
    let q = lambda0 / fwhm;
    // ∇Q = (1/Δλ, −λ0/Δλ²)
    let (gl, gw) = (1.0 / fwhm, -lambda0 / (fwhm * fwhm));
    let var_q = gl * gl * var_l + gw * gw * var_w + 2.0 * gl * gw * cov_lw;
    Ok(FitResult {
        lambda0_nm: lambda0,
        lambda0_sigma_nm: var_l.max(0.0).sqrt(),
        fwhm_nm: fwhm,
        fwhm_sigma_nm: var_w.max(0.0).sqrt(),
        q,
        q_sigma: var_q.max(0.0).sqrt(),
        extinction: p[2],
        extinction_sigma: cov[(2, 2)].max(0.0).sqrt(),
        regime: coupling_regime(p[2]),
        residual_rms: (ssr / m).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMode {
    Pulsed,
    Cw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    /// Pulse energy (pJ) or power (µW).
    pub drive: Vec<f64>,
    /// Photons per pulse or pairs per second.
    pub response: Vec<f64>,
    pub mode: DriveMode,
}

impl PowerSeries {
    pub fn new(drive: Vec<f64>, response: Vec<f64>, mode: DriveMode) -> Result<Self, SpecfitError> {
        if drive.len() != response.len() {
            return Err(SpecfitError::Insufficient("drive and response lengths differ".into()));
        }
        if drive.len() < 4 {
            return Err(SpecfitError::Insufficient(format!("{} points, need at least 4", drive.len())));
        }
        if drive.iter().chain(&response).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(SpecfitError::Insufficient("entries must be positive and finite".into()));
        }
        if drive.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpecfitError::Insufficient("drive must be strictly increasing".into()));
        }
        Ok(Self { drive, response, mode })
    }
}

/// Two-column CSV (drive, response), `#` comments.
pub fn parse_power_series(input: impl Read, mode: DriveMode) -> Result<PowerSeries, SpecfitError> {
    let rows = read_pairs(input)?;
    PowerSeries::new(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect(), mode)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingClass {
    Quadratic,
    Linear,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_sigma: f64,
    /// `ln` of the prefactor.
    pub log_prefactor: f64,
    pub retained: usize,
    /// Index of the first point excluded as saturated.
    pub saturation_index: Option<usize>,
    pub class: ScalingClass,
}

struct LineFit {
    slope: f64,
    intercept: f64,
    slope_sigma: f64,
    sigma: f64,
}

fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let sigma = (ssr / dof).sqrt();
    LineFit {
        slope,
        intercept,
        slope_sigma: sigma / sxx.sqrt(),
        sigma,
    }
}

/// Log-log fit with saturation exclusion.
///
/// The first `n − ⌊n/3⌋` points (at least 4) are always kept. Higher-drive
/// points are re-admitted in order while each lies within 3σ of the fit to
/// the points before it; the first one that does not marks the saturation
/// threshold and it and everything above it are excluded.
pub fn fit_power_law(series: &PowerSeries) -> Result<PowerLawFit, SpecfitError> {
    let n = series.drive.len();
    if n < 4 {
        return Err(SpecfitError::Insufficient(format!("{n} points, need at least 4")));
    }
    let x: Vec<f64> = series.drive.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = series.response.iter().map(|v| v.ln()).collect();
    let core = (n - n / 3).max(4).min(n);
    let mut kept = core;
    let mut saturation_index = None;
    while kept < n {
        let f = line_fit(&x[..kept], &y[..kept]);
        let residual = y[kept] - (f.intercept + f.slope * x[kept]);
        if residual.abs() > 3.0 * f.sigma.max(1e-9) {
            saturation_index = Some(kept);
            break;
        }
        kept += 1;
    }
    let f = line_fit(&x[..kept], &y[..kept]);
    let class = if (f.slope - 2.0).abs() <= 0.2 {
        ScalingClass::Quadratic
    } else if (f.slope - 1.0).abs() <= 0.2 {
        ScalingClass::Linear
    } else {
        ScalingClass::Other
    };
    Ok(PowerLawFit {
        exponent: f.slope,
        exponent_sigma: f.slope_sigma,
        log_prefactor: f.intercept,
        retained: kept,
        saturation_index,
        class,
    })
}
