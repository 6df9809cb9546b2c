//! Stimulated-emission measurement chain: seed scan, Fabry-Pérot idler
//! filter and CCD detection.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsa::{JsaMatrix, Triplet};
use crate::schmidt::{k_bound, SchmidtError};
use crate::units::nm_to_omega;

#[derive(Debug, Error, PartialEq)]
pub enum InstrumentError {
    #[error("invalid Fabry-Pérot filter: {0}")]
    Filter(String),
    #[error("invalid scan plan: {0}")]
    Plan(String),
    #[error("seed {seed_nm:.6} nm lies outside the JSA signal axis [{min_nm:.6}, {max_nm:.6}]")]
    SeedRange { seed_nm: f64, min_nm: f64, max_nm: f64 },
    #[error(
        "idler scan span {span_pm:.2} pm exceeds the single-order window {window_pm:.2} pm; \
         neighbouring Airy orders would alias"
    )]
    OrderOverlap { span_pm: f64, window_pm: f64 },
    #[error(transparent)]
    Schmidt(#[from] SchmidtError),
}

/// Scanning Fabry-Pérot filter with an Airy transmission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpFilter {
    pub reflectivity: f64,
    pub fwhm_pm: f64,
    /// Residual center-wavelength jitter, rms.
    #[serde(default)]
    pub jitter_rms_pm: f64,
    /// Single-order analysis window; the free spectral range when absent.
    #[serde(default)]
    pub order_window_pm: Option<f64>,
}

impl FpFilter {
    pub fn new(reflectivity: f64, fwhm_pm: f64) -> Result<Self, InstrumentError> {
        let fp = Self {
            reflectivity,
            fwhm_pm,
            jitter_rms_pm: 0.0,
            order_window_pm: None,
        };
        fp.validate()?;
        Ok(fp)
    }

    /// Filter with finesse `fsr_pm / fwhm_pm`.
    pub fn from_fsr(fsr_pm: f64, fwhm_pm: f64) -> Result<Self, InstrumentError> {
        let f = fsr_pm / fwhm_pm;
        if !(f > 1.0) || !f.is_finite() {
            return Err(InstrumentError::Filter(format!(
                "finesse {f} from FSR {fsr_pm} pm and FWHM {fwhm_pm} pm must exceed 1"
            )));
        }
        // π√R/(1−R) = F  ⇒  F s² + π s − F = 0, s = √R
        let s = (-PI + (PI * PI + 4.0 * f * f).sqrt()) / (2.0 * f);
        Self::new(s * s, fwhm_pm)
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        let bad = |m: String| Err(InstrumentError::Filter(m));
        if !(self.reflectivity > 0.0 && self.reflectivity < 1.0) {
            return bad(format!("reflectivity {} not in (0, 1)", self.reflectivity));
        }
        if !(self.fwhm_pm > 0.0) || !self.fwhm_pm.is_finite() {
            return bad(format!("fwhm {} pm must be positive", self.fwhm_pm));
        }
        if !(self.finesse() > 1.0) {
            return bad(format!("finesse {:.3} must exceed 1", self.finesse()));
        }
        if !(self.jitter_rms_pm >= 0.0) || !self.jitter_rms_pm.is_finite() {
            return bad("jitter must be finite and non-negative".into());
        }
        if let Some(w) = self.order_window_pm {
            if !(w > 0.0) || w > self.fsr_pm() * (1.0 + 1e-12) {
                return bad(format!("order window {w} pm must lie in (0, FSR = {:.3} pm]", self.fsr_pm()));
            }
        }
        Ok(())
    }

    /// `π√R/(1−R)`.
    pub fn finesse(&self) -> f64 {
        PI * self.reflectivity.sqrt() / (1.0 - self.reflectivity)
    }

    pub fn fsr_pm(&self) -> f64 {
        self.finesse() * self.fwhm_pm
    }

    pub fn window_pm(&self) -> f64 {
        self.order_window_pm.unwrap_or_else(|| self.fsr_pm())
    }
}

/// `T(δ) = 1/(1 + (2F/π)² sin²(πδ/FSR))`.
pub fn airy_response(fp: &FpFilter, detuning_pm: f64) -> f64 {
    let c = 2.0 * fp.finesse() / PI;
    let s = (PI * detuning_pm / fp.fsr_pm()).sin();
    1.0 / (1.0 + c * c * s * s)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    Noiseless,
    /// Poisson counts with mean `gain` at the brightest noiseless pixel,
    /// plus Gaussian read noise; negative readings clamp to zero.
    ShotRead { gain: f64, read_noise_rms: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    /// Nominal seed wavelengths, ascending.
    pub seeds_nm: Vec<f64>,
    /// Half-width of the uniform seed-wavelength error.
    pub seed_accuracy_pm: f64,
    /// Fabry-Pérot center wavelengths on the idler side, ascending.
    pub fp_centers_nm: Vec<f64>,
    pub noise: NoiseModel,
}

impl ScanPlan {
    /// Seeds every `seed_step_pm` across `±half_span_pm` of the signal
    /// resonance and `fp_points` filter positions across the same span of
    /// the idler resonance.
    pub fn centered(
        triplet: &Triplet,
        half_span_pm: f64,
        seed_step_pm: f64,
        fp_points: usize,
        seed_accuracy_pm: f64,
        noise: NoiseModel,
    ) -> Result<Self, InstrumentError> {
        if !(half_span_pm > 0.0) || !(seed_step_pm > 0.0) || fp_points < 2 {
            return Err(InstrumentError::Plan(
                "span and step must be positive with at least 2 filter positions".into(),
            ));
        }
        let n_seeds = (2.0 * half_span_pm / seed_step_pm + 1e-9).floor() as usize + 1;
        let start = triplet.signal.lambda0_nm - 0.5 * (n_seeds - 1) as f64 * seed_step_pm * 1e-3;
        let seeds_nm = (0..n_seeds).map(|k| start + k as f64 * seed_step_pm * 1e-3).collect();
        let span = 2.0 * half_span_pm * 1e-3;
        let i0 = triplet.idler.lambda0_nm - 0.5 * span;
        let fp_centers_nm = (0..fp_points)
            .map(|j| i0 + span * j as f64 / (fp_points - 1) as f64)
            .collect();
        let plan = Self {
            seeds_nm,
            seed_accuracy_pm,
            fp_centers_nm,
            noise,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        let bad = |m: &str| Err(InstrumentError::Plan(m.into()));
        if self.seeds_nm.is_empty() || self.fp_centers_nm.is_empty() {
            return bad("seed and filter lists must be non-empty");
        }
        for axis in [&self.seeds_nm, &self.fp_centers_nm] {
            if axis.windows(2).any(|w| !(w[1] > w[0])) || axis.iter().any(|v| !v.is_finite()) {
                return bad("seed and filter wavelengths must be finite and strictly increasing");
            }
        }
        if !(self.seed_accuracy_pm >= 0.0) {
            return bad("seed accuracy must be non-negative");
        }
        let min_step = self
            .seeds_nm
            .windows(2)
            .map(|w| (w[1] - w[0]) * 1e3)
            .fold(f64::INFINITY, f64::min);
        if self.seeds_nm.len() > 1 && min_step < self.seed_accuracy_pm * (1.0 - 1e-9) {
            return bad("seed step must not be finer than the seed accuracy");
        }
        if let NoiseModel::ShotRead { gain, read_noise_rms } = self.noise {
            if !(gain > 0.0) || !(read_noise_rms >= 0.0) {
                return bad("gain must be positive and read noise non-negative");
            }
        }
        Ok(())
    }

    pub fn idler_span_pm(&self) -> f64 {
        (self.fp_centers_nm[self.fp_centers_nm.len() - 1] - self.fp_centers_nm[0]) * 1e3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMeta {
    pub noise: NoiseModel,
    pub rng_seed: u64,
    pub seed_accuracy_pm: f64,
    pub fp_fwhm_pm: f64,
    pub fp_reflectivity: f64,
    pub fp_jitter_rms_pm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredJsd {
    pub seed_nm: Vec<f64>,
    pub idler_nm: Vec<f64>,
    /// Rows follow seeds, columns filter positions.
    pub counts: DMatrix<f64>,
    pub meta: NoiseMeta,
}

impl MeasuredJsd {
    pub fn k_bound(&self) -> Result<f64, InstrumentError> {
        Ok(k_bound(&self.counts)?)
    }
}

/// JSD row at `seed_nm`, linearly interpolated in signal frequency.
pub fn stimulated_response(jsa: &JsaMatrix, seed_nm: f64) -> Result<Vec<f64>, InstrumentError> {
    let ax = &jsa.signal;
    let (min_nm, max_nm) = (ax.nm[0], ax.nm[ax.len() - 1]);
    if !(seed_nm >= min_nm && seed_nm <= max_nm) {
        return Err(InstrumentError::SeedRange { seed_nm, min_nm, max_nm });
    }
    // omega descends along the axis
    let t = ((ax.omega[0] - nm_to_omega(seed_nm)) / ax.d_omega).clamp(0.0, (ax.len() - 1) as f64);
    let k = (t.floor() as usize).min(ax.len() - 2);
    let f = t - k as f64;
    let a = jsa.amplitude.row(k);
    let b = jsa.amplitude.row(k + 1);
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (1.0 - f) * x.norm_sqr() + f * y.norm_sqr())
        .collect())
}

/// Simulated scan. Each seed index draws from its own ChaCha8 stream, so
/// the result does not depend on thread scheduling.
pub fn simulate_scan(
    jsa: &JsaMatrix,
    plan: &ScanPlan,
    fp: &FpFilter,
    rng_seed: u64,
) -> Result<MeasuredJsd, InstrumentError> {
    plan.validate()?;
    fp.validate()?;
    let window = fp.window_pm();
    let span = plan.idler_span_pm();
    if window < span {
        return Err(InstrumentError::OrderOverlap {
            span_pm: span,
            window_pm: window,
        });
    }
    let half_window = 0.5 * window;
    let idler_nm = &jsa.idler.nm;
    let jitter = (fp.jitter_rms_pm > 0.0).then(|| Normal::new(0.0, fp.jitter_rms_pm).expect("finite rms"));

    let rows: Vec<Vec<f64>> = plan
        .seeds_nm
        .par_iter()
        .enumerate()
        .map(|(k, &nominal)| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(k as u64);
            let error_pm = if plan.seed_accuracy_pm > 0.0 {
                rng.random_range(-plan.seed_accuracy_pm..=plan.seed_accuracy_pm)
            } else {
                0.0
            };
            let response = stimulated_response(jsa, nominal + error_pm * 1e-3)?;
            let row = plan
                .fp_centers_nm
                .iter()
                .map(|&center| {
                    let offset = jitter.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                    let c = center + offset * 1e-3;
                    idler_nm
                        .iter()
                        .zip(&response)
                        .filter_map(|(&l, &r)| {
                            let d = (l - c) * 1e3;
                            (d.abs() <= half_window).then(|| r * airy_response(fp, d))
                        })
                        .sum::<f64>()
                })
                .collect();
            Ok(row)
        })
        .collect::<Result<_, InstrumentError>>()?;

    let (ns, nf) = (plan.seeds_nm.len(), plan.fp_centers_nm.len());
    let mut counts = DMatrix::from_fn(ns, nf, |i, j| rows[i][j]);
    if let NoiseModel::ShotRead { gain, read_noise_rms } = plan.noise {
        let peak = counts.max();
        if peak > 0.0 {
            let scale = gain / peak;
            let read = (read_noise_rms > 0.0).then(|| Normal::new(0.0, read_noise_rms).expect("finite rms"));
            let noisy: Vec<Vec<f64>> = (0..ns)
                .into_par_iter()
                .map(|i| {
                    // separate stream family from the scan draws
                    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x9e37_79b9_7f4a_7c15);
                    rng.set_stream(i as u64);
                    (0..nf)
                        .map(|j| {
                            let mean = counts[(i, j)] * scale;
                            let shot = if mean > 0.0 {
                                Poisson::new(mean).expect("positive mean").sample(&mut rng)
                            } else {
                                0.0
                            };
                            let r = read.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                            (shot + r).max(0.0)
                        })
                        .collect()
                })
                .collect();
            counts = DMatrix::from_fn(ns, nf, |i, j| noisy[i][j]);
        }
    }

    Ok(MeasuredJsd {
        seed_nm: plan.seeds_nm.clone(),
        idler_nm: plan.fp_centers_nm.clone(),
        counts,
        meta: NoiseMeta {
            noise: plan.noise.clone(),
            rng_seed,
            seed_accuracy_pm: plan.seed_accuracy_pm,
            fp_fwhm_pm: fp.fwhm_pm,
            fp_reflectivity: fp.reflectivity,
            fp_jitter_rms_pm: fp.jitter_rms_pm,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fwhm_pm: f64,
    pub k_bound: f64,
}

/// Noiseless `K_bound` as a function of filter FWHM.
///
/// Each filter keeps the template's order window; its finesse is the larger
/// of the template finesse and `FSR_template / fwhm`, so narrow filters keep
/// the template FSR and wide ones keep the template finesse.
pub fn resolution_sweep(
    jsa: &JsaMatrix,
    fwhms_pm: &[f64],
    plan: &ScanPlan,
    fp_template: &FpFilter,
    rng_seed: u64,
) -> Result<Vec<SweepPoint>, InstrumentError> {
    if fwhms_pm.is_empty() {
        return Err(InstrumentError::Plan("resolution sweep needs at least one FWHM".into()));
    }
    fp_template.validate()?;
    let mut noiseless = plan.clone();
    noiseless.noise = NoiseModel::Noiseless;
    let fsr = fp_template.fsr_pm();
    let window = fp_template.window_pm();
    fwhms_pm
        .iter()
        .map(|&fwhm| {
            let finesse = fp_template.finesse().max(fsr / fwhm);
            let mut fp = FpFilter::from_fsr(finesse * fwhm, fwhm)?;
            fp.jitter_rms_pm = fp_template.jitter_rms_pm;
            fp.order_window_pm = Some(window);
            let m = simulate_scan(jsa, &noiseless, &fp, rng_seed)?;
            Ok(SweepPoint {
                fwhm_pm: fwhm,
                k_bound: m.k_bound()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsa::{build_grid, compute_jsa_for_spec, jsd, JsaOptions};
    use crate::pump::PumpSpec;
    use crate::resonator::{Resonance, Role};
    use crate::units::omega_to_nm;
    use proptest::prelude::*;

    fn triplet() -> Triplet {
        let ws = nm_to_omega(1561.89);
        let wp = nm_to_omega(1552.0);
        let li = omega_to_nm(2.0 * wp - ws);
        let r = |l, role| Resonance::new(l, 40800.0, 0.0, role).unwrap();
        Triplet::new(r(1561.89, Role::Signal), r(1552.0, Role::Pump), r(li, Role::Idler)).unwrap()
    }

    fn pulsed_jsa(n: usize) -> JsaMatrix {
        let t = triplet();
        let g = build_grid(&t, 5.0, n).unwrap();
        let spec = PumpSpec::PulsedGaussian {
            lambda_p_nm: 1552.0,
            spectral_fwhm_pm: 90.0,
            pulse_duration_ps: None,
            pulse_energy_pj: 0.8,
            repetition_rate_mhz: 10.0,
            chirp_ps2: 0.0,
        };
        compute_jsa_for_spec(&spec, &t, &g, &JsaOptions::default()).unwrap()
    }

    fn cw_surrogate(n: usize) -> JsaMatrix {
        let t = triplet();
        let g = build_grid(&t, 5.0, n).unwrap();
        // 2 pm line: resolvable on a 256-point grid
        let tau_us = 2.0 / crate::units::pm_to_omega_width(2.0, 1552.0) * 1e-6;
        let spec = PumpSpec::CwLine {
            lambda_p_nm: 1552.0,
            coherence_time_us: tau_us,
            power_uw: 80.0,
            lineshape: Default::default(),
        };
        compute_jsa_for_spec(&spec, &t, &g, &JsaOptions::default()).unwrap()
    }

    fn default_fp() -> FpFilter {
        FpFilter::new(0.9, 5.0).unwrap()
    }

    #[test]
    fn airy_basics() {
        let fp = default_fp();
        assert!((fp.finesse() - 29.8).abs() < 0.05);
        assert!((fp.fsr_pm() - 149.0).abs() < 0.3);
        assert_eq!(airy_response(&fp, 0.0), 1.0);
        assert!((airy_response(&fp, fp.fsr_pm()) - 1.0).abs() < 1e-12);
        // half-maximum crossing by bisection
        let (mut lo, mut hi) = (0.0, 0.5 * fp.fsr_pm());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if airy_response(&fp, mid) > 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((2.0 * lo / fp.fwhm_pm - 1.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn airy_periodic_and_symmetric(r in 0.5f64..0.999, fwhm in 0.1f64..20.0, d in -500.0f64..500.0) {
            let fp = FpFilter::new(r, fwhm).unwrap();
            let t = airy_response(&fp, d);
            prop_assert!(t > 0.0 && t <= 1.0);
            prop_assert!((t - airy_response(&fp, -d)).abs() < 1e-12);
            prop_assert!((t - airy_response(&fp, d + fp.fsr_pm())).abs() < 1e-9 * (1.0 + d.abs() / fp.fsr_pm()));
        }
    }

    #[test]
    fn from_fsr_inverts_finesse() {
        let fp = FpFilter::from_fsr(149.0, 0.01).unwrap();
        assert!((fp.fsr_pm() - 149.0).abs() < 1e-6);
        assert!(fp.reflectivity > 0.9997);
        assert!(FpFilter::from_fsr(5.0, 10.0).is_err());
        let mut w = default_fp();
        w.order_window_pm = Some(200.0);
        assert!(w.validate().is_err());
    }

    #[test]
    fn response_interpolates_rows() {
        let j = pulsed_jsa(64);
        let d = jsd(&j).density;
        let r = stimulated_response(&j, j.signal.nm[10]).unwrap();
        for (a, b) in r.iter().zip(d.row(10).iter()) {
            assert!((a - b).abs() < 1e-9 * d.max());
        }
        let mid = omega_to_nm(0.5 * (j.signal.omega[10] + j.signal.omega[11]));
        let r = stimulated_response(&j, mid).unwrap();
        for (c, v) in r.iter().enumerate() {
            let mean = 0.5 * (d[(10, c)] + d[(11, c)]);
            assert!((v - mean).abs() < 1e-9 * d.max());
        }
        assert!(matches!(
            stimulated_response(&j, 1500.0),
            Err(InstrumentError::SeedRange { .. })
        ));
    }

    #[test]
    fn cw_response_peaks_on_energy_conservation() {
        let j = cw_surrogate(256);
        let t = triplet();
        let seed = t.signal.lambda0_nm;
        let r = stimulated_response(&j, seed).unwrap();
        let jmax = r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let target = 2.0 * nm_to_omega(1552.0) - nm_to_omega(seed);
        let bin = ((j.idler.omega[jmax] - target) / j.idler.d_omega).abs();
        assert!(bin <= 1.0, "{bin}");
    }

    #[test]
    fn ideal_instrument_reproduces_samples() {
        let j = pulsed_jsa(128);
        let d = jsd(&j).density;
        let rows: Vec<usize> = (20..108).step_by(4).collect();
        let cols: Vec<usize> = (40..88).collect();
        let plan = ScanPlan {
            seeds_nm: rows.iter().map(|&r| j.signal.nm[r]).collect(),
            seed_accuracy_pm: 0.0,
            fp_centers_nm: cols.iter().map(|&c| j.idler.nm[c]).collect(),
            noise: NoiseModel::Noiseless,
        };
        let fp = FpFilter::from_fsr(149.0, 1e-4).unwrap();
        let m = simulate_scan(&j, &plan, &fp, 7).unwrap();
        let peak = d.max();
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                assert!((m.counts[(a, b)] - d[(r, c)]).abs() < 1e-6 * peak);
            }
        }
    }

    #[test]
    fn order_overlap_is_an_error() {
        let j = pulsed_jsa(64);
        let plan = ScanPlan::centered(&triplet(), 100.0, 2.0, 101, 2.0, NoiseModel::Noiseless).unwrap();
        let err = simulate_scan(&j, &plan, &default_fp(), 1).unwrap_err();
        assert!(matches!(err, InstrumentError::OrderOverlap { .. }));
    }

    #[test]
    fn deterministic_per_seed() {
        let j = pulsed_jsa(64);
        let noise = NoiseModel::ShotRead {
            gain: 1000.0,
            read_noise_rms: 3.0,
        };
        let plan = ScanPlan::centered(&triplet(), 60.0, 2.0, 61, 2.0, noise).unwrap();
        let mut fp = default_fp();
        fp.jitter_rms_pm = 0.5;
        let a = simulate_scan(&j, &plan, &fp, 3).unwrap();
        let b = simulate_scan(&j, &plan, &fp, 3).unwrap();
        let c = simulate_scan(&j, &plan, &fp, 4).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_ne!(a.counts, c.counts);
        assert!(a.counts.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn total_counts_linear_in_gain() {
        // shot noise only: clamped read noise adds a gain-independent offset
        let j = pulsed_jsa(64);
        let fp = default_fp();
        let total = |gain: f64| -> f64 {
            let plan = ScanPlan::centered(
                &triplet(),
                40.0,
                4.0,
                21,
                2.0,
                NoiseModel::ShotRead {
                    gain,
                    read_noise_rms: 0.0,
                },
            )
            .unwrap();
            (0..100)
                .map(|s| simulate_scan(&j, &plan, &fp, s).unwrap().counts.sum())
                .sum::<f64>()
                / 100.0
        };
        let r = total(200.0) / total(20.0);
        assert!((r / 10.0 - 1.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn sweep_monotone_and_limits() {
        let j = cw_surrogate(256);
        let plan = ScanPlan::centered(&triplet(), 70.0, 2.0, 71, 0.0, NoiseModel::Noiseless).unwrap();
        let fwhms = [0.1, 1.0, 5.0, 20.0, 50.0, 2000.0];
        let sweep = resolution_sweep(&j, &fwhms, &plan, &default_fp(), 1).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].k_bound <= w[0].k_bound * 1.02, "{sweep:?}");
        }
        assert!(sweep[2].k_bound > sweep[4].k_bound);
        assert!((sweep[5].k_bound - 1.0).abs() < 0.05, "{sweep:?}");
        assert!(resolution_sweep(&j, &[], &plan, &default_fp(), 1).is_err());
    }

    #[test]
    fn blurring_does_not_add_correlation() {
        let j = cw_surrogate(256);
        let kb_model = k_bound(&jsd(&j).density).unwrap();
        let noise = NoiseModel::ShotRead {
            gain: 1000.0,
            read_noise_rms: 3.0,
        };
        let plan = ScanPlan::centered(&triplet(), 70.0, 2.0, 141, 2.0, noise).unwrap();
        let mut fp = default_fp();
        fp.jitter_rms_pm = 0.5;
        for s in 0..10 {
            let kb = simulate_scan(&j, &plan, &fp, s).unwrap().k_bound().unwrap();
            assert!(kb <= kb_model + 0.05, "seed {s}: {kb} > {kb_model}");
        }
    }
}
