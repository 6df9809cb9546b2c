//! Schmidt decomposition of a discretized JSA, the banded two-scale purity
//! for cw pumping, and the phase-blind bound `K_bound`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsa::{JsaError, JsaMatrix, Triplet};
use crate::pump::{cw_line_spectrum, symmetric_grid, trapezoid_weights, PumpError, PumpSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SchmidtError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is identically zero")]
    Degenerate,
    #[error("joint spectral density has a negative entry {value:.3e} at ({row}, {col})")]
    NegativeDensity { value: f64, row: usize, col: usize },
    #[error(
        "pump line FWHM is {ratio:.3e} of the narrowest resonance FWHM; the banded cw path \
         requires at most 1/100, use the discretized JSA instead"
    )]
    Regime { ratio: f64 },
    #[error("invalid quadrature settings: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Pump(#[from] PumpError),
    #[error(transparent)]
    Jsa(#[from] JsaError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtModes {
    /// Each entry is one signal mode sampled on the signal axis.
    pub signal: Vec<Vec<Complex64>>,
    pub idler: Vec<Vec<Complex64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    /// `λ_n`, descending, summing to one.
    pub coefficients: Vec<f64>,
    pub k: f64,
    pub modes: Option<SchmidtModes>,
}

fn scaled(jsa: &JsaMatrix) -> Result<DMatrix<Complex64>, SchmidtError> {
    if jsa.amplitude.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(SchmidtError::NonFinite);
    }
    if jsa.amplitude.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(SchmidtError::Degenerate);
    }
    Ok(&jsa.amplitude * Complex64::new(jsa.cell_measure().sqrt(), 0.0))
}

/// Normalized, descending `λ_n = s_n² / Σ s²` and `K = 1/Σλ²`.
fn coefficients_from_singular(mut s: Vec<f64>) -> (Vec<f64>, f64) {
    s.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = s.iter().map(|v| v * v).sum();
    let lambdas: Vec<f64> = s.iter().map(|v| v * v / total).collect();
    let k = 1.0 / lambdas.iter().map(|l| l * l).sum::<f64>();
    (lambdas, k)
}

pub fn schmidt_decompose(jsa: &JsaMatrix) -> Result<SchmidtSpectrum, SchmidtError> {
    let m = scaled(jsa)?;
    let (coefficients, k) = coefficients_from_singular(m.singular_values().iter().copied().collect());
    Ok(SchmidtSpectrum {
        coefficients,
        k,
        modes: None,
    })
}

/// As [`schmidt_decompose`] with the leading `max_modes` mode pairs. Modes
/// are returned on the JSA axes, unit-normalized under `Σ|u|² Δω = 1`.
pub fn schmidt_decompose_with_modes(jsa: &JsaMatrix, max_modes: usize) -> Result<SchmidtSpectrum, SchmidtError> {
    let m = scaled(jsa)?;
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let (coefficients, k) = coefficients_from_singular(svd.singular_values.iter().copied().collect());
    let ss = 1.0 / jsa.signal.d_omega.sqrt();
    let si = 1.0 / jsa.idler.d_omega.sqrt();
    let take = max_modes.min(order.len());
    let signal = order[..take]
        .iter()
        .map(|&n| u.column(n).iter().map(|z| z * ss).collect())
        .collect();
    // φ√(Δω_s Δω_i) = Σ s_n u_n v_n, v_n the n-th row of V^†
    let idler = order[..take]
        .iter()
        .map(|&n| v_t.row(n).iter().map(|z| z * si).collect())
        .collect();
    Ok(SchmidtSpectrum {
        coefficients,
        k,
        modes: Some(SchmidtModes { signal, idler }),
    })
}

/// `K_bound` from a non-negative joint spectral density: the Schmidt number
/// of the phase-free amplitude `√JSD`.
pub fn k_bound(jsd: &DMatrix<f64>) -> Result<f64, SchmidtError> {
    if jsd.iter().any(|v| !v.is_finite()) {
        return Err(SchmidtError::NonFinite);
    }
    for c in 0..jsd.ncols() {
        for r in 0..jsd.nrows() {
            let value = jsd[(r, c)];
            if value < -1e-12 {
                return Err(SchmidtError::NegativeDensity { value, row: r, col: c });
            }
        }
    }
    if jsd.iter().all(|&v| v <= 0.0) {
        return Err(SchmidtError::Degenerate);
    }
    let amp = jsd.map(|v| v.max(0.0).sqrt());
    let (_, k) = coefficients_from_singular(amp.singular_values().iter().copied().collect());
    Ok(k)
}

/// Node layout for [`purity_banded_cw`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandedQuadrature {
    /// Uniform nodes across the signal resonance.
    pub outer_nodes: usize,
    /// Half-width of the outer range in signal linewidths.
    pub outer_span_linewidths: f64,
    /// Nodes for the offset `δ = ω_s' − ω_s`, placed as `δ = γ tan θ`.
    pub band_nodes: usize,
    /// Pump-line samples over `±pump_span_linewidths` line FWHM.
    pub pump_nodes: usize,
    pub pump_span_linewidths: f64,
}

impl Default for BandedQuadrature {
    fn default() -> Self {
        Self {
            outer_nodes: 1024,
            outer_span_linewidths: 6.0,
            band_nodes: 256,
            pump_nodes: 2049,
            pump_span_linewidths: 64.0,
        }
    }
}

impl BandedQuadrature {
    fn validate(&self) -> Result<(), SchmidtError> {
        if self.outer_nodes < 1024 {
            return Err(SchmidtError::Quadrature(format!("outer_nodes {} < 1024", self.outer_nodes)));
        }
        if self.band_nodes < 128 {
            return Err(SchmidtError::Quadrature(format!("band_nodes {} < 128", self.band_nodes)));
        }
        if self.pump_nodes < 257 || !(self.pump_span_linewidths >= 8.0) {
            return Err(SchmidtError::Quadrature("pump line needs ≥257 nodes over ≥ ±8 FWHM".into()));
        }
        if !(self.outer_span_linewidths >= 3.0) {
            return Err(SchmidtError::Quadrature("outer span must be ≥ 3 linewidths".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CwPurity {
    pub purity: f64,
    pub k: f64,
    /// Pump line FWHM over the narrowest resonance FWHM.
    pub linewidth_ratio: f64,
}

/// Purity of the heralded state for a cw line far narrower than the
/// resonances.
///
/// The reduced density `ρ(ω_s, ω_s')` is band-limited to `|ω_s − ω_s'|` of
/// order the pump linewidth, so it is sampled on a uniform outer grid in
/// `ω_s` and a tan-mapped grid in the offset `δ`. The idler integral is an
/// exact sum over the lattice on which the pump self-convolution is known.
pub fn purity_banded_cw(
    triplet: &Triplet,
    spec: &PumpSpec,
    quad: &BandedQuadrature,
    pump_enhancement: bool,
) -> Result<CwPurity, SchmidtError> {
    if !spec.is_cw() {
        return Err(PumpError::WrongKind { expected: "cw" }.into());
    }
    triplet.validate()?;
    quad.validate()?;
    let gamma = spec.power_fwhm_omega();
    let narrowest = triplet
        .signal
        .angular_fwhm()
        .min(triplet.idler.angular_fwhm())
        .min(triplet.pump.angular_fwhm());
    let ratio = gamma / narrowest;
    if ratio > 0.01 {
        return Err(SchmidtError::Regime { ratio });
    }

    // two-photon function on the lattice u_m = 2·x_0 + m·h
    let alpha = cw_line_spectrum(spec, &symmetric_grid(quad.pump_span_linewidths * gamma, quad.pump_nodes))?;
    let center = alpha.center_omega();
    let h = alpha.offsets[1] - alpha.offsets[0];
    let weights = trapezoid_weights(&alpha.offsets);
    let beta: Vec<Complex64> = alpha
        .offsets
        .iter()
        .zip(&alpha.values)
        .map(|(&x, &a)| {
            if pump_enhancement {
                a * triplet.pump.lorentzian_at(center + x)
            } else {
                a
            }
        })
        .collect();
    let np = beta.len();
    let u0 = 2.0 * alpha.offsets[0];
    let lattice: Vec<Complex64> = (0..2 * np - 1)
        .into_par_iter()
        .map(|m| {
            let lo = m.saturating_sub(np - 1);
            let hi = m.min(np - 1);
            (lo..=hi).map(|j| beta[j] * beta[m - j] * weights[j]).sum()
        })
        .collect();
    let g_at = |u: f64| -> Complex64 {
        let t = (u - u0) / h;
        if t < 0.0 || t > (lattice.len() - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let k = (t.floor() as usize).min(lattice.len() - 2);
        let f = t - k as f64;
        lattice[k] * (1.0 - f) + lattice[k + 1] * f
    };

    // tan-mapped offsets; midpoint rule in θ
    let delta_max = (lattice.len() - 1) as f64 * h;
    let theta_max = (delta_max / gamma).atan().min(FRAC_PI_2);
    let dtheta = 2.0 * theta_max / quad.band_nodes as f64;
    let deltas: Vec<(f64, f64)> = (0..quad.band_nodes)
        .map(|k| {
            let theta = -theta_max + (k as f64 + 0.5) * dtheta;
            let c = theta.cos();
            (gamma * theta.tan(), gamma * dtheta / (c * c))
        })
        .collect();

    // q_δ[m] = g(u_m) g*(u_m + δ), the δ = 0 row first
    let u: Vec<f64> = (0..lattice.len()).map(|m| u0 + m as f64 * h).collect();
    let products: Vec<Vec<Complex64>> = std::iter::once(0.0)
        .chain(deltas.iter().map(|d| d.0))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&d| {
            u.iter()
                .zip(&lattice)
                .map(|(&um, &gm)| gm * g_at(um + d).conj())
                .collect()
        })
        .collect();

    let sig = &triplet.signal;
    let idl = &triplet.idler;
    let half = quad.outer_span_linewidths * sig.angular_fwhm();
    let xs = symmetric_grid(half, quad.outer_nodes);
    let wx = trapezoid_weights(&xs);
    let two_center = 2.0 * center;

    let (tr, tr2) = xs
        .par_iter()
        .zip(&wx)
        .map(|(&x, &w)| {
            let ws = sig.omega0() + x;
            let li2: Vec<f64> = u.iter().map(|&um| idl.lorentzian_at(um + two_center - ws).norm_sqr()).collect();
            let inner = |q: &[Complex64]| -> Complex64 {
                li2.iter().zip(q).map(|(&a, &b)| b * a).sum::<Complex64>() * h
            };
            let ls = sig.lorentzian_at(ws);
            let diag = ls.norm_sqr() * inner(&products[0]).re;
            let band: f64 = deltas
                .iter()
                .zip(&products[1..])
                .map(|(&(d, wd), q)| {
                    let rho = ls * sig.lorentzian_at(ws + d).conj() * inner(q);
                    wd * rho.norm_sqr()
                })
                .sum();
            (w * diag, w * band)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));

    if !(tr > 0.0) || !tr2.is_finite() {
        return Err(SchmidtError::Degenerate);
    }
    let purity = tr2 / (tr * tr);
    Ok(CwPurity {
        purity,
        k: 1.0 / purity,
        linewidth_ratio: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsa::{build_grid, compute_jsa_for_spec, Axis, JsaOptions};
    use crate::pump::CwLineshape;
    use crate::resonator::{Resonance, Role};
    use crate::units::{nm_to_omega, omega_to_nm};
    use proptest::prelude::*;

    fn triplet() -> Triplet {
        let ws = nm_to_omega(1561.89);
        let wp = nm_to_omega(1552.0);
        let li = omega_to_nm(2.0 * wp - ws);
        let r = |l, role| Resonance::new(l, 40800.0, 0.0, role).unwrap();
        Triplet::new(r(1561.89, Role::Signal), r(1552.0, Role::Pump), r(li, Role::Idler)).unwrap()
    }

    fn cw(tau_us: f64, lineshape: CwLineshape) -> PumpSpec {
        PumpSpec::CwLine {
            lambda_p_nm: 1552.0,
            coherence_time_us: tau_us,
            power_uw: 80.0,
            lineshape,
        }
    }

    fn matrix(m: DMatrix<Complex64>) -> JsaMatrix {
        let n = m.nrows();
        let ax = Axis::uniform(1000.0, 1.0, n);
        JsaMatrix::new(ax.clone(), ax, m).unwrap()
    }

    /// Dense oracle: `1/Tr ρ²` with `ρ = M M†`, `Tr ρ = 1`.
    fn dense_k(m: &DMatrix<Complex64>) -> f64 {
        let rho = m * m.adjoint();
        let tr = rho.trace().re;
        let rho = rho / Complex64::new(tr, 0.0);
        1.0 / (&rho * &rho).trace().re
    }

    #[test]
    fn rank_one_and_maximal() {
        let a: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin() + 1.5).collect();
        let b: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos() + 1.2).collect();
        let m = DMatrix::from_fn(16, 16, |i, j| Complex64::new(a[i] * b[j], 0.0));
        let s = schmidt_decompose(&matrix(m)).unwrap();
        assert!((s.k - 1.0).abs() < 1e-10);
        let eye = DMatrix::<Complex64>::identity(16, 16);
        let s = schmidt_decompose(&matrix(eye)).unwrap();
        assert!((s.k - 16.0).abs() < 1e-9);
        assert!(s.coefficients.iter().all(|l| (l - 1.0 / 16.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let z = DMatrix::<Complex64>::zeros(8, 8);
        assert_eq!(schmidt_decompose(&matrix(z)).unwrap_err(), SchmidtError::Degenerate);
        let mut m = DMatrix::<Complex64>::identity(8, 8);
        m[(2, 3)] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(schmidt_decompose(&matrix(m)).unwrap_err(), SchmidtError::NonFinite);
        let mut d = DMatrix::<f64>::identity(8, 8);
        d[(1, 1)] = -1e-6;
        assert!(matches!(k_bound(&d), Err(SchmidtError::NegativeDensity { .. })));
        d[(1, 1)] = -1e-14;
        assert!(k_bound(&d).is_ok());
        assert_eq!(k_bound(&DMatrix::zeros(4, 4)).unwrap_err(), SchmidtError::Degenerate);
    }

    #[test]
    fn modes_reconstruct_matrix() {
        let m = DMatrix::from_fn(12, 12, |i, j| Complex64::from_polar(1.0 / (1.0 + (i + 2 * j) as f64), (i * j) as f64 * 0.1));
        let jm = matrix(m.clone());
        let s = schmidt_decompose_with_modes(&jm, 12).unwrap();
        let modes = s.modes.unwrap();
        let norm = jm.norm_integral();
        let mut rebuilt = DMatrix::<Complex64>::zeros(12, 12);
        for n in 0..12 {
            let sn = (s.coefficients[n] * norm).sqrt();
            for i in 0..12 {
                for j in 0..12 {
                    rebuilt[(i, j)] += modes.signal[n][i] * modes.idler[n][j] * sn;
                }
            }
        }
        assert!((&rebuilt - &m).camax() < 1e-10 * m.camax());
        let k_plain = schmidt_decompose(&jm).unwrap().k;
        assert!((s.k - k_plain).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn k_at_least_one_and_matches_dense(
            re in proptest::collection::vec(-1.0f64..1.0, 36),
            im in proptest::collection::vec(-1.0f64..1.0, 36),
        ) {
            let m = DMatrix::from_fn(6, 6, |i, j| Complex64::new(re[6 * i + j], im[6 * i + j]));
            prop_assume!(m.norm() > 1e-3);
            let s = schmidt_decompose(&matrix(m.clone())).unwrap();
            prop_assert!(s.k >= 1.0 - 1e-12);
            prop_assert!((s.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.coefficients.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((s.k - dense_k(&m)).abs() < 1e-8 * s.k);
        }

        #[test]
        fn k_bound_matches_dense(v in proptest::collection::vec(0.0f64..1.0, 25)) {
            let d = DMatrix::from_fn(5, 5, |i, j| v[5 * i + j]);
            prop_assume!(d.sum() > 1e-3);
            let kb = k_bound(&d).unwrap();
            let amp = d.map(|x| Complex64::new(x.sqrt(), 0.0));
            prop_assert!((kb - dense_k(&amp)).abs() < 1e-8 * kb);
        }
    }

    #[test]
    fn k_bound_at_least_k_for_real_positive() {
        // K_bound equals K when the amplitude is already real and positive
        let m = DMatrix::from_fn(10, 10, |i, j| Complex64::new(1.0 / (1.0 + (i as f64 - j as f64).powi(2)), 0.0));
        let k = schmidt_decompose(&matrix(m.clone())).unwrap().k;
        let kb = k_bound(&m.map(|z| z.norm_sqr())).unwrap();
        assert!((k - kb).abs() < 1e-9);
    }

    /// `(∫A)² / ∫A²` for `A(x) = |L_s(ω_s0 + x)|² |L_i(2ω_p − ω_s0 − x)|²`,
    /// by a plain Riemann sum over ±200 linewidths.
    fn outer_factor(t: &Triplet) -> f64 {
        let g = t.signal.angular_fwhm();
        let n = 400_001;
        let dx = 400.0 * g / (n - 1) as f64;
        let two_p = 2.0 * t.pump.omega0();
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..n {
            let ws = t.signal.omega0() - 200.0 * g + k as f64 * dx;
            let a = t.signal.lorentzian_at(ws).norm_sqr() * t.idler.lorentzian_at(two_p - ws).norm_sqr();
            s1 += a * dx;
            s2 += a * a * dx;
        }
        s1 * s1 / s2
    }

    #[test]
    fn banded_matches_two_scale_limit() {
        let t = triplet();
        let spec = cw(0.05, CwLineshape::Lorentzian);
        let gp = spec.power_fwhm_omega();
        // |G|² of a Lorentzian line pair has width 2γ_p·2; ∫|G|²/G(0)² = 2π γ_p
        let expected = outer_factor(&t) / (2.0 * std::f64::consts::PI * gp);
        let got = purity_banded_cw(&t, &spec, &BandedQuadrature::default(), true).unwrap();
        let rel = (got.k - expected).abs() / expected;
        assert!(rel < 0.02, "K {} vs {expected}", got.k);
        // equal-width limit of the same formula
        let analytic = 0.2 * t.signal.angular_fwhm() / gp;
        assert!((expected / analytic - 1.0).abs() < 0.01);
    }

    #[test]
    fn banded_scales_inversely_with_linewidth() {
        let t = triplet();
        for shape in [CwLineshape::Lorentzian, CwLineshape::Gaussian] {
            let a = purity_banded_cw(&t, &cw(0.05, shape), &BandedQuadrature::default(), true).unwrap();
            let b = purity_banded_cw(&t, &cw(0.1, shape), &BandedQuadrature::default(), true).unwrap();
            let r = b.k / a.k;
            assert!((r - 2.0).abs() < 0.1, "{shape:?}: {r}");
        }
    }

    #[test]
    fn banded_rejects_wide_lines() {
        let t = triplet();
        let tau_us = 2.0 / t.signal.angular_fwhm() * 1e-6;
        let err = purity_banded_cw(&t, &cw(tau_us, CwLineshape::Lorentzian), &BandedQuadrature::default(), true);
        assert!(matches!(err, Err(SchmidtError::Regime { .. })));
        let q = BandedQuadrature {
            outer_nodes: 100,
            ..Default::default()
        };
        assert!(matches!(
            purity_banded_cw(&t, &cw(1.0, CwLineshape::Lorentzian), &q, true),
            Err(SchmidtError::Quadrature(_))
        ));
    }

    #[test]
    fn pulsed_jsa_schmidt_number_is_near_unity() {
        let t = triplet();
        let g = build_grid(&t, 5.0, 128).unwrap();
        let spec = PumpSpec::PulsedGaussian {
            lambda_p_nm: 1552.0,
            spectral_fwhm_pm: 90.0,
            pulse_duration_ps: None,
            pulse_energy_pj: 0.8,
            repetition_rate_mhz: 10.0,
            chirp_ps2: 0.0,
        };
        let j = compute_jsa_for_spec(&spec, &t, &g, &JsaOptions::default()).unwrap();
        let s = schmidt_decompose(&j).unwrap();
        assert!(s.k > 1.0 && s.k < 1.3, "{}", s.k);
    }
}
