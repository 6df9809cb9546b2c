//! Ring resonance comb, single-pole Lorentzian lineshapes and the all-pass
//! transmission of a side-coupled ring.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{nm_to_omega, omega_to_nm, C_UM_PER_PS};

/// Wavelength range the dispersion expansion is trusted over.
pub const BAND_LIMITS_NM: (f64, f64) = (1400.0, 1700.0);

#[derive(Debug, Error, PartialEq)]
pub enum ResonatorError {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("band [{0}, {1}] nm lies outside the supported range [1400, 1700] nm")]
    Band(f64, f64),
}

fn param(name: &'static str, reason: impl Into<String>) -> ResonatorError {
    ResonatorError::Parameter {
        name,
        reason: reason.into(),
    }
}

/// Group-velocity-dispersion term as quoted by the device description.
///
/// The quoted value is kept verbatim together with its unit string. Only an
/// explicit `beta2_ps2_per_um` enters the comb solver; without it the
/// expansion stops at first order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GvdTerm {
    pub value: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2_ps2_per_um: Option<f64>,
}

impl GvdTerm {
    pub fn quoted(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: unit.to_string(),
            beta2_ps2_per_um: None,
        }
    }

    pub fn beta2(&self) -> f64 {
        self.beta2_ps2_per_um.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    pub n_eff: f64,
    /// Group velocity, µm/ps.
    pub group_velocity: f64,
    pub gvd: GvdTerm,
    pub lambda_ref_nm: f64,
}

impl DispersionParams {
    pub fn validate(&self) -> Result<(), ResonatorError> {
        if !self.n_eff.is_finite() || self.n_eff <= 1.0 {
            return Err(param("n_eff", format!("{} must be finite and > 1", self.n_eff)));
        }
        let vg = self.group_velocity;
        if !vg.is_finite() || vg <= 0.0 || vg >= C_UM_PER_PS {
            return Err(param("group_velocity", format!("{vg} µm/ps must lie in (0, c)")));
        }
        if !self.lambda_ref_nm.is_finite() || self.lambda_ref_nm <= 0.0 {
            return Err(param("lambda_ref_nm", "must be finite and positive"));
        }
        if !self.gvd.value.is_finite() || !self.gvd.beta2().is_finite() {
            return Err(param("gvd", "must be finite"));
        }
        Ok(())
    }

    /// Group index `c / v_g`.
    pub fn group_index(&self) -> f64 {
        C_UM_PER_PS / self.group_velocity
    }
}

/// Bus-ring coupling regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingRegime {
    Under,
    Critical,
    Over,
    /// Dip depth alone cannot tell under- from over-coupling.
    Indeterminate,
}

fn unit_broadening() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingGeometry {
    pub radius_um: f64,
    pub coupling: CouplingRegime,
    /// Multiplies every resonance linewidth; 1.0 leaves them untouched.
    #[serde(default = "unit_broadening")]
    pub linewidth_broadening: f64,
}

impl RingGeometry {
    pub fn new(radius_um: f64, coupling: CouplingRegime) -> Self {
        Self {
            radius_um,
            coupling,
            linewidth_broadening: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ResonatorError> {
        if !self.radius_um.is_finite() || self.radius_um <= 0.0 {
            return Err(param("radius_um", "must be finite and positive"));
        }
        if !(1.0..=2.0).contains(&self.linewidth_broadening) {
            return Err(param(
                "linewidth_broadening",
                format!("{} must lie in [1, 2]", self.linewidth_broadening),
            ));
        }
        Ok(())
    }

    /// Ring circumference, µm.
    pub fn circumference_um(&self) -> f64 {
        2.0 * PI * self.radius_um
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Signal,
    Pump,
    Idler,
}

/// One ring mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub lambda0_nm: f64,
    /// Loaded quality factor.
    pub q: f64,
    /// On-resonance power transmission, 0 at critical coupling.
    pub extinction: f64,
    pub role: Role,
}

impl Resonance {
    pub fn new(lambda0_nm: f64, q: f64, extinction: f64, role: Role) -> Result<Self, ResonatorError> {
        let r = Self {
            lambda0_nm,
            q,
            extinction,
            role,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), ResonatorError> {
        if !self.lambda0_nm.is_finite() || self.lambda0_nm <= 0.0 {
            return Err(param("lambda0_nm", "must be finite and positive"));
        }
        if !self.q.is_finite() || self.q <= 0.0 {
            return Err(param("q", "must be finite and positive"));
        }
        if !(0.0..=1.0).contains(&self.extinction) {
            return Err(param("extinction", format!("{} must lie in [0, 1]", self.extinction)));
        }
        Ok(())
    }

    /// Copy with the linewidth multiplied by `factor`.
    pub fn broadened(&self, factor: f64) -> Self {
        Self {
            q: self.q / factor,
            ..self.clone()
        }
    }

    /// Wavelength FWHM `λ0/Q`, nm.
    pub fn fwhm_nm(&self) -> f64 {
        self.lambda0_nm / self.q
    }

    pub fn omega0(&self) -> f64 {
        nm_to_omega(self.lambda0_nm)
    }

    /// Angular FWHM `Γ = ω0/Q`, rad/ps.
    pub fn angular_fwhm(&self) -> f64 {
        self.omega0() / self.q
    }

    /// `L(ω) = (Γ/2) / (i(ω − ω0) + Γ/2)`.
    #[inline]
    pub fn lorentzian_at(&self, omega: f64) -> Complex64 {
        let half = 0.5 * self.angular_fwhm();
        Complex64::new(half, 0.0) / Complex64::new(half, omega - self.omega0())
    }

    pub fn lorentzian_amplitude(&self, lambda_nm: f64) -> Complex64 {
        self.lorentzian_at(nm_to_omega(lambda_nm))
    }

    /// Photon dwell time `1/Γ = Qλ0/(2πc)`, ps.
    pub fn dwell_time_ps(&self) -> f64 {
        1.0 / self.angular_fwhm()
    }

    /// All-pass power transmission with a Lorentzian dip of depth
    /// `1 − extinction` and FWHM `λ0/Q`.
    pub fn transmission(&self, lambda_nm: f64) -> f64 {
        let x = 2.0 * (lambda_nm - self.lambda0_nm) / self.fwhm_nm();
        1.0 - (1.0 - self.extinction) / (1.0 + x * x)
    }
}

/// One solution of the round-trip phase condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombLine {
    /// Azimuthal mode number.
    pub mode_number: i64,
    /// Mode number relative to the one pinned at `lambda_ref`.
    pub mode_offset: i64,
    pub lambda_nm: f64,
    pub omega: f64,
}

/// Propagation constant relative to the reference, `β1 d + β2 d²/2`.
fn phase_offset(beta1: f64, beta2: f64, d: f64) -> f64 {
    beta1 * d + 0.5 * beta2 * d * d
}

/// Frequency offset solving `β1 d + β2 d²/2 = p`, stable for `β2 → 0`.
fn solve_offset(beta1: f64, beta2: f64, p: f64) -> Result<f64, ResonatorError> {
    let disc = beta1 * beta1 + 2.0 * beta2 * p;
    if disc < 0.0 {
        return Err(param("gvd", "dispersion expansion has no real root in band"));
    }
    Ok(2.0 * p / (beta1 + disc.sqrt()))
}

/// All ring resonances in `band_nm`, ascending in wavelength.
///
/// The propagation constant is expanded to second order around
/// `lambda_ref`, which is taken to be a resonance itself (mode number
/// `round(n_eff·2πR/λ_ref)`). Neighbours then satisfy
/// `[β(ω_m) − β(ω_ref)]·2πR = 2π(m − m_ref)`.
pub fn resonance_comb(
    disp: &DispersionParams,
    geom: &RingGeometry,
    band_nm: (f64, f64),
) -> Result<Vec<CombLine>, ResonatorError> {
    disp.validate()?;
    geom.validate()?;
    let (lo, hi) = band_nm;
    if !lo.is_finite() || !hi.is_finite() {
        return Err(param("band", "must be finite"));
    }
    if lo >= hi {
        return Ok(Vec::new());
    }
    if lo < BAND_LIMITS_NM.0 || hi > BAND_LIMITS_NM.1 {
        return Err(ResonatorError::Band(lo, hi));
    }

    let length = geom.circumference_um();
    let beta1 = 1.0 / disp.group_velocity;
    let beta2 = disp.gvd.beta2();
    let omega_ref = nm_to_omega(disp.lambda_ref_nm);
    let m_ref = (disp.n_eff * length / (disp.lambda_ref_nm * 1e-3)).round() as i64;

    let d_lo = nm_to_omega(hi) - omega_ref;
    let d_hi = nm_to_omega(lo) - omega_ref;
    for d in [d_lo, d_hi] {
        if beta1 + beta2 * d <= 0.0 {
            return Err(param("gvd", "group delay changes sign inside the band"));
        }
    }
    let cycles = |d: f64| phase_offset(beta1, beta2, d) * length / (2.0 * PI);
    let k_lo = cycles(d_lo).ceil() as i64;
    let k_hi = cycles(d_hi).floor() as i64;

    let mut lines = Vec::new();
    for k in (k_lo..=k_hi).rev() {
        let d = solve_offset(beta1, beta2, 2.0 * PI * k as f64 / length)?;
        let omega = omega_ref + d;
        lines.push(CombLine {
            mode_number: m_ref + k,
            mode_offset: k,
            lambda_nm: omega_to_nm(omega),
            omega,
        });
    }
    Ok(lines)
}

/// Closed-form local free spectral range `λ²/(n_g·2πR)`, nm.
pub fn free_spectral_range_nm(disp: &DispersionParams, geom: &RingGeometry, lambda_nm: f64) -> f64 {
    let lambda_um = lambda_nm * 1e-3;
    lambda_um * lambda_um / (disp.group_index() * geom.circumference_um()) * 1e3
}

/// Energy mismatch `2ω_P − ω_S − ω_I` (rad/ps) of the three comb lines
/// adjacent to `lambda_ref`, for a GVD coefficient given directly in
/// ps²/µm.
pub fn triplet_energy_mismatch(
    disp: &DispersionParams,
    geom: &RingGeometry,
    beta2_ps2_per_um: f64,
) -> Result<f64, ResonatorError> {
    disp.validate()?;
    geom.validate()?;
    let beta1 = 1.0 / disp.group_velocity;
    let p = 2.0 * PI / geom.circumference_um();
    let up = solve_offset(beta1, beta2_ps2_per_um, p)?;
    let down = solve_offset(beta1, beta2_ps2_per_um, -p)?;
    Ok(-(up + down))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn device_dispersion() -> DispersionParams {
        DispersionParams {
            n_eff: 2.54,
            group_velocity: 116.0,
            gvd: GvdTerm::quoted(1.84, "µm²/ps"),
            lambda_ref_nm: 1552.0,
        }
    }

    fn device_ring() -> RingGeometry {
        RingGeometry::new(15.0, CouplingRegime::Critical)
    }

    #[test]
    fn comb_spacing_matches_closed_form() {
        let lines = resonance_comb(&device_dispersion(), &device_ring(), (1530.0, 1575.0)).unwrap();
        assert!(lines.len() >= 4);
        let i = lines.iter().position(|l| l.mode_offset == 0).unwrap();
        // centered difference; one-sided steps differ by FSR²/λ
        let spacing = 0.5 * (lines[i + 1].lambda_nm - lines[i - 1].lambda_nm);
        // λ²/(n_g 2πR) with n_g = 299.792458/116 = 2.5844
        assert!((spacing - 9.89).abs() < 0.01, "{spacing}");
        let closed = free_spectral_range_nm(&device_dispersion(), &device_ring(), 1552.0);
        assert!((closed - 9.89).abs() < 0.005, "{closed}");
    }

    #[test]
    fn zero_gvd_is_uniform_in_frequency() {
        let lines = resonance_comb(&device_dispersion(), &device_ring(), (1400.0, 1700.0)).unwrap();
        let steps: Vec<f64> = lines.windows(2).map(|w| w[0].omega - w[1].omega).collect();
        for s in &steps {
            assert!((s / steps[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn narrow_band_holds_only_the_reference() {
        let lines = resonance_comb(&device_dispersion(), &device_ring(), (1550.0, 1555.0)).unwrap();
        assert_eq!(lines.len(), 1);
        assert!((lines[0].lambda_nm - 1552.0).abs() < 1e-9);
        assert_eq!(lines[0].mode_number, 154);
    }

    #[test]
    fn empty_and_invalid_bands() {
        assert!(resonance_comb(&device_dispersion(), &device_ring(), (1560.0, 1550.0))
            .unwrap()
            .is_empty());
        assert!(matches!(
            resonance_comb(&device_dispersion(), &device_ring(), (1300.0, 1560.0)),
            Err(ResonatorError::Band(..))
        ));
        let mut bad = device_dispersion();
        bad.n_eff = f64::NAN;
        assert!(resonance_comb(&bad, &device_ring(), (1540.0, 1560.0)).is_err());
    }

    #[test]
    fn gvd_bends_the_comb() {
        let mut d = device_dispersion();
        d.gvd.beta2_ps2_per_um = Some(3e-6);
        let lines = resonance_comb(&d, &device_ring(), (1500.0, 1600.0)).unwrap();
        let steps: Vec<f64> = lines.windows(2).map(|w| w[0].omega - w[1].omega).collect();
        assert!((steps[0] - steps[steps.len() - 1]).abs() > 1e-6);
        let i = lines.iter().position(|l| l.mode_offset == 0).unwrap();
        let direct = 2.0 * lines[i].omega - lines[i - 1].omega - lines[i + 1].omega;
        let diag = triplet_energy_mismatch(&d, &device_ring(), 3e-6).unwrap();
        assert!((direct - diag).abs() < 1e-12);
        // leading order β2 (2π/L)² v_g³
        let p = 2.0 * PI / device_ring().circumference_um();
        let approx = 3e-6 * p * p * 116f64.powi(3);
        assert!((diag / approx - 1.0).abs() < 1e-2, "{diag} vs {approx}");
    }

    #[test]
    fn lorentzian_identities() {
        let r = Resonance::new(1552.0, 40800.0, 0.0, Role::Pump).unwrap();
        let on = r.lorentzian_amplitude(1552.0);
        assert!((on - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let half = r.lorentzian_at(r.omega0() + 0.5 * r.angular_fwhm());
        assert!((half.norm_sqr() - 0.5).abs() < 1e-9);
        assert!((r.fwhm_nm() * 1e3 - 38.0).abs() < 0.05);
    }

    #[test]
    fn dwell_times() {
        let r = Resonance::new(1552.0, 40800.0, 0.0, Role::Pump).unwrap();
        assert!((r.dwell_time_ps() - 33.6).abs() < 0.05);
        let r2 = Resonance::new(1552.0, 81600.0, 0.0, Role::Pump).unwrap();
        assert!((r2.dwell_time_ps() / r.dwell_time_ps() - 2.0).abs() < 1e-12);
        let r3 = Resonance::new(1550.0, 40000.0, 0.0, Role::Pump).unwrap();
        assert!((r3.dwell_time_ps() - 32.9).abs() < 0.05);
    }

    #[test]
    fn transmission_limits() {
        let crit = Resonance::new(1552.0, 40800.0, 0.0, Role::Pump).unwrap();
        assert_eq!(crit.transmission(1552.0), 0.0);
        let far = 1552.0 + 20.0 * crit.fwhm_nm();
        assert!((crit.transmission(far) - 1.0).abs() < 1e-3);
        let none = Resonance::new(1552.0, 40800.0, 1.0, Role::Pump).unwrap();
        for l in [1551.9, 1552.0, 1552.01] {
            assert_eq!(none.transmission(l), 1.0);
        }
    }

    #[test]
    fn invalid_resonances() {
        assert!(Resonance::new(1552.0, -1.0, 0.0, Role::Pump).is_err());
        assert!(Resonance::new(1552.0, 100.0, 1.5, Role::Pump).is_err());
        let mut g = device_ring();
        g.linewidth_broadening = 2.5;
        assert!(g.validate().is_err());
    }

    proptest! {
        #[test]
        fn half_depth_at_half_width(
            lambda0 in 1450.0..1650.0f64,
            q in 1e3..2e5f64,
            e in 0.0..1.0f64,
        ) {
            let r = Resonance::new(lambda0, q, e, Role::Signal).unwrap();
            for sign in [-1.0, 1.0] {
                let t = r.transmission(lambda0 + sign * 0.5 * r.fwhm_nm());
                prop_assert!((t - 0.5 * (1.0 + e)).abs() < 1e-9);
            }
            prop_assert!((r.dwell_time_ps() * r.angular_fwhm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn modulus_decreases_with_detuning(q in 1e3..2e5f64, a in 0.0..5.0f64, b in 0.0..5.0f64) {
            let r = Resonance::new(1552.0, q, 0.0, Role::Signal).unwrap();
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            let g = r.angular_fwhm();
            for sign in [-1.0, 1.0] {
                let m_near = r.lorentzian_at(r.omega0() + sign * near * g).norm();
                let m_far = r.lorentzian_at(r.omega0() + sign * far * g).norm();
                prop_assert!(m_near >= m_far);
            }
        }
    }
}
