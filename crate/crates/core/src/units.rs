//! Physical constants and wavelength/frequency conversions.
//!
//! Internally every frequency is an angular frequency in rad/ps, every
//! length in the optical domain a wavelength in nm, and linewidths are
//! quoted in pm where that is the laboratory convention.

use std::f64::consts::PI;

/// Speed of light in vacuum, µm/ps.
pub const C_UM_PER_PS: f64 = 299.792458;

/// Angular frequency (rad/ps) of light with vacuum wavelength `nm`.
#[inline]
pub fn nm_to_omega(nm: f64) -> f64 {
    2.0 * PI * C_UM_PER_PS * 1e3 / nm
}

/// Vacuum wavelength (nm) of light with angular frequency `omega` (rad/ps).
#[inline]
pub fn omega_to_nm(omega: f64) -> f64 {
    2.0 * PI * C_UM_PER_PS * 1e3 / omega
}

/// Small-width conversion: a wavelength width in pm at `center_nm` to an
/// angular-frequency width in rad/ps.
#[inline]
pub fn pm_to_omega_width(width_pm: f64, center_nm: f64) -> f64 {
    nm_to_omega(center_nm) * (width_pm * 1e-3) / center_nm
}

/// Inverse of [`pm_to_omega_width`].
#[inline]
pub fn omega_width_to_pm(width_omega: f64, center_nm: f64) -> f64 {
    width_omega * center_nm / nm_to_omega(center_nm) * 1e3
}

/// Angular frequency width (rad/ps) to an ordinary frequency width in Hz.
#[inline]
pub fn omega_to_hz(width_omega: f64) -> f64 {
    width_omega / (2.0 * PI) * 1e12
}
