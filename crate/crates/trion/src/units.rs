//! Unit conversions. Internally everything is rad/ns and ns; these helpers
//! convert the units that appear at configuration boundaries.

use std::f64::consts::TAU;

/// Speed of light in nm/ns.
pub const C_NM_PER_NS: f64 = 2.997_924_58e8;

/// hbar in ueV*ns; 1 ueV of splitting is TAU*0.2418 rad/ns.
pub const HBAR_UEV_NS: f64 = 0.658_211_957;

/// FWHM of a Gaussian divided by its standard deviation, 2*sqrt(2*ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

pub fn ghz_to_rad_per_ns(f_ghz: f64) -> f64 {
    TAU * f_ghz
}

pub fn rad_per_ns_to_ghz(w: f64) -> f64 {
    w / TAU
}

pub fn uev_to_rad_per_ns(e_uev: f64) -> f64 {
    e_uev / HBAR_UEV_NS
}

/// Converts a small wavelength interval around `lambda0_nm` to an angular
/// frequency interval: dw = TAU * c * dlambda / lambda0^2. Used for filter
/// widths, line splittings and detunings, where only the scale matters;
/// signed line positions are taken from transition-channel offsets instead.
pub fn wavelength_offset_to_rad_per_ns(dlambda_nm: f64, lambda0_nm: f64) -> f64 {
    TAU * C_NM_PER_NS * dlambda_nm / (lambda0_nm * lambda0_nm)
}

/// Inverse of [`wavelength_offset_to_rad_per_ns`].
pub fn rad_per_ns_to_wavelength_offset(dw: f64, lambda0_nm: f64) -> f64 {
    dw * lambda0_nm * lambda0_nm / (TAU * C_NM_PER_NS)
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uev_conversion_matches_hbar() {
        // 1 ueV <-> TAU * 0.2418 rad/ns to the precision of hbar.
        assert_relative_eq!(uev_to_rad_per_ns(1.0), TAU * 0.2418, max_relative = 1e-4);
        assert_relative_eq!(uev_to_rad_per_ns(65.0) / TAU, 15.7, max_relative = 6e-3);
        assert_relative_eq!(uev_to_rad_per_ns(35.0) / TAU, 8.5, max_relative = 6e-3);
    }

    #[test]
    fn wavelength_offset_at_telecom_band() {
        // 0.125 nm at 1550 nm is 15.6 GHz; 0.065 nm is 8.1 GHz.
        let w = wavelength_offset_to_rad_per_ns(0.125, 1550.0).abs();
        assert_relative_eq!(w / TAU, 15.6, max_relative = 1e-3);
        let w = wavelength_offset_to_rad_per_ns(0.065, 1550.0).abs();
        assert_relative_eq!(w / TAU, 8.11, max_relative = 1e-3);
        // Round trip.
        let dw = wavelength_offset_to_rad_per_ns(0.3, 1550.0);
        assert_relative_eq!(rad_per_ns_to_wavelength_offset(dw, 1550.0), 0.3, max_relative = 1e-12);
    }

    #[test]
    fn jitter_sigma_from_fwhm() {
        // 40 ps FWHM detector jitter has sigma just under 17 ps.
        assert_relative_eq!(fwhm_to_sigma(40.0), 16.986, max_relative = 1e-4);
    }
}
