//! Unit system and physical constants.
//!
//! Everything inside the crate uses `hbar = 1` with energies in cm⁻¹ and
//! times in fs. An energy `E` in cm⁻¹ corresponds to the angular frequency
//! `2 pi c E` in fs⁻¹.

use serde::{Deserialize, Serialize};

/// Speed of light in cm/fs.
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.997_924_58e-5;

/// Angular frequency (fs⁻¹) of one wavenumber: `2 pi c`.
pub const ANGULAR_FS_PER_WAVENUMBER: f64 = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_FS;

/// 1 eV in cm⁻¹.
pub const WAVENUMBERS_PER_EV: f64 = 8065.544;

/// `k_B * 300 K` in cm⁻¹.
pub const KT_300K_WAVENUMBERS: f64 = 208.52;

/// Boltzmann constant in cm⁻¹/K, pinned so that 300 K gives exactly
/// [`KT_300K_WAVENUMBERS`].
pub const BOLTZMANN_WAVENUMBERS_PER_K: f64 = KT_300K_WAVENUMBERS / 300.0;

/// `hbar` in eV·s, derived from the two conversions above so that rates
/// computed in eV and in cm⁻¹ agree to rounding.
pub const HBAR_EV_S: f64 = 1.0 / (ANGULAR_FS_PER_WAVENUMBER * 1e15 * WAVENUMBERS_PER_EV);

pub fn ev_to_wavenumber(ev: f64) -> f64 {
    ev * WAVENUMBERS_PER_EV
}

pub fn wavenumber_to_ev(w: f64) -> f64 {
    w / WAVENUMBERS_PER_EV
}

/// Inverse temperature in (cm⁻¹)⁻¹.
pub fn beta_from_kelvin(t: f64) -> f64 {
    1.0 / (BOLTZMANN_WAVENUMBERS_PER_K * t)
}

/// Cutoff frequency in cm⁻¹ for a bath correlation time given in fs.
pub fn wavenumber_from_inverse_fs(tau_fs: f64) -> f64 {
    1.0 / (ANGULAR_FS_PER_WAVENUMBER * tau_fs)
}

/// Energy/time units a model is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// Energies in cm⁻¹, times in fs.
    Wavenumber,
    /// `hbar = 1` with energies and times in reciprocal units of each other.
    Dimensionless,
}

impl Units {
    /// Factor turning `energy * time` into a phase in radians.
    pub fn angular_scale(self) -> f64 {
        match self {
            Units::Wavenumber => ANGULAR_FS_PER_WAVENUMBER,
            Units::Dimensionless => 1.0,
        }
    }

    /// Converts a rate in the model's inverse-time unit into s⁻¹.
    /// Only meaningful for [`Units::Wavenumber`] (times in fs).
    pub fn rate_to_per_second(self, rate: f64) -> f64 {
        match self {
            Units::Wavenumber => rate * 1e15,
            Units::Dimensionless => rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmo_cutoff_from_correlation_time() {
        // 50 fs correlation time
        let wc = wavenumber_from_inverse_fs(50.0);
        assert!((wc - 106.177).abs() < 1e-3, "{wc}");
        assert!((wc * ANGULAR_FS_PER_WAVENUMBER * 50.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hbar_matches_codata_to_five_digits() {
        assert!((HBAR_EV_S / 6.582_119_569e-16 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn room_temperature_beta() {
        assert!((beta_from_kelvin(300.0) * KT_300K_WAVENUMBERS - 1.0).abs() < 1e-15);
    }
}
