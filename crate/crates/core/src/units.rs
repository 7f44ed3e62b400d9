//! Unit conventions.
//!
//! Public interfaces take energies and frequencies in cm⁻¹ and times in fs.
//! Internally, angular frequencies are rad/fs with ħ = 1.

/// 2πc in rad fs⁻¹ per cm⁻¹, from the defined speed of light.
pub const TWO_PI_C: f64 = 2.0 * std::f64::consts::PI * 2.997_924_58e-5;

/// Boltzmann constant in cm⁻¹ K⁻¹.
pub const KB_CM1_PER_K: f64 = 0.695_034_800_4;

/// Converts a wavenumber (cm⁻¹) to an angular frequency (rad/fs).
#[inline]
pub fn cm1_to_rad_fs(wavenumber: f64) -> f64 {
    wavenumber * TWO_PI_C
}

/// Converts an angular frequency (rad/fs) to a wavenumber (cm⁻¹).
#[inline]
pub fn rad_fs_to_cm1(omega: f64) -> f64 {
    omega / TWO_PI_C
}

/// Thermal energy k_B T in cm⁻¹.
#[inline]
pub fn thermal_energy_cm1(temperature_k: f64) -> f64 {
    KB_CM1_PER_K * temperature_k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pi_c_matches_reference_value() {
        assert!((TWO_PI_C - 1.883_651_6e-4).abs() < 1e-10);
    }

    #[test]
    fn conversion_round_trip() {
        let w = 12_800.0;
        assert!((rad_fs_to_cm1(cm1_to_rad_fs(w)) - w).abs() < 1e-9);
    }
}
