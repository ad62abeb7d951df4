//! Large-scale propagation loss and boundary reflection.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Thorp absorption in dB/km for a frequency in kHz.
pub fn thorp_absorption(f_khz: f64) -> Result<f64> {
    if !(f_khz > 0.0) || !f_khz.is_finite() {
        return Err(invalid(format!("absorption frequency must be positive, got {f_khz} kHz")));
    }
    let f2 = f_khz * f_khz;
    Ok(0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003)
}

/// Amplitude gain `1 / sqrt(l^k * a^l_km)` with `a = 10^(absorption/10)`.
///
/// The spreading term uses the length in meters (so 1 m is the reference
/// distance) and the absorption term the length in kilometers.
pub fn spreading_absorption_gain(length_m: f64, k: f64, absorption_db_per_km: f64) -> f64 {
    let spreading_db = 10.0 * k * length_m.log10();
    let absorption_db = absorption_db_per_km * length_m / 1000.0;
    10f64.powf(-(spreading_db + absorption_db) / 20.0)
}

/// Large-scale path gain at frequency `f_khz` with spreading factor `k`.
///
/// Reflection losses are applied separately; the result is strictly positive.
pub fn large_scale_gain(length_m: f64, f_khz: f64, k: f64) -> Result<f64> {
    if !(length_m >= 1.0) {
        return Err(invalid(format!("path length must be at least 1 m, got {length_m}")));
    }
    let alpha = thorp_absorption(f_khz)?;
    Ok(spreading_absorption_gain(length_m, k, alpha))
}

/// Rayleigh reflection coefficient of a fluid half-space below water.
///
/// `density_ratio` is bottom density over water density. Above the critical
/// angle the coefficient is real; below it (fast bottom only) it is a
/// unit-modulus complex number.
pub fn bottom_reflection_coefficient(
    grazing_angle: f64,
    c_water: f64,
    c_bottom: f64,
    density_ratio: f64,
) -> Complex64 {
    debug_assert!(grazing_angle > 0.0 && grazing_angle <= std::f64::consts::FRAC_PI_2 + 1e-12);
    let n = c_water / c_bottom;
    let cos = grazing_angle.cos();
    let z = Complex64::new(n * n - cos * cos, 0.0).sqrt();
    let ms = Complex64::new(density_ratio * grazing_angle.sin(), 0.0);
    (ms - z) / (ms + z)
}

/// Pressure-release sea surface.
pub const SURFACE_REFLECTION: f64 = -1.0;
