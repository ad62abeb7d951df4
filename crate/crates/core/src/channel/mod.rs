//! Statistical underwater acoustic channel.
//!
//! The response follows the multipath form
//!
//! ```text
//! H(f, t) = H0 * sum_p h_p * g_p(f, t) * exp(-j 2 pi f tau_p)
//! g_p(f, t) = sum_i g_{p,i} * exp(j 2 pi f (a_p t - dtau_{p,i}))
//! ```
//!
//! Macro paths come from the image method, large-scale gains from spreading
//! plus Thorp absorption and boundary reflections, and the small-scale term
//! `g_p` from a set of random intrapaths per macro path.

mod geometry;
mod propagation;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::csi::CsiMatrix;
use crate::error::{invalid, Result};
use crate::rng::{rng_for, Stream};

pub use geometry::{trace_macro_paths, PathGeometry};
pub use propagation::{
    bottom_reflection_coefficient, large_scale_gain, spreading_absorption_gain,
    thorp_absorption, SURFACE_REFLECTION,
};

/// Largest Doppler rate a path may carry.
pub const MAX_DOPPLER_RATE: f64 = 1e-3;

/// Physical environment and surrogate fading parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig {
    pub water_depth: f64,
    pub tx_depth: f64,
    pub rx_depth: f64,
    pub range: f64,
    pub spreading_factor: f64,
    pub c_water: f64,
    pub c_bottom: f64,
    /// Bottom density over water density.
    pub bottom_density_ratio: f64,
    pub n_intrapaths: usize,
    pub tx_drift: f64,
    pub rx_drift: f64,
    /// Standard deviation of the transmitter vehicular speed.
    pub tx_vehicular_sigma: f64,
    pub rx_vehicular: f64,
    pub n_macro_paths: usize,
    pub intrapath_delay_mean: f64,
    pub intrapath_gain_decay: f64,
    /// Frequency at which absorption is evaluated for the large-scale gains.
    pub reference_frequency: f64,
    /// Model the channel after the receiver has removed the Doppler rate of
    /// the first arrival, leaving only the differential rates between paths.
    pub doppler_compensation: bool,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            water_depth: 100.0,
            tx_depth: 20.0,
            rx_depth: 50.0,
            range: 1000.0,
            spreading_factor: 1.7,
            c_water: 1500.0,
            c_bottom: 1200.0,
            bottom_density_ratio: 1.5,
            n_intrapaths: 20,
            tx_drift: 0.1,
            rx_drift: 0.02,
            tx_vehicular_sigma: 1.0,
            rx_vehicular: 0.0,
            n_macro_paths: 8,
            intrapath_delay_mean: 1e-3,
            intrapath_gain_decay: 0.7,
            reference_frequency: 16_000.0,
            doppler_compensation: true,
        }
    }
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<()> {
        let in_column = |d: f64| d > 0.0 && d < self.water_depth;
        if !(self.water_depth > 0.0) || !in_column(self.tx_depth) || !in_column(self.rx_depth) {
            return Err(invalid("transmitter and receiver depths must lie inside the water column"));
        }
        if !(self.range > 0.0) {
            return Err(invalid("range must be positive"));
        }
        if !(self.spreading_factor > 0.0) {
            return Err(invalid("spreading factor must be positive"));
        }
        if !(self.c_water > 0.0 && self.c_bottom > 0.0 && self.bottom_density_ratio > 0.0) {
            return Err(invalid("sound speeds and density ratio must be positive"));
        }
        if self.n_intrapaths == 0 {
            return Err(invalid("need at least one intrapath"));
        }
        if self.n_macro_paths == 0 {
            return Err(invalid("need at least one macro path"));
        }
        if !(self.intrapath_delay_mean >= 0.0) {
            return Err(invalid("intrapath delay mean must be nonnegative"));
        }
        if !(self.intrapath_gain_decay > 0.0 && self.intrapath_gain_decay <= 1.0) {
            return Err(invalid("intrapath gain decay must lie in (0, 1]"));
        }
        if !(self.tx_vehicular_sigma >= 0.0) {
            return Err(invalid("vehicular speed deviation must be nonnegative"));
        }
        if !(self.reference_frequency > 0.0) {
            return Err(invalid("reference frequency must be positive"));
        }
        Ok(())
    }
}

/// One propagation path with its large-scale parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPath {
    pub geometry: PathGeometry,
    /// Spreading and absorption gain, strictly positive.
    pub large_scale_gain: f64,
    /// Product of all surface and bottom reflection coefficients.
    pub reflection: Complex64,
    /// Dimensionless Doppler rate `v / c`.
    pub doppler_rate: f64,
}

impl MacroPath {
    pub fn length(&self) -> f64 {
        self.geometry.length
    }

    pub fn delay(&self) -> f64 {
        self.geometry.delay
    }

    /// Signed complex gain `h_p` including reflections.
    pub fn gain(&self) -> Complex64 {
        self.reflection * self.large_scale_gain
    }
}

/// A drawn channel: macro paths plus their intrapath structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub macro_paths: Vec<MacroPath>,
    pub intrapath_gains: Vec<Vec<Complex64>>,
    pub intrapath_delays: Vec<Vec<f64>>,
    pub nominal_response: f64,
    pub seed: u64,
}

/// Deterministic large-scale paths of an environment; Doppler rates are zero.
pub fn macro_paths(env: &EnvironmentConfig) -> Result<Vec<MacroPath>> {
    env.validate()?;
    let geometry = trace_macro_paths(
        env.water_depth,
        env.tx_depth,
        env.rx_depth,
        env.range,
        env.c_water,
        env.n_macro_paths,
    )?;
    let f_khz = env.reference_frequency / 1000.0;
    geometry
        .into_iter()
        .map(|g| {
            let bottom = bottom_reflection_coefficient(
                g.grazing_angle.max(f64::MIN_POSITIVE),
                env.c_water,
                env.c_bottom,
                env.bottom_density_ratio,
            );
            let reflection = bottom.powu(g.n_bottom_bounces)
                * SURFACE_REFLECTION.powi(g.n_surface_bounces as i32);
            Ok(MacroPath {
                large_scale_gain: large_scale_gain(g.length, f_khz, env.spreading_factor)?,
                reflection,
                doppler_rate: 0.0,
                geometry: g,
            })
        })
        .collect()
}

/// Draws the small-scale structure of one channel realization.
///
/// The vehicular speed is drawn once per realization and projected onto each
/// path's launch angle. Intrapath gains are circular Gaussian with variances
/// `decay^i` normalized to unit sum; intrapath delay offsets are exponential.
pub fn realize_channel(env: &EnvironmentConfig, seed: u64) -> Result<ChannelRealization> {
    let mut paths = macro_paths(env)?;
    let mut rng = rng_for(seed, Stream::Channel);

    let vehicular = if env.tx_vehicular_sigma > 0.0 {
        Normal::new(0.0, env.tx_vehicular_sigma)
            .map_err(|e| invalid(e.to_string()))?
            .sample(&mut rng)
    } else {
        0.0
    };
    let speed_limit = MAX_DOPPLER_RATE * env.c_water * (1.0 - 1e-9);
    let speed = (env.tx_drift + env.rx_drift + vehicular + env.rx_vehicular)
        .clamp(-speed_limit, speed_limit);
    let reference_cos = paths[0].geometry.grazing_angle.cos();
    for p in &mut paths {
        let cos = p.geometry.grazing_angle.cos();
        let projected = if env.doppler_compensation {
            cos - reference_cos
        } else {
            cos
        };
        p.doppler_rate = speed * projected / env.c_water;
    }

    let weights: Vec<f64> = (0..env.n_intrapaths)
        .map(|i| env.intrapath_gain_decay.powi(i as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    let delay_dist = if env.intrapath_delay_mean > 0.0 {
        Some(Exp::new(1.0 / env.intrapath_delay_mean).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };

    let mut intrapath_gains = Vec::with_capacity(paths.len());
    let mut intrapath_delays = Vec::with_capacity(paths.len());
    for _ in &paths {
        let mut gains = Vec::with_capacity(env.n_intrapaths);
        let mut delays = Vec::with_capacity(env.n_intrapaths);
        for w in &weights {
            let sigma = (w / total / 2.0).sqrt();
            let re: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
            let im: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
            gains.push(Complex64::new(re, im));
            delays.push(delay_dist.map_or(0.0, |d| d.sample(&mut rng)));
        }
        intrapath_gains.push(gains);
        intrapath_delays.push(delays);
    }

    // E|H|^2 = H0^2 * sum_p |h_p|^2 because intrapath gains are zero-mean,
    // independent across paths and of unit total variance per path.
    let path_power: f64 = paths.iter().map(|p| p.gain().norm_sqr()).sum();
    Ok(ChannelRealization {
        macro_paths: paths,
        intrapath_gains,
        intrapath_delays,
        nominal_response: 1.0 / path_power.sqrt(),
        seed,
    })
}

/// `exp(j 2 pi cycles)`, reducing the argument before scaling by 2 pi.
#[inline]
fn phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, std::f64::consts::TAU * (cycles - cycles.round()))
}

/// Samples `H(f, t)` on a frequency grid (Hz) and a time grid (s).
pub fn sample_csi(real: &ChannelRealization, f_grid: &[f64], t_grid: &[f64]) -> Result<CsiMatrix> {
    if f_grid.is_empty() || t_grid.is_empty() {
        return Err(invalid("frequency and time grids must be nonempty"));
    }
    if real.intrapath_gains.len() != real.macro_paths.len()
        || real.intrapath_delays.len() != real.macro_paths.len()
    {
        return Err(invalid("intrapath lists must match the macro path count"));
    }
    let mut h = CsiMatrix::zeros(f_grid.len(), t_grid.len());
    for (p, path) in real.macro_paths.iter().enumerate() {
        let gains = &real.intrapath_gains[p];
        let delays = &real.intrapath_delays[p];
        if gains.len() != delays.len() {
            return Err(invalid("intrapath gains and delays differ in length"));
        }
        let hp = path.gain() * real.nominal_response;
        for (s, &f) in f_grid.iter().enumerate() {
            // The intrapath sum factors into a time-invariant spread term and
            // the path's Doppler phasor.
            let spread: Complex64 = gains
                .iter()
                .zip(delays)
                .map(|(&g, &dt)| g * phasor(-f * dt))
                .sum();
            let base = hp * spread * phasor(-f * path.delay());
            for (m, &t) in t_grid.iter().enumerate() {
                let v = h.get(s, m) + base * phasor(f * path.doppler_rate * t);
                h.set(s, m, v);
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grids(n_sub: usize, n_sym: usize) -> (Vec<f64>, Vec<f64>) {
        let spacing = 7.8125;
        let f = (0..n_sub)
            .map(|s| 16_000.0 - 250.0 + s as f64 * spacing)
            .collect();
        let t = (0..n_sym).map(|m| m as f64 / spacing).collect();
        (f, t)
    }

    fn single_path(delay: f64, doppler: f64) -> ChannelRealization {
        let geometry = PathGeometry {
            length: delay * 1500.0,
            delay,
            vertical: 0.0,
            grazing_angle: 0.0,
            n_surface_bounces: 0,
            n_bottom_bounces: 0,
        };
        ChannelRealization {
            macro_paths: vec![MacroPath {
                geometry,
                large_scale_gain: 1.0,
                reflection: Complex64::new(1.0, 0.0),
                doppler_rate: doppler,
            }],
            intrapath_gains: vec![vec![Complex64::new(1.0, 0.0)]],
            intrapath_delays: vec![vec![0.0]],
            nominal_response: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn degenerate_single_path_is_unity() {
        let (f, t) = grids(8, 4);
        let h = sample_csi(&single_path(0.0, 0.0), &f, &t).unwrap();
        assert!(h.as_slice().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn delayed_path_has_unit_modulus() {
        let (f, t) = grids(16, 4);
        let h = sample_csi(&single_path(0.0123, 0.0), &f, &t).unwrap();
        assert!(h.as_slice().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_intrapath_reduces_to_doppler_phasor() {
        let (f, t) = grids(4, 6);
        let a = 3e-5;
        let h = sample_csi(&single_path(0.0, a), &f, &t).unwrap();
        for s in 0..4 {
            for m in 0..6 {
                let expected = Complex64::from_polar(1.0, std::f64::consts::TAU * f[s] * a * t[m]);
                assert!((h.get(s, m) - expected).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn half_period_delay_cancels() {
        let f0 = 16_000.0;
        let mut two = single_path(0.0, 0.0);
        let mut second = two.macro_paths[0].clone();
        second.geometry.delay = 1.0 / (2.0 * f0);
        two.macro_paths.push(second);
        two.intrapath_gains.push(vec![Complex64::new(1.0, 0.0)]);
        two.intrapath_delays.push(vec![0.0]);
        let h = sample_csi(&two, &[f0], &[0.0, 0.1]).unwrap();
        assert!(h.as_slice().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn rejects_empty_grids() {
        let r = single_path(0.0, 0.0);
        assert!(sample_csi(&r, &[], &[0.0]).is_err());
        assert!(sample_csi(&r, &[1.0], &[]).is_err());
    }

    #[test]
    fn realization_is_deterministic() {
        let env = EnvironmentConfig::default();
        let a = realize_channel(&env, 42).unwrap();
        let b = realize_channel(&env, 42).unwrap();
        assert_eq!(a, b);
        let c = realize_channel(&env, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn doppler_rates_bounded_and_delays_causal() {
        for compensated in [true, false] {
            let env = EnvironmentConfig {
                doppler_compensation: compensated,
                tx_vehicular_sigma: 5.0,
                ..Default::default()
            };
            for seed in 0..50 {
                let r = realize_channel(&env, seed).unwrap();
                for p in &r.macro_paths {
                    assert!(p.doppler_rate.abs() < MAX_DOPPLER_RATE);
                    assert!(p.delay() >= env.range / env.c_water);
                    assert!(p.length() >= env.range);
                    assert!(p.large_scale_gain > 0.0);
                }
            }
        }
    }

    #[test]
    fn invalid_environment_rejected() {
        let env = EnvironmentConfig {
            rx_depth: 120.0,
            ..Default::default()
        };
        assert!(realize_channel(&env, 1).is_err());
        let env = EnvironmentConfig {
            n_macro_paths: 0,
            ..Default::default()
        };
        assert!(realize_channel(&env, 1).is_err());
    }

    #[test]
    fn unit_average_power() {
        let env = EnvironmentConfig::default();
        let (f, t) = grids(64, 16);
        let n = 200;
        let mean: f64 = (0..n)
            .map(|seed| {
                let h = sample_csi(&realize_channel(&env, seed).unwrap(), &f, &t).unwrap();
                h.frobenius_sq() / (64.0 * 16.0)
            })
            .sum::<f64>()
            / n as f64;
        assert!((0.8..=1.2).contains(&mean), "mean power {mean}");
    }

    #[test]
    fn rotating_intrapath_gains_rotates_response() {
        let env = EnvironmentConfig::default();
        let (f, t) = grids(8, 4);
        let r = realize_channel(&env, 5).unwrap();
        let c = Complex64::from_polar(1.0, 0.7);
        let mut rotated = r.clone();
        for g in rotated.intrapath_gains.iter_mut().flatten() {
            *g *= c;
        }
        let h = sample_csi(&r, &f, &t).unwrap();
        let hr = sample_csi(&rotated, &f, &t).unwrap();
        for (a, b) in h.as_slice().iter().zip(hr.as_slice()) {
            assert!((a * c - b).norm() < 1e-12);
        }
    }

    #[test]
    fn superposition_over_disjoint_paths() {
        let env = EnvironmentConfig::default();
        let (f, t) = grids(8, 4);
        let r = realize_channel(&env, 9).unwrap();
        let split = |range: std::ops::Range<usize>| ChannelRealization {
            macro_paths: r.macro_paths[range.clone()].to_vec(),
            intrapath_gains: r.intrapath_gains[range.clone()].to_vec(),
            intrapath_delays: r.intrapath_delays[range].to_vec(),
            nominal_response: r.nominal_response,
            seed: r.seed,
        };
        let all = sample_csi(&r, &f, &t).unwrap();
        let a = sample_csi(&split(0..3), &f, &t).unwrap();
        let b = sample_csi(&split(3..8), &f, &t).unwrap();
        for i in 0..all.as_slice().len() {
            let sum = a.as_slice()[i] + b.as_slice()[i];
            assert_relative_eq!(all.as_slice()[i].re, sum.re, epsilon = 1e-12);
            assert_relative_eq!(all.as_slice()[i].im, sum.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn static_channel_is_constant_in_time() {
        let env = EnvironmentConfig {
            tx_drift: 0.0,
            rx_drift: 0.0,
            tx_vehicular_sigma: 0.0,
            intrapath_delay_mean: 0.0,
            ..Default::default()
        };
        let (f, t) = grids(8, 6);
        let h = sample_csi(&realize_channel(&env, 2).unwrap(), &f, &t).unwrap();
        for s in 0..8 {
            let row = h.row(s);
            assert!(row.iter().all(|v| *v == row[0]));
        }
    }
}
