//! Classical channel estimation front end.
//!
//! Least-squares estimates on the pilot columns are interpolated along the
//! symbol axis into a full (raw) CSI matrix, split into real and imaginary
//! planes, and multiplied by a scaling factor so that the network sees
//! values of order one rather than the tiny magnitudes of physical CSI.

mod spline;

use num_complex::Complex64;

use crate::csi::{CsiMatrix, TwoChannelCsi};
use crate::error::{invalid, shape_err, Error, Result};
use crate::ofdm::{OfdmFrameGrid, PilotPattern, SymbolGrid};

pub use spline::{Linear, NaturalCubicSpline};

/// Pilot counts at or above this use the natural cubic spline.
pub const SPLINE_MIN_PILOTS: usize = 4;

/// Positive multiplier applied to network inputs and targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFactor(f64);

impl ScalingFactor {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(invalid(format!("scaling factor must be positive, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ScalingFactor {
    fn default() -> Self {
        Self(10.0)
    }
}

/// Element-wise `Y / X` on the pilot cells.
pub fn ls_estimate(y_pilot: &CsiMatrix, x_pilot: &CsiMatrix) -> Result<CsiMatrix> {
    y_pilot.check_same_shape(x_pilot)?;
    if x_pilot.as_slice().iter().any(|x| x.norm_sqr() == 0.0) {
        return Err(invalid("pilot value of zero cannot be divided out"));
    }
    let (ns, np) = y_pilot.shape();
    let values = y_pilot
        .as_slice()
        .iter()
        .zip(x_pilot.as_slice())
        .map(|(y, x)| y / x)
        .collect();
    CsiMatrix::new(ns, np, values)
}

/// Interpolates each subcarrier row of the pilot estimates (`S x P`) onto all
/// `n_symbols` symbols, real and imaginary parts separately.
///
/// Four or more pilots use a natural cubic spline, fewer a piecewise-linear
/// interpolant. Both pass through the knots and extend linearly past the
/// outermost pilots.
pub fn interpolate_time(
    pilot_estimates: &CsiMatrix,
    pilot_indices: &[usize],
    n_symbols: usize,
) -> Result<CsiMatrix> {
    let (ns, np) = pilot_estimates.shape();
    if pilot_indices.len() < 2 {
        return Err(invalid("interpolation needs at least two pilot symbols"));
    }
    if np != pilot_indices.len() {
        return Err(shape_err(format!("{} pilot columns", pilot_indices.len()), np));
    }
    if pilot_indices.iter().any(|&i| i >= n_symbols) {
        return Err(invalid("pilot index outside the frame"));
    }
    let xs: Vec<f64> = pilot_indices.iter().map(|&i| i as f64).collect();
    let mut out = CsiMatrix::zeros(ns, n_symbols);
    let mut re = vec![0.0; np];
    let mut im = vec![0.0; np];
    for s in 0..ns {
        for (p, v) in pilot_estimates.row(s).iter().enumerate() {
            re[p] = v.re;
            im[p] = v.im;
        }
        let row = out.row_mut(s);
        if np >= SPLINE_MIN_PILOTS {
            let (fr, fi) = (NaturalCubicSpline::new(&xs, &re)?, NaturalCubicSpline::new(&xs, &im)?);
            for (m, v) in row.iter_mut().enumerate() {
                *v = Complex64::new(fr.eval(m as f64), fi.eval(m as f64));
            }
        } else {
            let (fr, fi) = (Linear::new(&xs, &re)?, Linear::new(&xs, &im)?);
            for (m, v) in row.iter_mut().enumerate() {
                *v = Complex64::new(fr.eval(m as f64), fi.eval(m as f64));
            }
        }
        // Knots are reproduced bit-exactly.
        for (p, &m) in pilot_indices.iter().enumerate() {
            row[m] = pilot_estimates.get(s, p);
        }
    }
    CsiMatrix::new(ns, n_symbols, out.into_vec())
}

pub fn to_two_channel(h: &CsiMatrix) -> TwoChannelCsi {
    let (ns, nm) = h.shape();
    let n = ns * nm;
    let mut data = vec![0.0; 2 * n];
    for (i, v) in h.as_slice().iter().enumerate() {
        data[i] = v.re;
        data[n + i] = v.im;
    }
    TwoChannelCsi::new(ns, nm, data).expect("finite CSI maps to a finite tensor")
}

pub fn from_two_channel(t: &TwoChannelCsi) -> CsiMatrix {
    let (ns, nm) = t.shape();
    let values = t
        .plane(0)
        .iter()
        .zip(t.plane(1))
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    CsiMatrix::new(ns, nm, values).expect("finite tensor maps to finite CSI")
}

pub fn scale(t: &TwoChannelCsi, factor: ScalingFactor) -> TwoChannelCsi {
    t.map(|v| v * factor.value())
}

pub fn unscale(t: &TwoChannelCsi, factor: ScalingFactor) -> TwoChannelCsi {
    t.map(|v| v / factor.value())
}

/// Pilot columns of a received grid, subcarriers by pilots.
pub fn pilot_columns(grid: &SymbolGrid, pattern: &PilotPattern) -> Result<CsiMatrix> {
    let (ns, nm) = grid.shape();
    if pattern.indices().iter().any(|&i| i >= nm) {
        return Err(invalid("pilot pattern exceeds the grid"));
    }
    Ok(CsiMatrix::from_fn(ns, pattern.len(), |s, p| {
        grid.get(s, pattern.indices()[p])
    }))
}

/// LS estimates on the pilot columns of a received grid.
pub fn pilot_ls_estimates(rx: &SymbolGrid, pattern: &PilotPattern) -> Result<CsiMatrix> {
    let y = pilot_columns(rx, pattern)?;
    ls_estimate(&y, &pattern.values_grid(rx.subcarriers()))
}

/// LS on the pilots followed by time interpolation: the raw CSI matrix.
pub fn raw_csi(rx: &SymbolGrid, pattern: &PilotPattern) -> Result<CsiMatrix> {
    let est = pilot_ls_estimates(rx, pattern)?;
    interpolate_time(&est, pattern.indices(), rx.symbols())
}

/// LS, interpolation, two-channel split and scaling, in that order.
pub fn raw_estimate_pipeline(
    frame: &OfdmFrameGrid,
    pattern: &PilotPattern,
    factor: ScalingFactor,
) -> Result<TwoChannelCsi> {
    let rx = frame
        .rx_symbols
        .as_ref()
        .ok_or(Error::Empty("received grid"))?;
    Ok(scale(&to_two_channel(&raw_csi(rx, pattern)?), factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ofdm::{apply_channel, build_frame, OfdmConfig};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ls_hand_division() {
        let y = CsiMatrix::new(1, 1, vec![c(2.0, 2.0)]).unwrap();
        let x = CsiMatrix::new(1, 1, vec![c(1.0, 1.0)]).unwrap();
        assert_eq!(ls_estimate(&y, &x).unwrap().get(0, 0), c(2.0, 0.0));
        let ones = ls_estimate(&x, &x).unwrap();
        assert_eq!(ones.get(0, 0), c(1.0, 0.0));
        let zero = CsiMatrix::new(1, 1, vec![c(0.0, 0.0)]).unwrap();
        assert!(ls_estimate(&y, &zero).is_err());
    }

    #[test]
    fn linear_rows_reproduced_in_both_modes() {
        for indices in [vec![3, 11], vec![2, 6, 10, 14]] {
            let f = |s: usize, m: f64| c(0.1 * s as f64 + 0.05 * m, -0.3 + 0.02 * m * (s as f64 + 1.0));
            let pilots = CsiMatrix::from_fn(5, indices.len(), |s, p| f(s, indices[p] as f64));
            let h = interpolate_time(&pilots, &indices, 16).unwrap();
            for s in 0..5 {
                for m in 0..16 {
                    assert!((h.get(s, m) - f(s, m as f64)).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn constant_rows_stay_constant() {
        let pilots = CsiMatrix::filled(3, 4, c(0.25, -1.5));
        let h = interpolate_time(&pilots, &[2, 6, 10, 14], 16).unwrap();
        assert!(h.as_slice().iter().all(|v| (v - c(0.25, -1.5)).norm() < 1e-15));
    }

    #[test]
    fn cubic_rows_match_spline_definition() {
        let indices = [2usize, 6, 10, 14];
        let cubic = |m: f64| 0.01 * m * m * m - 0.2 * m * m + m - 2.0;
        let pilots = CsiMatrix::from_fn(1, 4, |_, p| c(cubic(indices[p] as f64), 0.0));
        let h = interpolate_time(&pilots, &indices, 16).unwrap();
        let xs: Vec<f64> = indices.iter().map(|&i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| cubic(x)).collect();
        let reference = NaturalCubicSpline::new(&xs, &ys).unwrap();
        let mut interior_error = 0.0f64;
        for m in 2..=14 {
            assert!((h.get(0, m).re - reference.eval(m as f64)).abs() < 1e-12);
            interior_error = interior_error.max((h.get(0, m).re - cubic(m as f64)).abs());
        }
        assert!(interior_error > 0.0 && interior_error < 2.0);
    }

    #[test]
    fn interpolation_errors() {
        let pilots = CsiMatrix::filled(2, 1, c(1.0, 0.0));
        assert!(interpolate_time(&pilots, &[3], 16).is_err());
        let pilots = CsiMatrix::filled(2, 2, c(1.0, 0.0));
        assert!(interpolate_time(&pilots, &[3, 16], 16).is_err());
        assert!(interpolate_time(&pilots, &[1, 2, 3], 16).is_err());
    }

    #[test]
    fn two_channel_examples() {
        let h = CsiMatrix::new(1, 1, vec![c(1.0, 2.0)]).unwrap();
        let t = to_two_channel(&h);
        assert_eq!(t.plane(0), &[1.0]);
        assert_eq!(t.plane(1), &[2.0]);
        let real = CsiMatrix::from_fn(3, 2, |s, m| c((s + m) as f64, 0.0));
        assert!(to_two_channel(&real).plane(1).iter().all(|&v| v == 0.0));
        let back = from_two_channel(&TwoChannelCsi::new(1, 1, vec![3.0, 0.0]).unwrap());
        assert_eq!(back.get(0, 0), c(3.0, 0.0));
    }

    #[test]
    fn scaling_examples() {
        let t = TwoChannelCsi::new(1, 1, vec![0.01, -0.02]).unwrap();
        let f = ScalingFactor::default();
        let s = scale(&t, f);
        assert!((s.as_slice()[0] - 0.1).abs() < 1e-16);
        assert_eq!(scale(&t, ScalingFactor::new(1.0).unwrap()), t);
        assert!(ScalingFactor::new(0.0).is_err());
        assert!(ScalingFactor::new(-10.0).is_err());
    }

    fn arb_csi() -> impl Strategy<Value = CsiMatrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(ns, nm)| {
            proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), ns * nm).prop_map(move |v| {
                CsiMatrix::new(ns, nm, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn two_channel_is_a_norm_preserving_bijection(h in arb_csi()) {
            let t = to_two_channel(&h);
            prop_assert_eq!(from_two_channel(&t), h.clone());
            prop_assert!((t.frobenius_sq() - h.frobenius_sq()).abs() <= 1e-9 * h.frobenius_sq().max(1.0));
        }

        #[test]
        fn scaling_round_trip_and_commutes(h in arb_csi(), f in 0.01f64..100.0) {
            let f = ScalingFactor::new(f).unwrap();
            let t = to_two_channel(&h);
            let back = unscale(&scale(&t, f), f);
            for (a, b) in back.as_slice().iter().zip(t.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            let via_complex = to_two_channel(&h.map(|v| v * f.value()));
            prop_assert_eq!(scale(&t, f), via_complex);
        }
    }

    fn noiseless_frame(h: &CsiMatrix, pattern: &PilotPattern) -> OfdmFrameGrid {
        let cfg = OfdmConfig::subband(h.subcarriers());
        let bits: Vec<u8> = (0..pattern.payload_len(&cfg)).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let mut frame = build_frame(&cfg, pattern, &bits).unwrap();
        frame.rx_symbols = Some(apply_channel(&frame, h, f64::INFINITY, 0).unwrap());
        frame
    }

    #[test]
    fn pipeline_exact_for_time_constant_channel() {
        let h = CsiMatrix::from_fn(8, 16, |s, _| c(0.3 - 0.05 * s as f64, 0.1 * s as f64));
        let f = ScalingFactor::default();
        for pattern in [PilotPattern::two_symbol(), PilotPattern::four_symbol()] {
            let out = raw_estimate_pipeline(&noiseless_frame(&h, &pattern), &pattern, f).unwrap();
            let expected = scale(&to_two_channel(&h), f);
            for (a, b) in out.as_slice().iter().zip(expected.as_slice()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pipeline_exact_for_time_linear_channel() {
        let h = CsiMatrix::from_fn(8, 16, |s, m| {
            c(0.2 + 0.01 * m as f64 * s as f64, -0.4 + 0.03 * m as f64)
        });
        let f = ScalingFactor::default();
        for pattern in [PilotPattern::two_symbol(), PilotPattern::four_symbol()] {
            let out = raw_estimate_pipeline(&noiseless_frame(&h, &pattern), &pattern, f).unwrap();
            let expected = scale(&to_two_channel(&h), f);
            let err: f64 = out.as_slice().iter().zip(expected.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(err.sqrt() <= 1e-12 * expected.frobenius_sq().sqrt());
        }
    }

    #[test]
    fn noisy_pipeline_equals_ls_error_at_pilots() {
        let h = CsiMatrix::from_fn(8, 16, |s, m| c(0.5 + 0.01 * s as f64, 0.02 * m as f64));
        let pattern = PilotPattern::four_symbol();
        let mut frame = noiseless_frame(&h, &pattern);
        let rx = apply_channel(&frame, &h, 5.0, 17).unwrap();
        frame.rx_symbols = Some(rx.clone());
        let raw = from_two_channel(&unscale(
            &raw_estimate_pipeline(&frame, &pattern, ScalingFactor::default()).unwrap(),
            ScalingFactor::default(),
        ));
        let ls = pilot_ls_estimates(&rx, &pattern).unwrap();
        for s in 0..8 {
            for (p, &m) in pattern.indices().iter().enumerate() {
                assert!((raw.get(s, m) - ls.get(s, p)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_requires_received_grid() {
        let h = CsiMatrix::filled(4, 16, c(1.0, 0.0));
        let pattern = PilotPattern::two_symbol();
        let mut frame = noiseless_frame(&h, &pattern);
        frame.rx_symbols = None;
        assert!(raw_estimate_pipeline(&frame, &pattern, ScalingFactor::default()).is_err());
    }
}
