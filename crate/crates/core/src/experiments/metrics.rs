//! Error metrics and bootstrap intervals.

use rand::Rng;

use crate::csi::CsiMatrix;
use crate::error::{shape_err, Error, Result};
use crate::ofdm::{compute_ber, demodulate_payload, equalize, OfdmFrameGrid};
use crate::rng::{rng_for, Stream};

/// `||est - truth||_F^2 / (S M)` on complex matrices.
pub fn frame_mse(estimate: &CsiMatrix, truth: &CsiMatrix) -> Result<f64> {
    estimate.check_same_shape(truth)?;
    let sum: f64 = estimate.as_slice().iter().zip(truth.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(sum / truth.as_slice().len() as f64)
}

/// Mean of [`frame_mse`] over paired lists.
pub fn evaluate_mse(estimates: &[CsiMatrix], truths: &[CsiMatrix]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(shape_err(truths.len(), estimates.len()));
    }
    if truths.is_empty() {
        return Err(Error::Empty("frames"));
    }
    let per_frame = estimates.iter().zip(truths).map(|(e, t)| frame_mse(e, t)).collect::<Result<Vec<_>>>()?;
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Bit error rate of one frame after zero-forcing with `estimate`.
pub fn frame_ber(frame: &OfdmFrameGrid, estimate: &CsiMatrix) -> Result<f64> {
    let rx = frame.rx_symbols.as_ref().ok_or(Error::Empty("received grid"))?;
    let eq = equalize(rx, estimate)?;
    compute_ber(&frame.payload_bits, &demodulate_payload(&frame.pattern, &eq.symbols))
}

/// Mean BER over frames; frames of one configuration carry equal bit counts,
/// so this is also the pooled error fraction.
pub fn evaluate_ber(frames: &[OfdmFrameGrid], estimates: &[CsiMatrix]) -> Result<f64> {
    if frames.len() != estimates.len() {
        return Err(shape_err(frames.len(), estimates.len()));
    }
    if frames.is_empty() {
        return Err(Error::Empty("frames"));
    }
    let per_frame = frames.iter().zip(estimates).map(|(f, e)| frame_ber(f, e)).collect::<Result<Vec<_>>>()?;
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Percentile interval of the resampled mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("bootstrap sample"));
    }
    let mut rng = rng_for(seed, Stream::Bootstrap);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap interval of `mean(a - b)` over paired samples; `a` is
/// significantly smaller when the upper end is below zero.
pub fn paired_difference_ci(a: &[f64], b: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(shape_err(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    bootstrap_ci(&diffs, resamples, level, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;

    fn random_csi(rng: &mut impl Rng, s: usize, m: usize) -> CsiMatrix {
        CsiMatrix::from_fn(s, m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn exact_estimate_has_zero_mse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = random_csi(&mut rng, 4, 6);
        assert_eq!(evaluate_mse(&[h.clone()], &[h]).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let h = random_csi(&mut rng, 5, 3);
        let est = h.map(|z| z + 0.01);
        assert!((evaluate_mse(&[est], &[h]).unwrap() - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn matches_elementwise_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let truths: Vec<CsiMatrix> = (0..7).map(|_| random_csi(&mut rng, 3, 5)).collect();
        let ests: Vec<CsiMatrix> = (0..7).map(|_| random_csi(&mut rng, 3, 5)).collect();
        let mut total = 0.0;
        for (e, t) in ests.iter().zip(&truths) {
            let mut acc = 0.0;
            for s in 0..3 {
                for m in 0..5 {
                    let d = e.get(s, m) - t.get(s, m);
                    acc += d.re * d.re + d.im * d.im;
                }
            }
            total += acc / 15.0;
        }
        assert!((evaluate_mse(&ests, &truths).unwrap() - total / 7.0).abs() < 1e-12);
        assert!(evaluate_mse(&ests[..2], &truths).is_err());
    }

    #[test]
    fn bootstrap_brackets_mean_and_is_repeatable() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let (lo, hi) = bootstrap_ci(&v, 1000, 0.95, 5).unwrap();
        let m = mean(&v);
        assert!(lo < m && m < hi);
        assert_eq!(bootstrap_ci(&v, 1000, 0.95, 5).unwrap(), (lo, hi));
        assert_eq!(bootstrap_ci(&[2.0; 10], 100, 0.95, 0).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn paired_difference_detects_shift() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let (_, hi) = paired_difference_ci(&a, &b, 1000, 0.95, 1).unwrap();
        assert!(hi < 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&s, 0.0), 0.0);
        assert_eq!(quantile(&s, 1.0), 3.0);
        assert_eq!(quantile(&s, 0.5), 1.5);
    }
}
