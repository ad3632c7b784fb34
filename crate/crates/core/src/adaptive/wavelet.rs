//! Orthonormal Haar transform, hard thresholding and dyadic padding.

use crate::error::{FdError, Result};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Full-depth Haar decomposition of a `2^J` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoefficients {
    /// The single coarsest scaling coefficient.
    pub scaling: f64,
    /// Detail coefficients by level, coarsest (length 1) to finest (length `2^(J−1)`).
    pub details: Vec<Vec<f64>>,
}

impl HaarCoefficients {
    pub fn len(&self) -> usize {
        1 + self.details.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[scaling, coarsest details, …, finest details]`
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.scaling);
        for d in &self.details {
            v.extend_from_slice(d);
        }
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        check_dyadic(v.len())?;
        let mut details = Vec::new();
        let mut start = 1;
        let mut width = 1;
        while start < v.len() {
            details.push(v[start..start + width].to_vec());
            start += width;
            width *= 2;
        }
        Ok(HaarCoefficients {
            scaling: v[0],
            details,
        })
    }
}

fn check_dyadic(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(FdError::invalid(format!("length {n} is not a power of two")));
    }
    Ok(())
}

pub fn haar_dwt(values: &[f64]) -> Result<HaarCoefficients> {
    check_dyadic(values.len())?;
    let mut approx = values.to_vec();
    let mut details = Vec::new();
    while approx.len() > 1 {
        let half = approx.len() / 2;
        let mut a = Vec::with_capacity(half);
        let mut d = Vec::with_capacity(half);
        for pair in approx.chunks_exact(2) {
            a.push((pair[0] + pair[1]) * SQRT_HALF);
            d.push((pair[0] - pair[1]) * SQRT_HALF);
        }
        details.push(d);
        approx = a;
    }
    details.reverse();
    Ok(HaarCoefficients {
        scaling: approx[0],
        details,
    })
}

pub fn haar_idwt(coeffs: &HaarCoefficients) -> Result<Vec<f64>> {
    let mut approx = vec![coeffs.scaling];
    for d in &coeffs.details {
        if d.len() != approx.len() {
            return Err(FdError::invalid(format!(
                "detail level of length {} after an approximation of length {}",
                d.len(),
                approx.len()
            )));
        }
        let mut next = Vec::with_capacity(2 * approx.len());
        for (a, d) in approx.iter().zip(d) {
            next.push((a + d) * SQRT_HALF);
            next.push((a - d) * SQRT_HALF);
        }
        approx = next;
    }
    Ok(approx)
}

/// Zero every detail coefficient with `|d| < threshold`. `f64::INFINITY`
/// removes all details.
pub fn hard_threshold(coeffs: &HaarCoefficients, threshold: f64) -> Result<HaarCoefficients> {
    if !(threshold >= 0.0) {
        return Err(FdError::invalid(format!("threshold {threshold} must be non-negative")));
    }
    let mut out = coeffs.clone();
    for level in &mut out.details {
        for d in level.iter_mut() {
            if d.abs() < threshold {
                *d = 0.0;
            }
        }
    }
    Ok(out)
}

/// `σ̂ √(2 ln N)` with `σ̂ = median |finest details| / 0.6745`.
pub fn universal_threshold(coeffs: &HaarCoefficients) -> f64 {
    let Some(finest) = coeffs.details.last() else {
        return 0.0;
    };
    let mut abs: Vec<f64> = finest.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let k = abs.len();
    let median = if k % 2 == 1 {
        abs[k / 2]
    } else {
        0.5 * (abs[k / 2 - 1] + abs[k / 2])
    };
    median / 0.6745 * (2.0 * (coeffs.len() as f64).ln()).sqrt()
}

/// Extend to the next power of two by mirroring the right end
/// (`…, x[m−2], x[m−1] | x[m−1], x[m−2], …`).
pub fn pad_dyadic(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let target = m.next_power_of_two();
    let mut out = values.to_vec();
    let period = 2 * m;
    for i in m..target {
        let r = i % period;
        out.push(if r < m { values[r] } else { values[period - 1 - r] });
    }
    out
}

/// Universal hard-threshold denoising of a single curve of any length.
pub fn denoise(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(FdError::invalid("empty signal"));
    }
    let coeffs = haar_dwt(&pad_dyadic(values))?;
    let thr = universal_threshold(&coeffs);
    let mut out = haar_idwt(&hard_threshold(&coeffs, thr)?)?;
    out.truncate(values.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal() {
        let c = haar_dwt(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((c.scaling - 2.0).abs() < 1e-15);
        assert!(c.details.iter().flatten().all(|d| d.abs() < 1e-15));
        assert_eq!(c.details.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn non_dyadic_rejected() {
        assert!(haar_dwt(&[1.0, 2.0, 3.0]).is_err());
        assert!(haar_dwt(&[]).is_err());
        assert!(HaarCoefficients::from_vec(&[0.0; 6]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let x: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        let c = haar_dwt(&x).unwrap();
        let back = HaarCoefficients::from_vec(&c.to_vec()).unwrap();
        assert_eq!(back, c);
        let y = haar_idwt(&c).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn threshold_limits() {
        let c = haar_dwt(&[4.0, 2.0, 5.0, 1.0, 0.0, 3.0, 3.0, 3.5]).unwrap();
        assert_eq!(hard_threshold(&c, 0.0).unwrap(), c);
        let smooth = hard_threshold(&c, f64::INFINITY).unwrap();
        let y = haar_idwt(&smooth).unwrap();
        let mean = 21.5 / 8.0;
        assert!(y.iter().all(|v| (v - mean).abs() < 1e-12));
        assert!(hard_threshold(&c, -1.0).is_err());
        assert!(hard_threshold(&c, f64::NAN).is_err());
    }

    #[test]
    fn reflection_padding() {
        let p = pad_dyadic(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 4.0, 3.0]);
        assert_eq!(pad_dyadic(&[1.0, 2.0]).len(), 2);
        assert_eq!(pad_dyadic(&vec![0.0; 238]).len(), 256);
    }
}
