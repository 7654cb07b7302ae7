use crate::error::{Error, Result};

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Values sampled over a support domain: nine samples of up to three channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchSample {
    pub channels: usize,
    pub values: [[f64; 3]; 9],
    pub valid: [bool; 9],
}

impl PatchSample {
    /// All-valid patch from per-sample channel values.
    pub fn from_values(channels: usize, values: &[[f64; 3]; 9]) -> Self {
        Self {
            channels,
            values: *values,
            valid: [true; 9],
        }
    }

    /// All-valid single-channel patch.
    pub fn gray(values: [f64; 9]) -> Self {
        let mut v = [[0.0; 3]; 9];
        for (dst, src) in v.iter_mut().zip(values) {
            dst[0] = src;
        }
        Self::from_values(1, &v)
    }
}

/// SSIM of two patches over their jointly valid samples, averaged over channels.
pub fn ssim_patch(a: &PatchSample, b: &PatchSample) -> Result<f64> {
    if a.channels != b.channels {
        return Err(Error::precondition("patches differ in channel count"));
    }
    let mut mask = [false; 9];
    for (m, (va, vb)) in mask.iter_mut().zip(a.valid.iter().zip(&b.valid)) {
        *m = *va && *vb;
    }
    let valid = mask.iter().filter(|m| **m).count();
    if valid < 2 {
        return Err(Error::DegeneratePatch { valid });
    }
    Ok(ssim_with_grad(&a.values, &b.values, &mask, a.channels).0)
}

/// Channel-averaged SSIM and its derivative with respect to each `b` value.
///
/// Statistics are population moments over the samples selected by `mask`.
pub(crate) fn ssim_with_grad(
    a: &[[f64; 3]; 9],
    b: &[[f64; 3]; 9],
    mask: &[bool; 9],
    channels: usize,
) -> (f64, [[f64; 3]; 9]) {
    let n = mask.iter().filter(|m| **m).count() as f64;
    let mut total = 0.0;
    let mut grad = [[0.0; 3]; 9];
    for c in 0..channels {
        let samples = || (0..9).filter(|&j| mask[j]);
        let mu_a = samples().map(|j| a[j][c]).sum::<f64>() / n;
        let mu_b = samples().map(|j| b[j][c]).sum::<f64>() / n;
        let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
        for j in samples() {
            let (da, db) = (a[j][c] - mu_a, b[j][c] - mu_b);
            var_a += da * da;
            var_b += db * db;
            cov += da * db;
        }
        var_a /= n;
        var_b /= n;
        cov /= n;

        let num1 = 2.0 * mu_a * mu_b + C1;
        let num2 = 2.0 * cov + C2;
        let den1 = mu_a * mu_a + mu_b * mu_b + C1;
        let den2 = var_a + var_b + C2;
        let den = den1 * den2;
        let s = num1 * num2 / den;
        total += s;

        for j in samples() {
            let d_num1 = 2.0 * mu_a / n;
            let d_num2 = 2.0 * (a[j][c] - mu_a) / n;
            let d_den1 = 2.0 * mu_b / n;
            let d_den2 = 2.0 * (b[j][c] - mu_b) / n;
            let d_num = d_num1 * num2 + num1 * d_num2;
            let d_den = d_den1 * den2 + den1 * d_den2;
            grad[j][c] = (d_num * den - num1 * num2 * d_den) / (den * den) / channels as f64;
        }
    }
    (total / channels as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(rng: &mut ChaCha8Rng, channels: usize) -> PatchSample {
        let mut v = [[0.0; 3]; 9];
        for s in v.iter_mut() {
            for c in s.iter_mut().take(channels) {
                *c = rng.random_range(0.0..1.0);
            }
        }
        PatchSample::from_values(channels, &v)
    }

    #[test]
    fn self_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_patch(&mut rng, 3);
        assert!((ssim_patch(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn black_vs_white() {
        let a = PatchSample::gray([0.0; 9]);
        let b = PatchSample::gray([1.0; 9]);
        let s = ssim_patch(&a, &b).unwrap();
        assert!((s - C1 / (1.0 + C1)).abs() < 1e-15);
        assert!((s - 9.999e-5).abs() < 1e-8);
    }

    #[test]
    fn symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = random_patch(&mut rng, 3);
            let b = random_patch(&mut rng, 3);
            let d = ssim_patch(&a, &b).unwrap() - ssim_patch(&b, &a).unwrap();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_patch() {
        let mut a = PatchSample::gray([0.5; 9]);
        a.valid = [false; 9];
        a.valid[0] = true;
        let b = PatchSample::gray([0.5; 9]);
        assert!(matches!(
            ssim_patch(&a, &b),
            Err(Error::DegeneratePatch { valid: 1 })
        ));
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_patch(&mut rng, 3);
        let b = random_patch(&mut rng, 3);
        let mut mask = [true; 9];
        mask[2] = false;
        let (_, g) = ssim_with_grad(&a.values, &b.values, &mask, 3);
        let h = 1e-6;
        for j in 0..9 {
            for c in 0..3 {
                let mut hi = b.values;
                let mut lo = b.values;
                hi[j][c] += h;
                lo[j][c] -= h;
                let fd = (ssim_with_grad(&a.values, &hi, &mask, 3).0
                    - ssim_with_grad(&a.values, &lo, &mask, 3).0)
                    / (2.0 * h);
                assert!((fd - g[j][c]).abs() < 1e-7, "{j} {c}: {fd} vs {}", g[j][c]);
            }
        }
    }
}
