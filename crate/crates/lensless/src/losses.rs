//! Training losses and evaluation metrics: MSE with gradient, weighted
//! loss combination, contextual loss over feature sets, PSNR, and SSIM.

use crate::error::{Error, Result};
use crate::tensor::{gaussian_blur, Tensor};

/// Mean squared error and its gradient with respect to `a`:
/// `2 (a - b) / N`.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "mse shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.len() as f64;
    let diff = a.sub(b)?;
    let loss = diff.norm_sq() / n;
    let grad = diff.scale(2.0 / n);
    Ok((loss, grad))
}

/// Weighted combination of loss terms: `sum_i lambda_i * L_i` with the
/// gradients combined linearly.
pub fn weighted_total(terms: &[(f64, Tensor)], weights: &[f64]) -> Result<(f64, Tensor)> {
    if terms.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} loss terms but {} weights",
            terms.len(),
            weights.len()
        )));
    }
    let (first, _) = terms
        .first()
        .ok_or_else(|| Error::invalid("weighted_total needs at least one term"))?;
    let mut total = 0.0;
    let mut grad = terms[0].1.scale(0.0);
    let _ = first;
    for ((loss, g), &w) in terms.iter().zip(weights) {
        total += w * loss;
        grad = grad.add(&g.scale(w))?;
    }
    Ok((total, grad))
}

/// Cosine distance `1 - <p, q> / (|p| |q|)`; zero vectors are treated as
/// maximally dissimilar (distance 1) to everything.
fn cosine_distance(p: &[f64], q: &[f64]) -> f64 {
    let np: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nq: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if np == 0.0 || nq == 0.0 {
        return 1.0;
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    1.0 - dot / (np * nq)
}

/// Contextual loss between two feature sets: the mean over `p` of the
/// nearest-neighbor cosine distance into `q`. Tolerant to spatial
/// misalignment because features are matched, not compared positionally.
pub fn contextual_loss(p_features: &[Vec<f64>], q_features: &[Vec<f64>]) -> Result<f64> {
    if p_features.is_empty() || q_features.is_empty() {
        return Err(Error::invalid("contextual loss needs nonempty feature sets"));
    }
    let dim = p_features[0].len();
    if dim == 0 {
        return Err(Error::invalid("feature vectors must be nonempty"));
    }
    for f in p_features.iter().chain(q_features) {
        if f.len() != dim {
            return Err(Error::invalid(format!(
                "feature dimensionality mismatch: expected {dim}, got {}",
                f.len()
            )));
        }
    }
    let total: f64 = p_features
        .iter()
        .map(|p| {
            q_features
                .iter()
                .map(|q| cosine_distance(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / p_features.len() as f64)
}

/// Flattens non-overlapping `k x k` patches into feature vectors, a naive
/// stand-in for a learned feature extractor so the contextual loss can be
/// exercised end to end.
pub fn patch_features(t: &Tensor, k: usize) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::invalid("patch size must be >= 1"));
    }
    let (h, w) = t.dims();
    if h < k || w < k {
        return Err(Error::invalid(format!("image {h}x{w} smaller than patch {k}x{k}")));
    }
    let mut features = Vec::new();
    let mut r = 0;
    while r + k <= h {
        let mut c = 0;
        while c + k <= w {
            let mut f = Vec::with_capacity(k * k * t.channels());
            for dr in 0..k {
                for dc in 0..k {
                    for ch in 0..t.channels() {
                        f.push(t.get(r + dr, c + dc, ch));
                    }
                }
            }
            features.push(f);
            c += k;
        }
        r += k;
    }
    Ok(features)
}

/// Peak signal-to-noise ratio in decibels: `10 log10(peak^2 / mse)`.
/// Identical images report positive infinity.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if peak <= 0.0 {
        return Err(Error::invalid("psnr peak must be > 0"));
    }
    let (m, _) = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Mean local structural similarity with the standard 11x11 Gaussian
/// window (sigma 1.5) and stabilizers `C1 = (0.01 peak)^2`,
/// `C2 = (0.03 peak)^2`. Scores lie in [-1, 1]; identical images score 1.
pub fn ssim(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid("ssim shape mismatch"));
    }
    if peak <= 0.0 {
        return Err(Error::invalid("ssim peak must be > 0"));
    }
    let (h, w) = a.dims();
    if h < 11 || w < 11 {
        return Err(Error::invalid(format!("ssim needs at least 11x11 images, got {h}x{w}")));
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);

    // local first and second moments via Gaussian filtering; the borders
    // (half a window) are excluded from the mean
    let mu_a = ssim_blur(a)?;
    let mu_b = ssim_blur(b)?;
    let aa = ssim_blur(&a.zip_map(a, |x, y| x * y)?)?;
    let bb = ssim_blur(&b.zip_map(b, |x, y| x * y)?)?;
    let ab = ssim_blur(&a.zip_map(b, |x, y| x * y)?)?;

    let margin = 5;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..a.channels() {
        for r in margin..h - margin {
            for c in margin..w - margin {
                let ma = mu_a.get(r, c, ch);
                let mb = mu_b.get(r, c, ch);
                let va = aa.get(r, c, ch) - ma * ma;
                let vb = bb.get(r, c, ch) - mb * mb;
                let cov = ab.get(r, c, ch) - ma * mb;
                let score = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += score;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// 11-tap Gaussian (sigma 1.5) separable filter used by [`ssim`].
fn ssim_blur(t: &Tensor) -> Result<Tensor> {
    // gaussian_blur truncates at 4 sigma = 6 taps per side; SSIM's window
    // is 11x11, i.e. 5 per side. The extra taps carry < 1e-4 of the mass:
    // acceptable here because scores are compared at 1e-2 scale, and the
    // border margin is excluded either way.
    gaussian_blur(t, 1.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::test_util::random_tensor;

    #[test]
    fn mse_basics() {
        let a = random_tensor(4, 4, 1, 1);
        let (zero, g) = mse(&a, &a).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g.max_abs() == 0.0);

        let b = a.map(|v| v + 1.0);
        let (one, _) = mse(&b, &a).unwrap();
        assert!((one - 1.0).abs() < 1e-12);

        // symmetry
        assert_eq!(mse(&a, &b).unwrap().0, mse(&b, &a).unwrap().0);
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let a = random_tensor(3, 3, 1, 2);
        let b = random_tensor(3, 3, 1, 3);
        let (_, grad) = mse(&a, &b).unwrap();
        let eps = 1e-6;
        for i in 0..a.len() {
            let mut plus = a.data().to_vec();
            let mut minus = a.data().to_vec();
            plus[i] += eps;
            minus[i] -= eps;
            let ap = Tensor::from_vec(3, 3, 1, plus).unwrap();
            let am = Tensor::from_vec(3, 3, 1, minus).unwrap();
            let fd = (mse(&ap, &b).unwrap().0 - mse(&am, &b).unwrap().0) / (2.0 * eps);
            let rel = (grad.data()[i] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-6, "index {i}: {} vs {fd}", grad.data()[i]);
        }
    }

    #[test]
    fn weighted_total_arithmetic() {
        let g1 = Tensor::constant(2, 2, 1, 1.0).unwrap();
        let g2 = Tensor::constant(2, 2, 1, -2.0).unwrap();

        // single term passthrough
        let (l, g) = weighted_total(&[(2.0, g1.clone())], &[1.0]).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g.data(), g1.data());

        // zero weights kill everything
        let (l0, g0) = weighted_total(&[(2.0, g1.clone()), (4.0, g2.clone())], &[0.0, 0.0]).unwrap();
        assert_eq!(l0, 0.0);
        assert!(g0.max_abs() == 0.0);

        // 1*2 + 0.5*4 = 4
        let (l2, g2sum) = weighted_total(&[(2.0, g1), (4.0, g2)], &[1.0, 0.5]).unwrap();
        assert_eq!(l2, 4.0);
        assert_eq!(g2sum.data(), &[0.0, 0.0, 0.0, 0.0]);

        assert!(weighted_total(&[(1.0, Tensor::zeros(1, 1, 1).unwrap())], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn contextual_loss_identities() {
        let set: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![-0.3, 0.9]];
        assert!(contextual_loss(&set, &set).unwrap().abs() < 1e-12);

        // orthogonal sets are at distance exactly 1
        let p = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        let q = vec![vec![0.0, 1.0], vec![0.0, -3.0]];
        assert!((contextual_loss(&p, &q).unwrap() - 1.0).abs() < 1e-12);

        let bad = vec![vec![1.0, 2.0, 3.0]];
        assert!(contextual_loss(&p, &bad).is_err());
    }

    #[test]
    fn contextual_loss_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p: Vec<Vec<f64>> =
            (0..3).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let q: Vec<Vec<f64>> =
            (0..3).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let fast = contextual_loss(&p, &q).unwrap();
        let mut slow = 0.0;
        for pi in &p {
            let mut best = f64::INFINITY;
            for qj in &q {
                let d = cosine_distance(pi, qj);
                if d < best {
                    best = d;
                }
            }
            slow += best;
        }
        slow /= p.len() as f64;
        assert_eq!(fast, slow);
    }

    #[test]
    fn contextual_loss_scale_invariance_and_zero_vectors() {
        let p = vec![vec![0.3, -0.4], vec![1.0, 1.0]];
        let q = vec![vec![0.5, 0.1], vec![-1.0, 0.2]];
        let scaled: Vec<Vec<f64>> =
            q.iter().enumerate().map(|(i, v)| v.iter().map(|x| x * (i + 2) as f64).collect()).collect();
        let a = contextual_loss(&p, &q).unwrap();
        let b = contextual_loss(&p, &scaled).unwrap();
        assert!((a - b).abs() < 1e-12);

        // zero vector never matches better than distance 1
        let zeros = vec![vec![0.0, 0.0]];
        assert_eq!(contextual_loss(&zeros, &q).unwrap(), 1.0);
    }

    #[test]
    fn psnr_basics() {
        let a = random_tensor(4, 4, 1, 9);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);

        // mse = 1 at peak 255: 10*log10(255^2) = 20*log10(255)
        let b = a.map(|v| v + 1.0);
        let expected = 20.0 * 255.0_f64.log10();
        assert!((psnr(&a, &b, 255.0).unwrap() - expected).abs() < 1e-9);

        // joint rescale leaves PSNR unchanged
        let c = 3.7;
        let p1 = psnr(&a, &b, 255.0).unwrap();
        let p2 = psnr(&a.scale(c), &b.scale(c), 255.0 * c).unwrap();
        assert!((p1 - p2).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let x = random_tensor(16, 16, 1, 10).map(|v| v.abs());
        let mut last = f64::INFINITY;
        for (i, &sigma) in [0.01, 0.05, 0.2, 0.8].iter().enumerate() {
            let mut acc = 0.0;
            for seed in 0..5 {
                let noisy =
                    crate::forward::add_gaussian_noise(&x, sigma, 1000 + i as u64 * 10 + seed)
                        .unwrap();
                acc += psnr(&noisy, &x, 1.0).unwrap();
            }
            let mean = acc / 5.0;
            assert!(mean < last, "psnr did not drop at sigma {sigma}");
            last = mean;
        }
    }

    #[test]
    fn ssim_properties() {
        let a = random_tensor(16, 16, 1, 11).map(|v| 0.5 + 0.5 * v);
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);

        // high-contrast image vs its inversion scores poorly
        let contrast = Tensor::from_fn(16, 16, 1, |r, c, _| ((r / 4 + c / 4) % 2) as f64).unwrap();
        let inverted = contrast.map(|v| 1.0 - v);
        let inv_score = ssim(&contrast, &inverted, 1.0).unwrap();
        assert!(inv_score < 0.5, "inverted ssim {inv_score}");

        // a small constant offset barely dents the score
        let offset = a.map(|v| v + 0.01);
        let off_score = ssim(&a, &offset, 1.0).unwrap();
        assert!(off_score < 1.0 && off_score > 0.9, "offset ssim {off_score}");

        let tiny = random_tensor(8, 8, 1, 12);
        assert!(ssim(&tiny, &tiny, 1.0).is_err());
    }

    #[test]
    fn patch_features_cover_image() {
        let t = random_tensor(8, 6, 2, 13);
        let f = patch_features(&t, 2).unwrap();
        assert_eq!(f.len(), 4 * 3);
        assert!(f.iter().all(|v| v.len() == 8));
        // loss of an image against itself through features is zero
        assert!(contextual_loss(&f, &f).unwrap().abs() < 1e-12);
    }
}
