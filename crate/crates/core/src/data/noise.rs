use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image::ImageBuffer;

/// `n` independent normal samples with std `sigma / 255`.
pub fn noise_field(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sigma / 255.0).expect("finite non-negative sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Additive white Gaussian noise, `sigma` on the 0-255 scale, clamped to
/// `[0, 1]`.
pub fn add_gaussian_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> ImageBuffer {
    let mut out = img.clone();
    let field = noise_field(out.data().len(), sigma, seed);
    for (v, n) in out.data_mut().iter_mut().zip(field) {
        *v = (*v + n).clamp(0.0, 1.0);
    }
    out
}
