use hat_tensor::{reflect_index, Element, Tensor};

use crate::error::{Error, Result};

/// Widths below this are treated as no blur at all.
pub const DELTA_SIGMA: f64 = 1e-6;

fn support(sigma: f64) -> usize {
    if sigma < DELTA_SIGMA {
        0
    } else {
        (3.0 * sigma).ceil() as usize
    }
}

fn gaussian_1d(sigma: f64, radius: usize) -> Vec<f64> {
    if sigma < DELTA_SIGMA {
        return vec![1.0];
    }
    let r = radius as isize;
    let g: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Normalized `side x side` Gaussian with `side = 2 ceil(3 sigma) + 1`,
/// row-major; a single 1 for `sigma` below [`DELTA_SIGMA`].
pub fn gaussian_kernel(sigma: f64) -> (usize, Vec<f64>) {
    let g = gaussian_1d(sigma, support(sigma));
    let side = g.len();
    let k = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    (side, k)
}

/// Separable Gaussian blur of `[N, C, H, W]` with reflect padding.
pub fn gaussian_blur<T: Element>(x: &Tensor<T>, sigma: f64) -> Result<Tensor<T>> {
    blur_with_radius(x, sigma, support(sigma))
}

fn blur_with_radius<T: Element>(x: &Tensor<T>, sigma: f64, radius: usize) -> Result<Tensor<T>> {
    let &[n, c, h, w] = x.shape() else {
        return Err(Error::data(format!("blur expects [N, C, H, W], got {:?}", x.shape())));
    };
    let g = gaussian_1d(sigma, radius);
    if g.len() == 1 {
        return Ok(x.clone());
    }
    let r = (g.len() / 2) as isize;
    let src = x.to_f64_vec();
    let mut rows = vec![0.0; src.len()];
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..h {
            for xx in 0..w {
                rows[base + y * w + xx] = g
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * src[base + y * w + reflect_index(xx as isize + k as isize - r, w)])
                    .sum();
            }
        }
    }
    let mut out = vec![T::zero(); src.len()];
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..h {
            for xx in 0..w {
                let v: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * rows[base + reflect_index(y as isize + k as isize - r, h) * w + xx])
                    .sum();
                out[base + y * w + xx] = T::of(v);
            }
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out)?)
}

/// Progressive blurring path `ω(σ − θσ) ⊗ I`: the blurred baseline at
/// `θ = 0`, the input itself at `θ = 1`.
///
/// Every point uses the baseline's support `2 ceil(3σ) + 1` so the path is
/// smooth in `θ`; shrinking the support with the width would make it jump.
pub fn blur_path<T: Element>(x: &Tensor<T>, sigma: f64, theta: f64) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::config(format!("path position {theta} outside [0, 1]")));
    }
    blur_with_radius(x, sigma - theta * sigma, support(sigma))
}
