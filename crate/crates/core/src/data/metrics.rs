//! Luma PSNR and SSIM as used for restoration benchmarks.

use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Luma in `[0, 1]`: `(16 + 65.481 R + 128.553 G + 24.966 B) / 255` for RGB,
/// the channel itself for grayscale. Row-major `H x W`.
pub fn luma(img: &ImageBuffer) -> Vec<f64> {
    let d = img.data();
    if img.channels() == 1 {
        return d.to_vec();
    }
    d.chunks_exact(3).map(|p| (16.0 + 65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0).collect()
}

fn cropped_luma(a: &ImageBuffer, b: &ImageBuffer, crop: usize) -> Result<(usize, usize, Vec<f64>, Vec<f64>)> {
    if (a.height(), a.width(), a.channels()) != (b.height(), b.width(), b.channels()) {
        return Err(Error::data(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    let (h, w) = (a.height(), a.width());
    if 2 * crop >= h || 2 * crop >= w {
        return Err(Error::data(format!("border crop {crop} leaves nothing of {h}x{w}")));
    }
    let (ya, yb) = (luma(a), luma(b));
    let (hc, wc) = (h - 2 * crop, w - 2 * crop);
    let pick =
        |y: &[f64]| -> Vec<f64> { (crop..h - crop).flat_map(|r| y[r * w + crop..r * w + w - crop].to_vec()).collect() };
    Ok((hc, wc, pick(&ya), pick(&yb)))
}

/// `10 log10(1 / MSE)` on luma after cropping `crop` pixels per side;
/// `+inf` for identical inputs.
pub fn psnr_y(a: &ImageBuffer, b: &ImageBuffer, crop: usize) -> Result<f64> {
    let (_, _, ya, yb) = cropped_luma(a, b, crop)?;
    let mse = ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / ya.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-region separable filtering.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for xo in 0..wo {
            rows[y * wo + xo] = (0..k).map(|j| g[j] * x[y * w + xo + j]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for yo in 0..ho {
        for xo in 0..wo {
            out[yo * wo + xo] = (0..k).map(|i| g[i] * rows[(yo + i) * wo + xo]).sum();
        }
    }
    out
}

/// Mean structural similarity on luma with an 11x11 Gaussian window
/// (sigma 1.5) over the valid region.
pub fn ssim_y(a: &ImageBuffer, b: &ImageBuffer, crop: usize) -> Result<f64> {
    let (h, w, ya, yb) = cropped_luma(a, b, crop)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::data(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} after cropping")));
    }
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
    let mu_a = filter_valid(&ya, h, w, &g);
    let mu_b = filter_valid(&yb, h, w, &g);
    let aa = filter_valid(&prod(&ya, &ya), h, w, &g);
    let bb = filter_valid(&prod(&yb, &yb), h, w, &g);
    let ab = filter_valid(&prod(&ya, &yb), h, w, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
        })
        .sum();
    Ok(total / n as f64)
}
