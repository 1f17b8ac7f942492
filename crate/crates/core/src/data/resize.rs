//! Antialiased bicubic downscaling by an integer factor.

use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

fn mirror(k: isize, n: usize) -> usize {
    // symmetric extension that repeats the edge sample: [c b a | a b c | c b a]
    let period = 2 * n as isize;
    let m = k.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Normalized taps `(source index, weight)` for each output sample when
/// shrinking an axis of `len` by `s`. The kernel is stretched by `s` so it
/// also acts as the antialiasing filter.
pub fn downscale_taps(len: usize, s: usize) -> Vec<Vec<(usize, f64)>> {
    let sf = s as f64;
    let half = 2.0 * sf;
    (0..len / s)
        .map(|j| {
            let center = (j as f64 + 0.5) * sf - 0.5;
            let lo = (center - half).floor() as isize;
            let hi = (center + half).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for k in lo..=hi {
                let w = cubic((center - k as f64) / sf) / sf;
                if w != 0.0 {
                    let idx = mirror(k, len);
                    match taps.iter_mut().find(|(i, _)| *i == idx) {
                        Some(t) => t.1 += w,
                        None => taps.push((idx, w)),
                    }
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Shrinks both axes by `s` in {2, 3, 4}; extents must be multiples of `s`.
pub fn bicubic_downscale(img: &ImageBuffer, s: usize) -> Result<ImageBuffer> {
    if !(2..=4).contains(&s) {
        return Err(Error::data(format!("unsupported downscale factor {s}")));
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if h % s != 0 || w % s != 0 || h == 0 || w == 0 {
        return Err(Error::data(format!("extent {h}x{w} is not a positive multiple of {s}")));
    }
    let (ho, wo) = (h / s, w / s);
    let col_taps = downscale_taps(w, s);
    let row_taps = downscale_taps(h, s);
    let mut rows = vec![0.0; h * wo * c];
    for y in 0..h {
        for (x, taps) in col_taps.iter().enumerate() {
            for ch in 0..c {
                rows[(y * wo + x) * c + ch] = taps.iter().map(|&(k, wt)| wt * img.get(y, k, ch)).sum();
            }
        }
    }
    let mut out = vec![0.0; ho * wo * c];
    for (y, taps) in row_taps.iter().enumerate() {
        for x in 0..wo {
            for ch in 0..c {
                out[(y * wo + x) * c + ch] = taps.iter().map(|&(k, wt)| wt * rows[(k * wo + x) * c + ch]).sum();
            }
        }
    }
    ImageBuffer::new(ho, wo, c, out)
}

/// Crops the bottom/right so both extents become multiples of `s`.
pub fn crop_to_multiple(img: &ImageBuffer, s: usize) -> Result<ImageBuffer> {
    img.crop(0, 0, img.height() / s * s, img.width() / s * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn mirror_repeats_edges() {
        let got: Vec<usize> = (-3..6).map(|k| mirror(k, 3)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 2, 1, 0]);
    }

    #[test]
    fn taps_sum_to_one() {
        for s in 2..=4 {
            for taps in downscale_taps(24, s) {
                assert!((taps.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
