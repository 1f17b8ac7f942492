//! Aligned patch sampling and dihedral augmentation.

use rand::Rng;

use super::image::ImageBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub lq: ImageBuffer,
    pub hq: ImageBuffer,
    pub scale: usize,
}

impl Pair {
    pub fn new(lq: ImageBuffer, hq: ImageBuffer, scale: usize) -> Result<Self> {
        if hq.height() != scale * lq.height() || hq.width() != scale * lq.width() || scale == 0 {
            return Err(Error::data(format!(
                "HQ {}x{} is not {scale} x LQ {}x{}",
                hq.height(),
                hq.width(),
                lq.height(),
                lq.width()
            )));
        }
        if hq.channels() != lq.channels() {
            return Err(Error::data("LQ and HQ channel counts differ"));
        }
        Ok(Self { lq, hq, scale })
    }

    /// The LQ patch at `(top, left)` and the HQ patch covering it.
    pub fn patch_at(&self, top: usize, left: usize, size: usize) -> Result<(ImageBuffer, ImageBuffer)> {
        let s = self.scale;
        Ok((self.lq.crop(top, left, size, size)?, self.hq.crop(top * s, left * s, size * s, size * s)?))
    }

    /// A uniformly placed aligned patch of `size` LQ pixels per side.
    pub fn sample_patch(&self, size: usize, rng: &mut impl Rng) -> Result<(ImageBuffer, ImageBuffer)> {
        if size == 0 || size > self.lq.height() || size > self.lq.width() {
            return Err(Error::data(format!(
                "patch {size} does not fit a {}x{} image",
                self.lq.height(),
                self.lq.width()
            )));
        }
        let top = rng.random_range(0..=self.lq.height() - size);
        let left = rng.random_range(0..=self.lq.width() - size);
        self.patch_at(top, left, size)
    }
}

/// Counter-clockwise quarter turn.
fn rot90(img: &ImageBuffer) -> ImageBuffer {
    let (h, w) = (img.height(), img.width());
    ImageBuffer::from_fn(w, h, img.channels(), |y, x, c| img.get(x, w - 1 - y, c)).expect("same sample count")
}

fn hflip(img: &ImageBuffer) -> ImageBuffer {
    let w = img.width();
    ImageBuffer::from_fn(img.height(), w, img.channels(), |y, x, c| img.get(y, w - 1 - x, c))
        .expect("same sample count")
}

/// Dihedral transform `code` in `0..8`: `code % 4` quarter turns, then a
/// horizontal flip when `code >= 4`. Code 0 is the identity.
pub fn augment(img: &ImageBuffer, code: u8) -> ImageBuffer {
    let mut out = img.clone();
    for _ in 0..code % 4 {
        out = rot90(&out);
    }
    if code % 8 >= 4 {
        out = hflip(&out);
    }
    out
}

pub fn augment_pair(lq: &ImageBuffer, hq: &ImageBuffer, code: u8) -> (ImageBuffer, ImageBuffer) {
    (augment(lq, code), augment(hq, code))
}

/// Code undoing [`augment`] with `code`; flips are their own inverse.
pub fn inverse_code(code: u8) -> u8 {
    let code = code % 8;
    if code >= 4 {
        code
    } else {
        (4 - code) % 4
    }
}
