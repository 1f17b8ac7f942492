//! Degradation strategies selectable by name.

use super::image::ImageBuffer;
use super::noise::add_gaussian_noise;
use super::resize::{bicubic_downscale, crop_to_multiple};
use crate::error::{Error, Result};
use crate::registry::{Options, Registry};

pub trait Degradation: Send + Sync {
    /// Resolution factor between the clean and the degraded image.
    fn scale(&self) -> usize;

    /// One-line `key=value` descriptor recorded in manifests.
    fn describe(&self) -> String;

    /// Degrades `hq`; the clean image is cropped to a multiple of the scale
    /// first and returned alongside.
    fn apply(&self, hq: &ImageBuffer, seed: u64) -> Result<(ImageBuffer, ImageBuffer)>;
}

pub struct Bicubic {
    pub scale: usize,
}

impl Degradation for Bicubic {
    fn scale(&self) -> usize {
        self.scale
    }

    fn describe(&self) -> String {
        format!("degradation=bicubic scale={}", self.scale)
    }

    fn apply(&self, hq: &ImageBuffer, _seed: u64) -> Result<(ImageBuffer, ImageBuffer)> {
        let hq = crop_to_multiple(hq, self.scale)?;
        let lq = bicubic_downscale(&hq, self.scale)?.quantized();
        Ok((lq, hq))
    }
}

pub struct GaussianNoise {
    pub sigma: f64,
}

impl Degradation for GaussianNoise {
    fn scale(&self) -> usize {
        1
    }

    fn describe(&self) -> String {
        format!("degradation=noise sigma={}", self.sigma)
    }

    fn apply(&self, hq: &ImageBuffer, seed: u64) -> Result<(ImageBuffer, ImageBuffer)> {
        Ok((add_gaussian_noise(hq, self.sigma, seed).quantized(), hq.clone()))
    }
}

pub fn degradations() -> Registry<dyn Degradation> {
    let mut reg: Registry<dyn Degradation> = Registry::new("degradation");
    reg.register("bicubic", "antialiased bicubic downscale; option scale (2, 3, 4)", |o: &Options| {
        let scale = o.get_or("scale", 4usize)?;
        if !(2..=4).contains(&scale) {
            return Err(Error::config(format!("bicubic scale {scale} not in 2..=4")));
        }
        Ok(Box::new(Bicubic { scale }))
    });
    reg.register("noise", "additive white Gaussian noise; option sigma (0-255 scale)", |o: &Options| {
        let sigma = o.get_or("sigma", 25.0f64)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!("noise sigma {sigma} must be finite and non-negative")));
        }
        Ok(Box::new(GaussianNoise { sigma }))
    });
    reg
}
