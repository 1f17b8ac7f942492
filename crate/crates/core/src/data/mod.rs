//! Images, degradations, patches, augmentation and luma metrics.

mod degrade;
mod image;
mod manifest;
mod metrics;
mod noise;
mod patch;
mod resize;

pub use degrade::{degradations, Bicubic, Degradation, GaussianNoise};
pub use image::{read_png16, write_png16, ImageBuffer};
pub use manifest::{PairManifest, Record};
pub use metrics::{luma, psnr_y, ssim_y};
pub use noise::{add_gaussian_noise, noise_field};
pub use patch::{augment, augment_pair, inverse_code, Pair};
pub use resize::{bicubic_downscale, crop_to_multiple, cubic, downscale_taps};
