//! Named model configurations.

use super::config::{Head, ModelConfig};
use crate::error::{Error, Result};

pub const PRESETS: [(&str, &str); 6] = [
    ("hat", "6 groups x 6 blocks, 180 channels, window 16"),
    ("hat-s", "hat with 144 channels and squeeze 24"),
    ("hat-l", "hat with 12 groups"),
    ("tiny", "1 group x 2 blocks, 16 channels, window 4, x2"),
    ("baseline-w8", "window-attention-only network, window 8"),
    ("baseline-w16", "window-attention-only network, window 16"),
];

pub fn preset(name: &str) -> Result<ModelConfig> {
    let base = ModelConfig::default();
    let cfg = match name {
        "hat" => base,
        "hat-s" => ModelConfig { channels: 144, squeeze: 24, ca_reduction: 24, ..base },
        "hat-l" => ModelConfig { rhag_count: 12, ..base },
        "tiny" => ModelConfig {
            rhag_count: 1,
            hab_per_rhag: 2,
            channels: 16,
            heads: 2,
            window: 4,
            squeeze: 2,
            ca_reduction: 4,
            scale: 2,
            head: Head::PixelShuffle,
            head_channels: 16,
            ..base
        },
        "baseline-w8" => ModelConfig { window: 8, use_cab: false, use_ocab: false, ..base },
        "baseline-w16" => ModelConfig { use_cab: false, use_ocab: false, ..base },
        other => {
            return Err(Error::UnknownEntry {
                kind: "preset",
                name: other.to_string(),
                available: PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
            })
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
