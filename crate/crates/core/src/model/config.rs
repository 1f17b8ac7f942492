use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::attention::{overlapped_size, WindowSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Conv, then pixel-shuffle stages up to the target scale.
    PixelShuffle,
    /// Two convolutions at the input resolution.
    SameResolution,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::PixelShuffle => "pixel-shuffle",
            Head::SameResolution => "same-resolution",
        })
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel-shuffle" => Ok(Head::PixelShuffle),
            "same-resolution" => Ok(Head::SameResolution),
            other => Err(Error::config(format!("unknown head `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Residual hybrid attention groups.
    pub rhag_count: usize,
    /// Hybrid attention blocks per group.
    pub hab_per_rhag: usize,
    pub channels: usize,
    pub heads: usize,
    pub window: usize,
    /// Weight of the channel-attention branch.
    pub alpha: f64,
    /// Channel squeeze of the channel-attention convolutions.
    pub squeeze: usize,
    /// Channel reduction inside the channel-attention gate.
    pub ca_reduction: usize,
    pub overlap_ratio: f64,
    pub mlp_ratio: f64,
    pub scale: usize,
    pub head: Head,
    /// Width of the reconstruction head.
    pub head_channels: usize,
    pub use_cab: bool,
    pub use_ocab: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 3,
            rhag_count: 6,
            hab_per_rhag: 6,
            channels: 180,
            heads: 6,
            window: 16,
            alpha: 0.01,
            squeeze: 3,
            ca_reduction: 30,
            overlap_ratio: 0.5,
            mlp_ratio: 2.0,
            scale: 4,
            head: Head::PixelShuffle,
            head_channels: 64,
            use_cab: true,
            use_ocab: true,
        }
    }
}

const KEYS: [&str; 17] = [
    "alpha",
    "ca_reduction",
    "channels",
    "hab_per_rhag",
    "head",
    "head_channels",
    "heads",
    "in_channels",
    "mlp_ratio",
    "out_channels",
    "overlap_ratio",
    "rhag_count",
    "scale",
    "squeeze",
    "use_cab",
    "use_ocab",
    "window",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("rhag_count", self.rhag_count),
            ("hab_per_rhag", self.hab_per_rhag),
            ("channels", self.channels),
            ("heads", self.heads),
            ("window", self.window),
            ("squeeze", self.squeeze),
            ("ca_reduction", self.ca_reduction),
            ("head_channels", self.head_channels),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{k} must be positive"));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return fail(format!("channels {} not divisible by heads {}", self.channels, self.heads));
        }
        if self.use_cab && !self.channels.is_multiple_of(self.squeeze) {
            return fail(format!("channels {} not divisible by squeeze {}", self.channels, self.squeeze));
        }
        if self.use_cab && !self.channels.is_multiple_of(self.ca_reduction) {
            return fail(format!("channels {} not divisible by ca_reduction {}", self.channels, self.ca_reduction));
        }
        if !self.alpha.is_finite() {
            return fail("alpha must be finite".into());
        }
        let hidden = self.channels as f64 * self.mlp_ratio;
        if self.mlp_ratio.is_nan() || self.mlp_ratio <= 0.0 || hidden.fract() != 0.0 {
            return fail(format!("mlp_ratio {} gives a non-integral hidden width", self.mlp_ratio));
        }
        overlapped_size(self.window, self.overlap_ratio)?;
        match (self.scale, self.head) {
            (1, Head::SameResolution) | (2..=4, Head::PixelShuffle) => Ok(()),
            (s, h) => fail(format!("scale {s} is not supported by the {h} head")),
        }
    }

    pub fn squeezed(&self) -> usize {
        self.channels / self.squeeze
    }

    pub fn ca_hidden(&self) -> usize {
        self.channels / self.ca_reduction
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.channels as f64 * self.mlp_ratio) as usize
    }

    /// Shift of block `index` within a group: even blocks stay put, odd
    /// blocks move by half a window.
    pub fn shift_of(&self, index: usize) -> usize {
        if index.is_multiple_of(2) {
            0
        } else {
            self.window / 2
        }
    }

    pub fn block_spec(&self, index: usize) -> Result<WindowSpec> {
        WindowSpec::self_attention(self.window, self.shift_of(index))
    }

    pub fn overlap_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window, 0, self.overlap_ratio)
    }

    /// Pixel-shuffle factors applied by the head.
    pub fn upsample_stages(&self) -> Vec<usize> {
        match self.scale {
            2 => vec![2],
            3 => vec![3],
            4 => vec![2, 2],
            _ => Vec::new(),
        }
    }

    /// Sets one field from its textual form; see [`ModelConfig::to_kv`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = parse(key, value)?,
            "ca_reduction" => self.ca_reduction = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "hab_per_rhag" => self.hab_per_rhag = parse(key, value)?,
            "head" => self.head = value.trim().parse()?,
            "head_channels" => self.head_channels = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "in_channels" => self.in_channels = parse(key, value)?,
            "mlp_ratio" => self.mlp_ratio = parse(key, value)?,
            "out_channels" => self.out_channels = parse(key, value)?,
            "overlap_ratio" => self.overlap_ratio = parse(key, value)?,
            "rhag_count" => self.rhag_count = parse(key, value)?,
            "scale" => {
                self.scale = parse(key, value)?;
                self.head = if self.scale == 1 { Head::SameResolution } else { Head::PixelShuffle };
            }
            "squeeze" => self.squeeze = parse(key, value)?,
            "use_cab" => self.use_cab = parse(key, value)?,
            "use_ocab" => self.use_ocab = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            other => return Err(Error::config(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha" => self.alpha.to_string(),
            "ca_reduction" => self.ca_reduction.to_string(),
            "channels" => self.channels.to_string(),
            "hab_per_rhag" => self.hab_per_rhag.to_string(),
            "head" => self.head.to_string(),
            "head_channels" => self.head_channels.to_string(),
            "heads" => self.heads.to_string(),
            "in_channels" => self.in_channels.to_string(),
            "mlp_ratio" => self.mlp_ratio.to_string(),
            "out_channels" => self.out_channels.to_string(),
            "overlap_ratio" => self.overlap_ratio.to_string(),
            "rhag_count" => self.rhag_count.to_string(),
            "scale" => self.scale.to_string(),
            "squeeze" => self.squeeze.to_string(),
            "use_cab" => self.use_cab.to_string(),
            "use_ocab" => self.use_ocab.to_string(),
            "window" => self.window.to_string(),
            _ => return None,
        })
    }

    /// Canonical sorted key/value form.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        KEYS.iter().map(|k| (k.to_string(), self.get(k).expect("known key"))).collect()
    }

    /// Rebuilds a config from a complete key/value set.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for key in KEYS {
            let value = kv.get(key).ok_or_else(|| Error::config(format!("missing model key `{key}`")))?;
            cfg.set(key, value)?;
        }
        // `scale` resets the head; the stored head wins
        cfg.set("head", &kv["head"])?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key=value` lines in canonical order.
    pub fn to_text(&self) -> String {
        self.to_kv().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped and
    /// missing keys keep the values of `base`.
    pub fn parse_text(text: &str, base: &ModelConfig) -> Result<Self> {
        let mut cfg = base.clone();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
