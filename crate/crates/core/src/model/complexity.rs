//! Analytic parameter and multiply-accumulate counts.

use super::config::ModelConfig;
use crate::attention::table_span;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub param_count: u64,
    /// One multiply-accumulate counts once.
    pub multi_adds: u64,
    pub height: usize,
    pub width: usize,
}

#[derive(Default)]
struct Tally {
    params: u64,
    macs: u64,
}

impl Tally {
    fn conv(&mut self, pixels: u64, cin: usize, cout: usize, k: usize) {
        let w = (cin * cout * k * k) as u64;
        self.params += w + cout as u64;
        self.macs += pixels * w;
    }

    fn linear(&mut self, tokens: u64, din: usize, dout: usize) {
        self.params += (din * dout + dout) as u64;
        self.macs += tokens * (din * dout) as u64;
    }

    fn norm(&mut self, c: usize) {
        self.params += 2 * c as u64;
    }

    /// Projections, `QKᵀ`, `AV` and the bias table of one attention layer
    /// whose queries see `keys` tokens each.
    fn attention(&mut self, tokens: u64, cfg: &ModelConfig, keys_side: usize) {
        let c = cfg.channels;
        self.linear(tokens, c, 3 * c);
        self.macs += 2 * tokens * (keys_side * keys_side * c) as u64;
        self.linear(tokens, c, c);
        let span = table_span(cfg.window, keys_side);
        self.params += (span * span * cfg.heads) as u64;
    }

    fn mlp(&mut self, tokens: u64, cfg: &ModelConfig) {
        self.linear(tokens, cfg.channels, cfg.mlp_hidden());
        self.linear(tokens, cfg.mlp_hidden(), cfg.channels);
    }
}

/// Counts for one forward pass at `height x width`, after padding to window
/// multiples as the forward pass does.
pub fn complexity(cfg: &ModelConfig, height: usize, width: usize) -> Result<ComplexityReport> {
    cfg.validate()?;
    let m = cfg.window;
    let (h, w) = (height.div_ceil(m) * m, width.div_ceil(m) * m);
    let px = (h * w) as u64;
    let c = cfg.channels;
    let mut t = Tally::default();

    t.conv(px, cfg.in_channels, c, 3);
    for _ in 0..cfg.rhag_count {
        for _ in 0..cfg.hab_per_rhag {
            t.norm(c);
            t.attention(px, cfg, m);
            if cfg.use_cab {
                t.conv(px, c, cfg.squeezed(), 3);
                t.conv(px, cfg.squeezed(), c, 3);
                t.linear(1, c, cfg.ca_hidden());
                t.linear(1, cfg.ca_hidden(), c);
            }
            t.norm(c);
            t.mlp(px, cfg);
        }
        if cfg.use_ocab {
            t.norm(c);
            t.attention(px, cfg, cfg.overlap_spec()?.overlapped);
            t.norm(c);
            t.mlp(px, cfg);
        }
        t.conv(px, c, c, 3);
    }
    t.conv(px, c, c, 3);

    let f = cfg.head_channels;
    t.conv(px, c, f, 3);
    let mut res = px;
    for s in cfg.upsample_stages() {
        t.conv(res, f, f * s * s, 3);
        res *= (s * s) as u64;
    }
    t.conv(res, f, cfg.out_channels, 3);

    Ok(ComplexityReport { param_count: t.params, multi_adds: t.macs, height: h, width: w })
}
