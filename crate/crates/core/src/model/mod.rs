//! The restoration network: shallow convolution, residual hybrid attention
//! groups, a global residual and the reconstruction head.

pub mod blocks;
mod complexity;
mod config;
mod params;
mod presets;
mod restorers;

pub use complexity::{complexity, ComplexityReport};
pub use config::{Head, ModelConfig};
pub use params::{Bound, Init, ParamSpec, ParamStore, Scope};
pub use presets::{preset, PRESETS};
pub use restorers::{restorers, ConvNet, Identity};

use hat_tensor::{Element, PadMode, Tape, Tensor, Var};

use crate::error::{Error, Result};
use blocks::{conv, conv_layout, rhag_forward, rhag_layout};

/// Anything mapping a degraded image `[N, C, H, W]` to a restored one on the
/// same tape, differentiably.
pub trait Restorer<T: Element>: Send + Sync {
    /// Output extent over input extent.
    fn scale(&self) -> usize;

    fn restore<'t>(&self, x: &Var<'t, T>) -> Result<Var<'t, T>>;
}

/// Full parameter layout of a configuration, in initialization order.
pub fn layout(cfg: &ModelConfig) -> Result<Vec<ParamSpec>> {
    cfg.validate()?;
    let c = cfg.channels;
    let f = cfg.head_channels;
    let mut out = Vec::new();
    conv_layout(&mut out, "conv_first", c, cfg.in_channels, 3);
    for i in 0..cfg.rhag_count {
        rhag_layout(&mut out, &format!("layers.{i}"), cfg)?;
    }
    conv_layout(&mut out, "conv_after_body", c, c, 3);
    conv_layout(&mut out, "head.conv_before", f, c, 3);
    for (k, s) in cfg.upsample_stages().into_iter().enumerate() {
        conv_layout(&mut out, &format!("head.upsample.{k}"), f * s * s, f, 3);
    }
    conv_layout(&mut out, "head.conv_last", cfg.out_channels, f, 3);
    Ok(out)
}

/// Runs the network on `[N, C_in, H, W]`, reporting named intermediate
/// features to `trace`.
pub fn hat_forward_traced<'t, T: Element>(
    cfg: &ModelConfig,
    bound: &Bound<'t, T>,
    x: &Var<'t, T>,
    trace: &mut dyn FnMut(&str, &Tensor<T>),
) -> Result<Var<'t, T>> {
    let &[_, cin, h, w] = x.shape() else {
        return Err(Error::data(format!("expected an [N, C, H, W] image, got {:?}", x.shape())));
    };
    if cin != cfg.in_channels {
        return Err(Error::data(format!("image has {cin} channels, model expects {}", cfg.in_channels)));
    }
    let m = cfg.window;
    let (ph, pw) = ((m - h % m) % m, (m - w % m) % m);
    let padded = if ph + pw > 0 { x.pad2d([0, ph, 0, pw], PadMode::Reflect)? } else { x.clone() };

    let root = bound.root();
    let f0 = conv(&root.child("conv_first"), &padded)?;
    trace("shallow", f0.value());
    let mut t = f0.permute(&[0, 2, 3, 1])?;
    for i in 0..cfg.rhag_count {
        t = rhag_forward(&root.child("layers").child(i), &t, cfg)?;
        trace(&format!("group.{i}"), &hat_tensor::permute_tensor(t.value(), &[0, 3, 1, 2])?);
    }
    let deep = conv(&root.child("conv_after_body"), &t.permute(&[0, 3, 1, 2])?)?.add(&f0)?;
    trace("fused", deep.value());

    let head = root.child("head");
    let mut y = conv(&head.child("conv_before"), &deep)?.leaky_relu(0.01);
    for (k, s) in cfg.upsample_stages().into_iter().enumerate() {
        y = conv(&head.child("upsample").child(k), &y)?.pixel_shuffle(s)?;
    }
    let mut y = conv(&head.child("conv_last"), &y)?;
    if ph + pw > 0 {
        y = y.narrow(2, 0, h * cfg.scale)?.narrow(3, 0, w * cfg.scale)?;
    }
    Ok(y)
}

pub fn hat_forward<'t, T: Element>(cfg: &ModelConfig, bound: &Bound<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
    hat_forward_traced(cfg, bound, x, &mut |_, _| {})
}

#[derive(Clone, Debug, PartialEq)]
pub struct HatModel<T: Element> {
    config: ModelConfig,
    params: ParamStore<T>,
}

impl<T: Element> HatModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ParamStore::init(&layout(&config)?, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        params.check_layout(&layout(&config)?)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Element>(&self) -> HatModel<U> {
        HatModel { config: self.config.clone(), params: self.params.cast() }
    }

    pub fn forward<'t>(&self, bound: &Bound<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        hat_forward(&self.config, bound, x)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        Ok(self.forward(&bound, &tape.constant(x.clone()))?.into_value())
    }

    /// Named intermediate features for one input.
    pub fn features(&self, x: &Tensor<T>) -> Result<Vec<(String, Tensor<T>)>> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let mut out = Vec::new();
        let y = hat_forward_traced(&self.config, &bound, &tape.constant(x.clone()), &mut |name, t| {
            out.push((name.to_string(), t.clone()))
        })?;
        out.push(("output".to_string(), y.into_value()));
        Ok(out)
    }
}

impl<T: Element> Restorer<T> for HatModel<T> {
    fn scale(&self) -> usize {
        self.config.scale
    }

    fn restore<'t>(&self, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let bound = self.params.bind(x.tape(), false);
        self.forward(&bound, x)
    }
}
