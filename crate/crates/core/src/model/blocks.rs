//! Building blocks: channel attention, hybrid attention, overlapping
//! cross-attention and the residual group, each with its parameter layout.

use hat_tensor::{Element, Var, LAYERNORM_EPS};

use super::config::ModelConfig;
use super::params::{Init, ParamSpec, Scope};
use crate::attention::{oca, table_span, wmsa, AttentionParams};
use crate::error::Result;

const PROJ_STD: f64 = 0.02;

fn linear_layout(out: &mut Vec<ParamSpec>, path: &str, dout: usize, din: usize) {
    out.push(ParamSpec::new(format!("{path}.weight"), [dout, din], Init::TruncNormal(PROJ_STD)));
    out.push(ParamSpec::new(format!("{path}.bias"), [dout], Init::Zeros));
}

pub(crate) fn conv_layout(out: &mut Vec<ParamSpec>, path: &str, cout: usize, cin: usize, k: usize) {
    let fan_in = cin * k * k;
    out.push(ParamSpec::new(format!("{path}.weight"), [cout, cin, k, k], Init::FanIn(fan_in)));
    out.push(ParamSpec::new(format!("{path}.bias"), [cout], Init::FanIn(fan_in)));
}

fn norm_layout(out: &mut Vec<ParamSpec>, path: &str, c: usize) {
    out.push(ParamSpec::new(format!("{path}.weight"), [c], Init::Ones));
    out.push(ParamSpec::new(format!("{path}.bias"), [c], Init::Zeros));
}

fn attention_layout(out: &mut Vec<ParamSpec>, path: &str, cfg: &ModelConfig, keys_side: usize) {
    let c = cfg.channels;
    linear_layout(out, &format!("{path}.qkv"), 3 * c, c);
    linear_layout(out, &format!("{path}.proj"), c, c);
    let span = table_span(cfg.window, keys_side);
    out.push(ParamSpec::new(
        format!("{path}.relative_position_bias_table"),
        [span * span, cfg.heads],
        Init::TruncNormal(PROJ_STD),
    ));
}

fn mlp_layout(out: &mut Vec<ParamSpec>, path: &str, cfg: &ModelConfig) {
    linear_layout(out, &format!("{path}.fc1"), cfg.mlp_hidden(), cfg.channels);
    linear_layout(out, &format!("{path}.fc2"), cfg.channels, cfg.mlp_hidden());
}

pub fn cab_layout(out: &mut Vec<ParamSpec>, path: &str, cfg: &ModelConfig) {
    let c = cfg.channels;
    conv_layout(out, &format!("{path}.squeeze"), cfg.squeezed(), c, 3);
    conv_layout(out, &format!("{path}.expand"), c, cfg.squeezed(), 3);
    linear_layout(out, &format!("{path}.reduce"), cfg.ca_hidden(), c);
    linear_layout(out, &format!("{path}.restore"), c, cfg.ca_hidden());
}

pub fn hab_layout(out: &mut Vec<ParamSpec>, path: &str, cfg: &ModelConfig) {
    norm_layout(out, &format!("{path}.norm1"), cfg.channels);
    attention_layout(out, &format!("{path}.attn"), cfg, cfg.window);
    if cfg.use_cab {
        cab_layout(out, &format!("{path}.cab"), cfg);
    }
    norm_layout(out, &format!("{path}.norm2"), cfg.channels);
    mlp_layout(out, &format!("{path}.mlp"), cfg);
}

pub fn ocab_layout(out: &mut Vec<ParamSpec>, path: &str, cfg: &ModelConfig) -> Result<()> {
    let mo = cfg.overlap_spec()?.overlapped;
    norm_layout(out, &format!("{path}.norm1"), cfg.channels);
    attention_layout(out, &format!("{path}.attn"), cfg, mo);
    norm_layout(out, &format!("{path}.norm2"), cfg.channels);
    mlp_layout(out, &format!("{path}.mlp"), cfg);
    Ok(())
}

pub fn rhag_layout(out: &mut Vec<ParamSpec>, path: &str, cfg: &ModelConfig) -> Result<()> {
    for j in 0..cfg.hab_per_rhag {
        hab_layout(out, &format!("{path}.blocks.{j}"), cfg);
    }
    if cfg.use_ocab {
        ocab_layout(out, &format!("{path}.overlap"), cfg)?;
    }
    conv_layout(out, &format!("{path}.conv"), cfg.channels, cfg.channels, 3);
    Ok(())
}

fn linear<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(x.linear(&s.var("weight")?, Some(&s.var("bias")?))?)
}

/// Same-size 3x3 (or any odd) convolution with bias.
pub(crate) fn conv<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
    let w = s.var("weight")?;
    let pad = w.shape()[2] / 2;
    Ok(x.conv2d(&w, Some(&s.var("bias")?), 1, pad)?)
}

fn norm<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(x.layernorm(&s.var("weight")?, &s.var("bias")?, LAYERNORM_EPS)?)
}

fn mlp<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
    let h = linear(&s.child("fc1"), x)?.gelu();
    linear(&s.child("fc2"), &h)
}

pub fn attention_params<'t, T: Element>(s: &Scope<'_, 't, T>, heads: usize) -> Result<AttentionParams<'t, T>> {
    Ok(AttentionParams {
        heads,
        qkv_weight: s.var("qkv.weight")?,
        qkv_bias: s.var("qkv.bias")?,
        proj_weight: s.var("proj.weight")?,
        proj_bias: s.var("proj.bias")?,
        bias_table: s.var("relative_position_bias_table")?,
    })
}

/// Channel attention block on `[N, C, H, W]`.
pub fn cab_forward<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
    let feat = conv(&s.child("expand"), &conv(&s.child("squeeze"), x)?.gelu())?;
    let &[n, c, _, _] = feat.shape() else { unreachable!("conv output is rank 4") };
    let pooled = feat.global_avg_pool()?;
    let gate =
        linear(&s.child("restore"), &linear(&s.child("reduce"), &pooled)?.relu())?.sigmoid().reshape(&[n, c, 1, 1])?;
    Ok(feat.mul(&gate)?)
}

/// Hybrid attention block on `[N, H, W, C]`; `index` picks the shift.
pub fn hab_forward<'t, T: Element>(
    s: &Scope<'_, 't, T>,
    x: &Var<'t, T>,
    cfg: &ModelConfig,
    index: usize,
) -> Result<Var<'t, T>> {
    let xn = norm(&s.child("norm1"), x)?;
    let attn = wmsa(&xn, &attention_params(&s.child("attn"), cfg.heads)?, &cfg.block_spec(index)?)?;
    let xm = if cfg.use_cab {
        let local = cab_forward(&s.child("cab"), &xn.permute(&[0, 3, 1, 2])?)?.permute(&[0, 2, 3, 1])?;
        attn.add(&local.scale(cfg.alpha))?.add(x)?
    } else {
        attn.add(x)?
    };
    Ok(mlp(&s.child("mlp"), &norm(&s.child("norm2"), &xm)?)?.add(&xm)?)
}

/// Overlapping cross-attention block on `[N, H, W, C]`.
pub fn ocab_forward<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>, cfg: &ModelConfig) -> Result<Var<'t, T>> {
    let xn = norm(&s.child("norm1"), x)?;
    let y = oca(&xn, &attention_params(&s.child("attn"), cfg.heads)?, &cfg.overlap_spec()?)?.add(x)?;
    Ok(mlp(&s.child("mlp"), &norm(&s.child("norm2"), &y)?)?.add(&y)?)
}

/// Residual hybrid attention group on `[N, H, W, C]`.
pub fn rhag_forward<'t, T: Element>(s: &Scope<'_, 't, T>, x: &Var<'t, T>, cfg: &ModelConfig) -> Result<Var<'t, T>> {
    let mut t = x.clone();
    for j in 0..cfg.hab_per_rhag {
        t = hab_forward(&s.child("blocks").child(j), &t, cfg, j)?;
    }
    if cfg.use_ocab {
        t = ocab_forward(&s.child("overlap"), &t, cfg)?;
    }
    let mixed = conv(&s.child("conv"), &t.permute(&[0, 3, 1, 2])?)?.permute(&[0, 2, 3, 1])?;
    Ok(mixed.add(x)?)
}
