//! Window multi-head self-attention and overlapping cross-attention.

mod window;

pub use window::{
    overlapped_size, overlapping_map, overlapping_partition, partition_map, relative_bias_lookup,
    relative_position_index, reverse_map, shift_mask, table_span, window_partition, window_reverse, WindowSpec,
    MASK_VALUE,
};

use hat_tensor::{Element, Tensor, Var};

use crate::error::{Error, Result};

/// Projection weights of one attention layer, bound to a tape.
#[derive(Clone)]
pub struct AttentionParams<'t, T: Element> {
    pub heads: usize,
    /// `[3C, C]`
    pub qkv_weight: Var<'t, T>,
    /// `[3C]`
    pub qkv_bias: Var<'t, T>,
    /// `[C, C]`
    pub proj_weight: Var<'t, T>,
    /// `[C]`
    pub proj_bias: Var<'t, T>,
    /// `[span², heads]`, see [`relative_bias_lookup`].
    pub bias_table: Var<'t, T>,
}

impl<T: Element> AttentionParams<'_, T> {
    pub fn channels(&self) -> usize {
        self.proj_weight.shape()[0]
    }
}

struct Attended<'t, T: Element> {
    out: Var<'t, T>,
    probs: Var<'t, T>,
}

fn attend<'t, T: Element>(
    x: &Var<'t, T>,
    p: &AttentionParams<'t, T>,
    m: usize,
    mo: usize,
    shift: usize,
) -> Result<Attended<'t, T>> {
    let &[n, h, w, c] = x.shape() else {
        return Err(Error::data(format!("attention expects [N, H, W, C], got {:?}", x.shape())));
    };
    if c != p.channels() || p.heads == 0 || c % p.heads != 0 {
        return Err(Error::config(format!(
            "attention over {c} channels with {} heads and projection width {}",
            p.heads,
            p.channels()
        )));
    }
    let heads = p.heads;
    let d = c / heads;
    let spec = WindowSpec { window: m, shift, overlap_ratio: (mo as f64 / m as f64) - 1.0, overlapped: mo };
    let s = shift as isize;

    let shifted = if shift > 0 { x.roll(&[(1, -s), (2, -s)])? } else { x.clone() };
    let qkv = shifted.linear(&p.qkv_weight, Some(&p.qkv_bias))?;
    let q = window_partition(&qkv.narrow(3, 0, c)?, m)?;
    let (k, v) = if mo == m {
        (window_partition(&qkv.narrow(3, c, c)?, m)?, window_partition(&qkv.narrow(3, 2 * c, c)?, m)?)
    } else {
        (overlapping_partition(&qkv.narrow(3, c, c)?, &spec)?, overlapping_partition(&qkv.narrow(3, 2 * c, c)?, &spec)?)
    };
    let windows = q.shape()[0];
    let (nq, nk) = (m * m, mo * mo);
    let split = |t: &Var<'t, T>, len: usize| t.reshape(&[windows, len, heads, d])?.permute(&[0, 2, 1, 3]);

    let qh = split(&q.scale(1.0 / (d as f64).sqrt()), nq)?;
    let kh = split(&k, nk)?;
    let vh = split(&v, nk)?;

    let mut logits = qh.matmul_t(&kh)?.add(&relative_bias_lookup(&p.bias_table, m, mo)?)?;
    if shift > 0 {
        let per_image = windows / n;
        let mask = x.constant_like(shift_mask::<T>(h, w, m, shift)?.reshape(&[per_image, 1, nq, nk])?);
        logits = logits.reshape(&[n, per_image, heads, nq, nk])?.add(&mask)?.reshape(&[windows, heads, nq, nk])?;
    }
    let probs = logits.softmax(3)?;
    let mixed = probs
        .matmul(&vh)?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[windows, nq, c])?
        .linear(&p.proj_weight, Some(&p.proj_bias))?;
    let mut out = window_reverse(&mixed, m, n, h, w)?;
    if shift > 0 {
        out = out.roll(&[(1, s), (2, s)])?;
    }
    Ok(Attended { out, probs })
}

fn check_self(spec: &WindowSpec) -> Result<()> {
    if spec.overlapped != spec.window {
        return Err(Error::config("window self-attention needs overlapped == window"));
    }
    Ok(())
}

/// (Shifted) window multi-head self-attention over `[N, H, W, C]`.
pub fn wmsa<'t, T: Element>(x: &Var<'t, T>, p: &AttentionParams<'t, T>, spec: &WindowSpec) -> Result<Var<'t, T>> {
    check_self(spec)?;
    Ok(attend(x, p, spec.window, spec.window, spec.shift)?.out)
}

/// Softmax weights `[N·nW, heads, M², M²]` used by [`wmsa`].
pub fn wmsa_probs<T: Element>(x: &Var<'_, T>, p: &AttentionParams<'_, T>, spec: &WindowSpec) -> Result<Tensor<T>> {
    check_self(spec)?;
    Ok(attend(x, p, spec.window, spec.window, spec.shift)?.probs.into_value())
}

/// Overlapping cross-attention: queries from `M×M` windows, keys and values
/// from the zero-padded `M_o×M_o` patches around them.
pub fn oca<'t, T: Element>(x: &Var<'t, T>, p: &AttentionParams<'t, T>, spec: &WindowSpec) -> Result<Var<'t, T>> {
    if spec.shift != 0 {
        return Err(Error::config("overlapping cross-attention is never shifted"));
    }
    Ok(attend(x, p, spec.window, spec.overlapped, 0)?.out)
}

/// Softmax weights `[N·nW, heads, M², M_o²]` used by [`oca`].
pub fn oca_probs<T: Element>(x: &Var<'_, T>, p: &AttentionParams<'_, T>, spec: &WindowSpec) -> Result<Tensor<T>> {
    if spec.shift != 0 {
        return Err(Error::config("overlapping cross-attention is never shifted"));
    }
    Ok(attend(x, p, spec.window, spec.overlapped, 0)?.probs.into_value())
}
