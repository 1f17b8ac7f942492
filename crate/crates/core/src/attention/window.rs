//! Window geometry over `[N, H, W, C]` token grids.

use hat_tensor::{Element, IndexMap, Tensor, Var, ZERO_FILL};

use crate::error::{Error, Result};

/// Additive logit for query/key pairs that must not interact.
pub const MASK_VALUE: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub window: usize,
    pub shift: usize,
    pub overlap_ratio: f64,
    pub overlapped: usize,
}

impl WindowSpec {
    pub fn new(window: usize, shift: usize, overlap_ratio: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("window size must be at least 1"));
        }
        if shift != 0 && shift != window / 2 {
            return Err(Error::config(format!("shift {shift} must be 0 or {}", window / 2)));
        }
        let overlapped = overlapped_size(window, overlap_ratio)?;
        Ok(Self { window, shift, overlap_ratio, overlapped })
    }

    /// Plain (shifted) window self-attention geometry.
    pub fn self_attention(window: usize, shift: usize) -> Result<Self> {
        Self::new(window, shift, 0.0)
    }

    /// Zero padding added on each side of the base window.
    pub fn overlap_pad(&self) -> usize {
        (self.overlapped - self.window) / 2
    }
}

/// `(1 + γ)·M`, rejected unless integral and centred on the base window.
pub fn overlapped_size(window: usize, ratio: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(format!("overlap ratio {ratio} outside [0, 1]")));
    }
    let exact = (1.0 + ratio) * window as f64;
    let mo = exact.round();
    if (exact - mo).abs() > 1e-9 {
        return Err(Error::config(format!("(1 + {ratio})·{window} = {exact} is not an integer")));
    }
    let mo = mo as usize;
    if !(mo - window).is_multiple_of(2) {
        return Err(Error::config(format!("overlapped window {mo} and window {window} differ by an odd amount")));
    }
    Ok(mo)
}

fn grid_dims(shape: &[usize], m: usize, op: &str) -> Result<(usize, usize, usize, usize)> {
    let &[n, h, w, c] = shape else {
        return Err(Error::data(format!("{op}: expected [N, H, W, C], got {shape:?}")));
    };
    if h % m != 0 || w % m != 0 {
        return Err(Error::data(format!("{op}: extent {h}x{w} not divisible by window {m}")));
    }
    Ok((n, h, w, c))
}

/// Source offsets of `[N·nW, side², C]` patches of stride `m`, starting
/// `pad` pixels above/left of each base window. Reads outside the image
/// become [`ZERO_FILL`].
fn patch_map(shape: &[usize], m: usize, side: usize, pad: usize) -> Result<IndexMap> {
    let (n, h, w, c) = grid_dims(shape, m, "window partition")?;
    let (nh, nw) = (h / m, w / m);
    let mut src = Vec::with_capacity(n * nh * nw * side * side * c);
    for b in 0..n {
        for wy in 0..nh {
            for wx in 0..nw {
                for i in 0..side {
                    for j in 0..side {
                        let y = (wy * m + i) as isize - pad as isize;
                        let x = (wx * m + j) as isize - pad as isize;
                        let inside = y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w;
                        for ch in 0..c {
                            src.push(if inside { ((b * h + y as usize) * w + x as usize) * c + ch } else { ZERO_FILL });
                        }
                    }
                }
            }
        }
    }
    Ok(IndexMap::new(vec![n * nh * nw, side * side, c], src)?)
}

pub fn partition_map(shape: &[usize], m: usize) -> Result<IndexMap> {
    patch_map(shape, m, m, 0)
}

pub fn overlapping_map(shape: &[usize], spec: &WindowSpec) -> Result<IndexMap> {
    patch_map(shape, spec.window, spec.overlapped, spec.overlap_pad())
}

/// Inverse of [`partition_map`]: `[N·nW, M², C] -> [N, H, W, C]`.
pub fn reverse_map(n: usize, h: usize, w: usize, c: usize, m: usize) -> Result<IndexMap> {
    grid_dims(&[n, h, w, c], m, "window reverse")?;
    let nw = w / m;
    let windows_per_image = (h / m) * nw;
    let mut src = Vec::with_capacity(n * h * w * c);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let win = b * windows_per_image + (y / m) * nw + x / m;
                let slot = (y % m) * m + x % m;
                for ch in 0..c {
                    src.push((win * m * m + slot) * c + ch);
                }
            }
        }
    }
    Ok(IndexMap::new(vec![n, h, w, c], src)?)
}

/// `[N, H, W, C] -> [N·HW/M², M², C]`, windows in raster order.
pub fn window_partition<'t, T: Element>(x: &Var<'t, T>, m: usize) -> Result<Var<'t, T>> {
    Ok(x.remap(&partition_map(x.shape(), m)?)?)
}

pub fn window_reverse<'t, T: Element>(
    windows: &Var<'t, T>,
    m: usize,
    n: usize,
    h: usize,
    w: usize,
) -> Result<Var<'t, T>> {
    let c = *windows.shape().last().unwrap_or(&0);
    let expect = [n * (h / m) * (w / m), m * m, c];
    if windows.shape() != expect {
        return Err(Error::data(format!("window reverse: got {:?}, expected {expect:?}", windows.shape())));
    }
    Ok(windows.remap(&reverse_map(n, h, w, c, m)?)?)
}

/// `[N, H, W, C] -> [N·HW/M², M_o², C]`, each patch centred on its base window.
pub fn overlapping_partition<'t, T: Element>(x: &Var<'t, T>, spec: &WindowSpec) -> Result<Var<'t, T>> {
    Ok(x.remap(&overlapping_map(x.shape(), spec)?)?)
}

/// Region label of a coordinate after a cyclic shift by `s` on an axis of
/// extent `len` partitioned into windows of `m`.
fn region(p: usize, len: usize, m: usize, s: usize) -> usize {
    if p < len - m {
        0
    } else if p < len - s {
        1
    } else {
        2
    }
}

/// Additive mask `[HW/M², M², M²]` for shifted windows: zero where query and
/// key come from the same pre-shift region, [`MASK_VALUE`] otherwise.
pub fn shift_mask<T: Element>(h: usize, w: usize, m: usize, s: usize) -> Result<Tensor<T>> {
    grid_dims(&[1, h, w, 1], m, "shift mask")?;
    let (nh, nw) = (h / m, w / m);
    let n = m * m;
    let mut data = vec![T::zero(); nh * nw * n * n];
    if s == 0 {
        return Ok(Tensor::new([nh * nw, n, n], data)?);
    }
    let masked = T::of(MASK_VALUE);
    for wy in 0..nh {
        for wx in 0..nw {
            let label = |slot: usize| {
                let (y, x) = (wy * m + slot / m, wx * m + slot % m);
                region(y, h, m, s) * 3 + region(x, w, m, s)
            };
            let base = (wy * nw + wx) * n * n;
            for q in 0..n {
                for k in 0..n {
                    if label(q) != label(k) {
                        data[base + q * n + k] = masked;
                    }
                }
            }
        }
    }
    Ok(Tensor::new([nh * nw, n, n], data)?)
}

/// Side of the relative-position table for queries in an `m` window and keys
/// in an `mo` patch.
pub fn table_span(m: usize, mo: usize) -> usize {
    m + mo - 1
}

/// Flat table cell for every (query, key) pair, `[M², M_o²]` row-major.
///
/// The key patch starts `(M_o − M)/2` before the window, so the displacement
/// `q − k + (M_o − M)/2` spans `[−(M_o − 1) + off, M − 1 + off]` and shifting
/// it to a zero base gives `q − k + M_o − 1` per axis.
pub fn relative_position_index(m: usize, mo: usize) -> Vec<usize> {
    let span = table_span(m, mo);
    let mut idx = Vec::with_capacity(m * m * mo * mo);
    for q in 0..m * m {
        let (qy, qx) = (q / m, q % m);
        for k in 0..mo * mo {
            let (ky, kx) = (k / mo, k % mo);
            let dy = qy + mo - 1 - ky;
            let dx = qx + mo - 1 - kx;
            idx.push(dy * span + dx);
        }
    }
    idx
}

/// Expands a `[span², heads]` table into the bias `[heads, M², M_o²]`.
pub fn relative_bias_lookup<'t, T: Element>(table: &Var<'t, T>, m: usize, mo: usize) -> Result<Var<'t, T>> {
    let span = table_span(m, mo);
    let &[cells, heads] = table.shape() else {
        return Err(Error::data(format!("bias table must be [cells, heads], got {:?}", table.shape())));
    };
    if cells != span * span {
        return Err(Error::data(format!("bias table has {cells} cells, displacements need {span}x{span}")));
    }
    let idx = relative_position_index(m, mo);
    let mut src = Vec::with_capacity(heads * idx.len());
    for h in 0..heads {
        src.extend(idx.iter().map(|&cell| cell * heads + h));
    }
    Ok(table.remap(&IndexMap::new(vec![heads, m * m, mo * mo], src)?)?)
}
