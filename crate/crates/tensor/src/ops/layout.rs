use std::sync::Arc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops::elementwise::walk2;
use crate::tape::Var;
use crate::tensor::{numel, resolve_shape, strides, Tensor};

/// Marks an output slot of an [`IndexMap`] that reads as zero.
pub const ZERO_FILL: usize = usize::MAX;

/// Gather plan: output element `i` reads source flat offset `src[i]`, or zero
/// when `src[i] == ZERO_FILL`. Gradients scatter-add back through the same map.
#[derive(Clone, Debug)]
pub struct IndexMap {
    pub shape: Vec<usize>,
    pub src: Arc<Vec<usize>>,
}

impl IndexMap {
    pub fn new(shape: Vec<usize>, src: Vec<usize>) -> Result<Self> {
        if numel(&shape) != src.len() {
            return Err(TensorError::shape("index map", &shape, "length mismatch"));
        }
        Ok(Self { shape, src: Arc::new(src) })
    }

    pub fn gather<T: Element>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let xd = x.data();
        if let Some(&bad) = self.src.iter().find(|&&s| s != ZERO_FILL && s >= xd.len()) {
            return Err(TensorError::shape("remap", x.shape(), format!("source offset {bad} out of range")));
        }
        let data = self.src.iter().map(|&s| if s == ZERO_FILL { T::zero() } else { xd[s] }).collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample (`[a b c] -> b | a b c | b`);
    /// pads wider than the extent keep bouncing between the edges.
    Reflect,
}

/// Mirror index for reflect padding; `i` is relative to the unpadded axis.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

pub fn permute_tensor<T: Element>(x: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let r = x.rank();
    let mut seen = vec![false; r];
    if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
        return Err(TensorError::arg("permute", format!("{perm:?} is not a permutation of rank {r}")));
    }
    let st = strides(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
    let zero = vec![0; r];
    let xd = x.data();
    let mut out = vec![T::zero(); x.numel()];
    walk2(&out_shape, &src_strides, &zero, |o, s, _| out[o] = xd[s]);
    Ok(Tensor::from_parts(out_shape, out))
}

impl<'t, T: Element> Var<'t, T> {
    /// Reinterprets the shape; `usize::MAX` marks one inferred extent.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let from = self.shape().to_vec();
        let to = resolve_shape(&from, shape)?;
        let value = self.value.reshape(&to)?;
        Ok(self.tape.record(value, &[self], Box::new(move |g, _| vec![Some(g.reshape(&from).expect("same numel"))])))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let value = permute_tensor(&self.value, perm)?;
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Ok(self.tape.record(
            value,
            &[self],
            Box::new(move |g, _| vec![Some(permute_tensor(g, &inverse).expect("valid permutation"))]),
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Self> {
        let r = self.value.rank();
        if r < 2 {
            return Err(TensorError::shape("transpose", self.shape(), "rank < 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(&perm)
    }

    /// Gathers through an [`IndexMap`]; the gradient scatter-adds.
    pub fn remap(&self, map: &IndexMap) -> Result<Self> {
        let value = map.gather(&self.value)?;
        let src_shape = self.shape().to_vec();
        let src = Arc::clone(&map.src);
        Ok(self.tape.record(
            value,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); numel(&src_shape)];
                for (&s, &gv) in src.iter().zip(g.data()) {
                    if s != ZERO_FILL {
                        gx[s] += gv;
                    }
                }
                vec![Some(Tensor::from_parts(src_shape.clone(), gx))]
            }),
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let xs = self.shape().to_vec();
        if axis >= xs.len() || start + len > xs[axis] {
            return Err(TensorError::shape("narrow", &xs, format!("axis {axis} range {start}..{}", start + len)));
        }
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis + 1..].iter().product();
        let mut out_shape = xs.clone();
        out_shape[axis] = len;
        let extent = xs[axis];
        let src: Vec<usize> =
            (0..outer).flat_map(|o| (0..len * inner).map(move |k| (o * extent + start) * inner + k)).collect();
        self.remap(&IndexMap::new(out_shape, src)?)
    }

    /// Pads the last two axes by `[top, bottom, left, right]`.
    pub fn pad2d(&self, pads: [usize; 4], mode: PadMode) -> Result<Self> {
        let xs = self.shape().to_vec();
        let r = xs.len();
        if r < 2 {
            return Err(TensorError::shape("pad2d", &xs, "rank < 2"));
        }
        let (h, w) = (xs[r - 2], xs[r - 1]);
        let [top, bottom, left, right] = pads;
        if h == 0 || w == 0 {
            return Err(TensorError::shape("pad2d", &xs, "empty spatial extent"));
        }
        let (ho, wo) = (h + top + bottom, w + left + right);
        let planes: usize = xs[..r - 2].iter().product();
        let mut src = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            for y in 0..ho {
                for x in 0..wo {
                    let sy = y as isize - top as isize;
                    let sx = x as isize - left as isize;
                    let inside = sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w;
                    src.push(match (inside, mode) {
                        (true, _) => (p * h + sy as usize) * w + sx as usize,
                        (false, PadMode::Zero) => ZERO_FILL,
                        (false, PadMode::Reflect) => (p * h + reflect_index(sy, h)) * w + reflect_index(sx, w),
                    });
                }
            }
        }
        let mut out_shape = xs[..r - 2].to_vec();
        out_shape.extend([ho, wo]);
        self.remap(&IndexMap::new(out_shape, src)?)
    }

    /// Cyclic shift: output position `i` along an axis reads `i - shift`.
    pub fn roll(&self, shifts: &[(usize, isize)]) -> Result<Self> {
        let xs = self.shape().to_vec();
        if let Some((a, _)) = shifts.iter().find(|(a, _)| *a >= xs.len()) {
            return Err(TensorError::shape("roll", &xs, format!("axis {a} out of range")));
        }
        let st = strides(&xs);
        let mut src = Vec::with_capacity(self.value.numel());
        let mut idx = vec![0usize; xs.len()];
        for _ in 0..self.value.numel() {
            let mut off = 0;
            for (d, (&i, &s)) in idx.iter().zip(&st).enumerate() {
                let shift = shifts.iter().filter(|(a, _)| *a == d).map(|(_, s)| *s).sum::<isize>();
                let j = (i as isize - shift).rem_euclid(xs[d] as isize) as usize;
                off += j * s;
            }
            src.push(off);
            for d in (0..xs.len()).rev() {
                idx[d] += 1;
                if idx[d] < xs[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        self.remap(&IndexMap::new(xs, src)?)
    }

    /// Cyclic shift of the spatial axes of an `[N, C, H, W]` tensor.
    pub fn roll2d(&self, dy: isize, dx: isize) -> Result<Self> {
        let r = self.value.rank();
        if r < 2 {
            return Err(TensorError::shape("roll2d", self.shape(), "rank < 2"));
        }
        self.roll(&[(r - 2, dy), (r - 1, dx)])
    }

    /// Depth-to-space: `[N, C·s², H, W] -> [N, C, sH, sW]`.
    pub fn pixel_shuffle(&self, s: usize) -> Result<Self> {
        let xs = self.shape().to_vec();
        if xs.len() != 4 || s == 0 || !xs[1].is_multiple_of(s * s) {
            return Err(TensorError::shape("pixel_shuffle", &xs, format!("channels not divisible by {}", s * s)));
        }
        let (n, c, h, w) = (xs[0], xs[1] / (s * s), xs[2], xs[3]);
        self.reshape(&[n, c, s, s, h, w])?.permute(&[0, 1, 4, 2, 5, 3])?.reshape(&[n, c, h * s, w * s])
    }

    /// Space-to-depth, exact inverse of [`Var::pixel_shuffle`].
    pub fn pixel_unshuffle(&self, s: usize) -> Result<Self> {
        let xs = self.shape().to_vec();
        if xs.len() != 4 || s == 0 || !xs[2].is_multiple_of(s) || !xs[3].is_multiple_of(s) {
            return Err(TensorError::shape("pixel_unshuffle", &xs, format!("spatial extent not divisible by {s}")));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2] / s, xs[3] / s);
        self.reshape(&[n, c, h, s, w, s])?.permute(&[0, 1, 3, 5, 2, 4])?.reshape(&[n, c * s * s, h, w])
    }
}
