use crate::element::{gemm, Element, MatView};
use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || w.len() != 4 || x[1] != w[1] {
            return Err(TensorError::mismatch("conv2d", x, w));
        }
        if stride == 0 {
            return Err(TensorError::arg("conv2d", "stride must be positive"));
        }
        let (h, wd, kh, kw) = (x[2], x[3], w[2], w[3]);
        let span_h = h + 2 * pad;
        let span_w = wd + 2 * pad;
        if span_h < kh || span_w < kw || !(span_h - kh).is_multiple_of(stride) || !(span_w - kw).is_multiple_of(stride)
        {
            return Err(TensorError::shape(
                "conv2d",
                x,
                format!("non-integral output extent for kernel {kh}x{kw}, stride {stride}, pad {pad}"),
            ));
        }
        Ok(Self {
            n: x[0],
            c: x[1],
            h,
            w: wd,
            o: w[0],
            kh,
            kw,
            stride,
            pad,
            ho: (span_h - kh) / stride + 1,
            wo: (span_w - kw) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.ho * self.wo
    }

    /// Output columns `[lo, hi)` of a row whose input column
    /// `ox * stride + j - pad` lands inside `[0, w)`.
    fn valid_cols(&self, j: usize) -> (usize, usize) {
        let lo = if j >= self.pad { 0 } else { (self.pad - j).div_ceil(self.stride) };
        let hi = if self.w + self.pad > j { ((self.w + self.pad - j - 1) / self.stride + 1).min(self.wo) } else { 0 };
        (lo, hi.max(lo))
    }

    /// Visits every (column-matrix offset, sample offset) pair whose input
    /// pixel is inside the image, row by row.
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let plane = self.plane();
        for c in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let r = (c * self.kh + i) * self.kw + j;
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.ho {
                        let y = oy * self.stride + i;
                        if y < self.pad || y - self.pad >= self.h {
                            continue;
                        }
                        let src_row = (c * self.h + y - self.pad) * self.w;
                        // f(col offset, source offset, count, source stride)
                        let x0 = lo * self.stride + j - self.pad;
                        f(r * plane + oy * self.wo + lo, src_row + x0, hi - lo, self.stride);
                    }
                }
            }
        }
    }
}

fn im2col<T: Element>(g: &Geometry, sample: &[T], cols: &mut [T]) {
    cols.fill(T::zero());
    g.for_each_row(|dst, src, n, stride| {
        let out = &mut cols[dst..dst + n];
        if stride == 1 {
            out.copy_from_slice(&sample[src..src + n]);
        } else {
            for (k, v) in out.iter_mut().enumerate() {
                *v = sample[src + k * stride];
            }
        }
    });
}

fn col2im<T: Element>(g: &Geometry, cols: &[T], sample: &mut [T]) {
    g.for_each_row(|dst, src, n, stride| {
        for k in 0..n {
            sample[src + k * stride] += cols[dst + k];
        }
    });
}

/// Untracked 2-D cross-correlation, `[N,C,H,W] ⋆ [O,C,kh,kw] -> [N,O,H',W']`.
pub fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), w.shape(), stride, pad)?;
    if let Some(b) = b {
        if b.shape() != [g.o] {
            return Err(TensorError::mismatch("conv2d bias", b.shape(), &[g.o]));
        }
    }
    let (xd, wd) = (x.data(), w.data());
    let in_sample = g.c * g.h * g.w;
    let out_sample = g.o * g.plane();
    let mut out = vec![T::zero(); g.n * out_sample];
    let mut cols = vec![T::zero(); g.patch() * g.plane()];
    for n in 0..g.n {
        im2col(&g, &xd[n * in_sample..(n + 1) * in_sample], &mut cols);
        let dst = &mut out[n * out_sample..(n + 1) * out_sample];
        if let Some(b) = b {
            for (o, chunk) in dst.chunks_mut(g.plane()).enumerate() {
                chunk.fill(b.data()[o]);
            }
        }
        gemm(
            g.o,
            g.patch(),
            g.plane(),
            T::one(),
            wd,
            MatView::row_major(0, g.patch()),
            &cols,
            MatView::row_major(0, g.plane()),
            if b.is_some() { T::one() } else { T::zero() },
            dst,
            MatView::row_major(0, g.plane()),
        );
    }
    Ok(Tensor::from_parts(vec![g.n, g.o, g.ho, g.wo], out))
}

impl<'t, T: Element> Var<'t, T> {
    /// 2-D cross-correlation with zero padding (no kernel flip).
    pub fn conv2d(&self, weight: &Self, bias: Option<&Self>, stride: usize, pad: usize) -> Result<Self> {
        let (xv, wv) = (self.value.clone(), weight.value.clone());
        let value = conv2d_forward(&xv, &wv, bias.map(|b| &b.value), stride, pad)?;
        let g = Geometry::new(xv.shape(), wv.shape(), stride, pad)?;
        let backward = Box::new(move |gout: &Tensor<T>, mask: &[bool]| {
            let (xd, wd, gd) = (xv.data(), wv.data(), gout.data());
            let in_sample = g.c * g.h * g.w;
            let out_sample = g.o * g.plane();
            let mut gx = mask[0].then(|| vec![T::zero(); xv.numel()]);
            let mut gw = mask[1].then(|| vec![T::zero(); wv.numel()]);
            let mut cols = vec![T::zero(); g.patch() * g.plane()];
            for n in 0..g.n {
                let go = &gd[n * out_sample..(n + 1) * out_sample];
                if let Some(gw) = gw.as_mut() {
                    im2col(&g, &xd[n * in_sample..(n + 1) * in_sample], &mut cols);
                    // dW (O×CKK) += dY (O×P) · colsᵀ (P×CKK)
                    gemm(
                        g.o,
                        g.plane(),
                        g.patch(),
                        T::one(),
                        go,
                        MatView::row_major(0, g.plane()),
                        &cols,
                        MatView::transposed(0, g.plane()),
                        T::one(),
                        gw,
                        MatView::row_major(0, g.patch()),
                    );
                }
                if let Some(gx) = gx.as_mut() {
                    // dcols (CKK×P) = Wᵀ (CKK×O) · dY (O×P)
                    gemm(
                        g.patch(),
                        g.o,
                        g.plane(),
                        T::one(),
                        wd,
                        MatView::transposed(0, g.patch()),
                        go,
                        MatView::row_major(0, g.plane()),
                        T::zero(),
                        &mut cols,
                        MatView::row_major(0, g.plane()),
                    );
                    col2im(&g, &cols, &mut gx[n * in_sample..(n + 1) * in_sample]);
                }
            }
            let gb = (mask.len() > 2 && mask[2]).then(|| {
                let mut acc = vec![T::zero(); g.o];
                for n in 0..g.n {
                    for (o, a) in acc.iter_mut().enumerate() {
                        let start = n * out_sample + o * g.plane();
                        *a += gd[start..start + g.plane()].iter().copied().sum::<T>();
                    }
                }
                Tensor::from_parts(vec![g.o], acc)
            });
            let mut grads = vec![
                gx.map(|d| Tensor::from_parts(xv.shape().to_vec(), d)),
                gw.map(|d| Tensor::from_parts(wv.shape().to_vec(), d)),
            ];
            if mask.len() > 2 {
                grads.push(gb);
            }
            grads
        });
        Ok(match bias {
            Some(b) => self.tape.record(value, &[self, weight, b], backward),
            None => self.tape.record(value, &[self, weight], backward),
        })
    }
}
