use crate::element::{gemm, Element, MatView};
use crate::error::{Result, TensorError};
use crate::ops::elementwise::{broadcast_shape, broadcast_strides};
use crate::tape::Var;
use crate::tensor::{numel, Tensor};

/// One operand of a batched product: flat storage, per-batch element
/// offsets (broadcast aware), and the in-matrix strides.
struct Operand<'a, T> {
    data: &'a [T],
    batch_strides: Vec<usize>,
    rs: usize,
    cs: usize,
}

fn operand<'a, T>(data: &'a [T], shape: &[usize], batch: &[usize], transposed: bool) -> Operand<'a, T> {
    let r = shape.len();
    let (rows, cols) = (shape[r - 2], shape[r - 1]);
    let mat = rows * cols;
    let batch_strides = broadcast_strides(&shape[..r - 2], batch).into_iter().map(|s| s * mat).collect();
    let (rs, cs) = if transposed { (1, cols) } else { (cols, 1) };
    Operand { data, batch_strides, rs, cs }
}

fn batch_offset(mut flat: usize, batch: &[usize], strides: &[usize]) -> usize {
    let mut off = 0;
    for d in (0..batch.len()).rev() {
        off += (flat % batch[d]) * strides[d];
        flat /= batch[d];
    }
    off
}

#[allow(clippy::too_many_arguments)]
fn batched_gemm<T: Element>(
    batch: &[usize],
    m: usize,
    k: usize,
    n: usize,
    a: &Operand<'_, T>,
    b: &Operand<'_, T>,
    c: &mut [T],
    c_batch_strides: &[usize],
    c_rs: usize,
    c_cs: usize,
    beta: T,
) {
    for bi in 0..numel(batch) {
        let ao = batch_offset(bi, batch, &a.batch_strides);
        let bo = batch_offset(bi, batch, &b.batch_strides);
        let co = batch_offset(bi, batch, c_batch_strides);
        gemm(
            m,
            k,
            n,
            T::one(),
            a.data,
            MatView { offset: ao, rs: a.rs, cs: a.cs },
            b.data,
            MatView { offset: bo, rs: b.rs, cs: b.cs },
            beta,
            c,
            MatView { offset: co, rs: c_rs, cs: c_cs },
        );
    }
}

struct Dims {
    batch: Vec<usize>,
    m: usize,
    k: usize,
    n: usize,
}

fn product_dims(a: &[usize], ta: bool, b: &[usize], tb: bool) -> Result<Dims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TensorError::mismatch("matmul", a, b));
    }
    let (ra, rb) = (a.len(), b.len());
    let (m, ka) = if ta { (a[ra - 1], a[ra - 2]) } else { (a[ra - 2], a[ra - 1]) };
    let (kb, n) = if tb { (b[rb - 1], b[rb - 2]) } else { (b[rb - 2], b[rb - 1]) };
    if ka != kb {
        return Err(TensorError::mismatch("matmul", a, b));
    }
    let batch =
        broadcast_shape("matmul", &a[..ra - 2], &b[..rb - 2]).map_err(|_| TensorError::mismatch("matmul", a, b))?;
    Ok(Dims { batch, m, k: ka, n })
}

/// `op(a) · op(b)` where `op` optionally transposes the last two axes.
pub fn matmul_ex<T: Element>(a: &Tensor<T>, ta: bool, b: &Tensor<T>, tb: bool) -> Result<Tensor<T>> {
    let Dims { batch, m, k, n } = product_dims(a.shape(), ta, b.shape(), tb)?;
    let mut out_shape = batch.clone();
    out_shape.extend([m, n]);
    let mut out = vec![T::zero(); numel(&out_shape)];
    let oa = operand(a.data(), a.shape(), &batch, ta);
    let ob = operand(b.data(), b.shape(), &batch, tb);
    let cs = crate::tensor::strides(&batch).into_iter().map(|s| s * m * n).collect::<Vec<_>>();
    batched_gemm(&batch, m, k, n, &oa, &ob, &mut out, &cs, n, 1, T::zero());
    Ok(Tensor::from_parts(out_shape, out))
}

impl<'t, T: Element> Var<'t, T> {
    /// Batched matrix product `self[.., m, k] · rhs[.., k, n]` with broadcast batch axes.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.matmul_ex(false, rhs, false)
    }

    /// `self · rhsᵀ` on the last two axes.
    pub fn matmul_t(&self, rhs: &Self) -> Result<Self> {
        self.matmul_ex(false, rhs, true)
    }

    pub fn matmul_ex(&self, ta: bool, rhs: &Self, tb: bool) -> Result<Self> {
        let (av, bv) = (self.value.clone(), rhs.value.clone());
        let value = matmul_ex(&av, ta, &bv, tb)?;
        let Dims { batch, m, k, n } = product_dims(av.shape(), ta, bv.shape(), tb)?;
        Ok(self.tape.record(
            value,
            &[self, rhs],
            Box::new(move |g, mask| {
                let gd = g.data();
                let g_strides: Vec<usize> = crate::tensor::strides(&batch).into_iter().map(|s| s * m * n).collect();
                let gop = |transposed: bool| Operand {
                    data: gd,
                    batch_strides: g_strides.clone(),
                    rs: if transposed { 1 } else { n },
                    cs: if transposed { n } else { 1 },
                };
                // op(b) as it appears in the forward product (k×n), and op(a) (m×k)
                let opb = |flip: bool| {
                    let o = operand(bv.data(), bv.shape(), &batch, tb);
                    if flip {
                        Operand { rs: o.cs, cs: o.rs, ..o }
                    } else {
                        o
                    }
                };
                let opa = |flip: bool| {
                    let o = operand(av.data(), av.shape(), &batch, ta);
                    if flip {
                        Operand { rs: o.cs, cs: o.rs, ..o }
                    } else {
                        o
                    }
                };

                let ga = mask[0].then(|| {
                    let mut buf = vec![T::zero(); av.numel()];
                    let target = operand(&[] as &[T], av.shape(), &batch, false).batch_strides;
                    let ra = av.rank();
                    let cols = av.shape()[ra - 1];
                    if !ta {
                        // dA (m×k) = dC (m×n) · op(b)ᵀ (n×k)
                        batched_gemm(&batch, m, n, k, &gop(false), &opb(true), &mut buf, &target, cols, 1, T::one());
                    } else {
                        // stored A is k×m: dAᵀ = op(b) (k×n) · dCᵀ (n×m)
                        batched_gemm(&batch, k, n, m, &opb(false), &gop(true), &mut buf, &target, cols, 1, T::one());
                    }
                    Tensor::from_parts(av.shape().to_vec(), buf)
                });
                let gb = mask[1].then(|| {
                    let mut buf = vec![T::zero(); bv.numel()];
                    let target = operand(&[] as &[T], bv.shape(), &batch, false).batch_strides;
                    let rb = bv.rank();
                    let cols = bv.shape()[rb - 1];
                    if !tb {
                        // dB (k×n) = op(a)ᵀ (k×m) · dC (m×n)
                        batched_gemm(&batch, k, m, n, &opa(true), &gop(false), &mut buf, &target, cols, 1, T::one());
                    } else {
                        // stored B is n×k: dBᵀ = dCᵀ (n×m) · op(a) (m×k)
                        batched_gemm(&batch, n, m, k, &gop(true), &opa(false), &mut buf, &target, cols, 1, T::one());
                    }
                    Tensor::from_parts(bv.shape().to_vec(), buf)
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Affine map over the last axis: `x · wᵀ + b` with `w: [out, in]`.
    pub fn linear(&self, weight: &Self, bias: Option<&Self>) -> Result<Self> {
        let xs = self.shape().to_vec();
        let Some((&fan_in, lead)) = xs.split_last() else {
            return Err(TensorError::shape("linear", &xs, "input must have rank >= 1"));
        };
        if weight.value.rank() != 2 || weight.shape()[1] != fan_in {
            return Err(TensorError::mismatch("linear", &xs, weight.shape()));
        }
        let fan_out = weight.shape()[0];
        let flat = self.reshape(&[usize::MAX, fan_in])?;
        let mut y = flat.matmul_t(weight)?;
        if let Some(b) = bias {
            if b.shape() != [fan_out] {
                return Err(TensorError::mismatch("linear bias", b.shape(), &[fan_out]));
            }
            y = y.add(b)?;
        }
        let mut out_shape = lead.to_vec();
        out_shape.push(fan_out);
        y.reshape(&out_shape)
    }
}
