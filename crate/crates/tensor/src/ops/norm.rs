use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Default layer-norm epsilon.
pub const LAYERNORM_EPS: f64 = 1e-5;

impl<'t, T: Element> Var<'t, T> {
    /// Normalizes over the last axis, then applies `gamma * x̂ + beta`.
    pub fn layernorm(&self, gamma: &Self, beta: &Self, eps: f64) -> Result<Self> {
        let xs = self.shape().to_vec();
        let c = *xs.last().ok_or_else(|| TensorError::shape("layernorm", &xs, "rank 0"))?;
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(TensorError::mismatch("layernorm", &xs, gamma.shape()));
        }
        let (xv, gv, bv) = (self.value.clone(), gamma.value.clone(), beta.value.clone());
        let rows = xv.numel() / c.max(1);
        let eps = T::of(eps);
        let cn = T::of(c as f64);

        let mut xhat = vec![T::zero(); xv.numel()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.numel()];
        for r in 0..rows {
            let row = &xv.data()[r * c..(r + 1) * c];
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[r * c + j] = h;
                out[r * c + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let value = Tensor::from_parts(xs.clone(), out);

        Ok(self.tape.record(
            value,
            &[self, gamma, beta],
            Box::new(move |g, mask| {
                let gd = g.data();
                let mut gx = mask[0].then(|| vec![T::zero(); xhat.len()]);
                let mut gg = vec![T::zero(); c];
                let mut gb = vec![T::zero(); c];
                for r in 0..rows {
                    let gr = &gd[r * c..(r + 1) * c];
                    let hr = &xhat[r * c..(r + 1) * c];
                    let mut mean_d = T::zero();
                    let mut mean_dh = T::zero();
                    for j in 0..c {
                        gg[j] += gr[j] * hr[j];
                        gb[j] += gr[j];
                        let d = gr[j] * gv.data()[j];
                        mean_d += d;
                        mean_dh += d * hr[j];
                    }
                    if let Some(gx) = gx.as_mut() {
                        mean_d = mean_d / cn;
                        mean_dh = mean_dh / cn;
                        for j in 0..c {
                            let d = gr[j] * gv.data()[j];
                            gx[r * c + j] = inv_std[r] * (d - mean_d - hr[j] * mean_dh);
                        }
                    }
                }
                vec![
                    gx.map(|d| Tensor::from_parts(xs.clone(), d)),
                    mask[1].then(|| Tensor::from_parts(vec![c], gg)),
                    mask[2].then(|| Tensor::from_parts(vec![c], gb)),
                ]
            }),
        ))
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        let xs = self.shape().to_vec();
        if axis >= xs.len() {
            return Err(TensorError::shape("softmax", &xs, format!("axis {axis} out of range")));
        }
        let len = xs[axis];
        let inner: usize = xs[axis + 1..].iter().product();
        let outer: usize = xs[..axis].iter().product();
        let xd = self.value.data();
        let mut y = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut mx = T::neg_infinity();
                for k in 0..len {
                    mx = mx.max(xd[at(k)]);
                }
                let mut total = T::zero();
                for k in 0..len {
                    let e = (xd[at(k)] - mx).exp();
                    y[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    y[at(k)] = y[at(k)] / total;
                }
            }
        }
        let value = Tensor::from_parts(xs.clone(), y);
        let yk = value.clone();
        Ok(self.tape.record(
            value,
            &[self],
            Box::new(move |g, _| {
                let (yd, gd) = (yk.data(), g.data());
                let mut gx = vec![T::zero(); yd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: T = (0..len).map(|k| gd[at(k)] * yd[at(k)]).sum();
                        for k in 0..len {
                            gx[at(k)] = yd[at(k)] * (gd[at(k)] - dot);
                        }
                    }
                }
                vec![Some(Tensor::from_parts(xs.clone(), gx))]
            }),
        ))
    }
}
