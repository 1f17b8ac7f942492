use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops::elementwise::{broadcast_strides, sum_to_shape, walk2};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Expands `g` (broadcast compatible) to `shape`.
pub(crate) fn expand_to<T: Element>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let sg = broadcast_strides(g.shape(), shape);
    let zero = vec![0; shape.len()];
    let gd = g.data();
    let mut out = vec![T::zero(); crate::tensor::numel(shape)];
    walk2(shape, &sg, &zero, |o, i, _| out[o] = gd[i]);
    Tensor::from_parts(shape.to_vec(), out)
}

impl<'t, T: Element> Var<'t, T> {
    pub fn sum_all(&self) -> Self {
        let xs = self.shape().to_vec();
        let value = Tensor::scalar(self.value.sum());
        self.tape.record(value, &[self], Box::new(move |g, _| vec![Some(Tensor::full(xs.clone(), g.item()))]))
    }

    pub fn mean_all(&self) -> Self {
        let n = self.value.numel().max(1) as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sums over `axes`; reduced axes are kept with extent 1 when `keepdim`.
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Self> {
        let xs = self.shape().to_vec();
        if let Some(&bad) = axes.iter().find(|&&a| a >= xs.len()) {
            return Err(TensorError::shape("sum_axes", &xs, format!("axis {bad} out of range")));
        }
        let kept: Vec<usize> = xs.iter().enumerate().map(|(i, &e)| if axes.contains(&i) { 1 } else { e }).collect();
        let value = sum_to_shape(&self.value, &kept);
        let shape_k = kept.clone();
        let out = self.tape.record(
            value,
            &[self],
            Box::new(move |g, _| {
                let g = g.reshape(&shape_k).expect("keepdim shape");
                vec![Some(expand_to(&g, &xs))]
            }),
        );
        if keepdim {
            Ok(out)
        } else {
            let squeezed: Vec<usize> =
                kept.iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, &e)| e).collect();
            out.reshape(&squeezed)
        }
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Self> {
        let count: usize = axes.iter().filter_map(|&a| self.shape().get(a)).product();
        Ok(self.sum_axes(axes, keepdim)?.scale(1.0 / count.max(1) as f64))
    }

    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn global_avg_pool(&self) -> Result<Self> {
        if self.value.rank() != 4 {
            return Err(TensorError::shape("global_avg_pool", self.shape(), "expected rank 4"));
        }
        self.mean_axes(&[2, 3], false)
    }
}
