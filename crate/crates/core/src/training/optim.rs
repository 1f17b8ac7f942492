use std::collections::BTreeMap;

use hat_tensor::{Element, Tensor, Var};

use crate::error::{Error, Result};
use crate::model::ParamStore;

/// Mean absolute error; the subgradient at exact ties is zero.
pub fn l1_loss<'t, T: Element>(pred: &Var<'t, T>, target: &Var<'t, T>) -> Result<Var<'t, T>> {
    if pred.shape() != target.shape() {
        return Err(Error::data(format!("loss between {:?} and {:?}", pred.shape(), target.shape())));
    }
    Ok(pred.sub(target)?.abs().mean_all())
}

/// Bias-corrected Adam state, no weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Element> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        Self::with_betas(params, 0.9, 0.99, 1e-8)
    }

    pub fn with_betas(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: BTreeMap<String, Tensor<T>> =
            params.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape().to_vec()))).collect();
        Self { beta1, beta2, eps, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One update of every parameter with `grads` (missing entries count as
    /// zero gradients).
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>, lr: f64) -> Result<()> {
        for (path, g) in grads {
            let p = params.get(path).ok_or_else(|| Error::data(format!("gradient for unknown parameter `{path}`")))?;
            if p.shape() != g.shape() {
                return Err(Error::data(format!("gradient {:?} for `{path}` of shape {:?}", g.shape(), p.shape())));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (path, p) in params.iter_mut() {
            let m = self.m.get_mut(path).ok_or_else(|| Error::data(format!("no optimizer state for `{path}`")))?;
            let v = self.v.get_mut(path).expect("m and v share keys");
            if m.shape() != p.shape() {
                return Err(Error::data(format!("optimizer state for `{path}` has the wrong shape")));
            }
            let g = grads.get(path);
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.map_or(0.0, |g| g.data()[i].as_f64());
                let mi = b1 * md[i].as_f64() + (1.0 - b1) * gi;
                let vi = b2 * vd[i].as_f64() + (1.0 - b2) * gi * gi;
                md[i] = T::of(mi);
                vd[i] = T::of(vi);
                let delta = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                pd[i] = T::of(pd[i].as_f64() - delta);
            }
        }
        Ok(())
    }
}
