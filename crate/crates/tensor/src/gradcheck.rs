//! Central finite-difference verification of tape gradients (64-bit).

use crate::error::TensorError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Entries probed per input tensor; larger tensors are sampled evenly.
    pub max_entries: usize,
    /// Gradient magnitudes below this are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { step: 1e-3, max_entries: 64, floor: 1e-7 }
    }
}

#[derive(Clone, Debug)]
pub struct GradReport {
    /// Relative error per input, in input order.
    pub errors: Vec<f64>,
}

impl GradReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

fn probe_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..max).map(|i| i * n / max + (i * 7919) % (n / max).max(1)).collect();
    idx.push(n - 1);
    idx.sort_unstable();
    idx.dedup();
    idx
}

impl GradCheck {
    /// Compares the tape gradient of scalar `f` against central differences.
    ///
    /// Error per input is `max |analytic - numeric| / max(max |analytic|, floor)`.
    pub fn run<F, E>(&self, inputs: &[Tensor<f64>], f: F) -> Result<GradReport, E>
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>, E>,
        E: From<TensorError>,
    {
        let tape = Tape::new();
        let vars: Vec<Var<'_, f64>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(&loss)?;
        let analytic: Vec<Tensor<f64>> = vars.iter().map(|v| grads.get_or_zeros(v)).collect();

        let eval = |which: usize, offset: usize, delta: f64| -> Result<f64, E> {
            let tape = Tape::new();
            let vars: Vec<Var<'_, f64>> = inputs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let mut t = t.clone();
                    if i == which {
                        t.data_mut()[offset] += delta;
                    }
                    tape.constant(t)
                })
                .collect();
            Ok(f(&tape, &vars)?.value().item())
        };

        let mut errors = Vec::with_capacity(inputs.len());
        for (i, a) in analytic.iter().enumerate() {
            let scale = a.max_abs().max(self.floor);
            let mut worst: f64 = 0.0;
            for off in probe_indices(a.numel(), self.max_entries) {
                let plus = eval(i, off, self.step)?;
                let minus = eval(i, off, -self.step)?;
                let numeric = (plus - minus) / (2.0 * self.step);
                worst = worst.max((a.data()[off] - numeric).abs() / scale);
            }
            errors.push(worst);
        }
        Ok(GradReport { errors })
    }
}
