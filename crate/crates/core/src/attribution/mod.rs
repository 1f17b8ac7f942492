//! Local attribution maps: integrated gradients of an output-patch detector
//! along a progressive blurring path, with Gini/diffusion-index summaries.

mod blur;
mod detector;
mod export;
mod gini;

pub use blur::{blur_path, gaussian_blur, gaussian_kernel, DELTA_SIGMA};
pub use detector::{detectors, Detector, GradientDetector, Patch, SumDetector};
pub use export::{read_raw_map, write_heatmap, write_metrics, write_raw_map};
pub use gini::{concentration, diffusion_index, gini, Concentration};

use hat_tensor::{Element, Tape, Tensor};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Restorer;

#[derive(Clone, Debug, PartialEq)]
pub struct LamConfig {
    pub sigma: f64,
    pub steps: usize,
    pub patch: Patch,
}

impl Default for LamConfig {
    fn default() -> Self {
        Self { sigma: 1.5, steps: 100, patch: Patch { x: 0, y: 0, l: 16 } }
    }
}

impl LamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("blur sigma {} must be positive", self.sigma)));
        }
        if self.steps == 0 {
            return Err(Error::config("at least one integration step is needed"));
        }
        if self.patch.l == 0 {
            return Err(Error::config("patch side must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LamResult {
    pub height: usize,
    pub width: usize,
    /// Channel-summed attribution, row-major `height x width`.
    pub attribution: Vec<f64>,
    /// `D(F(I)) - D(F(I'))` for the input `I` and its blurred baseline `I'`.
    pub target_delta: f64,
    /// `|Σ attribution - target_delta|`.
    pub completeness_residual: f64,
    pub gini: f64,
    pub di: f64,
    pub all_zero: bool,
}

impl LamResult {
    /// Residual relative to `|target_delta|`; zero when both vanish.
    pub fn relative_residual(&self) -> f64 {
        if self.target_delta == 0.0 {
            if self.completeness_residual == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.completeness_residual / self.target_delta.abs()
        }
    }
}

fn detect<T: Element, R: Restorer<T> + ?Sized>(
    model: &R,
    detector: &dyn Detector<T>,
    x: &Tensor<T>,
    patch: &Patch,
) -> Result<f64> {
    let tape = Tape::new();
    let y = model.restore(&tape.constant(x.clone()))?;
    Ok(detector.evaluate(&y, patch)?.value().item().as_f64())
}

fn detector_gradient<T: Element, R: Restorer<T> + ?Sized>(
    model: &R,
    detector: &dyn Detector<T>,
    x: &Tensor<T>,
    patch: &Patch,
) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let input = tape.leaf(x.clone());
    let d = detector.evaluate(&model.restore(&input)?, patch)?;
    Ok(tape.backward(&d)?.get_or_zeros(&input))
}

/// Attribution of `detector` on `model(input)` to the pixels of `input`
/// (`[1, C, H, W]`). The path integral is the midpoint sum
/// `Σ_k ∇D(F(λ(θ_k + 1/2N))) ⊙ (λ(θ_{k+1}) - λ(θ_k))` over `N = steps`
/// equal intervals; path steps run in parallel and are accumulated in order.
pub fn lam<T: Element, R: Restorer<T> + ?Sized>(
    model: &R,
    detector: &dyn Detector<T>,
    input: &Tensor<T>,
    cfg: &LamConfig,
) -> Result<LamResult> {
    cfg.validate()?;
    let &[1, c, h, w] = input.shape() else {
        return Err(Error::data(format!("attribution expects one [1, C, H, W] image, got {:?}", input.shape())));
    };
    let steps = cfg.steps;
    let nodes: Vec<Tensor<T>> = (0..=steps)
        .into_par_iter()
        .map(|k| blur_path(input, cfg.sigma, k as f64 / steps as f64))
        .collect::<Result<_>>()?;
    let contributions: Vec<Vec<f64>> = (0..steps)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let mid = blur_path(input, cfg.sigma, (k as f64 + 0.5) / steps as f64)?;
            let g = detector_gradient(model, detector, &mid, &cfg.patch)?;
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite detector gradient at path step {k} of {steps}")));
            }
            let (g, a, b) = (g.data(), nodes[k].data(), nodes[k + 1].data());
            let mut map = vec![0.0; h * w];
            for ch in 0..c {
                for (p, m) in map.iter_mut().enumerate() {
                    let i = ch * h * w + p;
                    *m += g[i].as_f64() * (b[i].as_f64() - a[i].as_f64());
                }
            }
            Ok(map)
        })
        .collect::<Result<_>>()?;
    let mut attribution = vec![0.0; h * w];
    for map in &contributions {
        for (acc, v) in attribution.iter_mut().zip(map) {
            *acc += v;
        }
    }
    let target_delta = detect(model, detector, input, &cfg.patch)? - detect(model, detector, &nodes[0], &cfg.patch)?;
    if !target_delta.is_finite() {
        return Err(Error::Numeric("non-finite detector response".into()));
    }
    let total: f64 = attribution.iter().sum();
    let conc = concentration(&attribution);
    Ok(LamResult {
        height: h,
        width: w,
        completeness_residual: (total - target_delta).abs(),
        target_delta,
        attribution,
        gini: conc.gini,
        di: conc.di,
        all_zero: conc.all_zero,
    })
}
