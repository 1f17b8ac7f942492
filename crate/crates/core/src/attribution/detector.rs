use hat_tensor::{Element, IndexMap, Var};

use crate::error::{Error, Result};
use crate::registry::{Options, Registry};

/// Target window in output coordinates: `l x l` pixels from column `x`,
/// row `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub l: usize,
}

/// Scalar summary of an output region whose input attribution is wanted.
pub trait Detector<T: Element>: Send + Sync {
    fn name(&self) -> &'static str;

    /// `hr` is `[N, C, H, W]`; returns a scalar.
    fn evaluate<'t>(&self, hr: &Var<'t, T>, patch: &Patch) -> Result<Var<'t, T>>;
}

fn dims(shape: &[usize], p: &Patch) -> Result<(usize, usize, usize, usize)> {
    let &[n, c, h, w] = shape else {
        return Err(Error::data(format!("detector expects [N, C, H, W], got {shape:?}")));
    };
    if p.l == 0 || p.x + p.l > w || p.y + p.l > h {
        return Err(Error::data(format!("patch {0}x{0} at x={1}, y={2} is outside the {h}x{w} output", p.l, p.x, p.y)));
    }
    Ok((n, c, h, w))
}

/// Gathers the patch, offset by `(dy, dx)` with clamping at the image edge.
fn shifted_patch(shape: &[usize], p: &Patch, dy: usize, dx: usize) -> Result<IndexMap> {
    let (n, c, h, w) = dims(shape, p)?;
    let mut src = Vec::with_capacity(n * c * p.l * p.l);
    for plane in 0..n * c {
        for i in 0..p.l {
            let y = (p.y + i + dy).min(h - 1);
            for j in 0..p.l {
                let x = (p.x + j + dx).min(w - 1);
                src.push((plane * h + y) * w + x);
            }
        }
    }
    Ok(IndexMap::new(vec![n, c, p.l, p.l], src)?)
}

/// Sum over the patch and channels of the forward-difference gradient
/// magnitude; differences past the last row/column are zero.
pub struct GradientDetector;

impl<T: Element> Detector<T> for GradientDetector {
    fn name(&self) -> &'static str {
        "gradient"
    }

    fn evaluate<'t>(&self, hr: &Var<'t, T>, patch: &Patch) -> Result<Var<'t, T>> {
        let s = hr.shape();
        let centre = hr.remap(&shifted_patch(s, patch, 0, 0)?)?;
        let dh = hr.remap(&shifted_patch(s, patch, 0, 1)?)?.sub(&centre)?;
        let dv = hr.remap(&shifted_patch(s, patch, 1, 0)?)?.sub(&centre)?;
        Ok(dh.hypot(&dv)?.sum_all())
    }
}

/// Plain sum of the patch; linear in the output.
pub struct SumDetector;

impl<T: Element> Detector<T> for SumDetector {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn evaluate<'t>(&self, hr: &Var<'t, T>, patch: &Patch) -> Result<Var<'t, T>> {
        Ok(hr.remap(&shifted_patch(hr.shape(), patch, 0, 0)?)?.sum_all())
    }
}

pub fn detectors<T: Element>() -> Registry<dyn Detector<T>> {
    let mut reg: Registry<dyn Detector<T>> = Registry::new("detector");
    reg.register("gradient", "summed forward-difference gradient magnitude", |_: &Options| {
        Ok(Box::new(GradientDetector))
    });
    reg.register("sum", "summed intensity", |_: &Options| Ok(Box::new(SumDetector)));
    reg
}
