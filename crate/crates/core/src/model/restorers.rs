//! Restorers selectable by name: the full network plus small reference
//! models used to exercise attribution.

use std::path::PathBuf;

use hat_tensor::{Element, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{preset, HatModel, Restorer};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::registry::{Options, Registry};

/// Returns its input unchanged.
pub struct Identity;

impl<T: Element> Restorer<T> for Identity {
    fn scale(&self) -> usize {
        1
    }

    fn restore<'t>(&self, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(x.clone())
    }
}

/// Stack of same-padded convolutions with GELU between layers; its
/// receptive field grows by `kernel - 1` per layer.
pub struct ConvNet<T: Element> {
    layers: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Element> ConvNet<T> {
    /// Uniform `±1/sqrt(fan_in)` weights and biases. `widths` lists channel
    /// counts from input to output, so `[3, 3]` is a single convolution.
    pub fn random(widths: &[usize], kernel: usize, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) || kernel.is_multiple_of(2) {
            return Err(Error::config(format!(
                "conv net needs >= 2 positive widths and an odd kernel, got {widths:?} / {kernel}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|io| {
                let (ci, co) = (io[0], io[1]);
                let bound = 1.0 / ((ci * kernel * kernel) as f64).sqrt();
                let mut draw =
                    |n: usize| -> Vec<T> { (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect() };
                let w = Tensor::new([co, ci, kernel, kernel], draw(co * ci * kernel * kernel));
                let b = Tensor::new([co], draw(co));
                Ok((w?, b?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<(Tensor<T>, Tensor<T>)>) -> Self {
        Self { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

impl<T: Element> Restorer<T> for ConvNet<T> {
    fn scale(&self) -> usize {
        1
    }

    fn restore<'t>(&self, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let pad = w.shape()[2] / 2;
            h = h.conv2d(&x.constant_like(w.clone()), Some(&x.constant_like(b.clone())), 1, pad)?;
            if i + 1 < self.layers.len() {
                h = h.gelu();
            }
        }
        Ok(h)
    }
}

fn parse_widths(raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|v| v.trim().parse().map_err(|_| Error::config(format!("bad width list `{raw}`")))).collect()
}

pub fn restorers<T: Element>() -> Registry<dyn Restorer<T>> {
    let mut reg: Registry<dyn Restorer<T>> = Registry::new("restorer");
    reg.register("identity", "returns the input unchanged", |_| Ok(Box::new(Identity)));
    reg.register("conv", "random convolution stack; options widths (e.g. 3,8,3), kernel, seed", |o: &Options| {
        let widths = parse_widths(&o.get_or("widths", "3,3".to_string())?)?;
        Ok(Box::new(ConvNet::<T>::random(&widths, o.get_or("kernel", 3)?, o.get_or("seed", 0)?)?))
    });
    reg.register("hat", "hybrid attention network; options checkpoint (path) or preset and seed", |o: &Options| {
        let model = match o.get::<PathBuf>("checkpoint")? {
            Some(path) => Checkpoint::<T>::load_cast(&path)?.model()?,
            None => HatModel::new(preset(&o.get_or("preset", "tiny".to_string())?)?, o.get_or("seed", 0)?)?,
        };
        Ok(Box::new(model))
    });
    reg
}
