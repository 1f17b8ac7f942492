//! Parameters keyed by stable dotted paths, and their binding to a tape.

use std::collections::BTreeMap;
use std::fmt::Display;

use hat_tensor::{Element, Gradients, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given std, redrawn outside two std.
    TruncNormal(f64),
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(path: impl Into<String>, shape: impl Into<Vec<usize>>, init: Init) -> Self {
        Self { path: path.into(), shape: shape.into(), init }
    }
}

fn draw(init: Init, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::TruncNormal(std) => {
            let normal = Normal::new(0.0, std).expect("positive std");
            (0..n)
                .map(|_| loop {
                    let v: f64 = normal.sample(rng);
                    if v.abs() <= 2.0 * std {
                        break v;
                    }
                })
                .collect()
        }
        Init::FanIn(fan_in) => {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Element> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self { params: BTreeMap::new() }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws every parameter of `layout` in layout order from one seeded stream.
    pub fn init(layout: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout
            .iter()
            .map(|spec| {
                let n = spec.shape.iter().product();
                let data = draw(spec.init, n, &mut rng);
                let t = Tensor::from_f64(spec.shape.clone(), &data).expect("shape matches draw");
                (spec.path.clone(), t)
            })
            .collect();
        Self { params }
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor<T>) -> Option<Tensor<T>> {
        self.params.insert(path.into(), value)
    }

    pub fn get(&self, path: &str) -> Option<&Tensor<T>> {
        self.params.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.params.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore { params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Checks paths and shapes against `layout`, naming the first offender.
    pub fn check_layout(&self, layout: &[ParamSpec]) -> Result<()> {
        let expected: BTreeMap<&str, &[usize]> = layout.iter().map(|s| (s.path.as_str(), &s.shape[..])).collect();
        let mut bad: Vec<String> = Vec::new();
        for (path, t) in &self.params {
            match expected.get(path.as_str()) {
                None => bad.push(format!("unexpected parameter `{path}`")),
                Some(shape) if *shape != t.shape() => {
                    bad.push(format!("parameter `{path}` has shape {:?}, expected {shape:?}", t.shape()))
                }
                _ => {}
            }
        }
        for path in expected.keys() {
            if !self.params.contains_key(*path) {
                bad.push(format!("missing parameter `{path}`"));
            }
        }
        match bad.into_iter().min_by(|a, b| path_of(a).cmp(path_of(b))) {
            Some(msg) => Err(Error::Checkpoint(msg)),
            None => Ok(()),
        }
    }

    /// Puts every parameter on `tape`, as leaves when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let var = if trainable { tape.leaf(v.clone()) } else { tape.constant(v.clone()) };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }
}

fn path_of(msg: &str) -> &str {
    msg.split('`').nth(1).unwrap_or(msg)
}

/// Parameters living on one tape.
pub struct Bound<'t, T: Element> {
    vars: BTreeMap<String, Var<'t, T>>,
}

impl<'t, T: Element> Bound<'t, T> {
    pub fn from_vars(pairs: impl IntoIterator<Item = (String, Var<'t, T>)>) -> Self {
        Self { vars: pairs.into_iter().collect() }
    }

    pub fn root(&self) -> Scope<'_, 't, T> {
        Scope { bound: self, prefix: String::new() }
    }

    pub fn var(&self, path: &str) -> Result<Var<'t, T>> {
        self.vars.get(path).cloned().ok_or_else(|| Error::config(format!("missing parameter `{path}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'t, T>)> {
        self.vars.iter()
    }

    /// Gradients by path; parameters without one get zeros.
    pub fn gradients(&self, grads: &Gradients<T>) -> BTreeMap<String, Tensor<T>> {
        self.vars.iter().map(|(k, v)| (k.clone(), grads.get_or_zeros(v))).collect()
    }
}

/// A path prefix into a [`Bound`] set.
pub struct Scope<'a, 't, T: Element> {
    bound: &'a Bound<'t, T>,
    prefix: String,
}

impl<'a, 't, T: Element> Scope<'a, 't, T> {
    pub fn child(&self, name: impl Display) -> Self {
        let prefix = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        Self { bound: self.bound, prefix }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn var(&self, name: &str) -> Result<Var<'t, T>> {
        self.bound.var(&self.path(name))
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }
}
