#![allow(dead_code)]

use hat_core::model::{Bound, ParamSpec, ParamStore};
use hat_tensor::gradcheck::{GradCheck, GradReport};
use hat_tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Every parameter uniform in `±amp`; norm gains stay near one.
pub fn random_store(layout: &[ParamSpec], seed: u64, amp: f64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in layout {
        let gain = spec.path.contains("norm") && spec.path.ends_with("weight");
        let t = Tensor::from_fn(spec.shape.clone(), |_| {
            let v = rng.random_range(-amp..amp);
            if gain {
                1.0 + v
            } else {
                v
            }
        });
        store.insert(spec.path.clone(), t);
    }
    store
}

/// Finite-difference check of `sum(f(params, x) ⊙ r)` over every parameter
/// and the input.
pub fn check_params<F>(store: &ParamStore<f64>, x: &Tensor<f64>, check: &GradCheck, f: F) -> GradReport
where
    F: for<'t> Fn(&Bound<'t, f64>, &Var<'t, f64>) -> hat_core::Result<Var<'t, f64>>,
{
    let paths: Vec<String> = store.paths().cloned().collect();
    let mut inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(x.clone());
    let probe = {
        let tape = Tape::new();
        let bound = store.bind(&tape, false);
        let y = f(&bound, &tape.constant(x.clone())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        random(y.shape(), &mut rng)
    };
    check
        .run(&inputs, |_, v| {
            let (params, input) = v.split_at(v.len() - 1);
            let bound = Bound::from_vars(paths.iter().cloned().zip(params.iter().cloned()));
            let y = f(&bound, &input[0])?;
            Ok(y.mul(&y.constant_like(probe.clone()))?.sum_all())
        })
        .unwrap_or_else(|e: hat_core::Error| panic!("{e}"))
}
