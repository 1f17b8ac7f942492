use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::{numel, strides, Tensor};

/// Numpy-style broadcast of two shapes (right aligned).
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let ea = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let eb = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (ea, eb) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(TensorError::mismatch(op, a, b)),
        };
    }
    Ok(out)
}

/// Strides of `shape` inside the broadcast `out` shape (0 on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let lead = out.len() - shape.len();
    (0..out.len()).map(|i| if i < lead || shape[i - lead] == 1 { 0 } else { own[i - lead] }).collect()
}

/// Visits every flat output offset with the matching offsets into two
/// strided operands, in row-major order.
pub(crate) fn walk2(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    if numel(out) == 0 {
        return;
    }
    let r = out.len();
    if r == 0 {
        f(0, 0, 0);
        return;
    }
    let last = out[r - 1];
    let (la, lb) = (sa[r - 1], sb[r - 1]);
    let mut idx = vec![0usize; r - 1];
    let (mut oa, mut ob, mut o) = (0usize, 0usize, 0usize);
    loop {
        for j in 0..last {
            f(o + j, oa + j * la, ob + j * lb);
        }
        o += last;
        let mut d = r - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

/// Sums a broadcast gradient back down to `shape`.
pub(crate) fn sum_to_shape<T: Element>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = vec![T::zero(); numel(shape)];
    let st = broadcast_strides(shape, g.shape());
    let zero = vec![0; g.rank()];
    let gd = g.data();
    walk2(g.shape(), &st, &zero, |o, i, _| out[i] += gd[o]);
    Tensor::from_parts(shape.to_vec(), out)
}

type Binary<T> = fn(T, T) -> T;

fn binary<'t, T: Element>(
    op: &'static str,
    a: &Var<'t, T>,
    b: &Var<'t, T>,
    f: Binary<T>,
    da: Binary<T>,
    db: Binary<T>,
) -> Result<Var<'t, T>> {
    let (av, bv) = (a.value.clone(), b.value.clone());
    let out_shape = broadcast_shape(op, av.shape(), bv.shape())?;
    let sa = broadcast_strides(av.shape(), &out_shape);
    let sb = broadcast_strides(bv.shape(), &out_shape);

    let mut out = vec![T::zero(); numel(&out_shape)];
    if av.shape() == bv.shape() {
        for ((o, &x), &y) in out.iter_mut().zip(av.data()).zip(bv.data()) {
            *o = f(x, y);
        }
    } else {
        let (ad, bd) = (av.data(), bv.data());
        walk2(&out_shape, &sa, &sb, |o, i, j| out[o] = f(ad[i], bd[j]));
    }
    let value = Tensor::from_parts(out_shape.clone(), out);

    Ok(a.tape.record(
        value,
        &[a, b],
        Box::new(move |g, mask| {
            let (ad, bd, gd) = (av.data(), bv.data(), g.data());
            if av.shape() == bv.shape() {
                let grad =
                    |d: Binary<T>| -> Vec<T> { gd.iter().zip(ad).zip(bd).map(|((&g, &x), &y)| g * d(x, y)).collect() };
                return vec![
                    mask[0].then(|| Tensor::from_parts(av.shape().to_vec(), grad(da))),
                    mask[1].then(|| Tensor::from_parts(bv.shape().to_vec(), grad(db))),
                ];
            }
            let mut ga = mask[0].then(|| vec![T::zero(); av.numel()]);
            let mut gb = mask[1].then(|| vec![T::zero(); bv.numel()]);
            walk2(&out_shape, &sa, &sb, |o, i, j| {
                if let Some(ga) = ga.as_mut() {
                    ga[i] += gd[o] * da(ad[i], bd[j]);
                }
                if let Some(gb) = gb.as_mut() {
                    gb[j] += gd[o] * db(ad[i], bd[j]);
                }
            });
            vec![
                ga.map(|d| Tensor::from_parts(av.shape().to_vec(), d)),
                gb.map(|d| Tensor::from_parts(bv.shape().to_vec(), d)),
            ]
        }),
    ))
}

/// Elementwise op whose derivative is expressed through input and output.
pub(crate) fn unary<'t, T: Element>(
    x: &Var<'t, T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Var<'t, T> {
    let xv = x.value.clone();
    let yv = xv.map(f);
    let yk = yv.clone();
    x.tape.record(
        yv,
        &[x],
        Box::new(move |g, _| {
            let d = xv.data().iter().zip(yk.data()).zip(g.data()).map(|((&x, &y), &g)| g * df(x, y)).collect();
            vec![Some(Tensor::from_parts(xv.shape().to_vec(), d))]
        }),
    )
}

fn gelu_exact<T: Element>(x: T) -> T {
    let half = T::of(0.5);
    half * x * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Element>(x: T) -> T {
    let cdf = T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * T::of(0.5)).exp() * T::of(0.398_942_280_401_432_7);
    cdf + x * pdf
}

fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn add(&self, rhs: &Self) -> Result<Self> {
        binary("add", self, rhs, |a, b| a + b, |_, _| T::one(), |_, _| T::one())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        binary("sub", self, rhs, |a, b| a - b, |_, _| T::one(), |_, _| -T::one())
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        binary("mul", self, rhs, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, rhs: &Self) -> Result<Self> {
        binary("div", self, rhs, |a, b| a / b, |_, b| T::one() / b, |a, b| -a / (b * b))
    }

    pub fn scale(&self, c: f64) -> Self {
        let c = T::of(c);
        unary(self, move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        let c = T::of(c);
        unary(self, move |x| x + c, |_, _| T::one())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn square(&self) -> Self {
        unary(self, |x| x * x, |x, _| x + x)
    }

    /// Square root with derivative 0 at 0.
    pub fn sqrt(&self) -> Self {
        unary(self, |x| x.sqrt(), |_, y| if y > T::zero() { T::of(0.5) / y } else { T::zero() })
    }

    /// `|x|` with subgradient 0 at 0.
    pub fn abs(&self) -> Self {
        unary(
            self,
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn exp(&self) -> Self {
        unary(self, |x| x.exp(), |_, y| y)
    }

    pub fn relu(&self) -> Self {
        unary(self, |x| x.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    pub fn leaky_relu(&self, slope: f64) -> Self {
        let s = T::of(slope);
        unary(
            self,
            move |x| if x > T::zero() { x } else { x * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn sigmoid(&self) -> Self {
        unary(self, sigmoid, |_, y| y * (T::one() - y))
    }

    /// GELU in its exact erf form.
    pub fn gelu(&self) -> Self {
        unary(self, gelu_exact, |x, _| gelu_grad(x))
    }

    /// Elementwise `sqrt(a^2 + b^2)`, derivative 0 where the magnitude vanishes.
    pub fn hypot(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(TensorError::mismatch("hypot", self.shape(), other.shape()));
        }
        let (av, bv) = (self.value.clone(), other.value.clone());
        let out = av.zip_map(&bv, |a, b| (a * a + b * b).sqrt())?;
        let ok = out.clone();
        Ok(self.tape.record(
            out,
            &[self, other],
            Box::new(move |g, mask| {
                let grad = |src: &Tensor<T>| {
                    let d = src
                        .data()
                        .iter()
                        .zip(ok.data())
                        .zip(g.data())
                        .map(|((&x, &r), &g)| if r > T::zero() { g * x / r } else { T::zero() })
                        .collect();
                    Tensor::from_parts(src.shape().to_vec(), d)
                };
                vec![mask[0].then(|| grad(&av)), mask[1].then(|| grad(&bv))]
            }),
        ))
    }
}

/// Plain (untracked) numeric kernels shared with non-differentiable callers.
pub mod scalar {
    use super::*;

    pub fn gelu<T: Element>(x: T) -> T {
        gelu_exact(x)
    }

    pub fn sigmoid<T: Element>(x: T) -> T {
        super::sigmoid(x)
    }
}
