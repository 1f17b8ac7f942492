/// Inequality of a magnitude vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Concentration {
    pub gini: f64,
    /// `(1 - gini) * 100`.
    pub di: f64,
    /// Set when every value is zero; the map then counts as uniform.
    pub all_zero: bool,
}

/// Gini coefficient and diffusion index of `|values|` via the sorted form
/// `G = Σ (2i - n - 1) x_(i) / (n Σ x)`.
///
/// Both sums are taken over `x_(i) - min`, which leaves the weighted spread
/// unchanged because its weights sum to zero, and the diffusion index uses the
/// complementary weights `2n + 1 - 2i` directly instead of `1 - G`. A uniform
/// vector then gives exactly 100 and a one-hot vector of length `n` exactly
/// `100 / n`.
pub fn concentration(values: &[f64]) -> Concentration {
    let mut x: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    x.sort_by(f64::total_cmp);
    let total: f64 = x.iter().sum();
    if x.is_empty() || total == 0.0 {
        return Concentration { gini: 0.0, di: 100.0, all_zero: true };
    }
    let n = x.len() as f64;
    let floor = x[0];
    let (mut spread, mut complement, mut excess) = (0.0, 0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let i = (k + 1) as f64;
        let d = v - floor;
        spread += (2.0 * i - n - 1.0) * d;
        complement += (2.0 * n + 1.0 - 2.0 * i) * d;
        excess += d;
    }
    let base = n * floor;
    let denom = n * (excess + base);
    complement += n * base;
    Concentration { gini: spread / denom, di: 100.0 * complement / denom, all_zero: false }
}

pub fn gini(values: &[f64]) -> f64 {
    concentration(values).gini
}

pub fn diffusion_index(values: &[f64]) -> f64 {
    concentration(values).di
}
