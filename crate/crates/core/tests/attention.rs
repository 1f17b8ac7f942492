//! Window geometry and attention against index enumeration and dense
//! brute-force references.

use hat_core::attention::{
    oca, oca_probs, overlapping_partition, relative_position_index, shift_mask, table_span, window_partition,
    window_reverse, wmsa, wmsa_probs, AttentionParams, WindowSpec,
};
use hat_tensor::gradcheck::GradCheck;
use hat_tensor::{Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Raw weights in the order qkv_w, qkv_b, proj_w, proj_b, table.
fn random_weights(c: usize, heads: usize, m: usize, mo: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
    let span = table_span(m, mo);
    vec![
        random(&[3 * c, c], rng),
        random(&[3 * c], rng),
        random(&[c, c], rng),
        random(&[c], rng),
        random(&[span * span, heads], rng),
    ]
}

fn params<'t>(heads: usize, v: &[Var<'t, f64>]) -> AttentionParams<'t, f64> {
    AttentionParams {
        heads,
        qkv_weight: v[0].clone(),
        qkv_bias: v[1].clone(),
        proj_weight: v[2].clone(),
        proj_bias: v[3].clone(),
        bias_table: v[4].clone(),
    }
}

fn constants<'t>(tape: &'t Tape<f64>, ts: &[Tensor<f64>]) -> Vec<Var<'t, f64>> {
    ts.iter().map(|t| tape.constant(t.clone())).collect()
}

#[test]
fn partition_shape_and_roundtrip() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_fn([2, 4, 4, 3], |i| i as f64));
    let w = window_partition(&x, 2).unwrap();
    assert_eq!(w.shape(), &[8, 4, 3]);
    let back = window_reverse(&w, 2, 2, 4, 4).unwrap();
    assert_eq!(back.value(), x.value());
    assert!(window_partition(&x, 3).is_err());
}

#[test]
fn partition_index_oracle() {
    // pixel (3, 5) of an 8x8 grid with M = 4: window (0, 1) -> 1, slot 3*4 + 1 = 13
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_fn([1, 8, 8, 1], |i| i as f64));
    let w = window_partition(&x, 4).unwrap();
    assert_eq!(w.value().at(&[1, 13, 0]), (3 * 8 + 5) as f64);
    for y in 0..8 {
        for xx in 0..8 {
            let win = (y / 4) * 2 + xx / 4;
            let slot = (y % 4) * 4 + xx % 4;
            assert_eq!(w.value().at(&[win, slot, 0]), (y * 8 + xx) as f64);
        }
    }
}

#[test]
fn overlapping_partition_reduces_and_pads() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tape = Tape::<f64>::new();
    let x = tape.constant(random(&[1, 8, 8, 2], &mut rng));
    let spec = WindowSpec::new(4, 0, 0.0).unwrap();
    let a = overlapping_partition(&x, &spec).unwrap();
    let b = window_partition(&x, 4).unwrap();
    assert_eq!(a.value(), b.value());

    let big = WindowSpec::new(16, 0, 0.5).unwrap();
    assert_eq!((big.overlapped, big.overlap_pad()), (24, 4));
}

#[test]
fn overlapping_corner_window_oracle() {
    // 8x8, M = 4, gamma = 0.5: M_o = 6, one pixel of zero padding per side,
    // so the top-left patch has its first row and first column outside the image
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_fn([1, 8, 8, 1], |i| i as f64 + 1.0));
    let spec = WindowSpec::new(4, 0, 0.5).unwrap();
    let p = overlapping_partition(&x, &spec).unwrap();
    assert_eq!(p.shape(), &[4, 36, 1]);
    for win in 0..4 {
        let (oy, ox) = ((win / 2) * 4, (win % 2) * 4);
        for i in 0..6 {
            for j in 0..6 {
                let (y, xx) = (oy as isize + i as isize - 1, ox as isize + j as isize - 1);
                let want = if (0..8).contains(&y) && (0..8).contains(&xx) { (y * 8 + xx) as f64 + 1.0 } else { 0.0 };
                assert_eq!(p.value().at(&[win, i * 6 + j, 0]), want, "window {win} ({i}, {j})");
            }
        }
    }
    let zeros = (0..36).filter(|&k| p.value().at(&[0, k, 0]) == 0.0).count();
    assert_eq!(zeros, 11);
}

/// Same-region oracle: after rolling by -s, two positions of one window may
/// interact only when both or neither of their source coordinates wrapped.
fn wrapped(p: usize, len: usize, s: usize) -> bool {
    p + s >= len
}

#[test]
fn shift_mask_matches_region_labels() {
    for (h, m) in [(4, 4), (8, 4), (12, 4)] {
        let s = m / 2;
        let mask: Tensor<f64> = shift_mask(h, h, m, s).unwrap();
        let nw = h / m;
        let mut regions = std::collections::BTreeSet::new();
        for win in 0..nw * nw {
            for q in 0..m * m {
                for k in 0..m * m {
                    let pos = |slot: usize| ((win / nw) * m + slot / m, (win % nw) * m + slot % m);
                    let ((qy, qx), (ky, kx)) = (pos(q), pos(k));
                    let same = wrapped(qy, h, s) == wrapped(ky, h, s) && wrapped(qx, h, s) == wrapped(kx, h, s);
                    regions.insert((win, wrapped(qy, h, s), wrapped(qx, h, s)));
                    let v = mask.at(&[win, q, k]);
                    if same {
                        assert_eq!(v, 0.0);
                    } else {
                        assert!(v <= -1e9);
                    }
                }
            }
        }
        if h == m {
            assert_eq!(regions.len(), 4);
        }
    }
}

// ---------------------------------------------------------------------------
// dense brute-force attention

struct Dense {
    c: usize,
    heads: usize,
    w: Vec<Tensor<f64>>,
}

impl Dense {
    fn project(&self, x: &[f64], which: usize) -> Vec<f64> {
        let (wq, bq) = (&self.w[0], &self.w[1]);
        (0..self.c)
            .map(|o| {
                let row = which * self.c + o;
                bq.at(&[row]) + (0..self.c).map(|i| wq.at(&[row, i]) * x[i]).sum::<f64>()
            })
            .collect()
    }

    fn out_proj(&self, v: &[f64]) -> Vec<f64> {
        (0..self.c)
            .map(|o| self.w[3].at(&[o]) + (0..self.c).map(|i| self.w[2].at(&[o, i]) * v[i]).sum::<f64>())
            .collect()
    }

    /// Attention for an `[H, W, C]` image. `shift` rolls the grid and masks
    /// wrapped pairs; `mo > m` draws keys from zero-padded enlarged patches.
    fn run(&self, img: &Tensor<f64>, m: usize, mo: usize, shift: usize) -> Tensor<f64> {
        let (h, w, c) = (img.shape()[0], img.shape()[1], self.c);
        let d = c / self.heads;
        let pad = (mo - m) / 2;
        let span = m + mo - 1;
        let pixel = |y: usize, x: usize| -> Vec<f64> {
            let (sy, sx) = ((y + shift) % h, (x + shift) % w);
            (0..c).map(|k| img.at(&[sy, sx, k])).collect()
        };
        let mut out = vec![0.0; h * w * c];
        for wy in 0..h / m {
            for wx in 0..w / m {
                let mut keys = Vec::new();
                for i in 0..mo {
                    for j in 0..mo {
                        let y = (wy * m + i) as isize - pad as isize;
                        let x = (wx * m + j) as isize - pad as isize;
                        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                            keys.push((y, x, vec![0.0; c], vec![0.0; c]));
                        } else {
                            let p = pixel(y as usize, x as usize);
                            keys.push((y, x, self.project(&p, 1), self.project(&p, 2)));
                        }
                    }
                }
                for i in 0..m {
                    for j in 0..m {
                        let (qy, qx) = (wy * m + i, wx * m + j);
                        let q = self.project(&pixel(qy, qx), 0);
                        let mut mixed = vec![0.0; c];
                        for hd in 0..self.heads {
                            let lo = hd * d;
                            let logits: Vec<f64> = keys
                                .iter()
                                .map(|(ky, kx, k, _)| {
                                    let dot: f64 = (lo..lo + d).map(|t| q[t] * k[t]).sum::<f64>() / (d as f64).sqrt();
                                    let dy = qy as isize - ky;
                                    let dx = qx as isize - kx;
                                    let base = -(mo as isize - 1) + pad as isize;
                                    let cell = ((dy - base) * span as isize + (dx - base)) as usize;
                                    let mut l = dot + self.w[4].at(&[cell, hd]);
                                    if shift > 0 {
                                        let (ky, kx) = (*ky as usize, *kx as usize);
                                        let same = wrapped(qy, h, shift) == wrapped(ky, h, shift)
                                            && wrapped(qx, w, shift) == wrapped(kx, w, shift);
                                        if !same {
                                            l -= 1e9;
                                        }
                                    }
                                    l
                                })
                                .collect();
                            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
                            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                            for (l, (_, _, _, v)) in logits.iter().zip(&keys) {
                                let a = (l - mx).exp() / z;
                                for t in lo..lo + d {
                                    mixed[t] += a * v[t];
                                }
                            }
                        }
                        let o = self.out_proj(&mixed);
                        let (oy, ox) = ((qy + shift) % h, (qx + shift) % w);
                        out[(oy * w + ox) * c..(oy * w + ox + 1) * c].copy_from_slice(&o);
                    }
                }
            }
        }
        Tensor::new([1, h, w, c], out).unwrap()
    }
}

fn dense_case(seed: u64, hw: usize, c: usize, heads: usize, m: usize, shift: usize, gamma: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = WindowSpec::new(m, shift, gamma).unwrap();
    let w = random_weights(c, heads, m, spec.overlapped, &mut rng);
    let img = random(&[hw, hw, c], &mut rng);
    let tape = Tape::<f64>::new();
    let v = constants(&tape, &w);
    let p = params(heads, &v);
    let x = tape.constant(img.reshape(&[1, hw, hw, c]).unwrap());
    let got = if gamma == 0.0 { wmsa(&x, &p, &spec) } else { oca(&x, &p, &spec) }.unwrap();
    let want = Dense { c, heads, w }.run(&img, m, spec.overlapped, shift);
    let err = got.value().max_abs_diff(&want).unwrap();
    assert!(err < 1e-5, "seed {seed} m {m} shift {shift} gamma {gamma}: {err}");
}

#[test]
fn wmsa_matches_dense_oracle() {
    for seed in 0..3 {
        dense_case(seed, 4, 4, 2, 2, 0, 0.0);
        dense_case(seed, 8, 6, 3, 4, 0, 0.0);
    }
}

#[test]
fn shifted_wmsa_matches_dense_oracle() {
    for seed in 0..3 {
        dense_case(10 + seed, 4, 4, 2, 2, 1, 0.0);
        dense_case(10 + seed, 8, 4, 2, 4, 2, 0.0);
        dense_case(10 + seed, 4, 4, 1, 4, 2, 0.0);
    }
}

#[test]
fn oca_matches_dense_oracle() {
    for seed in 0..3 {
        dense_case(20 + seed, 4, 4, 2, 2, 0, 1.0);
        dense_case(20 + seed, 8, 4, 2, 4, 0, 0.5);
    }
}

#[test]
fn f32_attention_tracks_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let spec = WindowSpec::new(4, 2, 0.0).unwrap();
    let w = random_weights(4, 2, 4, 4, &mut rng);
    let img = random(&[8, 8, 4], &mut rng);
    let tape = Tape::<f32>::new();
    let v: Vec<_> = w.iter().map(|t| tape.constant(t.cast())).collect();
    let p = AttentionParams {
        heads: 2,
        qkv_weight: v[0].clone(),
        qkv_bias: v[1].clone(),
        proj_weight: v[2].clone(),
        proj_bias: v[3].clone(),
        bias_table: v[4].clone(),
    };
    let x = tape.constant(img.cast::<f32>().reshape(&[1, 8, 8, 4]).unwrap());
    let got = wmsa(&x, &p, &spec).unwrap().into_value().cast::<f64>();
    let want = Dense { c: 4, heads: 2, w }.run(&img, 4, 4, 2);
    assert!(got.max_abs_diff(&want).unwrap() < 1e-5);
}

#[test]
fn shifted_cross_region_mass_is_negligible() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (hw, m, s) = (8, 4, 2);
    let spec = WindowSpec::new(m, s, 0.0).unwrap();
    let w = random_weights(4, 2, m, m, &mut rng);
    let tape = Tape::<f64>::new();
    let v = constants(&tape, &w);
    let x = tape.constant(random(&[1, hw, hw, 4], &mut rng).map(|t| t * 5.0));
    let probs = wmsa_probs(&x, &params(2, &v), &spec).unwrap();
    let mask: Tensor<f64> = shift_mask(hw, hw, m, s).unwrap();
    for win in 0..4 {
        for hd in 0..2 {
            for q in 0..16 {
                let row: f64 = (0..16).map(|k| probs.at(&[win, hd, q, k])).sum();
                assert!((row - 1.0).abs() < 1e-12);
                for k in 0..16 {
                    if mask.at(&[win, q, k]) != 0.0 {
                        assert!(probs.at(&[win, hd, q, k]) < 1e-6);
                    }
                }
            }
        }
    }
}

#[test]
fn unit_window_reduces_to_value_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let spec = WindowSpec::new(1, 0, 0.0).unwrap();
    let w = random_weights(3, 1, 1, 1, &mut rng);
    let tape = Tape::<f64>::new();
    let v = constants(&tape, &w);
    let img = random(&[1, 3, 2, 3], &mut rng);
    let x = tape.constant(img.clone());
    let got = wmsa(&x, &params(1, &v), &spec).unwrap();
    let dense = Dense { c: 3, heads: 1, w };
    for y in 0..3 {
        for xx in 0..2 {
            let px: Vec<f64> = (0..3).map(|k| img.at(&[0, y, xx, k])).collect();
            let want = dense.out_proj(&dense.project(&px, 2));
            for k in 0..3 {
                assert!((got.value().at(&[0, y, xx, k]) - want[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_query_key_weights_average_values_per_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let (c, m) = (4, 2);
    let spec = WindowSpec::new(m, 0, 0.0).unwrap();
    let mut w = random_weights(c, 2, m, m, &mut rng);
    w[0] = Tensor::from_fn([3 * c, c], |i| if i / c < 2 * c { 0.0 } else { w[0].data()[i] });
    w[1] = Tensor::from_fn([3 * c], |i| if i < 2 * c { 0.0 } else { w[1].data()[i] });
    w[4] = Tensor::zeros(w[4].shape().to_vec());
    let tape = Tape::<f64>::new();
    let v = constants(&tape, &w);
    let img = random(&[1, 4, 4, c], &mut rng);
    let got = wmsa(&tape.constant(img.clone()), &params(2, &v), &spec).unwrap();
    let dense = Dense { c, heads: 2, w };
    for wy in 0..2 {
        for wx in 0..2 {
            let mut mean = vec![0.0; c];
            for i in 0..m {
                for j in 0..m {
                    let px: Vec<f64> = (0..c).map(|k| img.at(&[0, wy * m + i, wx * m + j, k])).collect();
                    for (a, b) in mean.iter_mut().zip(dense.project(&px, 2)) {
                        *a += b / (m * m) as f64;
                    }
                }
            }
            let want = dense.out_proj(&mean);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..c {
                        let g = got.value().at(&[0, wy * m + i, wx * m + j, k]);
                        assert!((g - want[k]).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn oca_without_overlap_is_bit_identical_to_wmsa() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let w = random_weights(6, 3, 4, 4, &mut rng);
        let tape = Tape::<f32>::new();
        let v: Vec<_> = w.iter().map(|t| tape.constant(t.cast::<f32>())).collect();
        let p = AttentionParams {
            heads: 3,
            qkv_weight: v[0].clone(),
            qkv_bias: v[1].clone(),
            proj_weight: v[2].clone(),
            proj_bias: v[3].clone(),
            bias_table: v[4].clone(),
        };
        let x = tape.constant(random(&[2, 8, 4, 6], &mut rng).cast::<f32>());
        let a = oca(&x, &p, &WindowSpec::new(4, 0, 0.0).unwrap()).unwrap();
        let b = wmsa(&x, &p, &WindowSpec::new(4, 0, 0.0).unwrap()).unwrap();
        assert_eq!(a.value(), b.value());
    }
}

#[test]
fn large_overlap_attention_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let spec = WindowSpec::new(16, 0, 0.5).unwrap();
    let w = random_weights(2, 1, 16, 24, &mut rng);
    let tape = Tape::<f64>::new();
    let v = constants(&tape, &w);
    let x = tape.constant(random(&[1, 16, 16, 2], &mut rng));
    let probs = oca_probs(&x, &params(1, &v), &spec).unwrap();
    assert_eq!(probs.shape(), &[1, 1, 256, 576]);
}

#[test]
fn relative_index_displacement_enumeration() {
    // self-attention, M = 2: 16 pairs over 9 displacements
    let idx = relative_position_index(2, 2);
    assert_eq!(idx.len(), 16);
    let distinct: std::collections::BTreeSet<_> = idx.iter().collect();
    assert_eq!(distinct.len(), 9);
    assert!(idx.iter().all(|&i| i < table_span(2, 2).pow(2)));

    // cross-attention, M = 2, M_o = 4: displacements per axis span 5 values
    let span = table_span(2, 4);
    assert_eq!(span, 5);
    let idx = relative_position_index(2, 4);
    let dys: std::collections::BTreeSet<_> = idx.iter().map(|i| i / span).collect();
    let dxs: std::collections::BTreeSet<_> = idx.iter().map(|i| i % span).collect();
    assert_eq!(dys.len(), 5);
    assert_eq!(dxs.len(), 5);
    let distinct: std::collections::BTreeSet<_> = idx.iter().collect();
    assert_eq!(distinct.len(), 25);
}

#[test]
fn attention_gradients_match_finite_differences() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(90 + seed);
        for (shift, gamma) in [(1, 0.0), (0, 1.0)] {
            let spec = WindowSpec::new(2, shift, gamma).unwrap();
            let mut inputs = random_weights(4, 2, 2, spec.overlapped, &mut rng);
            inputs.push(random(&[1, 4, 4, 4], &mut rng));
            let r = random(&[1, 4, 4, 4], &mut rng);
            let report = GradCheck::default()
                .run(&inputs, |_, v| {
                    let p = params(2, &v[..5]);
                    let y = if gamma == 0.0 { wmsa(&v[5], &p, &spec) } else { oca(&v[5], &p, &spec) }?;
                    Ok(y.mul(&y.constant_like(r.clone()))?.sum_all())
                })
                .unwrap_or_else(|e: hat_core::Error| panic!("{e}"));
            assert!(report.max_error() < 1e-4, "seed {seed} shift {shift}: {:?}", report.errors);
        }
    }
}

proptest! {
    #[test]
    fn partition_reverse_roundtrip(n in 1usize..3, wh in 1usize..4, ww in 1usize..4, m in 1usize..4, c in 1usize..3) {
        let (h, w) = (wh * m, ww * m);
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn([n, h, w, c], |i| i as f64));
        let back = window_reverse(&window_partition(&x, m).unwrap(), m, n, h, w).unwrap();
        prop_assert_eq!(back.value(), x.value());
    }
}
