use std::collections::BTreeSet;

use hat_core::data::*;
use hat_core::registry::Options;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap()
}

fn distinct_image(h: usize, w: usize) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, 1, |y, x, _| (y * w + x) as f64 / (h * w) as f64).unwrap()
}

// Keys kernel (a = -0.5) evaluated by hand at the half-pixel offsets of a x2
// shrink: distances 0.5, 1.5, 2.5, 3.5 stretched by 2.
const X2_TAPS: [f64; 4] = [0.43359375, 0.11328125, -0.03515625, -0.01171875];

#[test]
fn bicubic_keeps_constants() {
    for s in 2..=4 {
        let img = ImageBuffer::filled(24, 36, 3, 0.37).unwrap();
        let out = bicubic_downscale(&img, s).unwrap();
        assert_eq!((out.height(), out.width()), (24 / s, 36 / s));
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-14));
    }
}

#[test]
fn bicubic_ramp_is_exact_in_the_interior() {
    let w = 32;
    let img = ImageBuffer::from_fn(4, w, 1, |_, x, _| x as f64).unwrap();
    let out = bicubic_downscale(&img, 2).unwrap();
    // output j is centred on source coordinate 2j + 0.5
    for j in 2..w / 2 - 2 {
        assert!((out.get(1, j, 0) - (2.0 * j as f64 + 0.5)).abs() < 1e-12, "j={j}");
    }
}

#[test]
fn bicubic_impulse_response_matches_tabulated_taps() {
    let n = 16;
    let p = 8;
    let img = ImageBuffer::from_fn(n, n, 1, |y, x, _| if y == p && x == p { 1.0 } else { 0.0 }).unwrap();
    let out = bicubic_downscale(&img, 2).unwrap();
    let tap = |j: usize| {
        let dist = (p as f64 - (2.0 * j as f64 + 0.5)).abs();
        let k = (dist - 0.5).round() as usize;
        X2_TAPS.get(k).copied().unwrap_or(0.0)
    };
    for y in 0..n / 2 {
        for x in 0..n / 2 {
            assert!((out.get(y, x, 0) - tap(y) * tap(x)).abs() < 1e-15, "({y},{x})");
        }
    }
    assert!((X2_TAPS.iter().sum::<f64>() - 0.5).abs() < 1e-15);
}

#[test]
fn bicubic_rejects_bad_factors_and_extents() {
    let img = ImageBuffer::filled(12, 12, 1, 0.0).unwrap();
    assert!(bicubic_downscale(&img, 5).is_err());
    assert!(bicubic_downscale(&img, 1).is_err());
    let odd = ImageBuffer::filled(13, 12, 1, 0.0).unwrap();
    assert!(bicubic_downscale(&odd, 2).is_err());
    assert_eq!(crop_to_multiple(&odd, 2).unwrap().height(), 12);
}

#[test]
fn noise_zero_sigma_is_identity() {
    let img = random_image(8, 8, 3, 1);
    assert_eq!(add_gaussian_noise(&img, 0.0, 5), img);
}

#[test]
fn noise_std_matches_sigma() {
    let n = 1_000_000;
    let field = noise_field(n, 25.0, 42);
    let mean = field.iter().sum::<f64>() / n as f64;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let target = 25.0 / 255.0;
    assert!((var.sqrt() - target).abs() / target < 0.01, "std {}", var.sqrt());
}

#[test]
fn noise_is_seeded_and_clamped() {
    let img = random_image(16, 16, 3, 2);
    let a = add_gaussian_noise(&img, 50.0, 9);
    assert_eq!(a, add_gaussian_noise(&img, 50.0, 9));
    assert_ne!(a, add_gaussian_noise(&img, 50.0, 10));
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn patch_extent_at_scale_four() {
    let hq = random_image(128, 128, 3, 3);
    let pair = Pair::new(bicubic_downscale(&hq, 4).unwrap(), hq, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (lq, hq) = pair.sample_patch(16, &mut rng).unwrap();
    assert_eq!((lq.height(), hq.height(), hq.width()), (16, 64, 64));
    assert!(pair.sample_patch(33, &mut rng).is_err());
}

#[test]
fn patch_offsets_enumerated_on_small_pair() {
    let hq = distinct_image(16, 16);
    let lq = distinct_image(8, 8);
    let pair = Pair::new(lq.clone(), hq.clone(), 2).unwrap();
    let size = 3;
    let valid: BTreeSet<(usize, usize)> = (0..=8 - size).flat_map(|t| (0..=8 - size).map(move |l| (t, l))).collect();
    for &(t, l) in &valid {
        let (pl, ph) = pair.patch_at(t, l, size).unwrap();
        for y in 0..size {
            for x in 0..size {
                assert_eq!(pl.get(y, x, 0), lq.get(t + y, l + x, 0));
            }
        }
        for y in 0..2 * size {
            for x in 0..2 * size {
                assert_eq!(ph.get(y, x, 0), hq.get(2 * t + y, 2 * l + x, 0));
            }
        }
    }
    // every sampled patch sits at one of the valid offsets, and all get hit
    let mut seen = BTreeSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let (pl, ph) = pair.sample_patch(size, &mut rng).unwrap();
        let idx = (pl.get(0, 0, 0) * 64.0).round() as usize;
        let (t, l) = (idx / 8, idx % 8);
        assert!(valid.contains(&(t, l)));
        assert_eq!(ph, hq.crop(2 * t, 2 * l, 2 * size, 2 * size).unwrap());
        seen.insert((t, l));
    }
    assert_eq!(seen, valid);
    assert!(Pair::new(lq, distinct_image(15, 16), 2).is_err());
}

#[test]
fn rot90_index_oracle() {
    let (h, w) = (3, 5);
    let img = distinct_image(h, w);
    let out = augment(&img, 1);
    assert_eq!((out.height(), out.width()), (w, h));
    for i in 0..w {
        for j in 0..h {
            assert_eq!(out.get(i, j, 0), img.get(j, w - 1 - i, 0));
        }
    }
    let flipped = augment(&img, 4);
    for y in 0..h {
        for x in 0..w {
            assert_eq!(flipped.get(y, x, 0), img.get(y, w - 1 - x, 0));
        }
    }
}

#[test]
fn augment_codes_form_the_dihedral_group() {
    let img = distinct_image(4, 6);
    let images: Vec<ImageBuffer> = (0..8).map(|k| augment(&img, k)).collect();
    assert_eq!(images[0], img);
    for a in 0..8 {
        for b in 0..8 {
            assert_ne!(a != b, images[a as usize] == images[b as usize]);
        }
        assert_eq!(augment(&images[a as usize], inverse_code(a)), img);
        // closure: composing two codes lands on another code
        for b in 0..8 {
            let composed = augment(&images[a as usize], b);
            assert!(images.contains(&composed));
        }
    }
}

#[test]
fn augment_pair_commutes_with_patch_alignment() {
    let hq = distinct_image(8, 8);
    let lq = distinct_image(4, 4);
    for k in 0..8 {
        let (l2, h2) = augment_pair(&lq, &hq, k);
        assert!(Pair::new(l2, h2, 2).is_ok());
    }
}

#[test]
fn psnr_of_uniform_luma_step() {
    let a = ImageBuffer::filled(16, 16, 1, 0.5).unwrap();
    let b = ImageBuffer::filled(16, 16, 1, 0.5 + 1.0 / 255.0).unwrap();
    let p = psnr_y(&a, &b, 2).unwrap();
    assert!((p - 20.0 * 255f64.log10()).abs() < 1e-9 && (p - 48.13).abs() < 0.01);
    // on RGB, a grey step of 1/219 moves luma by exactly 1/255
    let c = ImageBuffer::filled(16, 16, 3, 0.5).unwrap();
    let d = ImageBuffer::filled(16, 16, 3, 0.5 + 1.0 / 219.0).unwrap();
    assert!((psnr_y(&c, &d, 2).unwrap() - 48.13).abs() < 0.01);
}

#[test]
fn identical_images_are_perfect() {
    let a = random_image(32, 32, 3, 4);
    assert_eq!(psnr_y(&a, &a, 2).unwrap(), f64::INFINITY);
    assert!((ssim_y(&a, &a, 2).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn psnr_matches_integer_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, w, crop) = (20, 24, 3);
    let ra: Vec<u8> = (0..h * w).map(|_| rng.random()).collect();
    let rb: Vec<u8> = (0..h * w).map(|_| rng.random()).collect();
    let mut se = 0i64;
    for y in crop..h - crop {
        for x in crop..w - crop {
            let d = ra[y * w + x] as i64 - rb[y * w + x] as i64;
            se += d * d;
        }
    }
    let n = ((h - 2 * crop) * (w - 2 * crop)) as f64;
    let reference = 10.0 * (255.0f64 * 255.0 * n / se as f64).log10();
    let a = ImageBuffer::from_u8(h, w, 1, &ra).unwrap();
    let b = ImageBuffer::from_u8(h, w, 1, &rb).unwrap();
    assert!((psnr_y(&a, &b, crop).unwrap() - reference).abs() < 1e-6);
}

#[test]
fn ssim_matches_direct_window_reference() {
    let (h, w) = (16, 18);
    let a = random_image(h, w, 1, 6);
    let b = add_gaussian_noise(&a, 20.0, 7);
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i] * g[j] / (gs * gs);
                    let (x, y) = (a.get(oy + i, ox + j, 0), b.get(oy + i, ox + j, 0));
                    ma += wt * x;
                    mb += wt * y;
                    saa += wt * x * x;
                    sbb += wt * y * y;
                    sab += wt * x * y;
                }
            }
            let (c1, c2) = (1e-4, 9e-4);
            total += (2.0 * ma * mb + c1) * (2.0 * (sab - ma * mb) + c2)
                / ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
            count += 1;
        }
    }
    let got = ssim_y(&a, &b, 0).unwrap();
    assert!((got - total / count as f64).abs() < 1e-12, "{got}");
    assert!(got < 0.99 && got > 0.0);
}

#[test]
fn metrics_reject_mismatched_extents() {
    let a = random_image(16, 16, 1, 8);
    let b = random_image(16, 17, 1, 8);
    assert!(psnr_y(&a, &b, 0).is_err());
    assert!(ssim_y(&a, &b, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_symmetric_and_dihedral_invariant(seed in 0u64..1000, code in 0u8..8) {
        let a = random_image(20, 24, 3, seed);
        let b = add_gaussian_noise(&a, 15.0, seed + 1);
        let p = psnr_y(&a, &b, 2).unwrap();
        let s = ssim_y(&a, &b, 2).unwrap();
        prop_assert!((p - psnr_y(&b, &a, 2).unwrap()).abs() < 1e-12);
        prop_assert!((s - ssim_y(&b, &a, 2).unwrap()).abs() < 1e-12);
        let (ta, tb) = augment_pair(&a, &b, code);
        prop_assert!((p - psnr_y(&ta, &tb, 2).unwrap()).abs() < 1e-9);
        prop_assert!((s - ssim_y(&ta, &tb, 2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn png_roundtrip_is_exact(seed in 0u64..1000, c in prop::sample::select(vec![1usize, 3])) {
        let img = random_image(7, 9, c, seed).quantized();
        let back = ImageBuffer::decode_png(&img.encode_png().unwrap()).unwrap();
        prop_assert_eq!(back, img);
    }
}

#[test]
fn registry_builds_degradations() {
    let reg = degradations();
    assert_eq!(reg.names().collect::<Vec<_>>(), vec!["bicubic", "noise"]);
    let d = reg.build("bicubic", &Options::new().with("scale", 2)).unwrap();
    let (lq, hq) = d.apply(&random_image(17, 20, 3, 9), 0).unwrap();
    assert_eq!((lq.height(), lq.width(), hq.height()), (8, 10, 16));
    assert_eq!(lq, lq.quantized());
    assert!(reg.build("bicubic", &Options::new().with("scale", 5)).is_err());
    assert!(reg.build("jpeg", &Options::new()).is_err());
    let n = reg.build("noise", &Options::new().with("sigma", 10)).unwrap();
    assert_eq!(n.scale(), 1);
    assert!(n.describe().contains("sigma=10"));
}

#[test]
fn manifest_roundtrip_and_pair_loading() {
    let dir = tempfile::tempdir().unwrap();
    let hq = random_image(16, 16, 3, 10).quantized();
    let lq = bicubic_downscale(&hq, 2).unwrap().quantized();
    hq.write_png(&dir.path().join("a_hq.png")).unwrap();
    lq.write_png(&dir.path().join("a_lq.png")).unwrap();
    let manifest = PairManifest {
        degradation: "degradation=bicubic scale=2".into(),
        records: vec![Record { lq: dir.path().join("a_lq.png"), hq: dir.path().join("a_hq.png"), scale: 2 }],
    };
    let path = dir.path().join("pairs.txt");
    manifest.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "# degradation=bicubic scale=2\na_lq.png\ta_hq.png\t2\n");
    let loaded = PairManifest::load(&path).unwrap();
    assert_eq!(loaded, manifest);
    let pairs = loaded.load_pairs().unwrap();
    assert_eq!(pairs[0].hq, hq);

    std::fs::write(&path, "a_lq.png\ta_hq.png\t3\n").unwrap();
    assert!(PairManifest::load(&path).unwrap().load_pairs().is_err());
    std::fs::write(&path, "a_lq.png a_hq.png 2\n").unwrap();
    assert!(PairManifest::load(&path).is_err());
}
