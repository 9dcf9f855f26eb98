mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use common::*;
use mspt::data::{
    augment, dataset_stats, generate_dataset, generate_sample, hflip, partition, resize_eval, rot90, split_manifest,
    AugmentConfig, Dataset, Image, Manifest, ASPECT_RANGE, MAX_BASE_WIDTH, MIN_BASE_WIDTH,
};
use proptest::prelude::*;
use rand::Rng;

fn random_image(r: &mut impl Rng, w: usize, h: usize) -> Image {
    Image::new(w, h, (0..w * h * 3).map(|_| r.random()).collect()).unwrap()
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generation_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(12, 31, a.path()).unwrap();
    generate_dataset(12, 31, b.path()).unwrap();
    let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(fa.len(), 12 + 2);
    assert_eq!(fa, fb);

    let c = tempfile::tempdir().unwrap();
    generate_dataset(12, 32, c.path()).unwrap();
    assert_ne!(dir_bytes(c.path()), fa);
}

#[test]
fn samples_do_not_depend_on_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let small = generate_dataset(3, 8, a.path()).unwrap();
    let large = generate_dataset(6, 8, b.path()).unwrap();
    assert_eq!(small.samples(), &large.samples()[..3]);
    assert_eq!(generate_sample(8, 2).unwrap().mos, small.samples()[2].mos);
}

#[test]
fn generated_samples_respect_their_ranges() {
    for i in 0..200 {
        let g = generate_sample(77, i).unwrap();
        let (w, h) = (g.image.width(), g.image.height());
        assert!((MIN_BASE_WIDTH..=MAX_BASE_WIDTH).contains(&w));
        let aspect = w as f64 / h as f64;
        // rounding the height moves the ratio by at most half a pixel
        let slack = 0.5 * w as f64 / (h as f64 * h as f64) + 1e-12;
        assert!(aspect >= ASPECT_RANGE.0 - slack && aspect <= ASPECT_RANGE.1 + slack, "{w}x{h}");
        let d = g.degradation;
        let want = (-(0.5 * d.blur + 4.0 * d.noise + 0.4 * (d.down - 1.0) + 1.2 * d.contrast)).exp();
        assert!((g.mos - want).abs() < 1e-15);
        assert!(g.mos > 0.0 && g.mos <= 1.0);
    }
}

#[test]
fn zero_count_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    assert!(generate_dataset(0, 1, d.path()).is_err());
}

#[test]
fn manifest_round_trip_and_dataset_load() {
    let d = tempfile::tempdir().unwrap();
    let m = generate_dataset(5, 3, d.path()).unwrap();
    let back = Manifest::load(d.path().join("manifest.csv")).unwrap();
    assert_eq!(back.samples(), m.samples());
    assert_eq!(back.seed(), Some(3));
    let data = Dataset::load(&back).unwrap();
    for i in 0..data.len() {
        assert_eq!(data.image(i).width(), data.sample(i).width);
        assert_eq!(data.image(i).height(), data.sample(i).height);
    }
    let csv = fs::read_to_string(d.path().join("manifest.csv")).unwrap();
    assert!(csv.starts_with("path,mos,width,height,blur,noise,down,contrast\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn split_inclusion() {
    let d = tempfile::tempdir().unwrap();
    let m = generate_dataset(40, 4, d.path()).unwrap();
    for (fraction, seed) in [(0.9, 1), (0.5, 2), (0.25, 3), (1.0, 4)] {
        let (sub, full) = split_manifest(&m, fraction, seed).unwrap();
        assert_eq!(full, m);
        assert_eq!(sub.len(), (fraction * 40.0 + 1e-9).floor() as usize);
        let all: BTreeSet<_> = m.samples().iter().map(|s| &s.path).collect();
        let picked: Vec<_> = sub.samples().iter().map(|s| &s.path).collect();
        assert!(picked.iter().all(|p| all.contains(p)));
        assert!(picked.windows(2).all(|w| w[0] < w[1]), "subset keeps manifest order");
        assert_eq!(split_manifest(&m, fraction, seed).unwrap().0, sub);

        let (keep, rest) = partition(&m, fraction, seed).unwrap();
        assert_eq!(keep, sub);
        assert_eq!(keep.len() + rest.len(), m.len());
        let rest_paths: BTreeSet<_> = rest.samples().iter().map(|s| &s.path).collect();
        assert!(picked.iter().all(|p| !rest_paths.contains(p)));
    }
    assert_ne!(split_manifest(&m, 0.5, 1).unwrap().0, split_manifest(&m, 0.5, 2).unwrap().0);
    assert!(split_manifest(&m, 0.0, 1).is_err());
    assert!(split_manifest(&m, 1.5, 1).is_err());
}

#[test]
fn stats_match_direct_counts() {
    let d = tempfile::tempdir().unwrap();
    let m = generate_dataset(60, 9, d.path()).unwrap();
    let s = dataset_stats(&m).unwrap();
    assert_eq!(s.n, 60);
    for h in [&s.width_hist, &s.height_hist, &s.ratio_hist, &s.area_hist] {
        assert_eq!(h.total(), 60);
    }
    let ws: Vec<f64> = m.samples().iter().map(|x| x.width as f64).collect();
    let hs: Vec<f64> = m.samples().iter().map(|x| x.height as f64).collect();
    assert!((s.wh_correlation.unwrap() - pearson_oracle(&ws, &hs)).abs() < 1e-12);
    for (i, &c) in s.width_hist.counts.iter().enumerate() {
        let (lo, hi) = s.width_hist.bin_range(i);
        let direct = ws.iter().filter(|&&w| w >= lo && w < hi).count() as u64;
        assert_eq!(c, direct, "width bin {i}");
    }
}

#[test]
fn flips_and_rotations_compose_to_identity() {
    let mut r = rng(3);
    let img = random_image(&mut r, 23, 17);
    assert_eq!(hflip(&hflip(&img)), img);
    let rotated = rot90(&img, 1);
    assert_eq!((rotated.width(), rotated.height()), (17, 23));
    assert_eq!(rot90(&rotated, 3), img);
    assert_eq!(rot90(&img, 4), img);
    assert_eq!(rot90(&rot90(&img, 2), 2), img);
}

#[test]
fn identity_augment_of_square_image_is_a_copy() {
    let mut r = rng(4);
    let img = random_image(&mut r, 32, 32);
    assert_eq!(augment(&img, 32, &AugmentConfig::identity(), &mut r).unwrap(), img);
    assert_eq!(resize_eval(&img, 32).unwrap(), img);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn augment_always_yields_the_target_size(
        w in 16usize..140,
        h in 16usize..140,
        target in 16usize..129,
        flip_p in 0.0f64..=1.0,
        rotate_p in 0.0f64..=1.0,
        s_lo in 0.05f64..1.0,
        r_lo in 0.3f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let img = random_image(&mut r, w, h);
        let cfg = AugmentConfig { flip_p, rotate_p, scale: (s_lo, 1.0), ratio: (r_lo, 1.0 / r_lo) };
        let out = augment(&img, target, &cfg, &mut r).unwrap();
        prop_assert_eq!((out.width(), out.height()), (target, target));
        let eval = resize_eval(&img, target).unwrap();
        prop_assert_eq!((eval.width(), eval.height()), (target, target));
    }
}
