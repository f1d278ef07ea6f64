use patchbound::aggregate::{average_predict, build_heatmap, exact_sum};
use patchbound::bound::{bound_envelope, image_bound, BoundParams};
use patchbound::geometry::{center_pixel, enumerate_grid, extract_patch, GridSpec, Image};
use patchbound::logits::{ImageLogits, LogitSet};
use patchbound::sweep::{run_sweep, sweep_csv, SweepAxis, SweepSpec};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = BoundParams> {
    (1u64..10_000_000, 2u32..2000, 3u32..300, 3u32..300, 1u32..4, 1u32..9).prop_flat_map(|(n, k, h, w, c, s)| {
        (1..=h, 1..=w).prop_map(move |(ph, pw)| BoundParams::full_image(n, k, h, w, c).with_patch(ph, pw).with_stride(s))
    })
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

proptest! {
    #[test]
    fn decomposition_identity(p in params()) {
        let b = image_bound(&p).unwrap();
        let recombined = (b.mesh_term * b.roughness + b.noise_term) / b.t_eff.sqrt();
        prop_assert!(ulps(recombined, b.total) <= 4, "{} vs {}", recombined, b.total);
        prop_assert!(b.total.is_finite() && b.total > 0.0);
    }

    #[test]
    fn more_classes_never_help(p in params(), extra in 1u32..1000) {
        let more = BoundParams { n_classes: p.n_classes + extra, ..p };
        let (a, b) = (image_bound(&p).unwrap(), image_bound(&more).unwrap());
        prop_assert!(b.total >= a.total);
        if p.patch_height < p.height || p.patch_width < p.width {
            prop_assert!(b.total > a.total);
        }
    }

    #[test]
    fn more_data_never_hurts(p in params(), factor in 2u64..100) {
        let more = BoundParams { n_train: p.n_train * factor, ..p };
        prop_assert!(image_bound(&more).unwrap().total <= image_bound(&p).unwrap().total);
    }

    #[test]
    fn coarser_stride_never_helps(p in params(), extra in 1u32..8) {
        let coarse = p.with_stride(p.stride_h + extra);
        prop_assert!(image_bound(&coarse).unwrap().total >= image_bound(&p).unwrap().total);
    }

    #[test]
    fn envelope_is_running_minimum(p in params()) {
        let max = p.height.min(p.width);
        let env = bound_envelope(&p, max, 1).unwrap();
        let mut best = f64::INFINITY;
        for e in &env {
            best = best.min(e.raw);
            prop_assert_eq!(e.envelope, best);
        }
    }

    #[test]
    fn grid_matches_brute_force(h in 1u32..80, w in 1u32..80, sh in 1u32..7, sw in 1u32..7, fh in 0.0f64..1.0, fw in 0.0f64..1.0) {
        let ph = 1 + ((h - 1) as f64 * fh) as u32;
        let pw = 1 + ((w - 1) as f64 * fw) as u32;
        let grid = enumerate_grid(h, w, ph, pw, sh, sw).unwrap();
        let mut brute = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if r % sh == 0 && c % sw == 0 && r + ph <= h && c + pw <= w {
                    brute.push((r, c));
                }
            }
        }
        let got: Vec<_> = grid.positions.iter().map(|p| (p.row, p.col)).collect();
        prop_assert_eq!(got, brute);
        for p in &grid.positions {
            let (cy, cx) = center_pixel(*p, ph, pw);
            prop_assert!(cy < h && cx < w);
        }
    }

    #[test]
    fn patch_extraction_copies_pixels(h in 1u32..20, w in 1u32..20, c in 1u32..4, seed in any::<u64>()) {
        let data: Vec<u8> = (0..h * w * c).map(|i| (i as u64).wrapping_mul(seed | 1).wrapping_shr(7) as u8).collect();
        let img = Image::new(h, w, c, data).unwrap();
        let grid = enumerate_grid(h, w, h.div_ceil(2), w.div_ceil(2), 1, 1).unwrap();
        for pos in grid.positions.iter().take(10) {
            let patch = extract_patch(&img, *pos, grid.spec.patch_height, grid.spec.patch_width).unwrap();
            for r in 0..patch.height {
                for q in 0..patch.width {
                    for ch in 0..c {
                        prop_assert_eq!(patch.get(r, q, ch), img.get(pos.row + r, pos.col + q, ch));
                    }
                }
            }
        }
    }

    #[test]
    fn exact_sum_is_order_free(mut v in prop::collection::vec(-1e30f64..1e30, 0..200), seed in any::<u64>()) {
        let a = exact_sum(v.iter().copied());
        let n = v.len();
        if n > 1 {
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
        }
        prop_assert_eq!(a.to_bits(), exact_sum(v.iter().copied()).to_bits());
    }
}

fn logit_set() -> impl Strategy<Value = LogitSet> {
    (1u32..6, 1u32..12, 1u32..12, 1u32..4, 1u32..4, 1u32..4).prop_flat_map(|(k, gr, gc, ph, pw, s)| {
        let spec = GridSpec::new(ph + (gr - 1) * s, pw + (gc - 1) * s, ph, pw, s, s).unwrap();
        let count = (gr * gc * k) as usize;
        let image = (prop::collection::vec(-1e6f32..1e6, count), prop::option::of(0..k));
        prop::collection::vec(image, 0..4).prop_map(move |imgs| {
            let images = imgs
                .into_iter()
                .enumerate()
                .map(|(i, (logits, label))| ImageLogits { image_id: i as u32 * 7, grid_rows: gr, grid_cols: gc, label, logits })
                .collect();
            LogitSet::new(k, spec, images).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plg1_round_trip(set in logit_set()) {
        let bytes = set.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), set.encoded_len());
        let back = LogitSet::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes.clone());
        for len in 0..bytes.len() {
            prop_assert!(LogitSet::from_bytes(&bytes[..len]).is_err());
        }
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(LogitSet::from_bytes(&longer).is_err());
    }

    #[test]
    fn reversed_patch_order_gives_identical_means(set in logit_set()) {
        let k = set.n_classes as usize;
        for im in &set.images {
            let reversed: Vec<f32> = im.logits.chunks(k).rev().flatten().copied().collect();
            let other = ImageLogits { logits: reversed, ..im.clone() };
            let (a, b) = (average_predict(im, k).unwrap(), average_predict(&other, k).unwrap());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn heatmap_places_logits_at_centers(set in logit_set()) {
        let k = set.n_classes as usize;
        let g = set.geometry;
        for im in &set.images {
            let class = k - 1;
            let map = build_heatmap(&g, k, im, class).unwrap();
            let grid = enumerate_grid(g.height, g.width, g.patch_height, g.patch_width, g.stride_h, g.stride_w).unwrap();
            let mut expected = vec![0.0f64; (g.height * g.width) as usize];
            for (i, pos) in grid.positions.iter().enumerate() {
                let (r, c) = center_pixel(*pos, g.patch_height, g.patch_width);
                expected[(r * g.width + c) as usize] = im.logits[i * k + class] as f64;
            }
            prop_assert_eq!(&map.values, &expected);
        }
    }
}

#[test]
fn sweep_is_deterministic() {
    let spec = SweepSpec {
        base: BoundParams::full_image(1_200_000, 1000, 256, 256, 3),
        vary: SweepAxis::NClasses,
        values: vec![10.0, 100.0, 1000.0],
        patch_grid: (3..=256).collect(),
    };
    let a = sweep_csv(&run_sweep(&spec).unwrap(), 9);
    let b = sweep_csv(&run_sweep(&spec).unwrap(), 9);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 3 * 254);
}
