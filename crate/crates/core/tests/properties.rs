use oac_core::correlation::{
    correlation_map, normalize_correlation, oac_forward_direct, oac_forward_reordered, reorder_by_offset,
    restore_from_offsets, CorrelationMap, OacKernelBank,
};
use oac_core::geometry::{make_regular_grid, pck, sample_random_transform, tgd, ImageFrame, TransformFamily};
use oac_core::io::{decode_tensor, encode_tensor};
use oac_core::pipeline::synthetic_keypoints;
use oac_core::rng::seeded;
use oac_core::tensor::{l2_normalize_channels, spatial_softmax, Tensor};
use proptest::prelude::*;

/// Places `f` (`D × h × w`) at row `di`, column `dj` of a zero canvas.
fn embed(f: &Tensor, canvas: (usize, usize), di: usize, dj: usize) -> Tensor {
    let (d, h, w) = f.dims3().unwrap();
    let mut out = Tensor::zeros(&[d, canvas.0, canvas.1]);
    for c in 0..d {
        for i in 0..h {
            for j in 0..w {
                out.data_mut()[(c * canvas.0 + i + di) * canvas.1 + j + dj] = f.at3(c, i, j);
            }
        }
    }
    out
}

fn features(d: usize, h: usize, w: usize, seed: u64) -> Tensor {
    l2_normalize_channels(&Tensor::uniform(&[d, h, w], -1.0, 1.0, &mut seeded(seed)), 1e-12).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Translating both feature maps inside a zero canvas translates the
    // OAC response, since every pair keeps its offset.
    #[test]
    fn translation_equivariance(
        h in 2usize..5, w in 2usize..5, di in 0usize..3, dj in 0usize..3, n in 1usize..4, seed in any::<u64>()
    ) {
        let canvas = (h + 2, w + 2);
        let (fs, ft) = (features(3, h, w, seed), features(3, h, w, seed ^ 1));
        let bank = OacKernelBank::init(n, canvas.0, canvas.1, true, &mut seeded(seed ^ 2));
        let out = |di, dj| {
            let c = correlation_map(&embed(&fs, canvas, di, dj), &embed(&ft, canvas, di, dj)).unwrap();
            oac_forward_direct(&normalize_correlation(&c, 1e-12).unwrap(), &bank).unwrap().values
        };
        let (base, moved) = (out(0, 0), out(di, dj));
        for k in 0..n {
            for i in 0..h {
                for j in 0..w {
                    prop_assert!((base.at3(k, i, j) - moved.at3(k, i + di, j + dj)).abs() < 1e-12);
                }
            }
        }
    }

    // A single unit correlation at offset (s, t) reads the same weight
    // wherever the source sits.
    #[test]
    fn weights_are_shared_across_locations(
        h in 2usize..6, w in 2usize..6, n in 1usize..4, pick in any::<(u16, u16, u16, u16)>(), seed in any::<u64>()
    ) {
        let (i, j) = (pick.0 as usize % h, pick.1 as usize % w);
        let (k, l) = (pick.2 as usize % h, pick.3 as usize % w);
        let mut values = Tensor::zeros(&[h * w, h, w]);
        values.data_mut()[((k * w + l) * h + i) * w + j] = 1.0;
        let c = CorrelationMap::from_tensor(values).unwrap();
        let mut bank = OacKernelBank::init(n, h, w, false, &mut seeded(seed));
        for v in bank.weights.value.data_mut() {
            *v = v.abs();
        }
        let out = oac_forward_direct(&c, &bank).unwrap().values;
        let (s, t) = (i as isize - k as isize, j as isize - l as isize);
        for m in 0..n {
            prop_assert_eq!(out.at3(m, i, j), bank.weight(m, s, t));
            let elsewhere: f64 = (0..h * w).filter(|&p| p != i * w + j).map(|p| out.at3(m, p / w, p % w)).sum();
            prop_assert_eq!(elsewhere, 0.0);
        }
    }

    #[test]
    fn reorder_round_trip_is_exact(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let c = CorrelationMap::from_tensor(Tensor::uniform(&[h * w, h, w], -1.0, 1.0, &mut seeded(seed))).unwrap();
        let r = reorder_by_offset(&c);
        prop_assert_eq!(r.values().shape(), &[(2 * h - 1) * (2 * w - 1), h, w][..]);
        prop_assert_eq!(restore_from_offsets(&r), c);
    }

    #[test]
    fn paths_agree(h in 2usize..7, w in 2usize..7, n in 1usize..5, seed in any::<u64>()) {
        let c = correlation_map(&features(2, h, w, seed), &features(2, h, w, seed ^ 7)).unwrap();
        let c = normalize_correlation(&c, 1e-12).unwrap();
        let bank = OacKernelBank::init(n, h, w, true, &mut seeded(seed ^ 8));
        let a = oac_forward_direct(&c, &bank).unwrap().values;
        let b = oac_forward_reordered(&c, &bank).unwrap().values;
        prop_assert!(a.max_abs_diff(&b) <= 1e-10);
    }

    #[test]
    fn unit_feature_correlations_are_bounded(d in 1usize..6, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let c = correlation_map(&features(d, h, w, seed), &features(d, h, w, seed ^ 3)).unwrap();
        prop_assert!(c.values().data().iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn softmax_is_a_distribution(h in 1usize..8, w in 1usize..8, scale in 0.1f64..50.0, seed in any::<u64>()) {
        let s = Tensor::uniform(&[1, h, w], -scale, scale, &mut seeded(seed));
        let a = spatial_softmax(&s).unwrap();
        prop_assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((a.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tgd_is_a_symmetric_nonnegative_distance(tps in any::<bool>(), a in any::<u64>(), b in any::<u64>(), n in 2usize..12) {
        let family = if tps { TransformFamily::TPS } else { TransformFamily::Affine };
        let (ta, tb) = (sample_random_transform(family, a), sample_random_transform(family, b));
        let grid = make_regular_grid(n).unwrap();
        let (ab, ba) = (tgd(&ta, &tb, &grid).unwrap().0, tgd(&tb, &ta, &grid).unwrap().0);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(tgd(&ta, &ta, &grid).unwrap().0, 0.0);
    }

    #[test]
    fn pck_is_monotone_in_alpha(seed in any::<u64>(), lo in 0.01f64..0.3, extra in 0.0f64..0.3) {
        let frame = ImageFrame::new(64, 96);
        let family = TransformFamily::Affine;
        let truth: Vec<_> = (0..4).map(|i| sample_random_transform(family, seed.wrapping_add(i))).collect();
        let sets: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, t)| synthetic_keypoints(format!("p{i}"), t, frame, 8, seed ^ i as u64).unwrap())
            .collect();
        let guess: Vec<_> = (0..4).map(|i| sample_random_transform(family, seed.wrapping_mul(3).wrapping_add(i))).collect();
        let (a, b) = (pck(&sets, &guess, frame, lo).unwrap(), pck(&sets, &guess, frame, lo + extra).unwrap());
        prop_assert!(a.correct <= b.correct);
        prop_assert_eq!(pck(&sets, &truth, frame, lo).unwrap().value(), 1.0);
    }

    #[test]
    fn tensor_encoding_round_trips_bitwise(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let t = Tensor::uniform(&dims, -1e6, 1e6, &mut seeded(seed));
        let back = decode_tensor(&encode_tensor(&t), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
