use landmark_sr::data::{make_splits, SplitSpec};
use landmark_sr::heatmap::{parse_detections_jsonl, to_detections_jsonl, ImportanceMap};
use landmark_sr::losses::{heatmap_loss, heatmap_weights, HeatNorm, HeatmapLossConfig};
use landmark_sr::metrics::{psnr, ssim};
use landmark_sr::resample::{InterpolationMode, Kernel, Resampler2d};
use landmark_sr::synth::template_detections;
use landmark_sr::tensor::{Grid, Tensor};
use proptest::prelude::*;

fn tensor(c: usize, h: usize, w: usize, seed: &[f64]) -> Tensor<f64> {
    Tensor::from_fn(c, h, w, |ch, y, x| seed[(ch * h * w + y * w + x) % seed.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_loss_scales_with_error(
        vals in prop::collection::vec(-1.0f64..1.0, 24),
        heat in prop::collection::vec(0.0f64..1.0, 12),
        k in 0.1f64..10.0,
        weighted in any::<bool>(),
    ) {
        let target = Tensor::zeros(2, 3, 4);
        let pred = tensor(2, 3, 4, &vals);
        let scaled = pred.map(|v| v * k);
        let h = Grid::from_vec(4, 3, heat).unwrap();
        let cfg = HeatmapLossConfig {
            heat_norm: if weighted { HeatNorm::WeightedMean } else { HeatNorm::AsPrinted },
            ..Default::default()
        };
        let a = heatmap_loss(&pred, &target, &h, &cfg).unwrap();
        let b = heatmap_loss(&scaled, &target, &h, &cfg).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-12 * (1.0 + b.abs()));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn weights_stay_between_floor_and_one(
        heat in prop::collection::vec(0.0f64..=1.0, 1..40),
        gamma in 1.01f64..6.0,
        floor in 0.001f64..=1.0,
    ) {
        let n = heat.len();
        let h = Grid::from_vec(n, 1, heat).unwrap();
        let cfg = HeatmapLossConfig { gamma, floor, heat_norm: HeatNorm::WeightedMean };
        let w = heatmap_weights(&h, &cfg).unwrap();
        for &v in w.data() {
            prop_assert!(v >= floor - 1e-15 && v <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn metrics_are_symmetric(vals in prop::collection::vec(0.0f64..1.0, 64), noise in prop::collection::vec(-0.2f64..0.2, 64)) {
        let a = tensor(1, 16, 16, &vals);
        let b = Tensor::from_fn(1, 16, 16, |_, y, x| (a.get(0, y, x) + noise[(y * 16 + x) % 64]).clamp(0.0, 1.0));
        let (p1, p2) = (psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert!(p1 == p2 || (p1.is_infinite() && p2.is_infinite()));
        let (s1, s2) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!(s1 <= 1.0 + 1e-12);
    }

    #[test]
    fn resampling_preserves_constants(level in -1.0f64..1.0, bicubic in any::<bool>(), antialias in any::<bool>()) {
        let mode = if bicubic { InterpolationMode::Bicubic } else { InterpolationMode::Bilinear };
        let kernel = Kernel::for_mode(mode, -0.5);
        for (from, to) in [(128, 16), (16, 128)] {
            let r = Resampler2d::<f64>::new((from, from), (to, to), kernel, antialias);
            let out = r.apply(&Tensor::filled(3, from, from, level));
            prop_assert!(out.data().iter().all(|v| (v - level).abs() < 1e-12));
        }
    }

    #[test]
    fn splits_partition_ids(n in 3usize..200, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i:04}")).collect();
        let m = make_splits(&ids, SplitSpec::Ratios([0.8, 0.1, 0.1]), seed).unwrap();
        let mut all: Vec<String> = m.train.iter().chain(&m.val).chain(&m.test).cloned().collect();
        prop_assert_eq!(all.len(), n);
        all.sort();
        prop_assert_eq!(&all, &ids);
        prop_assert_eq!(m, make_splits(&ids, SplitSpec::Ratios([0.8, 0.1, 0.1]), seed).unwrap());
    }

    #[test]
    fn heatmap_quantization_roundtrip(vals in prop::collection::vec(0.0f64..=1.0, 16)) {
        let map = ImportanceMap { image_id: "x".into(), values: Grid::from_vec(4, 4, vals.clone()).unwrap() };
        let back = ImportanceMap::<f64>::from_u16("x", 4, 4, &map.to_u16()).unwrap();
        for (a, b) in vals.iter().zip(back.values.data()) {
            prop_assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }

    #[test]
    fn detections_jsonl_roundtrip(seed in any::<u64>(), count in 0usize..6) {
        let recs: Vec<_> = (0..count).map(|i| template_detections(&format!("img{i}"), seed, i as u64)).collect();
        let text = to_detections_jsonl(&recs).unwrap();
        prop_assert_eq!(parse_detections_jsonl(&text).unwrap(), recs);
    }
}
