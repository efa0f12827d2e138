use std::collections::BTreeSet;

use proptest::prelude::*;

use taskmap::association::associate_mask;
use taskmap::io::{FrameRecord, OutputMap};
use taskmap::primitives::{assign_primitives, FrameSet};
use taskmap::synth::look_at;
use taskmap::{
    bayes_update, fit_obb, generate, knn_filter, posterior_single, select_fraction, select_top_k, DepthMap,
    DepthTolerance, LikelihoodModel, MapState, MaskObservation, ObjectCluster, OrientedBox, PipelineConfig, Rle,
    SynthConfig, TaskList, UpdateOutcome, Vec3,
};

fn point() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn clusters(probs: &[f64]) -> Vec<ObjectCluster> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| ObjectCluster {
            id: i as u64,
            primitive_ids: vec![],
            gaussian_ids: vec![],
            task_dist: vec![p, 1.0 - p],
            prior_mass: 0.1,
            obb: None,
        })
        .collect()
}

fn ids(selected: &[&ObjectCluster]) -> Vec<u64> {
    selected.iter().map(|c| c.id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn posterior_increases_with_score(a in -0.2..0.6f64, b in -0.2..0.6f64, sigma in 0.02..0.08f64, prior in 0.01..0.99f64) {
        let model = LikelihoodModel { sigma_neg: sigma, sigma_pos: sigma, ..LikelihoodModel::default() };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(posterior_single(lo, &model, prior) <= posterior_single(hi, &model, prior));
    }

    #[test]
    fn fusion_is_order_independent(scores in prop::collection::vec(0.15..0.32f64, 1..7)) {
        let model = LikelihoodModel::default();
        let run = |order: Vec<f64>| {
            order.into_iter().try_fold(0.05, |p, phi| bayes_update(p, phi, &model)).unwrap()
        };
        let forward = run(scores.clone());
        let backward = run(scores.iter().rev().copied().collect());
        prop_assert!((forward - backward).abs() <= 1e-9);
    }

    #[test]
    fn association_grows_with_depth_tolerance(
        centers in prop::collection::vec(point(), 1..60),
        depths in prop::collection::vec(2.0..6.0f32, 48),
        small in 0.0..0.5f64,
        extra in 0.0..1.0f64,
    ) {
        let cam = look_at(Vec3::new(0.0, -5.0, 0.0), Vec3::zeros(), 8, 6, 60.0);
        let depth = DepthMap::new(8, 6, depths).unwrap();
        let mask = MaskObservation {
            mask_id: 0,
            region: Some(Rle::from_pixels(0..48)),
            scores: vec![0.2],
            gaussian_ids: None,
        };
        let state = MapState::new(
            centers.iter().enumerate().map(|(i, c)| (i as u64, *c)),
            TaskList::new(["t"]).unwrap(),
            &PipelineConfig::default(),
        ).unwrap();
        let assoc = |tol| {
            associate_mask(&mask, &cam, Some(&depth), state.gaussians(), &DepthTolerance::absolute(tol))
                .unwrap()
                .into_iter()
                .collect::<BTreeSet<u64>>()
        };
        prop_assert!(assoc(small).is_subset(&assoc(small + extra)));
    }

    #[test]
    fn knn_filter_is_scale_equivariant(points in prop::collection::vec(point(), 0..80), exp in -2i32..4) {
        let scale = 2f64.powi(exp);
        let scaled: Vec<Vec3> = points.iter().map(|p| p * scale).collect();
        prop_assert_eq!(knn_filter(&points, 8, 2.0), knn_filter(&scaled, 8, 2.0));
    }

    #[test]
    fn fitted_box_contains_its_points(points in prop::collection::vec(point(), 1..60)) {
        let b: OrientedBox = fit_obb(&points).unwrap();
        for p in &points {
            let local = b.to_local(p);
            for k in 0..3 {
                prop_assert!(local[k].abs() <= b.half_extents[k] + 1e-9);
            }
        }
    }

    #[test]
    fn top_k_ignores_monotone_rescaling(probs in prop::collection::vec(0.0..1.0f64, 1..20), k in 1usize..25) {
        let raw = clusters(&probs);
        let squashed: Vec<f64> = probs.iter().map(|p| p.sqrt()).collect();
        let transformed = clusters(&squashed);
        prop_assert_eq!(ids(&select_top_k(&raw, 0, k).unwrap()), ids(&select_top_k(&transformed, 0, k).unwrap()));
    }

    #[test]
    fn larger_fraction_selects_a_subset(probs in prop::collection::vec(0.01..1.0f64, 1..20), f1 in 0.05..1.0f64, f2 in 0.05..1.0f64) {
        let c = clusters(&probs);
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let wide: BTreeSet<u64> = ids(&select_fraction(&c, 0, lo).unwrap()).into_iter().collect();
        let narrow: BTreeSet<u64> = ids(&select_fraction(&c, 0, hi).unwrap()).into_iter().collect();
        prop_assert!(narrow.is_subset(&wide));
        prop_assert!(!narrow.is_empty());
    }

    #[test]
    fn primitives_partition_the_observed_gaussians(
        n in 1usize..40,
        frames in prop::collection::vec(prop::collection::vec(prop::option::of(0u8..4), 40), 1..8),
    ) {
        let mut state = MapState::new(
            (0..n).map(|i| (i as u64, Vec3::new(i as f64, 0.0, 0.0))),
            TaskList::new(["a", "b"]).unwrap(),
            &PipelineConfig::default(),
        ).unwrap();
        let mut seen = BTreeSet::new();
        for labels in &frames {
            let sets: Vec<FrameSet> = (0..4u8)
                .map(|m| FrameSet {
                    mask_id: m as u64,
                    gaussian_ids: (0..n).filter(|&g| labels[g] == Some(m)).map(|g| g as u64).collect(),
                    outcome: UpdateOutcome::Accepted,
                })
                .collect();
            seen.extend(sets.iter().flat_map(|s| s.gaussian_ids.iter().copied()));
            assign_primitives(&mut state, &sets).unwrap();
            prop_assert!(state.check_partition().is_ok());
        }
        let assigned: BTreeSet<u64> = state.gaussians().iter().filter(|g| g.primitive_id.is_some()).map(|g| g.id).collect();
        prop_assert_eq!(&assigned, &seen);
        let total: usize = state.primitives().map(|p| p.gaussian_ids.len()).sum();
        prop_assert_eq!(total, seen.len());
        prop_assert!(state.primitives().all(|p| !p.gaussian_ids.is_empty()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn frames_round_trip_through_json(seed in 0u64..1000, precomputed in any::<bool>()) {
        let config = SynthConfig {
            n_objects: 3,
            gaussians_per_object: 60,
            n_frames: 2,
            precomputed_associations: precomputed,
            seed,
            ..SynthConfig::default()
        };
        let data = generate(&config).unwrap();
        for frame in &data.frames {
            let text = serde_json::to_string(&FrameRecord::from_frame(frame)).unwrap();
            let back: FrameRecord = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back.into_frame(None).unwrap(), frame);
        }
    }

    #[test]
    fn output_map_round_trips(probs in prop::collection::vec(0.0..1.0f64, 1..6), c in point(), h in point()) {
        let mut objects = clusters(&probs);
        for o in &mut objects {
            o.gaussian_ids = vec![o.id * 3, o.id * 3 + 1];
            o.obb = Some(OrientedBox::axis_aligned(c, h.abs()));
        }
        let map = OutputMap::from_objects(&objects).unwrap();
        let text = serde_json::to_string_pretty(&map).unwrap();
        let back: OutputMap = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &map);
        let model = LikelihoodModel { mu_neg: probs[0] * 0.3, ..LikelihoodModel::default() };
        let back: LikelihoodModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        prop_assert_eq!(back, model);
    }
}
