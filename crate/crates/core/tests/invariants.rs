use occmem::classes::NUM_CLASSES;
use occmem::gaussian::{activate, init_memory_uniform, Aabb};
use occmem::geometry::{camera_to_world, world_to_camera, Z_FAR, Z_NEAR};
use occmem::grid::{GridGeometry, VoxelGrid, VoxelMask, VOXEL_SIZE};
use occmem::metrics::score;
use occmem::refine::{scale_delta, GaussianDelta};
use occmem::{snapshot, GaussianConfig, Intrinsics, Pose, Quat, Vec3};
use proptest::prelude::*;

fn quat() -> impl Strategy<Value = Quat> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -3.1..3.1f64).prop_map(|(x, y, z, a)| {
        let axis = Vec3::new(x, y, z);
        let axis = if axis.norm() < 1e-3 { Vec3::x() } else { axis };
        Quat::from_axis_angle(&axis, a)
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    (quat(), -3.0..3.0f64, -3.0..3.0f64, 0.0..2.0f64)
        .prop_map(|(q, x, y, z)| Pose::from_quat(&q, Vec3::new(x, y, z)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn activated_values_stay_in_bounds(
        s in prop::array::uniform3(-1e3..1e3f64),
        o in -1e3..1e3f64,
        l in prop::array::uniform12(-50.0..50.0f64),
    ) {
        let cfg = GaussianConfig::default();
        let mut g = cfg.prior_gaussian(Vec3::zeros());
        g.scale_raw = Vec3::from(s);
        g.opacity_raw = o;
        g.logits = l;
        let a = activate(&g, &cfg);
        prop_assert!(a.scale.iter().all(|v| (cfg.s_min..=cfg.s_max).contains(v)));
        prop_assert!((0.0..=1.0).contains(&a.opacity));
        prop_assert!((a.class_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn world_camera_round_trip(p in pose(), v in prop::array::uniform3(-10.0..10.0f64)) {
        let v = Vec3::from(v);
        let back = camera_to_world(&world_to_camera(&v, &p), &p);
        prop_assert!((back - v).amax() < 1e-9);
    }

    #[test]
    fn untouched_write_back_only_sets_tags(p in pose()) {
        let cfg = GaussianConfig::default();
        let mut mem = init_memory_uniform(&Aabb::new([-2.0, -2.0, 0.0], [2.0, 2.0, 1.6]), &cfg).unwrap();
        let before = mem.clone();
        let sel = mem.select_frustum(&p, &Intrinsics::default(), Z_NEAR, Z_FAR);
        mem.write_back(&sel.indices, &sel.view, &p).unwrap();
        prop_assert_eq!(mem.tagged_count(), sel.indices.len());
        for (a, b) in mem.gaussians.iter().zip(&before.gaussians) {
            let mut a = *a;
            a.tag = b.tag;
            prop_assert!(a.bit_eq(b));
        }
        // tags never go back to 0
        let sel2 = mem.select_frustum(&Pose::identity(), &Intrinsics::default(), Z_NEAR, Z_FAR);
        mem.write_back(&sel2.indices, &sel2.view, &Pose::identity()).unwrap();
        for &i in &sel.indices {
            prop_assert!(mem.gaussians[i].tag);
        }
    }

    #[test]
    fn damping_is_linear_in_additive_fields(theta in 0.0..=1.0f64, m in prop::array::uniform3(-1.0..1.0f64)) {
        let d = GaussianDelta { d_mean: Vec3::from(m), d_opacity_raw: 2.0, ..GaussianDelta::ZERO };
        let s = scale_delta(&d, theta);
        prop_assert_eq!(s.d_mean, Vec3::from(m) * (1.0 - theta));
        prop_assert_eq!(s.d_opacity_raw, 2.0 * (1.0 - theta));
    }

    #[test]
    fn gmem_round_trips_f32_state(seedvals in prop::collection::vec(-4.0f32..4.0, 23)) {
        let cfg = GaussianConfig::default();
        let mut mem = init_memory_uniform(&Aabb::new([0.0; 3], [0.64, 0.48, 0.32]), &cfg).unwrap();
        for (i, g) in mem.gaussians.iter_mut().enumerate() {
            g.opacity_raw = seedvals[i % 23] as f64;
            g.logits[i % NUM_CLASSES] = seedvals[(i + 5) % 23] as f64;
            g.tag = i % 3 == 0;
        }
        let bytes = snapshot::encode(&mem);
        let back = snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(snapshot::encode(&back), bytes);
    }

    #[test]
    fn scores_lie_in_unit_interval(
        labels in prop::collection::vec((0u8..12, 0u8..12, any::<bool>()), 60),
    ) {
        let g = GridGeometry::new([0.0; 3], [5, 4, 3], VOXEL_SIZE).unwrap();
        let pred = VoxelGrid::from_labels(g, labels.iter().map(|t| t.0).collect()).unwrap();
        let gt = VoxelGrid::from_labels(g, labels.iter().map(|t| t.1).collect()).unwrap();
        let mut mask = VoxelMask::new(g);
        mask.bits = labels.iter().map(|t| t.2).collect();
        let r = score(&pred, &gt, &mask).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.iou));
        prop_assert!((0.0..=1.0).contains(&r.miou));
        let same = score(&gt, &gt, &mask).unwrap();
        prop_assert_eq!(same.miou, 1.0);
    }
}
