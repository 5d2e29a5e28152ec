mod common;

use nlos_loc::encoders::{GeoTransform, Heatmap};
use nlos_loc::eval::{accuracy_at, errors, rmse, spearman};
use nlos_loc::geometry::{bearing, trace_paths, Point, Rect, Scene, SPEED_OF_LIGHT};
use nlos_loc::postprocess::{argmax, select_num_modes, top1, topk, uncertainty, TopKMethod, TopKParams};
use proptest::prelude::*;

fn points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y)| Point::new(x, y)), n)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pixel_centres_round_trip(w in 1.0..500.0f64, h in 1.0..500.0f64, size in 1usize..300, fr in 0.0..1.0f64, fc in 0.0..1.0f64) {
        let t = GeoTransform::new(w, h, size).unwrap();
        let r = ((fr * size as f64) as usize).min(size - 1);
        let c = ((fc * size as f64) as usize).min(size - 1);
        let p = t.pixel_to_world(r as f64, c as f64);
        prop_assert_eq!(t.world_to_pixel(p).unwrap(), (r, c));
    }

    #[test]
    fn single_wall_reflection_is_specular(
        bx in 5.0..95.0f64, by in 30.0..95.0f64,
        ux in 5.0..95.0f64, uy in 30.0..95.0f64,
        x0 in 0.0..40.0f64, wlen in 20.0..60.0f64,
    ) {
        prop_assume!(Point::new(bx, by).distance(Point::new(ux, uy)) > 1.0);
        let mut scene = Scene::empty(100.0, 100.0);
        scene.obstacles.push(Rect::new(x0, 5.0, wlen, 15.0));
        let (w, v) = (Point::new(bx, by), Point::new(ux, uy));
        let link = trace_paths(&scene, w, v, 1).unwrap().unwrap();
        prop_assert!(link.los);
        for p in &link.paths {
            prop_assert!((p.tau * SPEED_OF_LIGHT - p.length()).abs() <= 1e-9 * p.length());
            if p.bounces == 1 {
                let (a, m, b) = (p.vertices[0], p.vertices[1], p.vertices[2]);
                // the only upward-facing wall is the top one at y = 20
                prop_assert!((m.y - 20.0).abs() < 1e-9);
                let incidence = angle_diff(bearing(m, a), std::f64::consts::FRAC_PI_2);
                let reflection = angle_diff(bearing(m, b), std::f64::consts::FRAC_PI_2);
                prop_assert!((incidence - reflection).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn uncertainty_ignores_power_of_two_scaling(vals in prop::collection::vec(0.0..1.0f32, 64), k in -8i32..8) {
        let h = Heatmap::from_vec(8, vals.clone()).unwrap();
        prop_assume!(h.max() > 0.0);
        let s = 2f32.powi(k);
        let scaled = Heatmap::from_vec(8, vals.iter().map(|v| v * s).collect()).unwrap();
        prop_assert_eq!(uncertainty(&h).unwrap(), uncertainty(&scaled).unwrap());
        prop_assert_eq!(argmax(&h).unwrap(), argmax(&scaled).unwrap());
    }

    #[test]
    fn accuracy_is_monotone_in_threshold(p in points(20), t in points(20), x1 in 0.0..100.0f64, dx in 0.0..100.0f64) {
        let a = accuracy_at(&p, &t, x1).unwrap();
        let b = accuracy_at(&p, &t, x1 + dx).unwrap();
        prop_assert!(a <= b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn rmse_bounds_mean_error(p in points(15), t in points(15)) {
        let e = errors(&p, &t).unwrap();
        let mae = e.iter().sum::<f64>() / e.len() as f64;
        let max = e.iter().cloned().fold(0.0, f64::max);
        let r = rmse(&p, &t).unwrap();
        prop_assert!(r >= mae - 1e-9 && r <= max + 1e-9);
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(a in prop::collection::vec(-10.0..10.0f64, 3..30), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| (x * 1.7 + (seed.wrapping_mul(i as u64 + 1) % 13) as f64).sin()).collect();
        let s = spearman(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        prop_assert!((s - spearman(&b, &a).unwrap()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mode_count_is_monotone_in_separation(
        blobs in prop::collection::vec((8.0..56.0f64, 8.0..56.0f64, 0.3..1.0f64), 1..4),
        d1 in 1.0..30.0f64, dd in 0.0..30.0f64,
    ) {
        let h = common::render(64, &blobs, 2.5);
        let near = select_num_modes(&h, d1).unwrap();
        let far = select_num_modes(&h, d1 + dd).unwrap();
        prop_assert!(far <= near, "d={d1}: {near}, d={}: {far}", d1 + dd);
        prop_assert!((1..=5).contains(&near));
    }

    #[test]
    fn argmax_candidates_start_at_top1(blobs in prop::collection::vec((4.0..28.0f64, 4.0..28.0f64, 0.2..1.0f64), 1..4)) {
        let h = common::render(32, &blobs, 2.0);
        let t = GeoTransform::new(64.0, 64.0, 32).unwrap();
        let r = topk(&h, &t, TopKMethod::Argmax, TopKParams::for_image_size(32)).unwrap();
        prop_assert_eq!(r.candidates[0], top1(&h, &t).unwrap());
        prop_assert!(r.candidates.len() <= 5);
        for (i, a) in r.candidates.iter().enumerate() {
            for b in &r.candidates[i + 1..] {
                prop_assert!(a.distance(*b) > t.scale * 1.0 - 1e-9);
            }
        }
    }
}
