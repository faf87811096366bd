use asta::allocation::{make_renewal_sampled, Allocation};
use asta::dynamics::{derivative, integrate, wrap_angle, AgentState, ControlInput, DynamicsModel};
use asta::geometry::{gjk_proximity, polygons_intersect, separating_hyperplane, transform_footprint, Polygon, Vec2};
use proptest::prelude::*;

fn polygon_strategy() -> impl Strategy<Value = Polygon> {
    (3usize..=8, 0.1f64..1.0, 0.1f64..1.0, 0.0f64..std::f64::consts::TAU, -2.0f64..2.0, -2.0f64..2.0)
        .prop_flat_map(|(n, a, b, rot, cx, cy)| {
            prop::collection::vec(0.0f64..std::f64::consts::TAU, n).prop_filter_map("degenerate polygon", move |mut t| {
                t.sort_by(f64::total_cmp);
                let v = t.iter().map(|&s| Vec2::new(a * s.cos(), b * s.sin()).rotate(rot) + Vec2::new(cx, cy)).collect();
                Polygon::new(v).ok()
            })
        })
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let s = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    p.dist(a + ab.scale(s))
}

fn brute_distance(p: &Polygon, q: &Polygon) -> f64 {
    let edges = |poly: &Polygon| -> Vec<(Vec2, Vec2)> {
        let v = poly.vertices();
        (0..v.len()).map(|i| (v[i], v[(i + 1) % v.len()])).collect()
    };
    let mut d = f64::INFINITY;
    for &v in p.vertices() {
        for &(a, b) in &edges(q) {
            d = d.min(point_segment_distance(v, a, b));
        }
    }
    for &v in q.vertices() {
        for &(a, b) in &edges(p) {
            d = d.min(point_segment_distance(v, a, b));
        }
    }
    d
}

fn euler(model: &DynamicsModel, x: &AgentState, u: &ControlInput, h: f64, substeps: usize) -> AgentState {
    let dt = h / substeps as f64;
    let mut s = *x;
    for _ in 0..substeps {
        let d = derivative(model, &s, u);
        for i in 0..4 {
            s.0[i] += dt * d[i];
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gjk_distance_matches_brute_force(p in polygon_strategy(), q in polygon_strategy()) {
        let prox = gjk_proximity(&p, &q);
        if polygons_intersect(&p, &q) {
            prop_assert!(prox.distance <= 1e-9);
        } else {
            prop_assert!((prox.distance - brute_distance(&p, &q)).abs() < 1e-7);
        }
    }

    #[test]
    fn separating_plane_holds_both_sides(p in polygon_strategy(), q in polygon_strategy()) {
        match separating_hyperplane(&p, &q) {
            Ok(h) => {
                prop_assert!(p.vertices().iter().all(|&v| h.signed_distance(v) > 0.0));
                prop_assert!(q.vertices().iter().all(|&v| h.signed_distance(v) < 0.0));
                prop_assert!((h.normal.norm() - 1.0).abs() < 1e-12);
            }
            Err(_) => prop_assert!(brute_distance(&p, &q) < 1e-5 || polygons_intersect(&p, &q)),
        }
    }

    #[test]
    fn transform_preserves_shape(p in polygon_strategy(), x in -3.0f64..3.0, y in -3.0f64..3.0, th in -4.0f64..4.0) {
        let moved = transform_footprint(&p, Vec2::new(x, y), th);
        prop_assert_eq!(moved.len(), p.len());
        let v = p.vertices();
        let w = moved.vertices();
        for i in 0..v.len() {
            let j = (i + 1) % v.len();
            prop_assert!((v[i].dist(v[j]) - w[i].dist(w[j])).abs() < 1e-9);
        }
    }

    #[test]
    fn rk4_agrees_with_fine_euler(
        heading in -3.0f64..3.0,
        speed in 0.0f64..1.0,
        accel in -1.5f64..1.5,
        steer in -0.6f64..0.6,
        bicycle in any::<bool>(),
    ) {
        let model = if bicycle {
            DynamicsModel::bicycle(1.0, 1.5, 0.6, 0.3).unwrap()
        } else {
            DynamicsModel::unicycle(1.0, 1.5, 2.0).unwrap()
        };
        let x = AgentState([0.3, -0.2, heading, speed]);
        let u = ControlInput([accel, steer]);
        // Keep the speed inside its bounds over the step so both integrate
        // the same smooth field.
        prop_assume!((speed + accel * 0.15).clamp(0.0, 1.0) == speed + accel * 0.15);
        let a = integrate(&model, &x, &u, 0.15);
        let b = euler(&model, &x, &u, 0.15, 20_000);
        for i in [0, 1, 3] {
            prop_assert!((a.0[i] - b.0[i]).abs() < 1e-4, "component {i}: {} vs {}", a.0[i], b.0[i]);
        }
        prop_assert!(wrap_angle(a.0[2] - b.0[2]).abs() < 1e-4);
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!(((a - w) / std::f64::consts::TAU - ((a - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn renewal_sides_mirror_each_other(
        p in polygon_strategy(),
        dx in 2.5f64..4.0,
        t_start in 0.0f64..1.0,
        span in 0.0f64..1.0,
    ) {
        let q = transform_footprint(&p, Vec2::new(dx, 0.0), 0.0);
        let renewal = make_renewal_sampled(|_| p.clone(), |_| q.clone(), t_start, t_start + span, 0.15, true).unwrap();
        let mut mine = Allocation::empty();
        mine.update(renewal.clone()).unwrap();
        let mut theirs = Allocation::empty();
        theirs.update(renewal.mirror()).unwrap();
        for k in 0..10 {
            let t = t_start + k as f64 * 0.13;
            let h = mine.query(t).unwrap();
            let g = theirs.query(t).unwrap();
            prop_assert_eq!(h.normal, -g.normal);
            prop_assert_eq!(h.offset, -g.offset);
            prop_assert!(h.polygon_clearance(&p) > 0.0 && g.polygon_clearance(&q) > 0.0);
        }
    }
}
