use proptest::prelude::*;
use vtt_core::geometry::{convex_hull, is_convex, point_in_polygon, polygon_area, polygon_iou, Homography, Point2};

fn point() -> impl Strategy<Value = (f64, f64)> {
    (-50.0..50.0f64, -50.0..50.0f64)
}

fn well_conditioned() -> impl Strategy<Value = [f64; 9]> {
    prop::array::uniform9(-2.0..2.0f64).prop_filter("near singular", |m| {
        let h = Homography::from_row_major(m).unwrap();
        h.determinant().abs() > 0.1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn inverse_undoes_apply(m in well_conditioned(), (x, y) in point()) {
        let h = Homography::from_row_major(&m).unwrap();
        let w = m[6] * x + m[7] * y + m[8];
        prop_assume!(w.abs() > 0.05);
        let p = Point2::new(x, y);
        let q = h.apply(&p).unwrap();
        let back = h.inverse().unwrap().apply(&q).unwrap();
        prop_assert!(back.distance(&p) < 1e-8 * (1.0 + x.abs().max(y.abs())));
    }

    #[test]
    fn compose_matches_sequential_application(a in well_conditioned(), b in well_conditioned(), (x, y) in point()) {
        let (ha, hb) = (Homography::from_row_major(&a).unwrap(), Homography::from_row_major(&b).unwrap());
        let p = Point2::new(x, y);
        let (Ok(mid), Ok(both)) = (ha.apply(&p), ha.compose(&hb).apply(&p)) else { return Ok(()) };
        let Ok(seq) = hb.apply(&mid) else { return Ok(()) };
        prop_assume!(seq.x.abs().max(seq.y.abs()) < 1e6);
        prop_assert!(seq.distance(&both) < 1e-6 * (1.0 + seq.x.abs().max(seq.y.abs())));
    }

    #[test]
    fn hull_is_convex_and_contains_its_inputs(pts in prop::collection::vec(point(), 3..20)) {
        let pts: Vec<_> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        let hull = convex_hull(&pts);
        prop_assume!(hull.len() >= 3 && polygon_area(&hull) > 1e-6);
        prop_assert!(is_convex(&hull));
        let centroid = Point2::new(
            hull.iter().map(|p| p.x).sum::<f64>() / hull.len() as f64,
            hull.iter().map(|p| p.y).sum::<f64>() / hull.len() as f64,
        );
        for p in &pts {
            let nudged = p.lerp(&centroid, 1e-6);
            prop_assert!(point_in_polygon(&nudged, &hull) || hull.contains(p));
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded((ax, ay) in point(), (bx, by) in point(), ra in 1.0..30.0f64, rb in 1.0..30.0f64) {
        let square = |x: f64, y: f64, r: f64| vec![
            Point2::new(x - r, y - r), Point2::new(x + r, y - r), Point2::new(x + r, y + r), Point2::new(x - r, y + r),
        ];
        let (a, b) = (square(ax, ay, ra), square(bx, by, rb));
        let ab = polygon_iou(&a, &b);
        prop_assert!((ab - polygon_iou(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((polygon_iou(&a, &a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_precision_homography_round_trips() {
    let h = Homography::<f32>::new([[1.2, 0.1, 3.0], [-0.2, 0.9, -1.0], [0.001, 0.002, 1.0]]).unwrap();
    let p = Point2::new(10.0f32, -4.0);
    let back = h.inverse().unwrap().apply(&h.apply(&p).unwrap()).unwrap();
    assert!(back.distance(&p) < 1e-4);
}
