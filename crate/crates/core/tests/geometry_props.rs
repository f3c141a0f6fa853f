use covsim_core::geometry::{bounded_voronoi, polygon_area, Point, Region};
use proptest::prelude::*;

fn region() -> impl Strategy<Value = Region> {
    (
        -100.0..100.0f64,
        -100.0..100.0f64,
        1.0..300.0f64,
        1.0..300.0f64,
    )
        .prop_map(|(x, y, w, h)| Region::new(x, x + w, y, y + h).unwrap())
}

/// Between 2 and 12 well-separated sites strictly inside the region.
fn scene() -> impl Strategy<Value = (Region, Vec<Point>)> {
    region().prop_flat_map(|r| {
        prop::collection::vec((0.001..0.999f64, 0.001..0.999f64), 2..12).prop_filter_map(
            "sites too close",
            move |uv| {
                let pts: Vec<Point> = uv
                    .iter()
                    .map(|(u, v)| Point::new(r.x_min + u * r.width(), r.y_min + v * r.height()))
                    .collect();
                let gap = 1e-3 * r.width().min(r.height());
                let separated = pts
                    .iter()
                    .enumerate()
                    .all(|(i, p)| pts[..i].iter().all(|q| q.distance(*p) > gap));
                separated.then_some((r, pts))
            },
        )
    })
}

proptest! {
    #[test]
    fn cells_partition_the_region((r, pts) in scene()) {
        let tess = bounded_voronoi(&pts, &r).unwrap();
        prop_assert_eq!(tess.cells.len(), pts.len());
        let total: f64 = tess.cells.iter().map(|c| polygon_area(c).unwrap()).sum();
        prop_assert!((total - r.area()).abs() <= 1e-9 * r.area());
    }

    #[test]
    fn cells_are_convex_and_contain_their_site((r, pts) in scene()) {
        let tess = bounded_voronoi(&pts, &r).unwrap();
        let tol = 1e-9 * r.width().max(r.height());
        for (cell, p) in tess.cells.iter().zip(&pts) {
            prop_assert!(cell.min_turn() >= -1e-9);
            prop_assert!(cell.contains_convex(*p, tol));
            prop_assert!(cell.vertices().iter().all(|v| r.contains_with_tol(*v, tol)));
        }
    }

    #[test]
    fn interior_points_are_nearest_their_site(
        (r, pts) in scene(),
        probes in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 20),
    ) {
        let tess = bounded_voronoi(&pts, &r).unwrap();
        let tol = 1e-9 * r.width().max(r.height());
        for (u, v) in probes {
            let q = Point::new(r.x_min + u * r.width(), r.y_min + v * r.height());
            let best = pts.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min);
            for (cell, p) in tess.cells.iter().zip(&pts) {
                if cell.contains_convex(q, -tol) {
                    prop_assert!(p.distance(q) <= best + 1e-7 * r.width().max(r.height()));
                }
            }
        }
    }

    #[test]
    fn tessellation_follows_the_sites_under_permutation((r, pts) in scene()) {
        let tess = bounded_voronoi(&pts, &r).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let rev_tess = bounded_voronoi(&rev, &r).unwrap();
        for (i, cell) in tess.cells.iter().enumerate() {
            let other = &rev_tess.cells[pts.len() - 1 - i];
            let (a, b) = (polygon_area(cell).unwrap(), polygon_area(other).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * r.area());
        }
    }
}
