use proptest::prelude::*;
use searchmesh_core::config::MissionConfig;
use searchmesh_core::energymodel::{assignment_distance, feasibility_flags, flight_range, Assignment, Point};

/// Shortest open path by trying every visiting order.
fn brute_force(start: Point, pts: &[Point]) -> f64 {
    fn rec(at: Point, left: &mut Vec<Point>, acc: f64, best: &mut f64) {
        if left.is_empty() {
            *best = best.min(acc);
            return;
        }
        for i in 0..left.len() {
            let p = left.remove(i);
            rec(p, left, acc + at.distance(p), best);
            left.insert(i, p);
        }
    }
    let mut best = f64::INFINITY;
    rec(start, &mut pts.to_vec(), 0.0, &mut best);
    best
}

fn point() -> impl Strategy<Value = Point> {
    (-5000.0..5000.0f64, -5000.0..5000.0f64).prop_map(|(x, y)| Point { x, y })
}

#[test]
fn case_study_full_charge_range() {
    let cfg = MissionConfig::case_study();
    let r = flight_range(1.0, &cfg.power).unwrap();
    assert!((r - 9990.0).abs() < 1e-9, "{r}");
    let expected = 18000.0 * 22.2 / 200.0 * 5.0;
    assert!((r - expected).abs() < 1e-9);
}

#[test]
fn case_study_waypoint_routes() {
    let cfg = MissionConfig::case_study();
    for a in cfg.geometry.assignments() {
        for region in 1..=cfg.q() {
            let start = cfg.geometry.centroid(region);
            let got = assignment_distance(&a, start).unwrap();
            assert!(got.exact);
            assert!((got.meters - brute_force(start, &a.waypoints)).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_route_matches_permutations(start in point(), pts in prop::collection::vec(point(), 1..=7)) {
        let a = Assignment { goal: 1, waypoints: pts.clone() };
        let got = assignment_distance(&a, start).unwrap();
        prop_assert!(got.exact);
        let want = brute_force(start, &pts);
        prop_assert!((got.meters - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", got.meters, want);
    }

    #[test]
    fn heuristic_route_is_never_shorter_than_optimum(start in point(), pts in prop::collection::vec(point(), 13..=16)) {
        let a = Assignment { goal: 1, waypoints: pts.clone() };
        let got = assignment_distance(&a, start).unwrap();
        prop_assert!(!got.exact);
        // A lower bound: the farthest waypoint must be reached.
        let far = pts.iter().map(|p| start.distance(*p)).fold(0.0, f64::max);
        prop_assert!(got.meters + 1e-9 >= far);
    }

    #[test]
    fn reach_is_monotone_in_charge(lo in 0.0..=1.0f64, hi in 0.0..=1.0f64, region in 1usize..=8) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let cfg = MissionConfig::case_study();
        let start = cfg.geometry.centroid(region);
        let asg = cfg.geometry.assignments();
        let a = feasibility_flags(lo, &cfg.power, &asg, start).unwrap();
        let b = feasibility_flags(hi, &cfg.power, &asg, start).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(!x || *y);
        }
        prop_assert!(flight_range(lo, &cfg.power).unwrap() <= flight_range(hi, &cfg.power).unwrap());
    }
}
