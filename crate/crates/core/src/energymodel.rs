//! Battery range and goal feasibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many waypoints the route length falls back to a heuristic.
pub const EXACT_ROUTE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1])
    }
}

/// Minimum-cruise power budget and battery of one airframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    /// Motor power, W.
    pub motor_w: f64,
    /// Payload (camera) power, W.
    pub payload_w: f64,
    /// Onboard electronics power, W.
    pub electronics_w: f64,
    /// Battery capacity, ampere-seconds.
    pub capacity_as: f64,
    /// Nominal battery voltage, V.
    pub voltage_v: f64,
    /// Average ground speed, m/s.
    pub speed_mps: f64,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("motor_w", self.motor_w),
            ("payload_w", self.payload_w),
            ("electronics_w", self.electronics_w),
            ("capacity_as", self.capacity_as),
            ("voltage_v", self.voltage_v),
            ("speed_mps", self.speed_mps),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("power profile {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn total_power_w(&self) -> f64 {
        self.motor_w + self.payload_w + self.electronics_w
    }

    /// Flight duration on a full battery, seconds.
    pub fn max_flight_duration_s(&self) -> f64 {
        self.capacity_as * self.voltage_v / self.total_power_w()
    }
}

/// Range in meters at state of charge `soc`.
pub fn flight_range(soc: f64, profile: &PowerProfile) -> Result<f64> {
    profile.validate()?;
    if !(soc.is_finite() && (0.0..=1.0).contains(&soc)) {
        return Err(Error::InvalidInput(format!("state of charge {soc} outside [0, 1]")));
    }
    Ok(soc * profile.max_flight_duration_s() * profile.speed_mps)
}

/// Waypoints that must all be visited to complete one goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub goal: usize,
    pub waypoints: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteLength {
    pub meters: f64,
    /// False when the heuristic fallback was used.
    pub exact: bool,
}

/// Shortest open path from `start` through every waypoint.
pub fn assignment_distance(assignment: &Assignment, start: Point) -> Result<RouteLength> {
    let pts = &assignment.waypoints;
    if pts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "assignment for goal {} has no waypoints",
            assignment.goal
        )));
    }
    if pts.iter().any(|p| !(p.x.is_finite() && p.y.is_finite()))
        || !(start.x.is_finite() && start.y.is_finite())
    {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    if pts.len() <= EXACT_ROUTE_LIMIT {
        Ok(RouteLength {
            meters: held_karp_open_path(start, pts),
            exact: true,
        })
    } else {
        Ok(RouteLength {
            meters: two_opt_open_path(start, pts),
            exact: false,
        })
    }
}

// Subset DP over visited sets; best[mask][last] is the shortest path from
// start that visits exactly `mask` and ends at `last`.
fn held_karp_open_path(start: Point, pts: &[Point]) -> f64 {
    let m = pts.len();
    let full = 1usize << m;
    let mut best = vec![f64::INFINITY; full * m];
    for (i, p) in pts.iter().enumerate() {
        best[(1 << i) * m + i] = start.distance(*p);
    }
    for mask in 1..full {
        for last in 0..m {
            let cur = best[mask * m + last];
            if mask & (1 << last) == 0 || !cur.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let nm = mask | (1 << next);
                let cand = cur + pts[last].distance(pts[next]);
                let slot = &mut best[nm * m + next];
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
    }
    best[(full - 1) * m..].iter().cloned().fold(f64::INFINITY, f64::min)
}

fn path_length(start: Point, pts: &[Point], order: &[usize]) -> f64 {
    let mut len = 0.0;
    let mut cur = start;
    for &i in order {
        len += cur.distance(pts[i]);
        cur = pts[i];
    }
    len
}

fn two_opt_open_path(start: Point, pts: &[Point]) -> f64 {
    let m = pts.len();
    let mut order = Vec::with_capacity(m);
    let mut used = vec![false; m];
    let mut cur = start;
    for _ in 0..m {
        let (next, _) = (0..m)
            .filter(|&i| !used[i])
            .map(|i| (i, cur.distance(pts[i])))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        used[next] = true;
        order.push(next);
        cur = pts[next];
    }
    let mut best = path_length(start, pts, &order);
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..m - 1 {
            for j in i + 1..m {
                order[i..=j].reverse();
                let len = path_length(start, pts, &order);
                if len + 1e-12 < best {
                    best = len;
                    improved = true;
                } else {
                    order[i..=j].reverse();
                }
            }
        }
    }
    best
}

/// One flag per assignment: reachable iff range ≥ route length (inclusive).
pub fn feasibility_flags(
    soc: f64,
    profile: &PowerProfile,
    assignments: &[Assignment],
    start: Point,
) -> Result<Vec<bool>> {
    let range = flight_range(soc, profile)?;
    assignments
        .iter()
        .map(|a| Ok(range >= assignment_distance(a, start)?.meters))
        .collect()
}
