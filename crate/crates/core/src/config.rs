//! Mission configuration. Sections mirror the case-study parameter table:
//! `[problem]`, `[uav]`, `[fleet]`, `[probabilities]`, `[geometry]`,
//! `[power]` and `[service]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energymodel::{Assignment, Point, PowerProfile};
use crate::error::{Error, Result};
use crate::faultmodel::{FaultState, Severity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub problem: ProblemConfig,
    pub uav: UavCostConfig,
    pub fleet: FleetCostConfig,
    pub probabilities: ProbabilityConfig,
    pub geometry: GeometryConfig,
    pub power: PowerProfile,
    #[serde(default)]
    pub service: ServiceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Number of goals, k.
    pub goals: usize,
    /// Number of search regions, q.
    pub regions: usize,
    /// Number of UAVs, z.
    pub uavs: usize,
    pub gamma: f64,
    /// Value-iteration stopping tolerance.
    pub eta: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

fn default_max_sweeps() -> usize {
    crate::mdp::DEFAULT_MAX_SWEEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultCost {
    /// Per reachable goal when the camera has failed (f > 9).
    pub camera_failed: f64,
    /// Per reachable goal for 5 ≤ f ≤ 9.
    pub severe: f64,
    /// Per reachable goal otherwise.
    pub other: f64,
}

/// Pursuing `pursue` clears the reach flags of `clears`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachLoss {
    pub pursue: usize,
    pub clears: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavCostConfig {
    /// Per-goal weight on reachable, uncommitted goals.
    pub eta: Vec<f64>,
    /// Per-goal weight on unreachable goals.
    pub delta: Vec<f64>,
    /// `search_cost[j][l]`: cost of searching for goal j+1 from region l+1.
    pub search_cost: Vec<Vec<f64>>,
    pub fault_cost: FaultCost,
    pub serv_cost: f64,
    pub charge_cost: f64,
    #[serde(default)]
    pub reach_loss: Vec<ReachLoss>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignPenalty {
    pub healthy: f64,
    pub mild: f64,
    pub severe: f64,
}

impl AssignPenalty {
    pub fn for_fault(&self, f: FaultState) -> f64 {
        match f.severity() {
            Severity::Healthy => self.healthy,
            Severity::Mild => self.mild,
            Severity::Severe => self.severe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetCostConfig {
    /// Per-goal weight of the outstanding-goal term.
    pub zeta: Vec<f64>,
    /// Penalty for assigning a UAV, by fault severity.
    pub h1: AssignPenalty,
    /// Penalty by preference rank of the assigned goal: first, second, other.
    pub h2: [f64; 3],
    /// Preference penalty charged to an unassigned UAV.
    pub h2_unassigned: f64,
    /// Preference penalty assumed for assigned UAVs when solving offline.
    pub h2_prior: f64,
    /// Penalty per assigned but unavailable UAV.
    pub h3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilityConfig {
    /// Pr(f' ∈ {2,3,4} | f = 1).
    pub healthy_to_mild: f64,
    /// Pr(f' > 4 | f ∈ {2,3,4}).
    pub mild_worsen: f64,
    /// Share of worsening mass that lands in f' > 9.
    pub mild_worsen_to_camera: f64,
    /// Pr(f' > 9 | 5 ≤ f ≤ 9).
    #[serde(default)]
    pub severe_to_camera: f64,
    pub achieve_healthy: f64,
    /// For 2 ≤ f ≤ 9.
    pub achieve_faulty: f64,
    #[serde(default)]
    pub achieve_camera_failed: f64,
    /// Pr(g' ≠ 0 | g = 0), split evenly between the two priority levels.
    pub recurrence: f64,
    /// Pr of flipping between priorities 1 and 2 while not achieved.
    #[serde(default)]
    pub priority_drift: f64,
}

impl ProbabilityConfig {
    /// Fault-state kernel applied at every epoch outside of service, as
    /// `(ordinal, probability)` pairs.
    pub fn fault_step(&self, f: FaultState) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(10);
        let spread = |out: &mut Vec<(usize, f64)>, range: std::ops::RangeInclusive<usize>, mass: f64| {
            if mass > 0.0 {
                let n = range.clone().count() as f64;
                out.extend(range.map(|i| (i - 1, mass / n)));
            }
        };
        match f.index() {
            1 => {
                out.push((0, 1.0 - self.healthy_to_mild));
                spread(&mut out, 2..=4, self.healthy_to_mild);
            }
            2..=4 => {
                out.push((f.ordinal(), 1.0 - self.mild_worsen));
                spread(&mut out, 10..=18, self.mild_worsen * self.mild_worsen_to_camera);
                spread(&mut out, 5..=9, self.mild_worsen * (1.0 - self.mild_worsen_to_camera));
            }
            5..=9 => {
                out.push((f.ordinal(), 1.0 - self.severe_to_camera));
                spread(&mut out, 10..=18, self.severe_to_camera);
            }
            _ => out.push((f.ordinal(), 1.0)),
        }
        out.retain(|e| e.1 > 0.0);
        out
    }

    pub fn achieve(&self, f: FaultState) -> f64 {
        match f.index() {
            1 => self.achieve_healthy,
            2..=9 => self.achieve_faulty,
            _ => self.achieve_camera_failed,
        }
    }

    /// Priority kernel of one goal as `(level, probability)`, given the
    /// probability that it is achieved this epoch.
    pub fn goal_step(&self, g: usize, achieve: f64) -> [(usize, f64); 3] {
        if g == 0 {
            let r = self.recurrence / 2.0;
            [(0, 1.0 - self.recurrence), (1, r), (2, r)]
        } else {
            let keep = 1.0 - achieve;
            [(0, achieve), (g, keep * (1.0 - self.priority_drift)), (3 - g, keep * self.priority_drift)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Regions are numbered row-major over a `columns × rows` grid.
    pub columns: usize,
    pub rows: usize,
    pub cell_m: f64,
    /// Region (1-based) in which each goal is searched.
    pub goal_regions: Vec<usize>,
    /// Explicit waypoints per goal; when absent each goal gets two points
    /// `waypoint_spread_m` either side of its region centroid.
    #[serde(default)]
    pub goal_waypoints: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub waypoint_spread_m: f64,
}

impl GeometryConfig {
    pub fn centroid(&self, region: usize) -> Point {
        let col = (region - 1) % self.columns;
        let row = (region - 1) / self.columns;
        Point::new((col as f64 + 0.5) * self.cell_m, (row as f64 + 0.5) * self.cell_m)
    }

    pub fn assignments(&self) -> Vec<Assignment> {
        match &self.goal_waypoints {
            Some(wps) => wps
                .iter()
                .enumerate()
                .map(|(j, pts)| Assignment {
                    goal: j + 1,
                    waypoints: pts.iter().map(|&p| p.into()).collect(),
                })
                .collect(),
            None => self
                .goal_regions
                .iter()
                .enumerate()
                .map(|(j, &r)| {
                    let c = self.centroid(r);
                    let waypoints = if self.waypoint_spread_m > 0.0 {
                        vec![
                            Point::new(c.x - self.waypoint_spread_m, c.y),
                            Point::new(c.x + self.waypoint_spread_m, c.y),
                        ]
                    } else {
                        vec![c]
                    };
                    Assignment { goal: j + 1, waypoints }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Epochs a UAV is away for repair; the fault clears after the first.
    pub serv_epochs: usize,
    /// Epochs a UAV is away for recharging.
    pub charge_epochs: usize,
    /// State of charge spent per meter flown in simulation.
    pub flight_drain_per_m: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            serv_epochs: 2,
            charge_epochs: 1,
            flight_drain_per_m: 0.0,
        }
    }
}

pub const CASE_STUDY_TOML: &str = include_str!("../../../configs/case_study.toml");

impl MissionConfig {
    /// The three-goal, eight-region, two-UAV case study.
    pub fn case_study() -> Self {
        Self::from_toml_str(CASE_STUDY_TOML).expect("bundled case-study config is valid")
    }

    /// The case study cut down to `k` goals, `q` regions on a single row and
    /// `z` UAVs. Goal j is searched in region `min(j, q)`.
    pub fn reduced(k: usize, q: usize, z: usize) -> Result<Self> {
        let mut c = Self::case_study();
        let pick = |v: &[f64]| (0..k).map(|j| v[j % v.len()]).collect::<Vec<_>>();
        c.problem.goals = k;
        c.problem.regions = q;
        c.problem.uavs = z;
        c.uav.eta = pick(&c.uav.eta);
        c.uav.delta = pick(&c.uav.delta);
        c.fleet.zeta = pick(&c.fleet.zeta);
        c.geometry.columns = q;
        c.geometry.rows = 1;
        c.geometry.goal_regions = (1..=k).map(|j| j.min(q)).collect();
        c.uav.search_cost = c
            .geometry
            .goal_regions
            .iter()
            .map(|&r| (1..=q).map(|l| if l == r { 0.0 } else { 1.0 }).collect())
            .collect();
        c.uav.reach_loss.clear();
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: MissionConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn k(&self) -> usize {
        self.problem.goals
    }

    pub fn q(&self) -> usize {
        self.problem.regions
    }

    pub fn z(&self) -> usize {
        self.problem.uavs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (k, q, z) = (self.k(), self.q(), self.z());
        if k == 0 || q == 0 || z == 0 {
            return bad("goals, regions and uavs must all be ≥ 1".into());
        }
        if k > 8 || z > 4 {
            return bad(format!("k = {k}, z = {z} is beyond the supported size (k ≤ 8, z ≤ 4)"));
        }
        let p = &self.problem;
        if !(p.gamma > 0.0 && p.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", p.gamma));
        }
        if !(p.eta > 0.0 && p.eta.is_finite()) {
            return bad(format!("eta {} must be positive", p.eta));
        }
        let u = &self.uav;
        for (name, v) in [("uav.eta", &u.eta), ("uav.delta", &u.delta), ("fleet.zeta", &self.fleet.zeta)] {
            if v.len() != k {
                return bad(format!("{name} has {} entries, expected k = {k}", v.len()));
            }
            check_costs(name, v)?;
        }
        if u.search_cost.len() != k || u.search_cost.iter().any(|row| row.len() != q) {
            return bad(format!("uav.search_cost must be {k} rows of {q} regions"));
        }
        for row in &u.search_cost {
            check_costs("uav.search_cost", row)?;
        }
        let fc = u.fault_cost;
        check_costs(
            "uav costs",
            &[fc.camera_failed, fc.severe, fc.other, u.serv_cost, u.charge_cost],
        )?;
        for rl in &u.reach_loss {
            if !(1..=k).contains(&rl.pursue) || rl.clears.iter().any(|g| !(1..=k).contains(g)) {
                return bad(format!("uav.reach_loss entry {rl:?} names a goal outside 1..={k}"));
            }
        }
        let f = &self.fleet;
        let h1 = f.h1;
        check_costs("fleet penalties", &[h1.healthy, h1.mild, h1.severe, f.h3, f.h2_unassigned, f.h2_prior])?;
        check_costs("fleet.h2", &f.h2)?;
        let pr = &self.probabilities;
        for (name, v) in [
            ("healthy_to_mild", pr.healthy_to_mild),
            ("mild_worsen", pr.mild_worsen),
            ("mild_worsen_to_camera", pr.mild_worsen_to_camera),
            ("severe_to_camera", pr.severe_to_camera),
            ("achieve_healthy", pr.achieve_healthy),
            ("achieve_faulty", pr.achieve_faulty),
            ("achieve_camera_failed", pr.achieve_camera_failed),
            ("recurrence", pr.recurrence),
            ("priority_drift", pr.priority_drift),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("probabilities.{name} = {v} outside [0, 1]"));
            }
        }
        let g = &self.geometry;
        if g.columns * g.rows != q {
            return bad(format!("geometry grid {}×{} does not have q = {q} regions", g.columns, g.rows));
        }
        if !(g.cell_m > 0.0 && g.cell_m.is_finite()) || !(g.waypoint_spread_m >= 0.0) {
            return bad("geometry lengths must be positive".into());
        }
        if g.goal_regions.len() != k || g.goal_regions.iter().any(|r| !(1..=q).contains(r)) {
            return bad(format!("geometry.goal_regions must list {k} regions in 1..={q}"));
        }
        if let Some(wps) = &g.goal_waypoints {
            if wps.len() != k || wps.iter().any(|w| w.is_empty() || w.len() > crate::energymodel::EXACT_ROUTE_LIMIT) {
                return bad(format!(
                    "geometry.goal_waypoints must give 1..={} points for each of {k} goals",
                    crate::energymodel::EXACT_ROUTE_LIMIT
                ));
            }
        }
        self.power.validate().map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.service;
        if s.serv_epochs == 0 || s.charge_epochs == 0 {
            return bad("service and charge must last at least one epoch".into());
        }
        if !(s.flight_drain_per_m >= 0.0 && s.flight_drain_per_m.is_finite()) {
            return bad("service.flight_drain_per_m must be ≥ 0".into());
        }
        Ok(())
    }
}

fn check_costs(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        Some(c) => Err(Error::Config(format!("{name} contains {c}; costs must be finite and ≥ 0"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_study_parses_and_validates() {
        let c = MissionConfig::case_study();
        assert_eq!((c.k(), c.q(), c.z()), (3, 8, 2));
        assert_eq!(c.problem.gamma, 0.95);
        assert_eq!(c.uav.eta, vec![50.0, 70.0, 100.0]);
        assert_eq!(c.fleet.zeta, vec![100.0; 3]);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = MissionConfig::case_study();
        let back = MissionConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_inconsistent_sizes() {
        let mut c = MissionConfig::case_study();
        c.uav.eta.pop();
        assert!(c.validate().is_err());
        let mut c = MissionConfig::case_study();
        c.geometry.columns = 3;
        assert!(c.validate().is_err());
        let mut c = MissionConfig::case_study();
        c.probabilities.recurrence = 1.5;
        assert!(c.validate().is_err());
        let mut c = MissionConfig::case_study();
        c.problem.gamma = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = CASE_STUDY_TOML.replace("[problem]", "[problem]\nbogus = 1");
        assert!(MissionConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn fault_step_rows_are_stochastic() {
        let p = MissionConfig::case_study().probabilities;
        for f in FaultState::all() {
            let row = p.fault_step(f);
            let s: f64 = row.iter().map(|e| e.1).sum();
            assert!((s - 1.0).abs() < 1e-12, "f = {f}");
        }
    }

    #[test]
    fn fault_step_tiers() {
        let p = MissionConfig::case_study().probabilities;
        let mild: f64 = p.fault_step(FaultState::HEALTHY).iter().filter(|e| (1..4).contains(&e.0)).map(|e| e.1).sum();
        assert!((mild - 0.1).abs() < 1e-12);
        let f3 = FaultState::new(3).unwrap();
        let row = p.fault_step(f3);
        let camera: f64 = row.iter().filter(|e| e.0 >= 9).map(|e| e.1).sum();
        let severe: f64 = row.iter().filter(|e| (4..9).contains(&e.0)).map(|e| e.1).sum();
        assert!((camera - 0.24).abs() < 1e-12);
        assert!((severe - 0.16).abs() < 1e-12);
        assert_eq!(p.fault_step(FaultState::new(12).unwrap()), vec![(11, 1.0)]);
    }

    #[test]
    fn goal_step_rows_are_stochastic() {
        let p = MissionConfig::case_study().probabilities;
        for g in 0..3 {
            for a in [0.0, 0.2, 0.9] {
                let s: f64 = p.goal_step(g, a).iter().map(|e| e.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centroids_are_row_major() {
        let g = MissionConfig::case_study().geometry;
        assert_eq!(g.centroid(1), Point::new(2500.0, 2500.0));
        assert_eq!(g.centroid(4), Point::new(17500.0, 2500.0));
        assert_eq!(g.centroid(5), Point::new(2500.0, 7500.0));
    }
}
