//! Structure of solved policies: which decision is optimal where, and how
//! often the supports satisfy the qualitative conditions they are expected
//! to.
//!
//! Each condition is a predicate over state fields; its text is carried in
//! the report so the formalization can be audited next to the numbers.

use std::fmt::Write as _;

use serde::Serialize;

use crate::fleet::{assignment_regret, BidMatrix, FleetDecision, FleetModel, FleetState};
use crate::mdp::{self, ValueFunction};
use crate::uav::{UavDecision, UavModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub action: String,
    pub predicate: String,
    /// Size of the support the predicate was checked on.
    pub support: u64,
    pub satisfied: u64,
}

impl ConditionSummary {
    /// Fraction of the support satisfying the predicate; `None` on an empty
    /// support.
    pub fn fraction(&self) -> Option<f64> {
        (self.support > 0).then(|| self.satisfied as f64 / self.support as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTrendReport {
    pub level: String,
    /// What the counts partition.
    pub population: String,
    pub total: u64,
    /// Number of members of the population on which each action is optimal.
    pub counts: Vec<(String, u64)>,
    pub conditions: Vec<ConditionSummary>,
    pub stats: Vec<(String, f64)>,
}

impl PolicyTrendReport {
    pub fn condition(&self, action: &str) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.action == action)
    }

    pub fn stat(&self, name: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == name).map(|s| s.1)
    }

    pub fn count(&self, action: &str) -> Option<u64> {
        self.counts.iter().find(|c| c.0 == action).map(|c| c.1)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} policy trends over {} {}", self.level, self.total, self.population);
        let _ = writeln!(s, "\noptimal-action counts:");
        for (a, c) in &self.counts {
            let _ = writeln!(s, "  {a:<12} {c:>10}  ({:.4})", *c as f64 / self.total as f64);
        }
        let _ = writeln!(s, "\nconditions on each support:");
        for c in &self.conditions {
            let frac = c.fraction().map_or("n/a".to_string(), |f| format!("{f:.4}"));
            let _ = writeln!(
                s,
                "  {:<12} {:>7} {}/{}  where {}",
                c.action, frac, c.satisfied, c.support, c.predicate
            );
        }
        let _ = writeln!(s, "\nstatistics:");
        for (n, v) in &self.stats {
            let _ = writeln!(s, "  {n:<28} {v:.6}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,action,value,support,satisfied,predicate\n");
        for (a, c) in &self.counts {
            let _ = writeln!(s, "count,{a},{c},,,");
        }
        for c in &self.conditions {
            let frac = c.fraction().map_or(String::new(), |f| format!("{f:.6}"));
            let _ = writeln!(s, "condition,{},{},{},{},\"{}\"", c.action, frac, c.support, c.satisfied, c.predicate);
        }
        for (n, v) in &self.stats {
            let _ = writeln!(s, "stat,{n},{v:.6},,,");
        }
        s
    }
}

/// Supports and conditions of the UAV bidding policy.
pub fn uav_policy_trends(model: &UavModel, policy: &[usize]) -> PolicyTrendReport {
    let k = model.space.goals();
    let n = model.space.size();
    let actions = UavDecision::all(k);
    let mut counts = vec![0u64; k + 3];
    let mut sat = vec![0u64; k + 3];
    let (mut mild_severe, mut mild_severe_serv) = (0u64, 0u64);
    let (mut camera, mut camera_serv) = (0u64, 0u64);
    let mut charge_reach = 0u64;
    let mut bad_pursuit = 0u64;
    for (s, &a) in policy.iter().enumerate().take(n) {
        let st = model.space.decode(s).expect("index in range");
        let f = st.fault.index();
        let reachable = st.reach.iter().filter(|&&r| r).count();
        counts[a] += 1;
        let ok = match actions[a] {
            UavDecision::Pursue(j) => st.reach[j - 1] && f == 1,
            UavDecision::Charge => reachable <= 2,
            UavDecision::Serv => f != 1,
            UavDecision::Continue => st.commit != 0 || (0..k).all(|j| !st.reach[j] || st.goals[j] == 0),
        };
        sat[a] += ok as u64;
        if let UavDecision::Pursue(j) = actions[a] {
            if !st.reach[j - 1] || f != 1 {
                bad_pursuit += 1;
            }
        }
        if actions[a] == UavDecision::Charge {
            charge_reach += reachable as u64;
        }
        let serv = actions[a] == UavDecision::Serv;
        if (2..=9).contains(&f) {
            mild_severe += 1;
            mild_severe_serv += serv as u64;
        } else if f > 9 {
            camera += 1;
            camera_serv += serv as u64;
        }
    }
    let predicate = |d: UavDecision| match d {
        UavDecision::Pursue(j) => format!("r_{j} = 1 and f = 1"),
        UavDecision::Charge => "at most 2 goals in reach".into(),
        UavDecision::Serv => "f != 1".into(),
        UavDecision::Continue => "already committed, or every goal has r_j = 0 or g_j = 0".into(),
    };
    let charge = UavDecision::Charge.index(k);
    PolicyTrendReport {
        level: "uav".into(),
        population: "UAV states".into(),
        total: n as u64,
        counts: actions.iter().map(|d| (d.label(), counts[d.index(k)])).collect(),
        conditions: actions
            .iter()
            .map(|&d| ConditionSummary {
                action: d.label(),
                predicate: predicate(d),
                support: counts[d.index(k)],
                satisfied: sat[d.index(k)],
            })
            .collect(),
        stats: vec![
            ("serv_share_f2_to_9".into(), ratio(mild_severe_serv, mild_severe)),
            ("serv_share_f10_to_18".into(), ratio(camera_serv, camera)),
            ("charge_mean_reachable_goals".into(), ratio(charge_reach, counts[charge])),
            ("pursuit_without_reach_or_health".into(), bad_pursuit as f64),
        ],
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Strict preference orderings of `k` goals; `ranks[j]` is goal j+1's rank.
fn rank_profiles(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for r in 0..used.len() {
            if !used[r] {
                used[r] = true;
                cur.push(r);
                rec(cur, used, out);
                cur.pop();
                used[r] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

fn fleet_predicate(d: &FleetDecision, k: usize) -> Option<String> {
    if d.0.len() != 2 || k != 3 {
        return None;
    }
    let (a, b) = (d.0[0], d.0[1]);
    Some(match (a, b) {
        (0, b) => format!(
            "g_{b} = max g > 0, UAV 2 available, and UAV 1 unavailable, faulty or ranking goal {b} last"
        ),
        (a, 0) => format!(
            "g_{a} = max g > 0, UAV 1 available, and UAV 2 unavailable, faulty or ranking goal {a} last"
        ),
        (a, b) => {
            let c = 6 - a - b;
            format!(
                "both UAVs available with f = 1, UAV 1 prefers goal {a} or UAV 2 prefers goal {b}, and g_{c} <= 1 or (all g = 2 and neither UAV prefers goal {c}); a UAV prefers the goal of highest priority, then highest rank"
            )
        }
    })
}

fn fleet_condition(d: &FleetDecision, s: &FleetState, ranks: &[&Vec<usize>]) -> bool {
    let g = &s.goals;
    let gmax = *g.iter().max().unwrap();
    // A UAV's preferred goal: highest priority first, its ranking second.
    let first = |u: usize, j: usize| {
        (1..=g.len()).all(|i| i == j || (g[j - 1], std::cmp::Reverse(ranks[u][j - 1])) > (g[i - 1], std::cmp::Reverse(ranks[u][i - 1])))
    };
    let last = |u: usize, j: usize| ranks[u][j - 1] == ranks[u].len() - 1;
    let out_of_play = |u: usize, j: usize| !s.avail[u] || !s.faults[u].is_healthy() || last(u, j);
    match (d.0[0], d.0[1]) {
        (0, b) => g[b - 1] == gmax && gmax > 0 && s.avail[1] && out_of_play(0, b),
        (a, 0) => g[a - 1] == gmax && gmax > 0 && s.avail[0] && out_of_play(1, a),
        (a, b) => {
            let c = 6 - a - b;
            s.avail.iter().all(|&x| x)
                && s.faults.iter().all(|f| f.is_healthy())
                && (first(0, a) || first(1, b))
                && (g[c - 1] <= 1 || (g.iter().all(|&x| x == 2) && !first(0, c) && !first(1, c)))
        }
    }
}

/// A state the dispatcher can meet: some goal open, some UAV available, and
/// no available UAV carrying a fault (a faulty UAV leaves for service before
/// the assignment is made).
fn dispatchable(s: &FleetState) -> bool {
    s.goals.iter().any(|&g| g > 0)
        && s.avail.iter().any(|&a| a)
        && s.avail.iter().zip(&s.faults).all(|(&a, f)| !a || f.is_healthy())
}

/// Supports and conditions of the task-assignment policy.
///
/// Counts partition the state space under the offline policy. Conditions
/// are checked on the live policy: for every dispatchable state and every
/// combination of strict preference
/// orderings, the decision is re-chosen with the preference penalty taken
/// from the orderings, exactly as the online query does.
pub fn fleet_policy_trends(model: &FleetModel, v: &ValueFunction, policy: &[usize]) -> PolicyTrendReport {
    let cfg = &model.config;
    let space = &model.space;
    let (k, z) = (space.goals(), space.uavs());
    let decisions = &model.decisions;
    let mut counts = vec![0u64; decisions.len()];
    for &a in policy {
        counts[a] += 1;
    }

    let profiles = rank_profiles(k);
    let mut combos: Vec<Vec<&Vec<usize>>> = vec![Vec::new()];
    for _ in 0..z {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                profiles.iter().map(move |p| {
                    let mut c = c.clone();
                    c.push(p);
                    c
                })
            })
            .collect();
    }
    let mut support = vec![0u64; decisions.len()];
    let mut sat = vec![0u64; decisions.len()];
    let mut pairs = 0u64;
    let f = &cfg.fleet;
    for si in 0..space.size() {
        let s = space.decode(si).expect("index in range");
        if s.assign.iter().any(|&a| a != 0) {
            continue;
        }
        if !dispatchable(&s) {
            continue;
        }
        let q_off: Vec<f64> = mdp::q_values(&model.mdp, v, si)
            .into_iter()
            .map(|q| q.expect("every decision admissible"))
            .collect();
        for ranks in &combos {
            pairs += 1;
            let bids = BidMatrix {
                bids: ranks.iter().map(|r| r.iter().map(|&x| -(x as f64)).collect()).collect(),
            };
            let live: Vec<f64> = decisions
                .iter()
                .zip(&q_off)
                .map(|(d, &q)| {
                    q + d
                        .0
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a != 0)
                        .map(|(u, &a)| f.h2_prior - f.h2[ranks[u][a - 1].min(2)])
                        .sum::<f64>()
                })
                .collect();
            let mut best = 0;
            for i in 1..decisions.len() {
                let better = if mdp::ties(live[i], live[best]) {
                    assignment_regret(&decisions[i], &bids) < assignment_regret(&decisions[best], &bids)
                } else {
                    live[i] > live[best]
                };
                if better {
                    best = i;
                }
            }
            support[best] += 1;
            if fleet_predicate(&decisions[best], k).is_some() && fleet_condition(&decisions[best], &s, ranks) {
                sat[best] += 1;
            }
        }
    }
    let conditions = decisions
        .iter()
        .enumerate()
        .map(|(i, d)| ConditionSummary {
            action: d.to_string(),
            predicate: fleet_predicate(d, k).unwrap_or_else(|| "none defined for this problem size".into()),
            support: support[i],
            satisfied: sat[i],
        })
        .collect();
    PolicyTrendReport {
        level: "fleet".into(),
        population: "fleet states".into(),
        total: space.size() as u64,
        counts: decisions.iter().zip(&counts).map(|(d, &c)| (d.to_string(), c)).collect(),
        conditions,
        stats: vec![
            ("live_pairs_checked".into(), pairs as f64),
            ("preference_profiles".into(), combos.len() as f64),
        ],
    }
}
