//! Dense reference models written directly from the model definitions, and
//! brute-force solvers for them. Nothing here goes through the sparse
//! builder, the state codec or the sweep code.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use searchmesh_core::config::{MissionConfig, ProbabilityConfig};
use searchmesh_core::faultmodel::FaultState;
use searchmesh_core::fleet::{FleetDecision, FleetState};
use searchmesh_core::uav::{UavDecision, UavState};

pub struct DenseMdp {
    pub gamma: f64,
    /// `cost[a][s]`.
    pub cost: Vec<Vec<f64>>,
    /// `p[a][(s, s')]`.
    pub p: Vec<DMatrix<f64>>,
}

impl DenseMdp {
    pub fn n(&self) -> usize {
        self.cost[0].len()
    }

    pub fn q(&self, v: &[f64], s: usize, a: usize) -> f64 {
        let row = self.p[a].row(s);
        -self.cost[a][s] + self.gamma * row.iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
    }
}

/// Fault kernel from the raw rates: (index, probability).
pub fn fault_kernel(pr: &ProbabilityConfig, f: u8) -> Vec<(u8, f64)> {
    let mut out = Vec::new();
    match f {
        1 => {
            out.push((1, 1.0 - pr.healthy_to_mild));
            for g in 2..=4 {
                out.push((g, pr.healthy_to_mild / 3.0));
            }
        }
        2..=4 => {
            out.push((f, 1.0 - pr.mild_worsen));
            for g in 5..=9 {
                out.push((g, pr.mild_worsen * (1.0 - pr.mild_worsen_to_camera) / 5.0));
            }
            for g in 10..=18 {
                out.push((g, pr.mild_worsen * pr.mild_worsen_to_camera / 9.0));
            }
        }
        5..=9 => {
            out.push((f, 1.0 - pr.severe_to_camera));
            for g in 10..=18 {
                out.push((g, pr.severe_to_camera / 9.0));
            }
        }
        _ => out.push((f, 1.0)),
    }
    out
}

fn achieve(pr: &ProbabilityConfig, f: u8) -> f64 {
    match f {
        1 => pr.achieve_healthy,
        2..=9 => pr.achieve_faulty,
        _ => pr.achieve_camera_failed,
    }
}

/// Priority outcomes of one goal: (level, probability, still searched).
fn goal_outcomes(pr: &ProbabilityConfig, g: u8, p_achieve: f64) -> Vec<(u8, f64)> {
    if g == 0 {
        vec![(0, 1.0 - pr.recurrence), (1, pr.recurrence / 2.0), (2, pr.recurrence / 2.0)]
    } else {
        let keep = 1.0 - p_achieve;
        vec![(0, p_achieve), (g, keep * (1.0 - pr.priority_drift)), (3 - g, keep * pr.priority_drift)]
    }
}

fn fault(i: u8) -> FaultState {
    FaultState::new(i).unwrap()
}

/// Cartesian product of independent factor outcome lists.
fn product<T: Clone>(factors: &[Vec<(T, f64)>]) -> Vec<(Vec<T>, f64)> {
    let mut acc: Vec<(Vec<T>, f64)> = vec![(Vec::new(), 1.0)];
    for f in factors {
        let mut next = Vec::new();
        for (vals, p) in &acc {
            for (x, q) in f {
                let mut v = vals.clone();
                v.push(x.clone());
                next.push((v, p * q));
            }
        }
        acc = next;
    }
    acc
}

pub fn all_uav_states(cfg: &MissionConfig) -> Vec<UavState> {
    let (k, q) = (cfg.k(), cfg.q());
    let mut out = Vec::new();
    let reach = product(&vec![vec![(false, 1.0), (true, 1.0)]; k]);
    let goals = product(&vec![vec![(0u8, 1.0), (1, 1.0), (2, 1.0)]; k]);
    for f in 1..=18u8 {
        for (r, _) in &reach {
            for (g, _) in &goals {
                for loc in 1..=q {
                    for commit in 0..=k {
                        out.push(UavState {
                            fault: fault(f),
                            reach: r.clone(),
                            goals: g.clone(),
                            loc,
                            commit,
                        });
                    }
                }
            }
        }
    }
    out
}

fn uav_target(s: &UavState, d: UavDecision) -> Option<usize> {
    let committed = (s.commit != 0 && s.goals[s.commit - 1] > 0 && s.reach[s.commit - 1]).then_some(s.commit);
    match d {
        UavDecision::Pursue(j) if s.reach[j - 1] => Some(j),
        UavDecision::Pursue(_) | UavDecision::Continue => committed,
        _ => None,
    }
}

pub fn uav_oracle_cost(cfg: &MissionConfig, s: &UavState, d: UavDecision) -> f64 {
    let u = &cfg.uav;
    let search = |j: usize| if s.goals[j - 1] > 0 { u.search_cost[j - 1][s.loc - 1] } else { 0.0 };
    let mut c = 0.0;
    let mut reachable = 0.0;
    for j in 0..cfg.k() {
        let g = s.goals[j] as f64;
        if s.reach[j] {
            reachable += 1.0;
            if s.commit != j + 1 {
                c += u.eta[j] * g;
            }
        } else {
            c += u.delta[j] * g;
        }
    }
    let per = match s.fault.index() {
        1..=4 => u.fault_cost.other,
        5..=9 => u.fault_cost.severe,
        _ => u.fault_cost.camera_failed,
    };
    c += per * reachable;
    let cont = uav_target(s, UavDecision::Continue).map_or(0.0, search);
    c + match d {
        UavDecision::Continue => cont,
        UavDecision::Pursue(j) if s.reach[j - 1] => search(j),
        UavDecision::Pursue(j) => cont + search(j),
        UavDecision::Serv => u.serv_cost,
        UavDecision::Charge => u.charge_cost,
    }
}

pub fn uav_oracle_next(cfg: &MissionConfig, s: &UavState, d: UavDecision) -> Vec<(UavState, f64)> {
    let pr = &cfg.probabilities;
    let target = uav_target(s, d);
    let faults = if d == UavDecision::Serv { vec![(1u8, 1.0)] } else { fault_kernel(pr, s.fault.index()) };
    let mut base = s.clone();
    base.commit = 0;
    if d == UavDecision::Charge {
        base.reach = vec![true; cfg.k()];
    }
    if let Some(t) = target {
        base.loc = cfg.geometry.goal_regions[t - 1];
        for rl in cfg.uav.reach_loss.iter().filter(|rl| rl.pursue == t) {
            for &g in &rl.clears {
                base.reach[g - 1] = false;
            }
        }
    }
    let goal_factors: Vec<Vec<(u8, f64)>> = (0..cfg.k())
        .map(|j| {
            let p = if target == Some(j + 1) { achieve(pr, s.fault.index()) } else { 0.0 };
            goal_outcomes(pr, s.goals[j], p)
        })
        .collect();
    let mut out = Vec::new();
    for (f, pf) in &faults {
        for (gs, pg) in product(&goal_factors) {
            let mut n = base.clone();
            n.fault = fault(*f);
            if let Some(t) = target {
                if s.goals[t - 1] > 0 && gs[t - 1] > 0 {
                    n.commit = t;
                }
            }
            n.goals = gs;
            out.push((n, pf * pg));
        }
    }
    out
}

fn dense<S: Clone + Eq + std::hash::Hash, A: Copy>(
    gamma: f64,
    states: &[S],
    actions: &[A],
    cost: impl Fn(&S, A) -> f64,
    next: impl Fn(&S, A) -> Vec<(S, f64)>,
) -> (HashMap<S, usize>, DenseMdp) {
    let index: HashMap<S, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let n = states.len();
    let mut m = DenseMdp {
        gamma,
        cost: vec![vec![0.0; n]; actions.len()],
        p: vec![DMatrix::zeros(n, n); actions.len()],
    };
    for (a, &act) in actions.iter().enumerate() {
        for (i, s) in states.iter().enumerate() {
            m.cost[a][i] = cost(s, act);
            for (t, p) in next(s, act) {
                m.p[a][(i, index[&t])] += p;
            }
        }
    }
    (index, m)
}

pub fn uav_oracle(cfg: &MissionConfig) -> (HashMap<UavState, usize>, DenseMdp) {
    let states = all_uav_states(cfg);
    let actions = UavDecision::all(cfg.k());
    dense(
        cfg.problem.gamma,
        &states,
        &actions,
        |s, d| uav_oracle_cost(cfg, s, d),
        |s, d| uav_oracle_next(cfg, s, d),
    )
}

pub fn all_fleet_states(cfg: &MissionConfig) -> Vec<FleetState> {
    let (k, z) = (cfg.k(), cfg.z());
    let goals = product(&vec![(0..=2u8).map(|g| (g, 1.0)).collect::<Vec<_>>(); k]);
    let assign = product(&vec![(0..=k).map(|a| (a, 1.0)).collect::<Vec<_>>(); z]);
    let faults = product(&vec![(1..=18u8).map(|f| (f, 1.0)).collect::<Vec<_>>(); z]);
    let avail = product(&vec![vec![(false, 1.0), (true, 1.0)]; z]);
    let mut out = Vec::new();
    for (g, _) in &goals {
        for (a, _) in &assign {
            for (f, _) in &faults {
                for (d, _) in &avail {
                    out.push(FleetState {
                        goals: g.clone(),
                        assign: a.clone(),
                        faults: f.iter().map(|&i| fault(i)).collect(),
                        avail: d.clone(),
                    });
                }
            }
        }
    }
    out
}

pub fn fleet_oracle_cost(cfg: &MissionConfig, s: &FleetState, d: &FleetDecision) -> f64 {
    let fl = &cfg.fleet;
    let mut c: f64 = s.goals.iter().zip(&fl.zeta).map(|(&g, z)| z * g as f64 * (g as f64).exp()).sum();
    for (u, &a) in d.0.iter().enumerate() {
        if a == 0 {
            c += fl.h2_unassigned;
            continue;
        }
        c += match s.faults[u].index() {
            1 => fl.h1.healthy,
            2..=4 => fl.h1.mild,
            _ => fl.h1.severe,
        };
        c += fl.h2_prior;
        if !s.avail[u] {
            c += fl.h3;
        }
    }
    c
}

pub fn fleet_oracle_next(cfg: &MissionConfig, s: &FleetState, d: &FleetDecision) -> Vec<(FleetState, f64)> {
    let pr = &cfg.probabilities;
    let uav_factors: Vec<Vec<((u8, bool), f64)>> = (0..cfg.z())
        .map(|u| {
            let f = s.faults[u].index();
            match (s.avail[u], f == 1) {
                (false, false) => vec![((1, false), 1.0)],
                (false, true) => vec![((1, true), 1.0)],
                (true, false) => vec![((f, false), 1.0)],
                (true, true) => fault_kernel(pr, f).into_iter().map(|(g, p)| ((g, true), p)).collect(),
            }
        })
        .collect();
    let goal_factors: Vec<Vec<(u8, f64)>> = (0..cfg.k())
        .map(|j| {
            let p = (0..cfg.z())
                .find(|&u| d.0[u] == j + 1 && s.avail[u])
                .map_or(0.0, |u| achieve(pr, s.faults[u].index()));
            goal_outcomes(pr, s.goals[j], p)
        })
        .collect();
    let mut out = Vec::new();
    for (us, pu) in product(&uav_factors) {
        for (gs, pg) in product(&goal_factors) {
            out.push((
                FleetState {
                    goals: gs,
                    assign: d.0.clone(),
                    faults: us.iter().map(|x| fault(x.0)).collect(),
                    avail: us.iter().map(|x| x.1).collect(),
                },
                pu * pg,
            ));
        }
    }
    out
}

pub fn fleet_oracle(cfg: &MissionConfig, decisions: &[FleetDecision]) -> (HashMap<FleetState, usize>, DenseMdp) {
    let states = all_fleet_states(cfg);
    let idx: Vec<usize> = (0..decisions.len()).collect();
    dense(
        cfg.problem.gamma,
        &states,
        &idx,
        |s, a| fleet_oracle_cost(cfg, s, &decisions[a]),
        |s, a| fleet_oracle_next(cfg, s, &decisions[a]),
    )
}

/// Exact value of a fixed policy: solves `(I - γ P_π) v = -c_π`.
pub fn evaluate(m: &DenseMdp, policy: &[usize]) -> Vec<f64> {
    let n = m.n();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        let act = policy[s];
        for t in 0..n {
            a[(s, t)] -= m.gamma * m.p[act][(s, t)];
        }
        b[s] = -m.cost[act][s];
    }
    a.lu().solve(&b).expect("I - γP is nonsingular").iter().copied().collect()
}

/// Howard policy iteration, exact evaluation at every step.
pub fn policy_iteration(m: &DenseMdp) -> (Vec<f64>, Vec<usize>) {
    let n = m.n();
    let mut policy = vec![0; n];
    loop {
        let v = evaluate(m, &policy);
        let mut changed = false;
        for s in 0..n {
            let cur = m.q(&v, s, policy[s]);
            for a in 0..m.cost.len() {
                if m.q(&v, s, a) > cur + 1e-10 * (1.0 + cur.abs()) {
                    policy[s] = a;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            return (v, policy);
        }
    }
}

/// Plain dense value iteration to a tight tolerance.
pub fn dense_vi(m: &DenseMdp, tol: f64, max_sweeps: usize) -> Vec<f64> {
    let n = m.n();
    let mut v = vec![0.0; n];
    for _ in 0..max_sweeps {
        let next: Vec<f64> = (0..n)
            .map(|s| (0..m.cost.len()).map(|a| m.q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if res < tol {
            break;
        }
    }
    v
}

/// Every deterministic policy of a small model, evaluated exactly; the
/// optimum is the pointwise maximum.
pub fn enumerate_policies(m: &DenseMdp) -> Vec<f64> {
    let n = m.n();
    let na = m.cost.len();
    let mut best = vec![f64::NEG_INFINITY; n];
    let total = na.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let policy: Vec<usize> = (0..n)
            .map(|_| {
                let a = c % na;
                c /= na;
                a
            })
            .collect();
        for (b, x) in best.iter_mut().zip(evaluate(m, &policy)) {
            *b = b.max(x);
        }
    }
    best
}
