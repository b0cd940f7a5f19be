//! Per-UAV goal-bidding MDP.
//!
//! A state is `(f, r_1..r_k, g_1..g_k, l, c)`: fault state, reach flags,
//! goal priorities, current region and the goal the UAV is committed to
//! (0 for none). Decisions are pursue-goal-j, serv, charge and continue.
//! The q-value of each decision at the UAV's current state is its bid.

use serde::{Deserialize, Serialize};

use crate::config::MissionConfig;
use crate::error::{Error, Result};
use crate::factored::{expand_product, FactorKernel, MixedRadix};
use crate::faultmodel::FaultState;
use crate::mdp::{self, MdpModel, ValueFunction};

/// Decision of a single UAV. Goals are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavDecision {
    Continue,
    Pursue(usize),
    Serv,
    Charge,
}

impl UavDecision {
    /// Action index inside the MDP: continue 0, pursue j → j, serv k+1,
    /// charge k+2. Ties resolve toward the lowest index.
    pub fn index(self, k: usize) -> usize {
        match self {
            UavDecision::Continue => 0,
            UavDecision::Pursue(j) => j,
            UavDecision::Serv => k + 1,
            UavDecision::Charge => k + 2,
        }
    }

    pub fn from_index(i: usize, k: usize) -> Result<Self> {
        match i {
            0 => Ok(UavDecision::Continue),
            j if j <= k => Ok(UavDecision::Pursue(j)),
            j if j == k + 1 => Ok(UavDecision::Serv),
            j if j == k + 2 => Ok(UavDecision::Charge),
            _ => Err(Error::InvalidInput(format!("action {i} outside 0..{}", k + 3))),
        }
    }

    pub fn all(k: usize) -> Vec<Self> {
        (0..k + 3).map(|i| Self::from_index(i, k).unwrap()).collect()
    }

    pub fn label(self) -> String {
        match self {
            UavDecision::Continue => "continue".into(),
            UavDecision::Pursue(j) => format!("goal{j}"),
            UavDecision::Serv => "serv".into(),
            UavDecision::Charge => "charge".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UavState {
    pub fault: FaultState,
    pub reach: Vec<bool>,
    /// Priority per goal: 0 achieved, 1 low, 2 high.
    pub goals: Vec<u8>,
    /// Region, 1-based.
    pub loc: usize,
    /// Committed goal, 0 for none.
    pub commit: usize,
}

/// State codec over `18 · 2^k · 3^k · q · (k+1)` states.
#[derive(Debug, Clone)]
pub struct UavSpace {
    k: usize,
    q: usize,
    radix: MixedRadix,
}

impl UavSpace {
    pub fn new(k: usize, q: usize) -> Result<Self> {
        let mut radices = vec![FaultState::COUNT];
        radices.extend(std::iter::repeat(2).take(k));
        radices.extend(std::iter::repeat(3).take(k));
        radices.push(q);
        radices.push(k + 1);
        Ok(Self {
            k,
            q,
            radix: MixedRadix::new(radices)?,
        })
    }

    pub fn size(&self) -> usize {
        self.radix.size()
    }

    pub fn goals(&self) -> usize {
        self.k
    }

    pub fn regions(&self) -> usize {
        self.q
    }

    pub fn encode(&self, s: &UavState) -> Result<usize> {
        if s.reach.len() != self.k || s.goals.len() != self.k {
            return Err(Error::Dimension(format!("UAV state must carry {} reach and goal flags", self.k)));
        }
        if s.loc == 0 || s.loc > self.q {
            return Err(Error::InvalidInput(format!("region {} outside 1..={}", s.loc, self.q)));
        }
        let mut d = Vec::with_capacity(2 * self.k + 3);
        d.push(s.fault.ordinal());
        d.extend(s.reach.iter().map(|&r| r as usize));
        d.extend(s.goals.iter().map(|&g| g as usize));
        d.push(s.loc - 1);
        d.push(s.commit);
        self.radix.encode(&d)
    }

    pub fn decode(&self, index: usize) -> Result<UavState> {
        let d = self.radix.decode(index)?;
        Ok(self.from_digits(&d))
    }

    fn from_digits(&self, d: &[usize]) -> UavState {
        let k = self.k;
        UavState {
            fault: FaultState::from_ordinal(d[0]),
            reach: d[1..=k].iter().map(|&r| r == 1).collect(),
            goals: d[k + 1..=2 * k].iter().map(|&g| g as u8).collect(),
            loc: d[2 * k + 1] + 1,
            commit: d[2 * k + 2],
        }
    }

    fn fault_stride(&self) -> usize {
        self.radix.stride(0)
    }

    fn goal_stride(&self, j: usize) -> usize {
        self.radix.stride(1 + self.k + j)
    }

    fn commit_stride(&self) -> usize {
        self.radix.stride(2 * self.k + 2)
    }
}

/// Goal the UAV actually flies toward under `d`, 1-based. A pursuit of an
/// unreachable goal is refused and falls back to continuing.
pub fn pursuit_target(s: &UavState, d: UavDecision) -> Option<usize> {
    let committed = || {
        let c = s.commit;
        (c != 0 && s.goals[c - 1] > 0 && s.reach[c - 1]).then_some(c)
    };
    match d {
        UavDecision::Pursue(j) if s.reach[j - 1] => Some(j),
        UavDecision::Pursue(_) | UavDecision::Continue => committed(),
        UavDecision::Serv | UavDecision::Charge => None,
    }
}

fn search_cost(cfg: &MissionConfig, goal: usize, s: &UavState) -> f64 {
    if s.goals[goal - 1] > 0 {
        cfg.uav.search_cost[goal - 1][s.loc - 1]
    } else {
        0.0
    }
}

fn fault_cost(cfg: &MissionConfig, s: &UavState) -> f64 {
    let fc = cfg.uav.fault_cost;
    let per = match s.fault.index() {
        10..=18 => fc.camera_failed,
        5..=9 => fc.severe,
        _ => fc.other,
    };
    per * s.reach.iter().filter(|&&r| r).count() as f64
}

/// Immediate cost of decision `d` in state `s`.
pub fn uav_cost(cfg: &MissionConfig, s: &UavState, d: UavDecision) -> f64 {
    let u = &cfg.uav;
    let mut j_cost = 0.0;
    for j in 0..cfg.k() {
        let g = s.goals[j] as f64;
        if s.reach[j] {
            if s.commit != j + 1 {
                j_cost += u.eta[j] * g;
            }
        } else {
            j_cost += u.delta[j] * g;
        }
    }
    j_cost += fault_cost(cfg, s);
    let continue_search = match pursuit_target(s, UavDecision::Continue) {
        Some(c) => search_cost(cfg, c, s),
        None => 0.0,
    };
    j_cost
        + match d {
            UavDecision::Continue => continue_search,
            UavDecision::Pursue(j) if s.reach[j - 1] => search_cost(cfg, j, s),
            UavDecision::Pursue(j) => continue_search + search_cost(cfg, j, s),
            UavDecision::Serv => u.serv_cost,
            UavDecision::Charge => u.charge_cost,
        }
}

/// Successor distribution of `(s, d)` as `(state index, probability)`.
pub fn uav_transitions(
    cfg: &MissionConfig,
    space: &UavSpace,
    s: &UavState,
    d: UavDecision,
    out: &mut Vec<(usize, f64)>,
) -> Result<()> {
    let pr = &cfg.probabilities;
    let mut next = s.clone();
    let mut factors: Vec<FactorKernel> = Vec::with_capacity(cfg.k() + 1);

    if d == UavDecision::Serv {
        next.fault = FaultState::HEALTHY;
    } else {
        next.fault = FaultState::from_ordinal(0);
        let fs = space.fault_stride();
        factors.push(pr.fault_step(s.fault).into_iter().map(|(o, p)| (o * fs, p)).collect());
    }

    let target = pursuit_target(s, d);
    next.commit = 0;
    if d == UavDecision::Charge {
        next.reach.iter_mut().for_each(|r| *r = true);
    }
    if let Some(t) = target {
        next.loc = cfg.geometry.goal_regions[t - 1];
        for rl in cfg.uav.reach_loss.iter().filter(|rl| rl.pursue == t) {
            for &g in &rl.clears {
                next.reach[g - 1] = false;
            }
        }
    }

    let cs = space.commit_stride();
    for j in 0..cfg.k() {
        next.goals[j] = 0;
        let gs = space.goal_stride(j);
        let g = s.goals[j] as usize;
        let kernel = if target == Some(j + 1) && g > 0 {
            pr.goal_step(g, pr.achieve(s.fault))
                .iter()
                .map(|&(lvl, p)| (lvl * gs + if lvl > 0 { (j + 1) * cs } else { 0 }, p))
                .collect()
        } else {
            pr.goal_step(g, 0.0).iter().map(|&(lvl, p)| (lvl * gs, p)).collect()
        };
        factors.push(kernel);
    }

    let base = space.encode(&next)?;
    expand_product(base, &factors, out);
    Ok(())
}

/// A built UAV model: codec, configuration and MDP.
#[derive(Debug, Clone)]
pub struct UavModel {
    pub space: UavSpace,
    pub mdp: MdpModel,
    pub config: MissionConfig,
}

pub fn build_uav_mdp(cfg: &MissionConfig) -> Result<UavModel> {
    cfg.validate()?;
    let space = UavSpace::new(cfg.k(), cfg.q())?;
    let k = cfg.k();
    let mdp = MdpModel::from_fn(space.size(), k + 3, cfg.problem.gamma, |si, a, out| {
        let s = space.decode(si).expect("index in range");
        let d = UavDecision::from_index(a, k).expect("action in range");
        uav_transitions(cfg, &space, &s, d, out).expect("successor in range");
        Some(uav_cost(cfg, &s, d))
    })?;
    log::debug!("UAV model: {} states, {} transitions", mdp.state_count(), mdp.nonzeros());
    Ok(UavModel {
        space,
        mdp,
        config: cfg.clone(),
    })
}

/// Task values of one UAV at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidVector {
    pub state_index: usize,
    /// Pursue goal 1..k, then serv, charge, continue.
    pub values: Vec<f64>,
    pub top: UavDecision,
}

impl BidVector {
    pub fn goal_bids(&self) -> &[f64] {
        &self.values[..self.values.len() - 3]
    }

    pub fn value_of(&self, d: UavDecision) -> f64 {
        let k = self.values.len() - 3;
        match d {
            UavDecision::Pursue(j) => self.values[j - 1],
            UavDecision::Serv => self.values[k],
            UavDecision::Charge => self.values[k + 1],
            UavDecision::Continue => self.values[k + 2],
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn compute_bids(model: &UavModel, v: &ValueFunction, s: &UavState) -> Result<BidVector> {
    let k = model.space.goals();
    let idx = model.space.encode(s)?;
    let q = mdp::q_values(&model.mdp, v, idx);
    package_bids(idx, k, |d| {
        q[d.index(k)].ok_or_else(|| Error::InvalidModel(format!("{} inadmissible", d.label())))
    })
}

/// Same as [`compute_bids`], evaluating the kernel directly against a value
/// vector instead of a built model.
pub fn bids_from_values(cfg: &MissionConfig, space: &UavSpace, values: &[f64], s: &UavState) -> Result<BidVector> {
    if values.len() != space.size() {
        return Err(Error::Dimension(format!(
            "value vector has {} entries, UAV space has {}",
            values.len(),
            space.size()
        )));
    }
    let idx = space.encode(s)?;
    let mut row = Vec::new();
    package_bids(idx, space.goals(), |d| {
        row.clear();
        uav_transitions(cfg, space, s, d, &mut row)?;
        let ev: f64 = row.iter().map(|&(n, p)| p * values[n]).sum();
        Ok(-uav_cost(cfg, s, d) + cfg.problem.gamma * ev)
    })
}

fn package_bids(idx: usize, k: usize, mut q: impl FnMut(UavDecision) -> Result<f64>) -> Result<BidVector> {
    let mut by_action = Vec::with_capacity(k + 3);
    for d in UavDecision::all(k) {
        by_action.push(q(d)?);
    }
    let mut top = 0;
    for a in 1..by_action.len() {
        if by_action[a] > by_action[top] && !mdp::ties(by_action[a], by_action[top]) {
            top = a;
        }
    }
    let mut values: Vec<f64> = by_action[1..=k].to_vec();
    values.push(by_action[k + 1]);
    values.push(by_action[k + 2]);
    values.push(by_action[0]);
    Ok(BidVector {
        state_index: idx,
        values,
        top: UavDecision::from_index(top, k)?,
    })
}
