//! Base-station task-assignment MDP.
//!
//! A state is `(g_1..g_k, a_1..a_z, f_1..f_z, d_1..d_z)`: goal priorities,
//! the current assignment vector, each UAV's fault state and availability.
//! Bids are not part of the state. They only enter the immediate cost
//! through the preference rank of the assigned goal, so offline solves use
//! a prior for that term and live decisions plug in the actual bids.

use serde::{Deserialize, Serialize};

use crate::config::MissionConfig;
use crate::error::{Error, Result};
use crate::factored::{expand_product, FactorKernel, MixedRadix};
use crate::faultmodel::FaultState;
use crate::mdp::{self, MdpModel};

/// Goal index per UAV, 0 for no assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FleetDecision(pub Vec<usize>);

impl FleetDecision {
    pub fn is_idle(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }
}

impl std::fmt::Display for FleetDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Every vector in `{0..k}^z` whose nonzero entries are pairwise distinct,
/// except the all-zero vector, in lexicographic order.
pub fn enumerate_decisions(k: usize, z: usize) -> Vec<FleetDecision> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; z];
    fn rec(pos: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<FleetDecision>) {
        if pos == cur.len() {
            if cur.iter().any(|&a| a != 0) {
                out.push(FleetDecision(cur.clone()));
            }
            return;
        }
        for a in 0..=k {
            if a != 0 && cur[..pos].contains(&a) {
                continue;
            }
            cur[pos] = a;
            rec(pos + 1, k, cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, k, &mut cur, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FleetState {
    pub goals: Vec<u8>,
    pub assign: Vec<usize>,
    pub faults: Vec<FaultState>,
    pub avail: Vec<bool>,
}

/// State codec over `3^k · (k+1)^z · 18^z · 2^z` states.
#[derive(Debug, Clone)]
pub struct FleetSpace {
    k: usize,
    z: usize,
    radix: MixedRadix,
}

impl FleetSpace {
    pub fn new(k: usize, z: usize) -> Result<Self> {
        let mut radices = vec![3; k];
        radices.extend(std::iter::repeat(k + 1).take(z));
        radices.extend(std::iter::repeat(FaultState::COUNT).take(z));
        radices.extend(std::iter::repeat(2).take(z));
        Ok(Self {
            k,
            z,
            radix: MixedRadix::new(radices)?,
        })
    }

    pub fn size(&self) -> usize {
        self.radix.size()
    }

    pub fn goals(&self) -> usize {
        self.k
    }

    pub fn uavs(&self) -> usize {
        self.z
    }

    pub fn encode(&self, s: &FleetState) -> Result<usize> {
        if s.goals.len() != self.k || s.assign.len() != self.z || s.faults.len() != self.z || s.avail.len() != self.z {
            return Err(Error::Dimension(format!(
                "fleet state must carry {} goals and {} UAV entries",
                self.k, self.z
            )));
        }
        let mut d = Vec::with_capacity(self.k + 3 * self.z);
        d.extend(s.goals.iter().map(|&g| g as usize));
        d.extend(s.assign.iter().copied());
        d.extend(s.faults.iter().map(|f| f.ordinal()));
        d.extend(s.avail.iter().map(|&a| a as usize));
        self.radix.encode(&d)
    }

    pub fn decode(&self, index: usize) -> Result<FleetState> {
        let d = self.radix.decode(index)?;
        let (k, z) = (self.k, self.z);
        Ok(FleetState {
            goals: d[..k].iter().map(|&g| g as u8).collect(),
            assign: d[k..k + z].to_vec(),
            faults: d[k + z..k + 2 * z].iter().map(|&f| FaultState::from_ordinal(f)).collect(),
            avail: d[k + 2 * z..].iter().map(|&a| a == 1).collect(),
        })
    }

    fn goal_stride(&self, j: usize) -> usize {
        self.radix.stride(j)
    }

    fn fault_stride(&self, u: usize) -> usize {
        self.radix.stride(self.k + self.z + u)
    }
}

/// Goal bids of every UAV: `bids[u][j]` is UAV u+1's value for goal j+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidMatrix {
    pub bids: Vec<Vec<f64>>,
}

impl BidMatrix {
    pub fn validate(&self, k: usize, z: usize) -> Result<()> {
        if self.bids.len() != z || self.bids.iter().any(|b| b.len() != k) {
            return Err(Error::Dimension(format!("bid matrix must be {z} UAVs × {k} goals")));
        }
        if self.bids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("bid matrix holds a non-finite value".into()));
        }
        Ok(())
    }
}

/// Preference rank of each goal: the number of goals with a strictly higher
/// bid, so equal bids share the better rank.
pub fn preference_ranks(bids: &[f64]) -> Vec<usize> {
    bids.iter()
        .map(|&b| bids.iter().filter(|&&o| o > b && !mdp::ties(o, b)).count())
        .collect()
}

/// Immediate cost of assigning `decision` in `state`. With `bids = None`
/// the preference term of assigned UAVs uses the configured prior.
pub fn fleet_cost(
    cfg: &MissionConfig,
    state: &FleetState,
    decision: &FleetDecision,
    bids: Option<&BidMatrix>,
) -> Result<f64> {
    let f = &cfg.fleet;
    if let Some(b) = bids {
        b.validate(cfg.k(), cfg.z())?;
    }
    let mut c: f64 = state
        .goals
        .iter()
        .zip(&f.zeta)
        .map(|(&g, &zeta)| zeta * g as f64 * (g as f64).exp())
        .sum();
    for (u, &a) in decision.0.iter().enumerate() {
        if a == 0 {
            c += f.h2_unassigned;
            continue;
        }
        c += f.h1.for_fault(state.faults[u]);
        c += match bids {
            Some(b) => f.h2[preference_ranks(&b.bids[u])[a - 1].min(2)],
            None => f.h2_prior,
        };
        if !state.avail[u] {
            c += f.h3;
        }
    }
    Ok(c)
}

/// Successor distribution of `(state, decision)`.
///
/// Per UAV: an unavailable faulty UAV is repaired but stays away one more
/// epoch; an unavailable healthy UAV returns; an available faulty UAV leaves
/// for service; an available healthy UAV follows the fault kernel. A goal is
/// achieved only by an available UAV assigned to it.
pub fn fleet_transitions(
    cfg: &MissionConfig,
    space: &FleetSpace,
    state: &FleetState,
    decision: &FleetDecision,
    out: &mut Vec<(usize, f64)>,
) -> Result<()> {
    let pr = &cfg.probabilities;
    let mut next = state.clone();
    next.assign = decision.0.clone();
    let mut factors: Vec<FactorKernel> = Vec::with_capacity(cfg.k() + cfg.z());
    for u in 0..cfg.z() {
        let f = state.faults[u];
        match (state.avail[u], f.is_healthy()) {
            (false, false) => next.faults[u] = FaultState::HEALTHY,
            (false, true) => next.avail[u] = true,
            (true, false) => next.avail[u] = false,
            (true, true) => {
                next.faults[u] = FaultState::from_ordinal(0);
                let fs = space.fault_stride(u);
                factors.push(pr.fault_step(f).into_iter().map(|(o, p)| (o * fs, p)).collect());
            }
        }
    }
    for j in 0..cfg.k() {
        next.goals[j] = 0;
        let achieve = decision
            .0
            .iter()
            .position(|&a| a == j + 1)
            .filter(|&u| state.avail[u])
            .map_or(0.0, |u| pr.achieve(state.faults[u]));
        let gs = space.goal_stride(j);
        factors.push(
            pr.goal_step(state.goals[j] as usize, achieve)
                .iter()
                .map(|&(lvl, p)| (lvl * gs, p))
                .collect(),
        );
    }
    let base = space.encode(&next)?;
    expand_product(base, &factors, out);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FleetModel {
    pub space: FleetSpace,
    pub decisions: Vec<FleetDecision>,
    pub mdp: MdpModel,
    pub config: MissionConfig,
}

pub fn build_fleet_mdp(cfg: &MissionConfig) -> Result<FleetModel> {
    cfg.validate()?;
    let space = FleetSpace::new(cfg.k(), cfg.z())?;
    let decisions = enumerate_decisions(cfg.k(), cfg.z());
    let mdp = MdpModel::from_fn(space.size(), decisions.len(), cfg.problem.gamma, |si, a, out| {
        let s = space.decode(si).expect("index in range");
        let d = &decisions[a];
        fleet_transitions(cfg, &space, &s, d, out).expect("successor in range");
        Some(fleet_cost(cfg, &s, d, None).expect("offline cost"))
    })?;
    log::debug!("fleet model: {} states, {} transitions", mdp.state_count(), mdp.nonzeros());
    Ok(FleetModel {
        space,
        decisions,
        mdp,
        config: cfg.clone(),
    })
}

/// One scored decision of a live assignment query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDecision {
    pub decision: FleetDecision,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentChoice {
    pub decision: FleetDecision,
    /// Best three decisions by live q-value, best first.
    pub top: Vec<ScoredDecision>,
}

/// Sum over UAVs of how far the assigned goal's bid falls below that UAV's
/// best bid; an unassigned UAV forgoes its whole bid spread.
pub fn assignment_regret(decision: &FleetDecision, bids: &BidMatrix) -> f64 {
    decision
        .0
        .iter()
        .zip(&bids.bids)
        .map(|(&a, b)| {
            let best = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if a == 0 {
                best - b.iter().cloned().fold(f64::INFINITY, f64::min)
            } else {
                best - b[a - 1]
            }
        })
        .sum()
}

/// Live q-value of every decision: `-J(s, d; bids) + γ Σ P(s'|s, d) V*(s')`.
pub fn live_q_values(
    cfg: &MissionConfig,
    space: &FleetSpace,
    decisions: &[FleetDecision],
    values: &[f64],
    state: &FleetState,
    bids: &BidMatrix,
) -> Result<Vec<f64>> {
    if values.len() != space.size() {
        return Err(Error::Dimension(format!(
            "value vector has {} entries, fleet space has {}",
            values.len(),
            space.size()
        )));
    }
    let mut row = Vec::new();
    decisions
        .iter()
        .map(|d| {
            row.clear();
            fleet_transitions(cfg, space, state, d, &mut row)?;
            let ev: f64 = row.iter().map(|&(s, p)| p * values[s]).sum();
            Ok(-fleet_cost(cfg, state, d, Some(bids))? + cfg.problem.gamma * ev)
        })
        .collect()
}

/// Picks the decision with the highest live q-value. Ties go to the lowest
/// assignment regret, then to the lexicographically smallest vector.
pub fn decide_assignment(
    cfg: &MissionConfig,
    space: &FleetSpace,
    decisions: &[FleetDecision],
    values: &[f64],
    state: &FleetState,
    bids: &BidMatrix,
) -> Result<AssignmentChoice> {
    let q = live_q_values(cfg, space, decisions, values, state, bids)?;
    let mut order: Vec<usize> = (0..decisions.len()).collect();
    let regret: Vec<f64> = decisions.iter().map(|d| assignment_regret(d, bids)).collect();
    order.sort_by(|&a, &b| {
        if mdp::ties(q[a], q[b]) {
            regret[a]
                .partial_cmp(&regret[b])
                .unwrap()
                .then_with(|| decisions[a].cmp(&decisions[b]))
        } else {
            q[b].partial_cmp(&q[a]).unwrap()
        }
    });
    Ok(AssignmentChoice {
        decision: decisions[order[0]].clone(),
        top: order
            .iter()
            .take(3)
            .map(|&i| ScoredDecision {
                decision: decisions[i].clone(),
                q: q[i],
            })
            .collect(),
    })
}
