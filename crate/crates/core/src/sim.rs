//! Closed-loop mission simulation.
//!
//! Each epoch: apply user and scripted updates, finish maintenance and
//! refresh reach flags, collect bids from every UAV, choose an assignment
//! at the base station, then draw outcomes that become visible at the next
//! epoch.

use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Bernoulli, Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MissionConfig;
use crate::energymodel::{assignment_distance, feasibility_flags, Assignment};
use crate::error::{Error, Result};
use crate::faultmodel::FaultState;
use crate::fleet::{self, BidMatrix, FleetDecision, FleetSpace, FleetState, ScoredDecision};
use crate::snapshot::{ModelKind, PolicySnapshot};
use crate::uav::{self, BidVector, UavDecision, UavSpace, UavState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    #[default]
    Sampled,
    /// Every Bernoulli draw resolves to its majority outcome and every
    /// categorical draw to its most likely value.
    Expected,
}

/// A change to the world, from a script or an operator. UAVs and goals are
/// numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    SetGoalPriority { goal: usize, level: u8 },
    InjectFault { uav: usize, fault: u8 },
    SetSoc { uav: usize, soc: f64 },
}

impl Command {
    pub fn validate(&self, k: usize, z: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        match *self {
            Command::SetGoalPriority { goal, level } => {
                if !(1..=k).contains(&goal) {
                    return bad(format!("goal {goal} outside 1..={k}"));
                }
                if level > 2 {
                    return bad(format!("priority {level} outside 0..=2"));
                }
            }
            Command::InjectFault { uav, fault } => {
                if !(1..=z).contains(&uav) {
                    return bad(format!("UAV {uav} outside 1..={z}"));
                }
                FaultState::new(fault).map_err(|e| Error::Scenario(e.to_string()))?;
            }
            Command::SetSoc { uav, soc } => {
                if !(1..=z).contains(&uav) {
                    return bad(format!("UAV {uav} outside 1..={z}"));
                }
                if !(0.0..=1.0).contains(&soc) {
                    return bad(format!("state of charge {soc} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub epoch: usize,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavInit {
    pub location: usize,
    pub soc: f64,
    #[serde(default = "healthy_index")]
    pub fault: u8,
    #[serde(default)]
    pub commit: usize,
}

fn healthy_index() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionScenario {
    pub name: String,
    pub goals: Vec<u8>,
    pub uavs: Vec<UavInit>,
    #[serde(default)]
    pub seed: u64,
    pub epoch_limit: usize,
    #[serde(default)]
    pub mode: OutcomeMode,
    /// Let achieved goals re-arrive at the configured recurrence rate.
    #[serde(default)]
    pub stochastic_recurrence: bool,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
}

impl MissionScenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self, cfg: &MissionConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        let (k, q, z) = (cfg.k(), cfg.q(), cfg.z());
        if self.goals.len() != k || self.goals.iter().any(|&g| g > 2) {
            return bad(format!("scenario needs {k} goal priorities in 0..=2"));
        }
        if self.uavs.len() != z {
            return bad(format!("scenario lists {} UAVs, config has {z}", self.uavs.len()));
        }
        for (i, u) in self.uavs.iter().enumerate() {
            if !(1..=q).contains(&u.location) {
                return bad(format!("UAV {} location {} outside 1..={q}", i + 1, u.location));
            }
            if !(0.0..=1.0).contains(&u.soc) {
                return bad(format!("UAV {} state of charge {} outside [0, 1]", i + 1, u.soc));
            }
            FaultState::new(u.fault).map_err(|e| Error::Scenario(e.to_string()))?;
            if u.commit > k {
                return bad(format!("UAV {} committed to goal {} beyond k = {k}", i + 1, u.commit));
            }
        }
        for e in &self.events {
            e.command.validate(k, z)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaintenanceKind {
    Service,
    Charge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Maintenance {
    pub kind: MaintenanceKind,
    pub elapsed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavRuntime {
    pub location: usize,
    pub soc: f64,
    pub fault: FaultState,
    pub commit: usize,
    pub maintenance: Option<Maintenance>,
}

impl UavRuntime {
    pub fn available(&self) -> bool {
        self.maintenance.is_none()
    }
}

/// Solved value functions of both levels plus what is needed to evaluate
/// q-values against them.
#[derive(Debug, Clone)]
pub struct Policies {
    pub config: MissionConfig,
    uav_space: UavSpace,
    uav_values: Vec<f64>,
    fleet_space: FleetSpace,
    decisions: Vec<FleetDecision>,
    fleet_values: Vec<f64>,
}

impl Policies {
    pub fn from_snapshots(uav: &PolicySnapshot, fleet: &PolicySnapshot) -> Result<Self> {
        if uav.kind != ModelKind::Uav || fleet.kind != ModelKind::Fleet {
            return Err(Error::Snapshot("expected one UAV snapshot and one fleet snapshot".into()));
        }
        if uav.config != fleet.config {
            return Err(Error::Snapshot("UAV and fleet snapshots were solved for different configs".into()));
        }
        for s in [uav, fleet] {
            if !s.converged {
                return Err(Error::Snapshot(format!("{:?} snapshot did not converge", s.kind)));
            }
        }
        let cfg = uav.config.clone();
        let uav_space = UavSpace::new(cfg.k(), cfg.q())?;
        let fleet_space = FleetSpace::new(cfg.k(), cfg.z())?;
        if uav.values.len() != uav_space.size() || fleet.values.len() != fleet_space.size() {
            return Err(Error::Snapshot("snapshot state counts do not match the config".into()));
        }
        Ok(Self {
            decisions: fleet::enumerate_decisions(cfg.k(), cfg.z()),
            config: cfg,
            uav_space,
            uav_values: uav.values.clone(),
            fleet_space,
            fleet_values: fleet.values.clone(),
        })
    }

    pub fn bids(&self, s: &UavState) -> Result<BidVector> {
        uav::bids_from_values(&self.config, &self.uav_space, &self.uav_values, s)
    }

    pub fn decide(&self, state: &FleetState, bids: &BidMatrix) -> Result<fleet::AssignmentChoice> {
        fleet::decide_assignment(
            &self.config,
            &self.fleet_space,
            &self.decisions,
            &self.fleet_values,
            state,
            bids,
        )
    }

    pub fn decisions(&self) -> &[FleetDecision] {
        &self.decisions
    }
}

/// Who picks the assignment vector at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assigner {
    Mdp,
    /// Each available UAV in turn takes the nearest reachable open goal.
    GreedyNearest,
    /// Uniform over decisions whose every entry is an open goal reachable by
    /// an available UAV.
    RandomFeasible,
}

impl Assigner {
    pub fn name(self) -> &'static str {
        match self {
            Assigner::Mdp => "mdp",
            Assigner::GreedyNearest => "greedy_nearest",
            Assigner::RandomFeasible => "random_feasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavRecord {
    pub id: usize,
    pub fault: u8,
    pub available: bool,
    pub maintenance: Option<MaintenanceKind>,
    pub location: usize,
    pub soc: f64,
    pub reach: Vec<bool>,
    pub top: UavDecision,
    /// Goal 1..k, serv, charge, continue.
    pub bids: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Goal priorities at decision time.
    pub goals: Vec<u8>,
    /// Assignment as logged: the dispatched vector, or all zeros when every
    /// dispatched goal already has priority 0.
    pub assignment: Vec<usize>,
    /// Decision after masking out unavailable UAVs.
    pub dispatched: Vec<usize>,
    /// Decision as chosen by the assigner.
    pub chosen: Vec<usize>,
    pub uavs: Vec<UavRecord>,
    /// Best three decisions by live q-value (MDP assigner only).
    pub top: Vec<ScoredDecision>,
    /// Immediate base-station cost of the chosen decision.
    pub cost: f64,
}

impl EpochRecord {
    pub fn is_idle(&self) -> bool {
        self.assignment.iter().all(|&a| a == 0)
    }
}

/// Decision made at the start of an epoch, before outcomes are drawn.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub record: EpochRecord,
    reach: Vec<Vec<bool>>,
}

pub struct World {
    pub config: MissionConfig,
    pub epoch: usize,
    pub goals: Vec<u8>,
    pub uavs: Vec<UavRuntime>,
    /// Last dispatched assignment.
    pub assign: Vec<usize>,
    pub mode: OutcomeMode,
    pub stochastic_recurrence: bool,
    assignments: Vec<Assignment>,
    pending: Vec<ScriptedEvent>,
    queued: Vec<Command>,
    outcome_rng: ChaCha8Rng,
    choice_rng: ChaCha8Rng,
}

impl World {
    pub fn new(config: &MissionConfig, scenario: &MissionScenario) -> Result<Self> {
        Self::with_stream(config, scenario, 0)
    }

    /// World whose random streams are stream `stream` of the scenario seed.
    pub fn with_stream(config: &MissionConfig, scenario: &MissionScenario, stream: u64) -> Result<Self> {
        scenario.validate(config)?;
        let mut outcome_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        outcome_rng.set_stream(2 * stream);
        let mut choice_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        choice_rng.set_stream(2 * stream + 1);
        let mut pending = scenario.events.clone();
        pending.sort_by_key(|e| e.epoch);
        Ok(Self {
            config: config.clone(),
            epoch: 0,
            goals: scenario.goals.clone(),
            uavs: scenario
                .uavs
                .iter()
                .map(|u| UavRuntime {
                    location: u.location,
                    soc: u.soc,
                    fault: FaultState::new(u.fault).expect("validated"),
                    commit: u.commit,
                    maintenance: None,
                })
                .collect(),
            assign: vec![0; config.z()],
            mode: scenario.mode,
            stochastic_recurrence: scenario.stochastic_recurrence,
            assignments: config.geometry.assignments(),
            pending,
            queued: Vec::new(),
            outcome_rng,
            choice_rng,
        })
    }

    /// Queues an operator command for the next epoch boundary.
    pub fn enqueue(&mut self, cmd: Command) -> Result<()> {
        cmd.validate(self.config.k(), self.config.z())?;
        self.queued.push(cmd);
        Ok(())
    }

    pub fn has_pending_events(&self) -> bool {
        !self.pending.is_empty() || !self.queued.is_empty()
    }

    fn apply(&mut self, cmd: &Command) {
        match *cmd {
            Command::SetGoalPriority { goal, level } => self.goals[goal - 1] = level,
            Command::InjectFault { uav, fault } => {
                self.uavs[uav - 1].fault = FaultState::new(fault).expect("validated")
            }
            Command::SetSoc { uav, soc } => self.uavs[uav - 1].soc = soc,
        }
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        match self.mode {
            OutcomeMode::Expected => p >= 0.5,
            OutcomeMode::Sampled => Bernoulli::new(p.clamp(0.0, 1.0))
                .expect("probability in range")
                .sample(&mut self.outcome_rng),
        }
    }

    fn categorical(&mut self, outcomes: &[(usize, f64)]) -> usize {
        match self.mode {
            OutcomeMode::Expected => {
                let mut best = outcomes[0];
                for &o in &outcomes[1..] {
                    if o.1 > best.1 {
                        best = o;
                    }
                }
                best.0
            }
            OutcomeMode::Sampled => {
                let w = WeightedIndex::new(outcomes.iter().map(|o| o.1)).expect("nonempty kernel");
                outcomes[w.sample(&mut self.outcome_rng)].0
            }
        }
    }

    pub fn reach_flags(&self, u: &UavRuntime) -> Result<Vec<bool>> {
        feasibility_flags(
            u.soc,
            &self.config.power,
            &self.assignments,
            self.config.geometry.centroid(u.location),
        )
    }

    fn distance(&self, u: &UavRuntime, goal: usize) -> Result<f64> {
        Ok(assignment_distance(&self.assignments[goal - 1], self.config.geometry.centroid(u.location))?.meters)
    }

    fn begin_epoch(&mut self) {
        let now = self.epoch;
        while self.pending.first().is_some_and(|e| e.epoch <= now) {
            let e = self.pending.remove(0);
            self.apply(&e.command);
        }
        for cmd in std::mem::take(&mut self.queued) {
            self.apply(&cmd);
        }
        for u in &mut self.uavs {
            let Some(mut m) = u.maintenance else { continue };
            m.elapsed += 1;
            if m.kind == MaintenanceKind::Service && m.elapsed == 1 {
                u.fault = FaultState::HEALTHY;
            }
            if m.elapsed >= m.total {
                if m.kind == MaintenanceKind::Charge {
                    u.soc = 1.0;
                }
                u.maintenance = None;
            } else {
                u.maintenance = Some(m);
            }
        }
    }

    /// Steps 1 to 5 of the loop: everything up to and including dispatch.
    pub fn plan_epoch(&mut self, policies: &Policies, assigner: Assigner) -> Result<EpochPlan> {
        self.begin_epoch();
        let cfg = self.config.clone();
        let (k, z) = (cfg.k(), cfg.z());
        let mut reach = Vec::with_capacity(z);
        let mut records = Vec::with_capacity(z);
        for i in 0..z {
            let r = self.reach_flags(&self.uavs[i])?;
            let u = &self.uavs[i];
            let state = UavState {
                fault: u.fault,
                reach: r.clone(),
                goals: self.goals.clone(),
                loc: u.location,
                commit: u.commit,
            };
            let bids = policies.bids(&state)?;
            let depart = u.available()
                && match bids.top {
                    UavDecision::Serv => !u.fault.is_healthy(),
                    UavDecision::Charge => u.soc < 1.0,
                    _ => false,
                };
            let u = &mut self.uavs[i];
            if depart {
                let (kind, total) = if bids.top == UavDecision::Serv {
                    (MaintenanceKind::Service, cfg.service.serv_epochs)
                } else {
                    (MaintenanceKind::Charge, cfg.service.charge_epochs)
                };
                u.maintenance = Some(Maintenance { kind, elapsed: 0, total });
                u.commit = 0;
            }
            records.push(UavRecord {
                id: i + 1,
                fault: u.fault.index(),
                available: u.available(),
                maintenance: u.maintenance.map(|m| m.kind),
                location: u.location,
                soc: u.soc,
                reach: r.clone(),
                top: bids.top,
                bids: bids.values.clone(),
            });
            reach.push(r);
        }

        let bid_matrix = BidMatrix {
            bids: records.iter().map(|r| r.bids[..k].to_vec()).collect(),
        };
        let state = FleetState {
            goals: self.goals.clone(),
            assign: self.assign.clone(),
            faults: self.uavs.iter().map(|u| u.fault).collect(),
            avail: self.uavs.iter().map(|u| u.available()).collect(),
        };
        let (chosen, top) = match assigner {
            Assigner::Mdp => {
                let c = policies.decide(&state, &bid_matrix)?;
                (c.decision, c.top)
            }
            Assigner::GreedyNearest => (self.greedy_nearest(&reach)?, Vec::new()),
            Assigner::RandomFeasible => (self.random_feasible(policies.decisions(), &reach), Vec::new()),
        };
        let cost = fleet::fleet_cost(&cfg, &state, &chosen, Some(&bid_matrix))?;
        let dispatched: Vec<usize> = chosen
            .0
            .iter()
            .zip(&self.uavs)
            .map(|(&a, u)| if u.available() { a } else { 0 })
            .collect();
        let assignment = if dispatched.iter().all(|&a| a == 0 || self.goals[a - 1] == 0) {
            vec![0; z]
        } else {
            dispatched.clone()
        };
        Ok(EpochPlan {
            record: EpochRecord {
                epoch: self.epoch,
                goals: self.goals.clone(),
                assignment,
                dispatched,
                chosen: chosen.0,
                uavs: records,
                top,
                cost,
            },
            reach,
        })
    }

    fn greedy_nearest(&self, reach: &[Vec<bool>]) -> Result<FleetDecision> {
        let mut taken = vec![false; self.config.k()];
        let mut out = vec![0; self.config.z()];
        for (i, u) in self.uavs.iter().enumerate() {
            if !u.available() {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 1..=self.config.k() {
                if taken[j - 1] || self.goals[j - 1] == 0 || !reach[i][j - 1] {
                    continue;
                }
                let d = self.distance(u, j)?;
                if best.map_or(true, |b| d < b.1) {
                    best = Some((j, d));
                }
            }
            if let Some((j, _)) = best {
                taken[j - 1] = true;
                out[i] = j;
            }
        }
        Ok(FleetDecision(out))
    }

    fn random_feasible(&mut self, decisions: &[FleetDecision], reach: &[Vec<bool>]) -> FleetDecision {
        let feasible: Vec<&FleetDecision> = decisions
            .iter()
            .filter(|d| {
                d.0.iter().enumerate().all(|(i, &a)| {
                    a == 0 || (self.uavs[i].available() && self.goals[a - 1] > 0 && reach[i][a - 1])
                })
            })
            .collect();
        if feasible.is_empty() {
            FleetDecision(vec![0; self.config.z()])
        } else {
            feasible[self.choice_rng.gen_range(0..feasible.len())].clone()
        }
    }

    /// Draws the outcomes of a planned epoch and advances to the next one.
    pub fn finish_epoch(&mut self, plan: &EpochPlan) -> Result<()> {
        let cfg = self.config.clone();
        for i in 0..cfg.z() {
            let a = plan.record.dispatched[i];
            let u = self.uavs[i].clone();
            let mut next = u.clone();
            next.commit = 0;
            if a != 0 && plan.reach[i][a - 1] {
                let flown = self.distance(&u, a)?;
                next.location = cfg.geometry.goal_regions[a - 1];
                next.soc = (u.soc - flown * cfg.service.flight_drain_per_m).max(0.0);
                if self.goals[a - 1] > 0 {
                    if self.bernoulli(cfg.probabilities.achieve(u.fault)) {
                        self.goals[a - 1] = 0;
                    } else {
                        next.commit = a;
                    }
                }
            }
            if u.available() {
                let kernel = cfg.probabilities.fault_step(u.fault);
                next.fault = FaultState::from_ordinal(self.categorical(&kernel));
            }
            self.uavs[i] = next;
        }
        if self.stochastic_recurrence {
            for j in 0..cfg.k() {
                if self.goals[j] == 0 && self.bernoulli(cfg.probabilities.recurrence) {
                    self.goals[j] = if self.bernoulli(0.5) { 1 } else { 2 };
                }
            }
        }
        self.assign = plan.record.dispatched.clone();
        self.epoch += 1;
        Ok(())
    }

    /// One full epoch.
    pub fn step_epoch(&mut self, policies: &Policies, assigner: Assigner) -> Result<EpochRecord> {
        let plan = self.plan_epoch(policies, assigner)?;
        self.finish_epoch(&plan)?;
        Ok(plan.record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionTrace {
    pub scenario: String,
    pub assigner: Assigner,
    pub mode: OutcomeMode,
    pub seed: u64,
    pub stream: u64,
    pub records: Vec<EpochRecord>,
    /// First epoch at which every goal had priority 0.
    pub completed_at: Option<usize>,
    pub discounted_cost: f64,
}

impl MissionTrace {
    /// Logged assignments of the non-idle epochs, in order.
    pub fn assignment_sequence(&self) -> Vec<Vec<usize>> {
        self.records
            .iter()
            .filter(|r| !r.is_idle())
            .map(|r| r.assignment.clone())
            .collect()
    }

    pub fn ends_idle(&self) -> bool {
        self.records.last().is_some_and(|r| r.is_idle())
    }

    /// Checks epoch ordering, that unavailable UAVs are never dispatched and
    /// that a logged assignment names at least one open goal.
    pub fn check_consistency(&self) -> Result<()> {
        for w in self.records.windows(2) {
            if w[1].epoch <= w[0].epoch {
                return Err(Error::Scenario(format!("epoch {} follows {}", w[1].epoch, w[0].epoch)));
            }
        }
        for r in &self.records {
            for (u, &a) in r.uavs.iter().zip(&r.dispatched) {
                if !u.available && a != 0 {
                    return Err(Error::Scenario(format!("epoch {}: unavailable UAV {} dispatched", r.epoch, u.id)));
                }
            }
            if !r.is_idle() && r.assignment.iter().all(|&a| a == 0 || r.goals[a - 1] == 0) {
                return Err(Error::Scenario(format!("epoch {}: assignment names no open goal", r.epoch)));
            }
        }
        Ok(())
    }

    /// One row per epoch per goal and per UAV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,entity,id,priority,assignment,fault,available,location,soc,top\n");
        for r in &self.records {
            for (j, g) in r.goals.iter().enumerate() {
                let _ = writeln!(s, "{},goal,{},{},,,,,,", r.epoch, j + 1, g);
            }
            for u in &r.uavs {
                let _ = writeln!(
                    s,
                    "{},uav,{},,{},{},{},{},{},{}",
                    r.epoch,
                    u.id,
                    r.assignment[u.id - 1],
                    u.fault,
                    u.available as u8,
                    u.location,
                    u.soc,
                    u.top.label()
                );
            }
        }
        s
    }

    /// One JSON object per epoch, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    /// `epoch,series,value` rows for goal-flag and assignment step plots.
    pub fn to_long_format(&self) -> String {
        let mut s = String::from("epoch,series,value\n");
        for r in &self.records {
            for (j, g) in r.goals.iter().enumerate() {
                let _ = writeln!(s, "{},goal{},{}", r.epoch, j + 1, g);
            }
            for (i, a) in r.assignment.iter().enumerate() {
                let _ = writeln!(s, "{},uav{}_assignment,{}", r.epoch, i + 1, a);
            }
        }
        s
    }
}

/// Runs until every goal has priority 0 with no scripted events left, or the
/// epoch limit. The final idle epoch is recorded but its outcomes are not
/// drawn.
pub fn run_scenario(scenario: &MissionScenario, policies: &Policies, assigner: Assigner) -> Result<MissionTrace> {
    run_stream(scenario, policies, assigner, 0)
}

pub fn run_stream(
    scenario: &MissionScenario,
    policies: &Policies,
    assigner: Assigner,
    stream: u64,
) -> Result<MissionTrace> {
    let mut world = World::with_stream(&policies.config, scenario, stream)?;
    let gamma = policies.config.problem.gamma;
    let mut trace = MissionTrace {
        scenario: scenario.name.clone(),
        assigner,
        mode: scenario.mode,
        seed: scenario.seed,
        stream,
        records: Vec::new(),
        completed_at: None,
        discounted_cost: 0.0,
    };
    while world.epoch < scenario.epoch_limit {
        let plan = world.plan_epoch(policies, assigner)?;
        let record = &plan.record;
        trace.discounted_cost += gamma.powi(record.epoch as i32) * record.cost;
        let done = record.goals.iter().all(|&g| g == 0);
        if done && trace.completed_at.is_none() {
            trace.completed_at = Some(record.epoch);
        }
        trace.records.push(record.clone());
        if done && !world.has_pending_events() {
            world.epoch += 1;
            break;
        }
        world.finish_epoch(&plan)?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub assigner: Assigner,
    pub runs: usize,
    pub mean_cost: f64,
    pub stderr_cost: f64,
    /// Over runs that completed.
    pub mean_latency: f64,
    pub stderr_latency: f64,
    pub completed: usize,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo comparison over `runs` seeded runs per assigner. Run `i` of
/// every assigner uses random stream `i`, so outcomes are paired.
pub fn compare_baselines(
    scenario: &MissionScenario,
    policies: &Policies,
    assigners: &[Assigner],
    runs: usize,
) -> Result<Vec<BaselineStats>> {
    assigners
        .iter()
        .map(|&a| {
            let traces: Vec<MissionTrace> = (0..runs as u64)
                .into_par_iter()
                .map(|i| run_stream(scenario, policies, a, i))
                .collect::<Result<_>>()?;
            let costs: Vec<f64> = traces.iter().map(|t| t.discounted_cost).collect();
            let lat: Vec<f64> = traces.iter().filter_map(|t| t.completed_at.map(|e| e as f64)).collect();
            let (mean_cost, stderr_cost) = mean_stderr(&costs);
            let (mean_latency, stderr_latency) = mean_stderr(&lat);
            Ok(BaselineStats {
                assigner: a,
                runs,
                mean_cost,
                stderr_cost,
                mean_latency,
                stderr_latency,
                completed: lat.len(),
            })
        })
        .collect()
}

/// Renders baseline statistics as CSV.
pub fn baseline_csv(stats: &[BaselineStats]) -> String {
    let mut s = String::from("assigner,runs,mean_cost,stderr_cost,mean_latency,stderr_latency,completed\n");
    for b in stats {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{}",
            b.assigner.name(),
            b.runs,
            b.mean_cost,
            b.stderr_cost,
            b.mean_latency,
            b.stderr_latency,
            b.completed
        );
    }
    s
}
