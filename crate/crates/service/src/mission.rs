use std::sync::Arc;

use searchmesh_core::sim::{Assigner, Command, EpochRecord, MissionScenario, Policies, World};
use searchmesh_core::uav::{UavDecision, UavState};
use searchmesh_core::Result;

use crate::protocol::{
    Ack, BidEntry, DecisionTelemetry, OperatorCommand, ScoredEntry, Telemetry, UavTelemetry, SCHEMA_VERSION,
};

/// The single authoritative simulation behind the service. Everything here
/// is synchronous; the server drives it from one task.
pub struct Mission {
    policies: Arc<Policies>,
    initial: MissionScenario,
    world: World,
    paused: bool,
    pending: Vec<Command>,
    last: Option<EpochRecord>,
    seq: u64,
}

/// What a command did, for the caller deciding whether to publish.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub ack: Ack,
    /// The visible state changed and a fresh snapshot is due.
    pub refresh: bool,
}

fn top_bids(k: usize, values: &[f64]) -> Vec<BidEntry> {
    let label = |i: usize| match i {
        i if i < k => UavDecision::Pursue(i + 1),
        i if i == k => UavDecision::Serv,
        i if i == k + 1 => UavDecision::Charge,
        _ => UavDecision::Continue,
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.into_iter().take(3).map(|i| BidEntry { action: label(i).label(), value: values[i] }).collect()
}

impl Mission {
    pub fn new(policies: Arc<Policies>, scenario: MissionScenario) -> Result<Self> {
        let world = World::new(&policies.config, &scenario)?;
        Ok(Self { policies, initial: scenario, world, paused: false, pending: Vec::new(), last: None, seq: 0 })
    }

    /// Epoch at which a command accepted now takes effect.
    pub fn epoch(&self) -> usize {
        self.world.epoch
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool) {
        self.paused = paused;
    }

    pub fn last_record(&self) -> Option<&EpochRecord> {
        self.last.as_ref()
    }

    /// Plans, dispatches and resolves one epoch. Queued commands apply first.
    pub fn step(&mut self) -> Result<&EpochRecord> {
        let record = self.world.step_epoch(&self.policies, Assigner::Mdp)?;
        self.pending.clear();
        Ok(self.last.insert(record))
    }

    pub fn apply(&mut self, cmd: OperatorCommand) -> Outcome {
        let now = self.world.epoch;
        let done = |refresh| Outcome { ack: Ack::accepted(now), refresh };
        match cmd {
            OperatorCommand::World(c) => match self.world.enqueue(c.clone()) {
                Ok(()) => {
                    self.pending.push(c);
                    done(true)
                }
                Err(e) => Outcome { ack: Ack::rejected(now, e.to_string()), refresh: false },
            },
            OperatorCommand::Pause => {
                let changed = !self.paused;
                self.paused = true;
                done(changed)
            }
            OperatorCommand::Resume => {
                let changed = self.paused;
                self.paused = false;
                done(changed)
            }
            OperatorCommand::StepOnce => match self.step() {
                Ok(r) => Outcome { ack: Ack::accepted(r.epoch), refresh: true },
                Err(e) => Outcome { ack: Ack::rejected(now, e.to_string()), refresh: false },
            },
            OperatorCommand::Reset(scenario) => {
                let scenario = scenario.map(|s| *s).unwrap_or_else(|| self.initial.clone());
                match World::new(&self.policies.config, &scenario) {
                    Ok(w) => {
                        self.world = w;
                        self.pending.clear();
                        self.last = None;
                        Outcome { ack: Ack::accepted(0), refresh: true }
                    }
                    Err(e) => Outcome { ack: Ack::rejected(now, e.to_string()), refresh: false },
                }
            }
        }
    }

    /// Current snapshot, stamped with the next sequence number.
    pub fn telemetry(&mut self) -> Result<Telemetry> {
        self.seq += 1;
        let k = self.policies.config.k();
        let (epoch, goals, uavs, decision) = match &self.last {
            Some(r) => (
                r.epoch,
                r.goals.clone(),
                r.uavs
                    .iter()
                    .zip(&r.dispatched)
                    .map(|(u, &a)| UavTelemetry {
                        id: u.id,
                        assignment: a,
                        fault: u.fault,
                        available: u.available,
                        location: u.location,
                        soc: u.soc,
                        bids: top_bids(k, &u.bids),
                    })
                    .collect(),
                Some(DecisionTelemetry {
                    assignment: r.assignment.clone(),
                    top: r.top.iter().map(|s| ScoredEntry { decision: s.decision.0.clone(), q: s.q }).collect(),
                    cost: r.cost,
                }),
            ),
            None => {
                let mut uavs = Vec::with_capacity(self.world.uavs.len());
                for (i, u) in self.world.uavs.iter().enumerate() {
                    let state = UavState {
                        fault: u.fault,
                        reach: self.world.reach_flags(u)?,
                        goals: self.world.goals.clone(),
                        loc: u.location,
                        commit: u.commit,
                    };
                    let bids = self.policies.bids(&state)?;
                    uavs.push(UavTelemetry {
                        id: i + 1,
                        assignment: self.world.assign[i],
                        fault: u.fault.index(),
                        available: u.available(),
                        location: u.location,
                        soc: u.soc,
                        bids: top_bids(k, &bids.values),
                    });
                }
                (self.world.epoch, self.world.goals.clone(), uavs, None)
            }
        };
        Ok(Telemetry {
            v: SCHEMA_VERSION,
            seq: self.seq,
            epoch,
            paused: self.paused,
            goals,
            uavs,
            decision,
            pending: self.pending.clone(),
        })
    }
}
