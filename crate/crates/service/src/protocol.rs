//! JSON messages exchanged with operators and dashboards.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use searchmesh_core::sim::{Command, MissionScenario};

/// Version stamped into every message as `"v"`.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub v: u32,
    /// Increments on every published snapshot, including command refreshes.
    pub seq: u64,
    /// Epoch whose decision is shown; before the first step, the epoch about
    /// to be planned.
    pub epoch: usize,
    pub paused: bool,
    /// Goal priorities at decision time.
    pub goals: Vec<u8>,
    pub uavs: Vec<UavTelemetry>,
    pub decision: Option<DecisionTelemetry>,
    /// Accepted commands waiting for the next epoch boundary.
    pub pending: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavTelemetry {
    pub id: usize,
    /// Goal dispatched to this UAV, 0 for none.
    pub assignment: usize,
    pub fault: u8,
    pub available: bool,
    pub location: usize,
    pub soc: f64,
    /// Three best bid entries, best first.
    pub bids: Vec<BidEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidEntry {
    pub action: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTelemetry {
    /// Logged assignment vector, all zeros for an idle epoch.
    pub assignment: Vec<usize>,
    pub top: Vec<ScoredEntry>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub decision: Vec<usize>,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ack {
    pub v: u32,
    pub accepted: bool,
    pub effective_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

impl Ack {
    pub fn accepted(epoch: usize) -> Self {
        Self { v: SCHEMA_VERSION, accepted: true, effective_epoch: epoch, reason: None }
    }

    pub fn rejected(epoch: usize, reason: impl Into<String>) -> Self {
        Self { v: SCHEMA_VERSION, accepted: false, effective_epoch: epoch, reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorCommand {
    /// A world change applied at the next epoch boundary.
    World(Command),
    Pause,
    Resume,
    StepOnce,
    /// Restart from the given scenario, or from the one the service started with.
    Reset(Option<Box<MissionScenario>>),
}

#[derive(Deserialize)]
struct Envelope {
    v: u32,
    kind: String,
    #[serde(default)]
    args: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalArgs {
    goal: usize,
    level: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultArgs {
    uav: usize,
    fault: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SocArgs {
    uav: usize,
    soc: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetArgs {
    scenario: Option<MissionScenario>,
}

fn args<T: serde::de::DeserializeOwned>(kind: &str, v: Value) -> Result<T, String> {
    serde_json::from_value(v).map_err(|e| format!("bad arguments for {kind}: {e}"))
}

fn no_args(kind: &str, v: &Value) -> Result<(), String> {
    match v {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(format!("{kind} takes no arguments")),
    }
}

impl OperatorCommand {
    /// Parses a `{v, kind, args}` message. Domain ranges are checked later,
    /// against the running mission.
    pub fn parse(text: &str) -> Result<Self, String> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| format!("malformed command: {e}"))?;
        if env.v != SCHEMA_VERSION {
            return Err(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", env.v));
        }
        let kind = env.kind.as_str();
        Ok(match kind {
            "setGoalPriority" => {
                let a: GoalArgs = args(kind, env.args)?;
                OperatorCommand::World(Command::SetGoalPriority { goal: a.goal, level: a.level })
            }
            "injectFault" => {
                let a: FaultArgs = args(kind, env.args)?;
                OperatorCommand::World(Command::InjectFault { uav: a.uav, fault: a.fault })
            }
            "setSoc" => {
                let a: SocArgs = args(kind, env.args)?;
                OperatorCommand::World(Command::SetSoc { uav: a.uav, soc: a.soc })
            }
            "pause" => no_args(kind, &env.args).map(|_| OperatorCommand::Pause)?,
            "resume" => no_args(kind, &env.args).map(|_| OperatorCommand::Resume)?,
            "stepOnce" => no_args(kind, &env.args).map(|_| OperatorCommand::StepOnce)?,
            "reset" => {
                if env.args.is_null() {
                    OperatorCommand::Reset(None)
                } else {
                    let a: ResetArgs = args(kind, env.args)?;
                    OperatorCommand::Reset(a.scenario.map(Box::new))
                }
            }
            other => return Err(format!("unknown command kind {other:?}")),
        })
    }

    /// The wire form accepted by [`OperatorCommand::parse`].
    pub fn to_json(&self) -> Value {
        let (kind, args) = match self {
            OperatorCommand::World(Command::SetGoalPriority { goal, level }) => {
                ("setGoalPriority", serde_json::json!({ "goal": goal, "level": level }))
            }
            OperatorCommand::World(Command::InjectFault { uav, fault }) => {
                ("injectFault", serde_json::json!({ "uav": uav, "fault": fault }))
            }
            OperatorCommand::World(Command::SetSoc { uav, soc }) => ("setSoc", serde_json::json!({ "uav": uav, "soc": soc })),
            OperatorCommand::Pause => ("pause", serde_json::json!({})),
            OperatorCommand::Resume => ("resume", serde_json::json!({})),
            OperatorCommand::StepOnce => ("stepOnce", serde_json::json!({})),
            OperatorCommand::Reset(s) => ("reset", serde_json::json!({ "scenario": s })),
        };
        serde_json::json!({ "v": SCHEMA_VERSION, "kind": kind, "args": args })
    }
}
