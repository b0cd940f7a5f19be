//! Network boundary for a live mission: operators post commands over HTTP
//! and dashboards follow a WebSocket telemetry stream.

pub mod mission;
pub mod protocol;
pub mod server;

pub use mission::Mission;
pub use protocol::{Ack, OperatorCommand, Telemetry, SCHEMA_VERSION};
pub use server::{router, serve, spawn_mission, ServiceConfig, ServiceHandle};
