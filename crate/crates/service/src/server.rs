use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};

use crate::mission::Mission;
use crate::protocol::{Ack, OperatorCommand};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Epoch period while running; `None` advances only on `stepOnce`.
    pub tick: Option<Duration>,
    pub start_paused: bool,
    pub queue_depth: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { tick: Some(Duration::from_secs(1)), start_paused: false, queue_depth: 64 }
    }
}

enum Request {
    Command(OperatorCommand, oneshot::Sender<Ack>),
    Invalid(String, oneshot::Sender<Ack>),
}

/// Cloneable access to a running mission loop.
#[derive(Clone)]
pub struct ServiceHandle {
    commands: mpsc::Sender<Request>,
    telemetry: watch::Receiver<Arc<String>>,
}

impl ServiceHandle {
    pub async fn command(&self, cmd: OperatorCommand) -> Ack {
        self.send(|tx| Request::Command(cmd, tx)).await
    }

    /// Parses and submits a wire command; parse failures come back as a
    /// rejected ack stamped with the current epoch.
    pub async fn command_text(&self, text: &str) -> Ack {
        match OperatorCommand::parse(text) {
            Ok(cmd) => self.command(cmd).await,
            Err(reason) => self.send(|tx| Request::Invalid(reason, tx)).await,
        }
    }

    async fn send(&self, make: impl FnOnce(oneshot::Sender<Ack>) -> Request) -> Ack {
        let (tx, rx) = oneshot::channel();
        if self.commands.send(make(tx)).await.is_err() {
            return Ack::rejected(0, "mission loop has stopped");
        }
        rx.await.unwrap_or_else(|_| Ack::rejected(0, "mission loop has stopped"))
    }

    /// Latest telemetry as serialized JSON.
    pub fn latest(&self) -> Arc<String> {
        self.telemetry.borrow().clone()
    }

    /// A receiver that only ever holds the newest snapshot.
    pub fn subscribe(&self) -> watch::Receiver<Arc<String>> {
        self.telemetry.clone()
    }
}

fn render(mission: &mut Mission) -> Arc<String> {
    let t = mission.telemetry().expect("telemetry of a validated world");
    Arc::new(serde_json::to_string(&t).expect("telemetry serializes"))
}

/// Starts the mission loop on the current tokio runtime.
pub fn spawn_mission(mut mission: Mission, cfg: ServiceConfig) -> ServiceHandle {
    mission.set_paused(cfg.start_paused);
    let (cmd_tx, mut cmd_rx) = mpsc::channel::<Request>(cfg.queue_depth);
    let (tel_tx, tel_rx) = watch::channel(render(&mut mission));
    tokio::spawn(async move {
        let mut ticker = cfg.tick.map(|d| {
            let mut i = tokio::time::interval(d);
            i.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            i
        });
        loop {
            let running = ticker.is_some() && !mission.paused();
            tokio::select! {
                req = cmd_rx.recv() => {
                    let Some(req) = req else { break };
                    match req {
                        Request::Command(cmd, reply) => {
                            log::info!("command {cmd:?}");
                            let out = mission.apply(cmd);
                            if out.refresh {
                                tel_tx.send_replace(render(&mut mission));
                            }
                            if !out.ack.accepted {
                                log::warn!("rejected: {}", out.ack.reason.as_deref().unwrap_or(""));
                            }
                            let _ = reply.send(out.ack);
                        }
                        Request::Invalid(reason, reply) => {
                            log::warn!("rejected: {reason}");
                            let _ = reply.send(Ack::rejected(mission.epoch(), reason));
                        }
                    }
                }
                _ = async { ticker.as_mut().expect("running implies a ticker").tick().await }, if running => {
                    match mission.step() {
                        Ok(r) => log::debug!("epoch {} assignment {:?}", r.epoch, r.assignment),
                        Err(e) => {
                            log::error!("step failed: {e}");
                            mission.set_paused(true);
                        }
                    }
                    tel_tx.send_replace(render(&mut mission));
                }
            }
        }
    });
    ServiceHandle { commands: cmd_tx, telemetry: tel_rx }
}

/// Routes: `POST /v1/command`, `GET /v1/telemetry` (WebSocket upgrade or
/// a single JSON snapshot) and `GET /v1/health`.
pub fn router(handle: ServiceHandle) -> Router {
    Router::new()
        .route("/v1/command", post(command))
        .route("/v1/telemetry", get(telemetry))
        .route("/v1/health", get(|| async { "ok" }))
        .with_state(handle)
}

pub async fn serve(listener: TcpListener, handle: ServiceHandle) -> std::io::Result<()> {
    axum::serve(listener, router(handle)).await
}

async fn command(State(h): State<ServiceHandle>, body: Bytes) -> Response {
    let ack = match std::str::from_utf8(&body) {
        Ok(text) => h.command_text(text).await,
        Err(_) => h.command_text("").await,
    };
    let status = if ack.accepted { StatusCode::OK } else { StatusCode::UNPROCESSABLE_ENTITY };
    (status, Json(ack)).into_response()
}

async fn telemetry(State(h): State<ServiceHandle>, ws: Option<WebSocketUpgrade>) -> Response {
    match ws {
        Some(ws) => ws.on_upgrade(move |socket| stream(socket, h.subscribe())),
        None => ([(header::CONTENT_TYPE, "application/json")], h.latest().to_string()).into_response(),
    }
}

async fn stream(mut socket: WebSocket, mut rx: watch::Receiver<Arc<String>>) {
    let first = rx.borrow_and_update().clone();
    if socket.send(Message::Text(first.to_string())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            changed = rx.changed() => {
                if changed.is_err() {
                    break;
                }
                let msg = rx.borrow_and_update().clone();
                if socket.send(Message::Text(msg.to_string())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
