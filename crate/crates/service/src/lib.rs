//! Live render service: one render loop owns the avatar, sessions submit
//! state snapshots over a websocket and receive frames plus telemetry.
//!
//! Routes: `GET /health`, `GET /layout`, `POST /render` (PNG response) and
//! `GET /ws?format=png|raw`.

mod engine;
mod hub;
mod server;

pub use engine::{Engine, EngineFrame, Rejection};
pub use hub::{FrameHub, Output, Produced, Subscriber};
pub use server::Service;
