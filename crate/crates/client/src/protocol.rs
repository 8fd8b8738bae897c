//! Messages exchanged with the render service.
//!
//! Text messages are JSON objects tagged by `type`. Binary messages carry one
//! frame: a tag byte (`0x01` PNG, `0x02` raw 8-bit sRGB), the frame sequence
//! number as `u64` LE, width and height as `u32` LE, then the pixel payload.

use serde::{Deserialize, Serialize};

pub const TAG_PNG: u8 = 0x01;
pub const TAG_RAW: u8 = 0x02;
const HEADER_LEN: usize = 1 + 8 + 4 + 4;

fn white() -> [f64; 3] {
    [1.0; 3]
}

/// Orbit camera around the head centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub radius: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub fov_deg: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            radius: 3.2,
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            fov_deg: 40.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub psi: Vec<f64>,
    #[serde(default)]
    pub camera: CameraParams,
    #[serde(default = "white")]
    pub background: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    State(StateMessage),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Frames produced per second over the recent window.
    pub fps: f64,
    pub gaussians: usize,
    /// Render time of the latest frame.
    pub last_ms: f64,
    /// Frames this session missed because it fell behind.
    pub dropped: u64,
    /// Sequence number of the latest frame.
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_psi_len: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Stats(Stats),
    Error(ErrorReply),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    #[default]
    Png,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePayload {
    pub seq: u64,
    pub format: FrameFormat,
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame message is {0} bytes, shorter than its header")]
    Truncated(usize),
    #[error("unknown frame tag {0:#04x}")]
    UnknownTag(u8),
    #[error("raw frame {width}x{height} needs {expected} bytes, got {actual}")]
    RawSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
}

impl FramePayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len());
        out.push(match self.format {
            FrameFormat::Png => TAG_PNG,
            FrameFormat::Raw => TAG_RAW,
        });
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Truncated(bytes.len()));
        }
        let format = match bytes[0] {
            TAG_PNG => FrameFormat::Png,
            TAG_RAW => FrameFormat::Raw,
            t => return Err(FrameError::UnknownTag(t)),
        };
        let seq = u64::from_le_bytes(bytes[1..9].try_into().unwrap());
        let width = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[13..17].try_into().unwrap());
        let data = bytes[HEADER_LEN..].to_vec();
        if format == FrameFormat::Raw {
            let expected = 3 * width as usize * height as usize;
            if data.len() != expected {
                return Err(FrameError::RawSize {
                    width,
                    height,
                    expected,
                    actual: data.len(),
                });
            }
        }
        Ok(Self {
            seq,
            format,
            width,
            height,
            data,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub name: String,
    pub offset: usize,
    pub size: usize,
}

/// What a viewer needs to build its controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutInfo {
    pub psi_dim: usize,
    pub blocks: Vec<LayoutBlock>,
    pub gaussians: usize,
    pub sh_degree: u32,
    pub offset_mode: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub gaussians: usize,
}

/// Body of `POST /render`; the response is a PNG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub psi: Vec<f64>,
    #[serde(default)]
    pub camera: CameraParams,
    #[serde(default = "white")]
    pub background: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn state_message_wire_form() {
        let text = r#"{"type":"state","psi":[0.5,-1],"camera":{"radius":3,"elevation_deg":10,"azimuth_deg":-20,"fov_deg":35},"background":[0,0,0]}"#;
        let ClientMessage::State(s) = serde_json::from_str(text).unwrap();
        assert_eq!(s.psi, vec![0.5, -1.0]);
        assert_eq!(s.camera.azimuth_deg, -20.0);
        assert_eq!(s.background, [0.0; 3]);
    }

    #[test]
    fn state_defaults_camera_and_background() {
        let ClientMessage::State(s) = serde_json::from_str(r#"{"type":"state","psi":[]}"#).unwrap();
        assert_eq!(s.camera, CameraParams::default());
        assert_eq!(s.background, [1.0; 3]);
    }

    #[test]
    fn server_messages_are_tagged() {
        let e = ServerMessage::Error(ErrorReply {
            message: "bad".into(),
            expected_psi_len: Some(3),
        });
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["expected_psi_len"], 3);
        let s = serde_json::to_value(ServerMessage::Stats(Stats::default())).unwrap();
        assert_eq!(s["type"], "stats");
        for key in ["fps", "gaussians", "last_ms", "dropped"] {
            assert!(s.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn short_and_unknown_frames_are_rejected() {
        assert_eq!(FramePayload::decode(&[1, 2]), Err(FrameError::Truncated(2)));
        let mut bytes = FramePayload {
            seq: 1,
            format: FrameFormat::Png,
            width: 1,
            height: 1,
            data: vec![],
        }
        .encode();
        bytes[0] = 9;
        assert_eq!(FramePayload::decode(&bytes), Err(FrameError::UnknownTag(9)));
    }

    proptest! {
        #[test]
        fn raw_frames_round_trip(seq in any::<u64>(), w in 0u32..8, h in 0u32..8, seed in any::<u8>()) {
            let data: Vec<u8> = (0..3 * w * h).map(|i| (i as u8).wrapping_mul(seed)).collect();
            let f = FramePayload { seq, format: FrameFormat::Raw, width: w, height: h, data };
            prop_assert_eq!(FramePayload::decode(&f.encode()).unwrap(), f);
        }

        #[test]
        fn png_frames_round_trip(seq in any::<u64>(), data in proptest::collection::vec(any::<u8>(), 0..64)) {
            let f = FramePayload { seq, format: FrameFormat::Png, width: 4, height: 2, data };
            prop_assert_eq!(FramePayload::decode(&f.encode()).unwrap(), f);
        }
    }
}
