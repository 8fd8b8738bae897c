//! Fan-out of rendered frames to sessions. Producers never wait for consumers;
//! a session that falls behind skips frames and counts them.

use std::sync::Arc;

use tokio::sync::broadcast;

#[derive(Debug)]
pub struct Produced {
    pub seq: u64,
    pub width: u32,
    pub height: u32,
    /// 8-bit sRGB, row-major RGB.
    pub rgb: Vec<u8>,
    pub png: Vec<u8>,
    pub ms: f64,
    pub fps: f64,
}

#[derive(Debug)]
pub enum Output {
    Frame(Produced),
    Failed(String),
}

#[derive(Clone)]
pub struct FrameHub {
    tx: broadcast::Sender<Arc<Output>>,
}

impl FrameHub {
    pub fn new(capacity: usize) -> Self {
        Self {
            tx: broadcast::channel(capacity.max(1)).0,
        }
    }

    /// Publishes without waiting; returns how many sessions were listening.
    pub fn publish(&self, out: Output) -> usize {
        self.tx.send(Arc::new(out)).unwrap_or(0)
    }

    pub fn subscribe(&self) -> Subscriber {
        Subscriber {
            rx: self.tx.subscribe(),
            dropped: 0,
        }
    }
}

pub struct Subscriber {
    rx: broadcast::Receiver<Arc<Output>>,
    dropped: u64,
}

impl Subscriber {
    /// Next output, skipping over anything this subscriber was too slow for.
    /// Cancel safe.
    pub async fn next(&mut self) -> Option<Arc<Output>> {
        loop {
            match self.rx.recv().await {
                Ok(out) => return Some(out),
                Err(broadcast::error::RecvError::Lagged(n)) => self.dropped += n,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
