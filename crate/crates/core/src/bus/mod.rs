//! Publish/subscribe and request/response message layer.
//!
//! In-process delivery goes through [`Bus`]; [`net`] carries the same frames
//! over TCP and [`ws`] mirrors them as JSON over WebSocket.

pub mod frame;
pub mod net;
pub mod topics;
pub mod ws;

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub use frame::{decode, decode_all, encode, read_frame, Envelope, MessageKind, MAX_PAYLOAD};
pub use topics::{schema, Delivery, Encoding, TopicSchema, STREAM_DEPTH, TOPICS};

pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("incomplete frame")]
    Incomplete,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("topic {topic:?} does not support {operation}")]
    WrongDelivery { topic: String, operation: &'static str },
    #[error("topic {0:?} already has a responder")]
    AlreadyServed(String),
    #[error("no responder for {0:?}")]
    NoResponder(String),
    #[error("request timed out")]
    Timeout,
    #[error("remote error: {0}")]
    Remote(String),
    #[error("bad payload: {0}")]
    Payload(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for BusError {
    fn from(e: std::io::Error) -> Self {
        BusError::Io(e.to_string())
    }
}

#[derive(Default)]
struct QueueState {
    items: VecDeque<Envelope>,
    dropped: u64,
}

struct Queue {
    state: Mutex<QueueState>,
    ready: Condvar,
    depth: Option<usize>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Queue {
    fn push(&self, env: Envelope) {
        let mut s = lock(&self.state);
        if let Some(d) = self.depth {
            while s.items.len() >= d {
                s.items.pop_front();
                s.dropped += 1;
            }
        }
        s.items.push_back(env);
        self.ready.notify_one();
    }
}

/// Receiving end of a topic subscription.
pub struct Subscription {
    topic: String,
    queue: Arc<Queue>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        lock(&self.queue.state).items.pop_front()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        let guard = lock(&self.queue.state);
        let (mut guard, _) = self
            .queue
            .ready
            .wait_timeout_while(guard, timeout, |s| s.items.is_empty())
            .unwrap_or_else(|p| p.into_inner());
        guard.items.pop_front()
    }

    pub fn drain(&self) -> Vec<Envelope> {
        lock(&self.queue.state).items.drain(..).collect()
    }

    /// Most recent message, discarding older ones.
    pub fn latest(&self) -> Option<Envelope> {
        self.drain().pop()
    }

    pub fn dropped(&self) -> u64 {
        lock(&self.queue.state).dropped
    }
}

/// A request waiting for its reply.
pub struct PendingRequest {
    pub envelope: Envelope,
    reply_to: Sender<Envelope>,
}

impl PendingRequest {
    fn respond(self, kind: MessageKind, payload: Vec<u8>) {
        let env = Envelope {
            topic: self.envelope.topic.clone(),
            kind,
            seq: self.envelope.seq,
            timestamp_us: self.envelope.timestamp_us,
            payload,
        };
        let _ = self.reply_to.send(env);
    }

    pub fn reply(self, payload: Vec<u8>) {
        self.respond(MessageKind::Reply, payload);
    }

    pub fn reply_json<T: Serialize>(self, value: &T) {
        let payload = serde_json::to_vec(value).expect("reply serializes");
        self.reply(payload);
    }

    pub fn fail(self, message: &str) {
        self.respond(MessageKind::Error, message.as_bytes().to_vec());
    }
}

/// Responder side of a service topic.
pub struct Service {
    topic: String,
    requests: Receiver<PendingRequest>,
    _alive: Arc<()>,
}

impl Service {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn try_next(&self) -> Option<PendingRequest> {
        self.requests.try_recv().ok()
    }

    pub fn next_timeout(&self, timeout: Duration) -> Option<PendingRequest> {
        self.requests.recv_timeout(timeout).ok()
    }
}

#[derive(Default)]
struct Inner {
    subscribers: HashMap<String, Vec<Weak<Queue>>>,
    services: HashMap<String, (Sender<PendingRequest>, Weak<()>)>,
    sequence: HashMap<String, u64>,
    recorder: Option<Box<dyn Write + Send>>,
}

impl Inner {
    fn next_seq(&mut self, topic: &str) -> u64 {
        let s = self.sequence.entry(topic.to_string()).or_insert(0);
        *s += 1;
        *s
    }

    fn record(&mut self, env: &Envelope) {
        if let Some(w) = self.recorder.as_mut() {
            if let Ok(bytes) = encode(env) {
                if let Err(e) = w.write_all(&bytes) {
                    log::warn!("message log write failed: {e}");
                    self.recorder = None;
                }
            }
        }
    }
}

/// In-process broker. Cloning shares the same broker.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<Mutex<Inner>>,
}

fn known(topic: &str) -> Result<&'static TopicSchema, BusError> {
    schema(topic).ok_or_else(|| BusError::UnknownTopic(topic.to_string()))
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records every published message, request and reply as encoded frames.
    pub fn set_recorder(&self, writer: Box<dyn Write + Send>) {
        lock(&self.inner).recorder = Some(writer);
    }

    pub fn record_to_file(&self, path: &Path) -> Result<(), BusError> {
        let f = std::fs::File::create(path)?;
        self.set_recorder(Box::new(std::io::BufWriter::new(f)));
        Ok(())
    }

    pub fn flush_recorder(&self) {
        if let Some(w) = lock(&self.inner).recorder.as_mut() {
            let _ = w.flush();
        }
    }

    pub fn is_recording(&self) -> bool {
        lock(&self.inner).recorder.is_some()
    }

    /// True if publishing on `topic` would reach anyone.
    pub fn wanted(&self, topic: &str) -> bool {
        let mut inner = lock(&self.inner);
        if inner.recorder.is_some() {
            return true;
        }
        match inner.subscribers.get_mut(topic) {
            Some(list) => {
                list.retain(|w| w.strong_count() > 0);
                !list.is_empty()
            }
            None => false,
        }
    }

    pub fn subscribe(&self, topic: &str) -> Result<Subscription, BusError> {
        let s = known(topic)?;
        if s.delivery == Delivery::Service {
            return Err(BusError::WrongDelivery {
                topic: topic.into(),
                operation: "subscribe",
            });
        }
        let queue = Arc::new(Queue {
            state: Mutex::new(QueueState::default()),
            ready: Condvar::new(),
            depth: (s.delivery == Delivery::Streaming).then_some(STREAM_DEPTH),
        });
        lock(&self.inner)
            .subscribers
            .entry(topic.to_string())
            .or_default()
            .push(Arc::downgrade(&queue));
        Ok(Subscription {
            topic: topic.to_string(),
            queue,
        })
    }

    /// Publishes and returns the assigned sequence number.
    pub fn publish(&self, topic: &str, timestamp_us: u64, payload: Vec<u8>) -> Result<u64, BusError> {
        let s = known(topic)?;
        if s.delivery == Delivery::Service {
            return Err(BusError::WrongDelivery {
                topic: topic.into(),
                operation: "publish",
            });
        }
        if payload.len() > MAX_PAYLOAD {
            return Err(BusError::Oversize(payload.len()));
        }
        let mut inner = lock(&self.inner);
        let seq = inner.next_seq(topic);
        let env = Envelope::publish(topic, seq, timestamp_us, payload);
        inner.record(&env);
        if let Some(list) = inner.subscribers.get_mut(topic) {
            list.retain(|w| match w.upgrade() {
                Some(q) => {
                    q.push(env.clone());
                    true
                }
                None => false,
            });
        }
        Ok(seq)
    }

    pub fn publish_json<T: Serialize>(&self, topic: &str, timestamp_us: u64, value: &T) -> Result<u64, BusError> {
        let payload = serde_json::to_vec(value).map_err(|e| BusError::Payload(e.to_string()))?;
        self.publish(topic, timestamp_us, payload)
    }

    /// Registers the single responder for a service topic.
    pub fn serve(&self, topic: &str) -> Result<Service, BusError> {
        let s = known(topic)?;
        if s.delivery != Delivery::Service {
            return Err(BusError::WrongDelivery {
                topic: topic.into(),
                operation: "serve",
            });
        }
        let mut inner = lock(&self.inner);
        if let Some((_, alive)) = inner.services.get(topic) {
            if alive.strong_count() > 0 {
                return Err(BusError::AlreadyServed(topic.into()));
            }
        }
        let (tx, rx) = mpsc::channel();
        let alive = Arc::new(());
        inner.services.insert(topic.to_string(), (tx, Arc::downgrade(&alive)));
        Ok(Service {
            topic: topic.to_string(),
            requests: rx,
            _alive: alive,
        })
    }

    /// Sends a request and waits up to `timeout` for the matching reply.
    pub fn request(
        &self,
        topic: &str,
        timestamp_us: u64,
        payload: Vec<u8>,
        timeout: Duration,
    ) -> Result<Envelope, BusError> {
        let s = known(topic)?;
        if s.delivery != Delivery::Service {
            return Err(BusError::WrongDelivery {
                topic: topic.into(),
                operation: "request",
            });
        }
        let (tx, rx) = mpsc::channel();
        let seq = {
            let mut inner = lock(&self.inner);
            let seq = inner.next_seq(topic);
            let env = Envelope {
                topic: topic.to_string(),
                kind: MessageKind::Request,
                seq,
                timestamp_us,
                payload,
            };
            inner.record(&env);
            let Some((svc, _)) = inner.services.get(topic) else {
                return Err(BusError::NoResponder(topic.into()));
            };
            if svc
                .send(PendingRequest {
                    envelope: env,
                    reply_to: tx,
                })
                .is_err()
            {
                inner.services.remove(topic);
                return Err(BusError::NoResponder(topic.into()));
            }
            seq
        };
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match rx.recv_timeout(left) {
                Ok(reply) if reply.seq == seq => {
                    lock(&self.inner).record(&reply);
                    return match reply.kind {
                        MessageKind::Error => Err(BusError::Remote(String::from_utf8_lossy(&reply.payload).into())),
                        _ => Ok(reply),
                    };
                }
                Ok(_) => continue,
                Err(RecvTimeoutError::Timeout) => return Err(BusError::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(BusError::NoResponder(topic.into())),
            }
        }
    }

    pub fn request_json<Q: Serialize, R: serde::de::DeserializeOwned>(
        &self,
        topic: &str,
        timestamp_us: u64,
        request: &Q,
        timeout: Duration,
    ) -> Result<R, BusError> {
        let payload = serde_json::to_vec(request).map_err(|e| BusError::Payload(e.to_string()))?;
        let reply = self.request(topic, timestamp_us, payload, timeout)?;
        serde_json::from_slice(&reply.payload).map_err(|e| BusError::Payload(e.to_string()))
    }
}

/// Reads a message log (concatenated frames).
pub fn read_log(path: &Path) -> Result<Vec<Envelope>, BusError> {
    decode_all(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn late_subscriber_and_order() {
        let bus = Bus::new();
        bus.publish("pose", 0, b"a".to_vec()).unwrap();
        let sub = bus.subscribe("pose").unwrap();
        assert!(sub.try_recv().is_none());
        bus.publish("pose", 1, b"b".to_vec()).unwrap();
        bus.publish("pose", 2, b"c".to_vec()).unwrap();
        let got: Vec<_> = sub.drain().into_iter().map(|e| e.payload).collect();
        assert_eq!(got, vec![b"b".to_vec(), b"c".to_vec()]);
    }

    #[test]
    fn drop_oldest() {
        let bus = Bus::new();
        let sub = bus.subscribe("cmd_twist").unwrap();
        for i in 0..20u8 {
            bus.publish("cmd_twist", i as u64, vec![i]).unwrap();
        }
        let got: Vec<u8> = sub.drain().into_iter().map(|e| e.payload[0]).collect();
        assert_eq!(got, (12..20).collect::<Vec<u8>>());
        assert_eq!(sub.dropped(), 12);

        let plan = bus.subscribe("plan").unwrap();
        for i in 0..20u8 {
            bus.publish("plan", 0, vec![i]).unwrap();
        }
        assert_eq!(plan.drain().len(), 20);
    }

    #[test]
    fn unknown_and_misuse() {
        let bus = Bus::new();
        assert_eq!(bus.publish("bogus", 0, vec![]), Err(BusError::UnknownTopic("bogus".into())));
        assert!(bus.subscribe("bogus").is_err());
        assert!(matches!(bus.publish("goal", 0, vec![]), Err(BusError::WrongDelivery { .. })));
        assert!(matches!(
            bus.request("goal", 0, vec![], Duration::from_millis(10)),
            Err(BusError::NoResponder(_))
        ));
    }

    #[test]
    fn request_reply_and_timeout() {
        let bus = Bus::new();
        let svc = bus.serve("goal").unwrap();
        assert!(matches!(bus.serve("goal"), Err(BusError::AlreadyServed(_))));
        let worker = std::thread::spawn(move || {
            let req = svc.next_timeout(Duration::from_secs(2)).unwrap();
            let mut p = req.envelope.payload.clone();
            p.reverse();
            req.reply(p);
            let req = svc.next_timeout(Duration::from_secs(2)).unwrap();
            req.fail("nope");
            // Third request is never answered.
            let _held = svc.next_timeout(Duration::from_secs(2));
            std::thread::sleep(Duration::from_millis(300));
        });
        let r = bus.request("goal", 5, vec![1, 2, 3], REQUEST_TIMEOUT).unwrap();
        assert_eq!(r.payload, vec![3, 2, 1]);
        assert_eq!(r.kind, MessageKind::Reply);
        assert_eq!(
            bus.request("goal", 5, vec![], REQUEST_TIMEOUT),
            Err(BusError::Remote("nope".into()))
        );
        assert_eq!(
            bus.request("goal", 5, vec![], Duration::from_millis(100)),
            Err(BusError::Timeout)
        );
        worker.join().unwrap();
    }

    #[test]
    fn sequences_increase() {
        let bus = Bus::new();
        let a = bus.publish("pose", 0, vec![]).unwrap();
        let b = bus.publish("pose", 0, vec![]).unwrap();
        let c = bus.publish("plan", 0, vec![]).unwrap();
        assert!(b > a);
        assert_eq!(c, 1);
    }

    #[test]
    fn recorder_captures_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bus.log");
        let bus = Bus::new();
        bus.record_to_file(&path).unwrap();
        bus.publish("pose", 10, b"x".to_vec()).unwrap();
        bus.publish_json("plan", 11, &serde_json::json!({"a": 1})).unwrap();
        bus.flush_recorder();
        let log = read_log(&path).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].topic, "pose");
        assert_eq!(log[1].timestamp_us, 11);
    }
}
