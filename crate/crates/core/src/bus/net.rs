//! TCP transport carrying the binary frame format.
//!
//! A client publishes with `Publish` frames, calls services with `Request`
//! frames and opens subscriptions by requesting the `subscribe` topic with a
//! JSON `{"topics": [...]}` body; subscribed messages then arrive as
//! `Publish` frames.

use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::frame::{encode, read_frame, Envelope, MessageKind};
use super::topics::SubscribeRequest;
use super::{Bus, BusError, Subscription, REQUEST_TIMEOUT};

pub const DEFAULT_BUS_ADDR: &str = "127.0.0.1:7400";
pub const BUS_ADDR_ENV: &str = "YOR_BUS_ADDR";

/// Socket address from the environment, falling back to the default.
pub fn bus_addr() -> String {
    std::env::var(BUS_ADDR_ENV).unwrap_or_else(|_| DEFAULT_BUS_ADDR.to_string())
}

/// Running listener; dropping it stops accepting new connections.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn serve_tcp<A: ToSocketAddrs>(bus: Bus, addr: A) -> Result<TcpServer, BusError> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = std::thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::debug!("bus client {peer} connected");
                    let bus = bus.clone();
                    let flag = flag.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = handle_client(bus, stream, flag) {
                            log::debug!("bus client {peer}: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    log::warn!("bus accept failed: {e}");
                    break;
                }
            }
        }
    });
    Ok(TcpServer {
        addr: local,
        stop,
        handle: Some(handle),
    })
}

fn handle_client(bus: Bus, stream: TcpStream, stop: Arc<AtomicBool>) -> Result<(), BusError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let writer = Arc::new(Mutex::new(stream));
    let subs: Arc<Mutex<Vec<Subscription>>> = Arc::default();
    let done = Arc::new(AtomicBool::new(false));

    let pump = {
        let (writer, subs, done, stop) = (writer.clone(), subs.clone(), done.clone(), stop.clone());
        std::thread::spawn(move || {
            while !done.load(Ordering::SeqCst) && !stop.load(Ordering::SeqCst) {
                let batch: Vec<Envelope> = subs.lock().unwrap().iter().flat_map(|s| s.drain()).collect();
                if batch.is_empty() {
                    std::thread::sleep(Duration::from_millis(2));
                    continue;
                }
                let mut w = writer.lock().unwrap();
                for env in batch {
                    if let Ok(bytes) = encode(&env) {
                        if w.write_all(&bytes).is_err() {
                            return;
                        }
                    }
                }
            }
        })
    };

    let result = loop {
        let env = match read_frame(&mut reader) {
            Ok(Some(env)) => env,
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        };
        match env.kind {
            MessageKind::Publish => {
                if let Err(e) = bus.publish(&env.topic, env.timestamp_us, env.payload) {
                    log::debug!("rejected remote publish: {e}");
                }
            }
            MessageKind::Request => {
                let reply = if env.topic == "subscribe" {
                    subscribe_remote(&bus, &env, &subs)
                } else {
                    bus.request(&env.topic, env.timestamp_us, env.payload.clone(), REQUEST_TIMEOUT)
                        .map(|r| r.payload)
                };
                let (kind, payload) = match reply {
                    Ok(p) => (MessageKind::Reply, p),
                    Err(e) => (MessageKind::Error, e.to_string().into_bytes()),
                };
                let out = Envelope {
                    topic: env.topic,
                    kind,
                    seq: env.seq,
                    timestamp_us: env.timestamp_us,
                    payload,
                };
                writer.lock().unwrap().write_all(&encode(&out)?)?;
            }
            MessageKind::Reply | MessageKind::Error => {}
        }
    };
    done.store(true, Ordering::SeqCst);
    let _ = pump.join();
    result
}

fn subscribe_remote(bus: &Bus, env: &Envelope, subs: &Mutex<Vec<Subscription>>) -> Result<Vec<u8>, BusError> {
    let req: SubscribeRequest =
        serde_json::from_slice(&env.payload).map_err(|e| BusError::Payload(e.to_string()))?;
    let mut new = Vec::new();
    for t in &req.topics {
        new.push(bus.subscribe(t)?);
    }
    subs.lock().unwrap().extend(new);
    Ok(serde_json::to_vec(&req).expect("subscribe reply serializes"))
}

/// Blocking client for the TCP transport.
pub struct TcpClient {
    stream: TcpStream,
    incoming: Receiver<Envelope>,
    pending: Vec<Envelope>,
    seq: u64,
}

impl TcpClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<TcpClient, BusError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, rx): (Sender<Envelope>, _) = mpsc::channel();
        std::thread::spawn(move || {
            while let Ok(Some(env)) = read_frame(&mut reader) {
                if tx.send(env).is_err() {
                    break;
                }
            }
        });
        Ok(TcpClient {
            stream,
            incoming: rx,
            pending: Vec::new(),
            seq: 0,
        })
    }

    fn send(&mut self, kind: MessageKind, topic: &str, timestamp_us: u64, payload: Vec<u8>) -> Result<u64, BusError> {
        self.seq += 1;
        let env = Envelope {
            topic: topic.to_string(),
            kind,
            seq: self.seq,
            timestamp_us,
            payload,
        };
        self.stream.write_all(&encode(&env)?)?;
        Ok(self.seq)
    }

    pub fn publish(&mut self, topic: &str, timestamp_us: u64, payload: Vec<u8>) -> Result<(), BusError> {
        self.send(MessageKind::Publish, topic, timestamp_us, payload).map(|_| ())
    }

    pub fn request(&mut self, topic: &str, payload: Vec<u8>, timeout: Duration) -> Result<Envelope, BusError> {
        let seq = self.send(MessageKind::Request, topic, 0, payload)?;
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let env = self.incoming.recv_timeout(left).map_err(|_| BusError::Timeout)?;
            match env.kind {
                MessageKind::Reply if env.seq == seq && env.topic == topic => return Ok(env),
                MessageKind::Error if env.seq == seq && env.topic == topic => {
                    return Err(BusError::Remote(String::from_utf8_lossy(&env.payload).into()))
                }
                _ => self.pending.push(env),
            }
        }
    }

    pub fn subscribe(&mut self, topics: &[&str]) -> Result<(), BusError> {
        let req = SubscribeRequest {
            topics: topics.iter().map(|t| t.to_string()).collect(),
        };
        self.request("subscribe", serde_json::to_vec(&req).unwrap(), REQUEST_TIMEOUT)
            .map(|_| ())
    }

    /// Next subscribed message.
    pub fn recv_timeout(&mut self, timeout: Duration) -> Option<Envelope> {
        if !self.pending.is_empty() {
            return Some(self.pending.remove(0));
        }
        self.incoming.recv_timeout(timeout).ok()
    }
}
