//! WebSocket bridge for browser clients.
//!
//! Each text message is one envelope as JSON:
//!
//! ```json
//! {"kind": "publish", "seq": 3, "timestamp_us": 0, "topic": "cmd_twist",
//!  "payload": {"vx": 0.1, "vy": 0.0, "omega": 0.0}}
//! ```
//!
//! Binary topics (and any payload that is not valid JSON) carry
//! `{"encoding": "base64", "data": "..."}` instead, preserving the bytes
//! exactly. Clients subscribe by requesting the `subscribe` topic.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tungstenite::{Message, WebSocket};

use super::frame::{Envelope, MessageKind};
use super::topics::{schema, Encoding, SubscribeRequest, TwistMsg};
use super::{Bus, BusError, Subscription, REQUEST_TIMEOUT};

pub const DEFAULT_WS_ADDR: &str = "127.0.0.1:7401";

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonEnvelope {
    pub kind: MessageKind,
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub timestamp_us: u64,
    pub topic: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Base64Payload {
    encoding: String,
    data: String,
}

fn is_binary(topic: &str) -> bool {
    schema(topic).is_some_and(|s| s.encoding != Encoding::Json)
}

pub fn envelope_to_json(env: &Envelope) -> JsonEnvelope {
    let parsed = if is_binary(&env.topic) {
        None
    } else {
        serde_json::from_slice::<Value>(&env.payload).ok()
    };
    let payload = match parsed {
        Some(v) if !v.get("encoding").is_some_and(|e| e == "base64") => v,
        _ => serde_json::to_value(Base64Payload {
            encoding: "base64".into(),
            data: STANDARD.encode(&env.payload),
        })
        .expect("base64 payload serializes"),
    };
    JsonEnvelope {
        kind: env.kind,
        seq: env.seq,
        timestamp_us: env.timestamp_us,
        topic: env.topic.clone(),
        payload,
    }
}

pub fn json_to_envelope(j: &JsonEnvelope) -> Result<Envelope, BusError> {
    let payload = match serde_json::from_value::<Base64Payload>(j.payload.clone()) {
        Ok(b) if b.encoding == "base64" => STANDARD
            .decode(b.data.as_bytes())
            .map_err(|e| BusError::Payload(e.to_string()))?,
        _ if is_binary(&j.topic) => {
            return Err(BusError::Payload(format!("topic {:?} needs a base64 payload", j.topic)))
        }
        _ if j.payload.is_null() => Vec::new(),
        _ => serde_json::to_vec(&j.payload).map_err(|e| BusError::Payload(e.to_string()))?,
    };
    Ok(Envelope {
        topic: j.topic.clone(),
        kind: j.kind,
        seq: j.seq,
        timestamp_us: j.timestamp_us,
        payload,
    })
}

pub struct WsServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl WsServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for WsServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn serve_ws<A: ToSocketAddrs>(bus: Bus, addr: A) -> Result<WsServer, BusError> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = std::thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let bus = bus.clone();
                    let flag = flag.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = handle_ws(bus, stream, flag) {
                            log::debug!("websocket client {peer}: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    log::warn!("websocket accept failed: {e}");
                    break;
                }
            }
        }
    });
    Ok(WsServer {
        addr: local,
        stop,
        handle: Some(handle),
    })
}

fn send_json(ws: &mut WebSocket<TcpStream>, env: &Envelope) -> Result<(), BusError> {
    let text = serde_json::to_string(&envelope_to_json(env)).expect("envelope serializes");
    ws.send(Message::text(text)).map_err(|e| BusError::Io(e.to_string()))
}

fn handle_ws(bus: Bus, stream: TcpStream, stop: Arc<AtomicBool>) -> Result<(), BusError> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| BusError::Io(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut subs: Vec<Subscription> = Vec::new();
    let mut drove_base = false;

    let result = loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            break Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = handle_text(&bus, text.as_str(), &mut subs, &mut drove_base);
                if let Some(env) = reply {
                    if let Err(e) = send_json(&mut ws, &env) {
                        break Err(e);
                    }
                }
            }
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) | Err(tungstenite::Error::AlreadyClosed) => break Ok(()),
            Err(e) => break Err(BusError::Io(e.to_string())),
        }
        let mut failed = None;
        for env in subs.iter().flat_map(|s| s.drain()) {
            if let Err(e) = send_json(&mut ws, &env) {
                failed = Some(e);
                break;
            }
        }
        if let Some(e) = failed {
            break Err(e);
        }
    };
    if drove_base {
        let zero = TwistMsg {
            vx: 0.0,
            vy: 0.0,
            omega: 0.0,
        };
        let _ = bus.publish_json("cmd_twist", 0, &zero);
    }
    result
}

fn handle_text(bus: &Bus, text: &str, subs: &mut Vec<Subscription>, drove_base: &mut bool) -> Option<Envelope> {
    let parsed: Result<JsonEnvelope, _> = serde_json::from_str(text);
    let j = match parsed {
        Ok(j) => j,
        Err(e) => {
            return Some(Envelope {
                topic: String::new(),
                kind: MessageKind::Error,
                seq: 0,
                timestamp_us: 0,
                payload: e.to_string().into_bytes(),
            })
        }
    };
    let fail = |j: &JsonEnvelope, e: BusError| Envelope {
        topic: j.topic.clone(),
        kind: MessageKind::Error,
        seq: j.seq,
        timestamp_us: j.timestamp_us,
        payload: e.to_string().into_bytes(),
    };
    let env = match json_to_envelope(&j) {
        Ok(env) => env,
        Err(e) => return Some(fail(&j, e)),
    };
    match env.kind {
        MessageKind::Publish => {
            if env.topic == "cmd_twist" {
                *drove_base = true;
            }
            bus.publish(&env.topic, env.timestamp_us, env.payload).err().map(|e| fail(&j, e))
        }
        MessageKind::Request => {
            let result = if env.topic == "subscribe" {
                serde_json::from_slice::<SubscribeRequest>(&env.payload)
                    .map_err(|e| BusError::Payload(e.to_string()))
                    .and_then(|req| {
                        let new: Result<Vec<_>, _> = req.topics.iter().map(|t| bus.subscribe(t)).collect();
                        subs.extend(new?);
                        Ok(env.payload.clone())
                    })
            } else {
                bus.request(&env.topic, env.timestamp_us, env.payload.clone(), REQUEST_TIMEOUT)
                    .map(|r| r.payload)
            };
            Some(match result {
                Ok(payload) => Envelope {
                    kind: MessageKind::Reply,
                    payload,
                    ..env
                },
                Err(e) => fail(&j, e),
            })
        }
        MessageKind::Reply | MessageKind::Error => None,
    }
}
