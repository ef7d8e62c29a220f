//! Offline summary of a recorded message log.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::bus::{read_log, Envelope, MessageKind};

use super::{HarnessError, MetricsReport};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicSummary {
    pub messages: usize,
    pub requests: usize,
    pub replies: usize,
    pub errors: usize,
    pub bytes: usize,
    pub first_us: u64,
    pub last_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaySummary {
    pub frames: usize,
    pub topics: BTreeMap<String, TopicSummary>,
    /// Last metrics report found in the log.
    pub metrics: Option<MetricsReport>,
}

pub fn summarize(frames: &[Envelope]) -> ReplaySummary {
    let mut out = ReplaySummary {
        frames: frames.len(),
        ..Default::default()
    };
    for env in frames {
        let t = out.topics.entry(env.topic.clone()).or_insert_with(|| TopicSummary {
            first_us: env.timestamp_us,
            ..Default::default()
        });
        match env.kind {
            MessageKind::Publish => t.messages += 1,
            MessageKind::Request => t.requests += 1,
            MessageKind::Reply => t.replies += 1,
            MessageKind::Error => t.errors += 1,
        }
        t.bytes += env.payload.len();
        t.first_us = t.first_us.min(env.timestamp_us);
        t.last_us = t.last_us.max(env.timestamp_us);
        if env.topic == "metrics" && env.kind == MessageKind::Publish {
            if let Ok(m) = serde_json::from_slice(&env.payload) {
                out.metrics = Some(m);
            }
        }
    }
    out
}

pub fn replay(path: &Path) -> Result<ReplaySummary, HarnessError> {
    let frames = read_log(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(summarize(&frames))
}

impl fmt::Display for ReplaySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} frames", self.frames)?;
        writeln!(
            f,
            "{:<12} {:>8} {:>6} {:>6} {:>6} {:>12} {:>10} {:>10}",
            "topic", "publish", "req", "reply", "error", "bytes", "first s", "last s"
        )?;
        for (name, t) in &self.topics {
            writeln!(
                f,
                "{:<12} {:>8} {:>6} {:>6} {:>6} {:>12} {:>10.3} {:>10.3}",
                name,
                t.messages,
                t.requests,
                t.replies,
                t.errors,
                t.bytes,
                t.first_us as f64 * 1e-6,
                t.last_us as f64 * 1e-6
            )?;
        }
        if let Some(m) = &self.metrics {
            writeln!(f, "metrics:")?;
            write!(f, "{}", m.to_json())?;
        }
        Ok(())
    }
}
