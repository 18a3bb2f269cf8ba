//! Resource-usage events and the trace that orders them.
//!
//! Exported traces are JSON lines, one [`UsageEvent`] per line with fields in
//! the order `kind, actor, start_hour, duration_hours, payload`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emission_model::{ComputeSpec, StorageMedium};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Federated,
    Centralized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Federated => "federated",
            Mode::Centralized => "centralized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Compute,
    Memory,
    Transfer,
    Storage,
}

/// Who consumed the resource. Orders silos first, then the orchestrator,
/// then the central cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Actor {
    Silo(usize),
    Orchestrator,
    Central,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Silo(k) => write!(f, "silo-{k}"),
            Actor::Orchestrator => f.write_str("orchestrator"),
            Actor::Central => f.write_str("central"),
        }
    }
}

impl From<Actor> for String {
    fn from(a: Actor) -> Self {
        a.to_string()
    }
}

impl TryFrom<String> for Actor {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "orchestrator" => Ok(Actor::Orchestrator),
            "central" => Ok(Actor::Central),
            other => other
                .strip_prefix("silo-")
                .and_then(|k| k.parse().ok())
                .map(Actor::Silo)
                .ok_or_else(|| format!("unknown actor `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    Cpu,
    Gpu,
}

/// Which network coefficient a transfer is charged at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientClass {
    /// Raw data crossing the public internet.
    Internet,
    /// Model weights moving inside one cloud.
    IntraCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Compute {
        device: Device,
        spec: ComputeSpec,
    },
    Memory {
        gb: f64,
    },
    Transfer {
        bytes: u64,
        src_region: String,
        dst_region: String,
        coefficient_class: CoefficientClass,
    },
    Storage {
        gb: f64,
        medium: StorageMedium,
        region: String,
        replicated: bool,
    },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::Compute { .. } => EventKind::Compute,
            Payload::Memory { .. } => EventKind::Memory,
            Payload::Transfer { .. } => EventKind::Transfer,
            Payload::Storage { .. } => EventKind::Storage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub kind: EventKind,
    pub actor: Actor,
    pub start_hour: f64,
    pub duration_hours: f64,
    pub payload: Payload,
}

impl UsageEvent {
    pub fn new(actor: Actor, start_hour: f64, duration_hours: f64, payload: Payload) -> Self {
        Self {
            kind: payload.kind(),
            actor,
            start_hour,
            duration_hours,
            payload,
        }
    }

    pub fn compute(actor: Actor, start_hour: f64, device: Device, spec: ComputeSpec) -> Self {
        Self::new(
            actor,
            start_hour,
            spec.duration_hours,
            Payload::Compute { device, spec },
        )
    }

    pub fn end_hour(&self) -> f64 {
        self.start_hour + self.duration_hours
    }

    pub fn transfer_bytes(&self) -> Option<u64> {
        match self.payload {
            Payload::Transfer { bytes, .. } => Some(bytes),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.kind != self.payload.kind() {
            return Err(TraceError::Invalid(format!(
                "event kind {:?} does not match its payload",
                self.kind
            )));
        }
        if !(self.start_hour.is_finite() && self.start_hour >= 0.0) {
            return Err(TraceError::Invalid(format!(
                "start_hour {} must be >= 0",
                self.start_hour
            )));
        }
        if !(self.duration_hours.is_finite() && self.duration_hours >= 0.0) {
            return Err(TraceError::Invalid(format!(
                "duration_hours {} must be >= 0",
                self.duration_hours
            )));
        }
        match &self.payload {
            Payload::Compute { spec, .. } if spec.duration_hours != self.duration_hours => Err(
                TraceError::Invalid("compute spec duration differs from event duration".into()),
            ),
            Payload::Memory { gb } | Payload::Storage { gb, .. }
                if !(gb.is_finite() && *gb >= 0.0) =>
            {
                Err(TraceError::Invalid(format!("volume {gb} GB must be >= 0")))
            }
            _ => Ok(()),
        }
    }

    fn order(&self, other: &Self) -> Ordering {
        self.start_hour
            .total_cmp(&other.start_hour)
            .then(self.actor.cmp(&other.actor))
            .then(self.kind.cmp(&other.kind))
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid event: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalModel {
    pub weights: Vec<f64>,
    pub training_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub mode: Mode,
    pub events: Vec<UsageEvent>,
    pub wall_clock_hours: f64,
    pub final_model: FinalModel,
}

impl TraceLog {
    /// Sorts the events (start hour, then actor, then kind; otherwise stable)
    /// and derives the wall clock.
    pub fn new(mode: Mode, mut events: Vec<UsageEvent>, final_model: FinalModel) -> Self {
        events.sort_by(UsageEvent::order);
        let wall_clock_hours = wall_clock(&events);
        Self {
            mode,
            events,
            wall_clock_hours,
            final_model,
        }
    }

    pub fn transfer_bytes(&self) -> u64 {
        self.events
            .iter()
            .filter_map(UsageEvent::transfer_bytes)
            .sum()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &UsageEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// One JSON object per line, newline terminated.
    pub fn to_jsonl(&self) -> String {
        events_to_jsonl(&self.events)
    }
}

/// End of the last pipeline activity. Storage events are retention periods
/// rather than work and do not extend the wall clock.
pub fn wall_clock(events: &[UsageEvent]) -> f64 {
    events
        .iter()
        .filter(|e| e.kind != EventKind::Storage)
        .map(UsageEvent::end_hour)
        .fold(0.0, f64::max)
}

pub fn events_to_jsonl(events: &[UsageEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events always serialize"));
        out.push('\n');
    }
    out
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<UsageEvent>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let event: UsageEvent = serde_json::from_str(l).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            event.validate().map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            Ok(event)
        })
        .collect()
}
