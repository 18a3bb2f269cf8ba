//! Data-access request workflow: submit, check for redundancy, then approve
//! (with a right-sized cluster), reject, or mark as a duplicate.
//!
//! State is event-sourced. Every transition is one [`LogRecord`]; replaying
//! the records rebuilds the exact registry. [`FileRegistry`] persists them as
//! JSON lines.

pub mod similarity;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{cluster_tier_for, Tier};

pub use similarity::{SimilarityScorer, TfCosine};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("description must not be empty")]
    EmptyDescription,
    #[error("request {0} does not exist")]
    NotFound(u64),
    #[error("request {id} is {state}, only pending requests can change state")]
    NotPending { id: u64, state: RequestState },
    #[error("request {0} is not approved and cannot be the original of a duplicate")]
    NotApproved(u64),
    #[error("threshold must be in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("total_size_gb must be > 0, got {0}")]
    InvalidSize(f64),
    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RegistryError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Pending,
    Approved,
    Rejected,
    DuplicateOf(u64),
}

impl std::fmt::Display for RequestState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestState::Pending => f.write_str("pending"),
            RequestState::Approved => f.write_str("approved"),
            RequestState::Rejected => f.write_str("rejected"),
            RequestState::DuplicateOf(id) => write!(f, "duplicate_of({id})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub id: u64,
    pub owner: String,
    pub description: String,
    pub dataset_ids: Vec<String>,
    pub state: RequestState,
    pub assigned_tier: Option<Tier>,
    /// Logical clock value of the submission.
    pub submitted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Submit,
    Approve,
    Reject,
    Duplicate,
}

/// One line of the persisted log. Fields not used by a transition are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub id: u64,
    pub transition: Transition,
    pub owner: Option<String>,
    pub description: Option<String>,
    pub dataset_ids: Option<Vec<String>>,
    pub tier: Option<Tier>,
    pub of_id: Option<u64>,
}

impl LogRecord {
    fn bare(id: u64, transition: Transition) -> Self {
        Self {
            id,
            transition,
            owner: None,
            description: None,
            dataset_ids: None,
            tier: None,
            of_id: None,
        }
    }
}

/// A redundancy hit: an approved request, its owner and the similarity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub id: u64,
    pub owner: String,
    pub score: f64,
}

/// Approved requests scoring at least `threshold` against `description`,
/// best first, older id first on ties.
pub fn redundancy_check<'a>(
    description: &str,
    history: impl IntoIterator<Item = &'a AccessRequest>,
    threshold: f64,
    scorer: &dyn SimilarityScorer,
) -> Result<Vec<Match>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RegistryError::InvalidThreshold(threshold));
    }
    let mut hits: Vec<Match> = history
        .into_iter()
        .filter(|r| r.state == RequestState::Approved)
        .map(|r| Match {
            id: r.id,
            owner: r.owner.clone(),
            score: scorer.score(description, &r.description),
        })
        .filter(|m| m.score >= threshold)
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    Ok(hits)
}

/// In-memory registry. Two registries built from the same log are equal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    requests: BTreeMap<u64, AccessRequest>,
    clock: u64,
    log: Vec<LogRecord>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn requests(&self) -> impl Iterator<Item = &AccessRequest> {
        self.requests.values()
    }

    pub fn get(&self, id: u64) -> Result<&AccessRequest> {
        self.requests.get(&id).ok_or(RegistryError::NotFound(id))
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn next_id(&self) -> u64 {
        self.requests.keys().next_back().map_or(1, |id| id + 1)
    }

    fn pending(&self, id: u64) -> Result<&AccessRequest> {
        let r = self.get(id)?;
        if r.state != RequestState::Pending {
            return Err(RegistryError::NotPending { id, state: r.state });
        }
        Ok(r)
    }

    /// Validates `record` against the current state and applies it.
    pub fn apply(&mut self, record: LogRecord) -> Result<&AccessRequest> {
        let id = record.id;
        match record.transition {
            Transition::Submit => {
                if id != self.next_id() {
                    return Err(RegistryError::Log {
                        line: self.log.len() + 1,
                        message: format!("submit id {id}, expected {}", self.next_id()),
                    });
                }
                let description = record.description.clone().unwrap_or_default();
                if description.trim().is_empty() {
                    return Err(RegistryError::EmptyDescription);
                }
                self.requests.insert(
                    id,
                    AccessRequest {
                        id,
                        owner: record.owner.clone().unwrap_or_default(),
                        description,
                        dataset_ids: record.dataset_ids.clone().unwrap_or_default(),
                        state: RequestState::Pending,
                        assigned_tier: None,
                        submitted_at: self.clock,
                    },
                );
            }
            Transition::Approve => {
                self.pending(id)?;
                let tier = record.tier.ok_or_else(|| RegistryError::Log {
                    line: self.log.len() + 1,
                    message: "approve without tier".into(),
                })?;
                let r = self.requests.get_mut(&id).expect("checked");
                r.state = RequestState::Approved;
                r.assigned_tier = Some(tier);
            }
            Transition::Reject => {
                self.pending(id)?;
                self.requests.get_mut(&id).expect("checked").state = RequestState::Rejected;
            }
            Transition::Duplicate => {
                self.pending(id)?;
                let of_id = record.of_id.ok_or_else(|| RegistryError::Log {
                    line: self.log.len() + 1,
                    message: "duplicate without of_id".into(),
                })?;
                if self.get(of_id)?.state != RequestState::Approved {
                    return Err(RegistryError::NotApproved(of_id));
                }
                self.requests.get_mut(&id).expect("checked").state =
                    RequestState::DuplicateOf(of_id);
            }
        }
        self.clock += 1;
        self.log.push(record);
        Ok(&self.requests[&id])
    }

    pub fn submit(
        &mut self,
        description: &str,
        dataset_ids: &[String],
        owner: &str,
    ) -> Result<&AccessRequest> {
        let mut rec = LogRecord::bare(self.next_id(), Transition::Submit);
        rec.owner = Some(owner.to_string());
        rec.description = Some(description.to_string());
        rec.dataset_ids = Some(dataset_ids.to_vec());
        self.apply(rec)
    }

    /// Approves and assigns the cluster tier sized for `total_size_gb`.
    pub fn approve(&mut self, id: u64, total_size_gb: f64) -> Result<&AccessRequest> {
        if !(total_size_gb.is_finite() && total_size_gb > 0.0) {
            return Err(RegistryError::InvalidSize(total_size_gb));
        }
        let mut rec = LogRecord::bare(id, Transition::Approve);
        rec.tier = Some(cluster_tier_for(total_size_gb));
        self.apply(rec)
    }

    pub fn reject(&mut self, id: u64) -> Result<&AccessRequest> {
        self.apply(LogRecord::bare(id, Transition::Reject))
    }

    /// Marks `id` as a duplicate of approved `of_id`; returns the updated
    /// request and the owner of the original.
    pub fn mark_duplicate(&mut self, id: u64, of_id: u64) -> Result<(AccessRequest, String)> {
        let mut rec = LogRecord::bare(id, Transition::Duplicate);
        rec.of_id = Some(of_id);
        let updated = self.apply(rec)?.clone();
        Ok((updated, self.requests[&of_id].owner.clone()))
    }

    /// Redundancy check of request `id` against every other approved request.
    pub fn check(
        &self,
        id: u64,
        threshold: f64,
        scorer: &dyn SimilarityScorer,
    ) -> Result<Vec<Match>> {
        let r = self.get(id)?;
        redundancy_check(
            &r.description,
            self.requests().filter(|o| o.id != id),
            threshold,
            scorer,
        )
    }

    pub fn replay(records: impl IntoIterator<Item = LogRecord>) -> Result<Self> {
        let mut reg = Self::new();
        for (i, rec) in records.into_iter().enumerate() {
            reg.apply(rec).map_err(|e| match e {
                RegistryError::Log { message, .. } => RegistryError::Log {
                    line: i + 1,
                    message,
                },
                other => RegistryError::Log {
                    line: i + 1,
                    message: other.to_string(),
                },
            })?;
        }
        Ok(reg)
    }

    pub fn from_log_str(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| RegistryError::Log {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::replay(records)
    }

    pub fn to_log_string(&self) -> String {
        self.log.iter().map(|r| record_line(r) + "\n").collect()
    }
}

fn record_line(record: &LogRecord) -> String {
    serde_json::to_string(record).expect("log record serializes")
}

/// A registry persisted as an append-only JSON-lines file. Single writer.
#[derive(Debug)]
pub struct FileRegistry {
    path: PathBuf,
    registry: Registry,
}

impl FileRegistry {
    /// Replays `path`; a missing file is an empty registry.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let registry = match fs::read_to_string(&path) {
            Ok(text) => Registry::from_log_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Registry::new(),
            Err(source) => return Err(RegistryError::Io { path, source }),
        };
        Ok(Self { path, registry })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    fn persist_last(&self) -> Result<()> {
        let rec = self.registry.log.last().expect("a transition was applied");
        let io = |source| RegistryError::Io {
            path: self.path.clone(),
            source,
        };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io)?;
        writeln!(f, "{}", record_line(rec)).map_err(io)
    }

    pub fn submit(
        &mut self,
        description: &str,
        dataset_ids: &[String],
        owner: &str,
    ) -> Result<AccessRequest> {
        let r = self
            .registry
            .submit(description, dataset_ids, owner)?
            .clone();
        self.persist_last()?;
        Ok(r)
    }

    pub fn approve(&mut self, id: u64, total_size_gb: f64) -> Result<AccessRequest> {
        let r = self.registry.approve(id, total_size_gb)?.clone();
        self.persist_last()?;
        Ok(r)
    }

    pub fn reject(&mut self, id: u64) -> Result<AccessRequest> {
        let r = self.registry.reject(id)?.clone();
        self.persist_last()?;
        Ok(r)
    }

    pub fn mark_duplicate(&mut self, id: u64, of_id: u64) -> Result<(AccessRequest, String)> {
        let out = self.registry.mark_duplicate(id, of_id)?;
        self.persist_last()?;
        Ok(out)
    }
}
