//! Scenario files: the declarative description of one federated-vs-centralized
//! comparison, plus the size-based cluster sizing rule.
//!
//! A scenario is a TOML document with exactly these top-level keys:
//! `dataset`, `silo_clusters`, `central_cluster`, `orchestrator_cluster`,
//! `shared_storage`, `factors`, `plan`, `retention_hours`, `prices`.
//! `factors` is either an inline table or a path to a factors file, resolved
//! relative to the scenario file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emission_model::{EmissionFactors, Provider, StorageMedium};

pub mod bundled {
    //! The three scenarios shipped with the crate, one per dataset scale.

    use super::{Scenario, ScenarioError};

    pub const SMALL: &str = include_str!("../scenarios/small.scenario");
    pub const MEDIUM: &str = include_str!("../scenarios/medium.scenario");
    pub const LARGE: &str = include_str!("../scenarios/large.scenario");

    pub fn small() -> Result<Scenario, ScenarioError> {
        Scenario::parse(SMALL)
    }

    pub fn medium() -> Result<Scenario, ScenarioError> {
        Scenario::parse(MEDIUM)
    }

    pub fn large() -> Result<Scenario, ScenarioError> {
        Scenario::parse(LARGE)
    }

    pub fn all() -> Result<Vec<(&'static str, Scenario)>, ScenarioError> {
        Ok(vec![
            ("small", small()?),
            ("medium", medium()?),
            ("large", large()?),
        ])
    }
}

const SHARE_SUM_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_RETENTION_HOURS: f64 = 720.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending key, if this is a validation error.
    pub fn path(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { path, .. } => Some(path),
            ScenarioError::Io { .. } => None,
        }
    }
}

type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub total_size_gb: f64,
    pub silo_shares: Vec<f64>,
    pub replication_factor_for_scale: u32,
}

impl DatasetSpec {
    pub fn silo_count(&self) -> usize {
        self.silo_shares.len()
    }

    fn equal_shares(&self) -> bool {
        self.silo_shares.windows(2).all(|w| w[0] == w[1])
    }

    /// Volume held by one silo. Equal shares divide the total exactly.
    pub fn shard_gb(&self, silo: usize) -> f64 {
        if self.equal_shares() {
            self.total_size_gb / self.silo_count() as f64
        } else {
            self.total_size_gb * self.silo_shares[silo]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub provider: Provider,
    pub region: String,
    pub node_count: u32,
    pub cpu_tdp_watts: f64,
    pub gpus_per_node: u32,
    pub gpu_tdp_watts: f64,
    pub memory_gb_per_node: f64,
    /// Price per node-hour.
    pub hourly_price: f64,
    pub storage_medium: StorageMedium,
}

impl ClusterSpec {
    pub fn provisioned_memory_gb(&self) -> f64 {
        f64::from(self.node_count) * self.memory_gb_per_node
    }

    pub fn gpu_count(&self) -> u32 {
        self.node_count * self.gpus_per_node
    }
}

/// Size class of a compute cluster. Each tier doubles the node count of the
/// previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Small,
    Medium,
    Large,
}

impl Tier {
    pub const SMALL_MAX_GB: f64 = 2.0;
    pub const MEDIUM_MAX_GB: f64 = 20.0;

    pub fn node_count(self) -> u32 {
        match self {
            Tier::Small => 1,
            Tier::Medium => 2,
            Tier::Large => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Small => "small",
            Tier::Medium => "medium",
            Tier::Large => "large",
        }
    }

    /// A cluster of this tier built from the default node hardware.
    pub fn template(
        self,
        name: impl Into<String>,
        provider: Provider,
        region: impl Into<String>,
    ) -> ClusterSpec {
        ClusterSpec {
            name: name.into(),
            provider,
            region: region.into(),
            node_count: self.node_count(),
            cpu_tdp_watts: NodeDefaults::CPU_TDP_WATTS,
            gpus_per_node: NodeDefaults::GPUS_PER_NODE,
            gpu_tdp_watts: NodeDefaults::GPU_TDP_WATTS,
            memory_gb_per_node: NodeDefaults::MEMORY_GB_PER_NODE,
            hourly_price: NodeDefaults::HOURLY_PRICE,
            storage_medium: StorageMedium::Ssd,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

struct NodeDefaults;

impl NodeDefaults {
    const CPU_TDP_WATTS: f64 = 65.0;
    const GPUS_PER_NODE: u32 = 1;
    const GPU_TDP_WATTS: f64 = 70.0;
    const MEMORY_GB_PER_NODE: f64 = 16.0;
    const HOURLY_PRICE: f64 = 0.6;
}

/// Size-based cluster selection: <= 2 GB small, <= 20 GB medium, else large.
pub fn cluster_tier_for(total_size_gb: f64) -> Tier {
    if total_size_gb <= Tier::SMALL_MAX_GB {
        Tier::Small
    } else if total_size_gb <= Tier::MEDIUM_MAX_GB {
        Tier::Medium
    } else {
        Tier::Large
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    FullBatch,
    Minibatch { batch_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub rounds: u32,
    pub local_epochs: u32,
    pub model_param_count: u64,
    pub bytes_per_param: u32,
    pub learning_rate: f64,
    pub batch_mode: BatchMode,
    pub seed: u64,
    pub cpu_load: f64,
    pub gpu_load: f64,
    /// Data processed per hour of training, in GB-epochs.
    pub train_gb_per_hour: f64,
    /// Weight volume averaged per hour on the orchestrator.
    pub aggregate_gb_per_hour: f64,
    pub intra_cloud_gb_per_hour: f64,
    pub internet_gb_per_hour: f64,
}

impl TrainingPlan {
    pub fn payload_bytes(&self) -> u64 {
        self.model_param_count * u64::from(self.bytes_per_param)
    }

    pub fn payload_gb(&self) -> f64 {
        self.payload_bytes() as f64 / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedStorage {
    pub medium: StorageMedium,
    pub region: String,
    pub provider: Provider,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub storage_per_gb_month: f64,
    pub egress_per_gb: f64,
}

/// One validated comparison experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub retention_hours: f64,
    pub dataset: DatasetSpec,
    pub silo_clusters: Vec<ClusterSpec>,
    pub central_cluster: ClusterSpec,
    pub orchestrator_cluster: ClusterSpec,
    pub shared_storage: SharedStorage,
    pub factors: EmissionFactors,
    pub plan: TrainingPlan,
    pub prices: Prices,
}

/// Named dataset scales used by sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatasetScale {
    Small,
    Medium,
    Large,
}

impl DatasetScale {
    pub const ALL: [DatasetScale; 3] = [
        DatasetScale::Small,
        DatasetScale::Medium,
        DatasetScale::Large,
    ];

    pub fn total_size_gb(self) -> f64 {
        match self {
            DatasetScale::Small => 1.2,
            DatasetScale::Medium => 12.0,
            DatasetScale::Large => 120.0,
        }
    }

    pub fn replication_factor(self) -> u32 {
        match self {
            DatasetScale::Small => 1,
            DatasetScale::Medium => 10,
            DatasetScale::Large => 100,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetScale::Small => "small",
            DatasetScale::Medium => "medium",
            DatasetScale::Large => "large",
        }
    }
}

impl FromStr for DatasetScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "small" => Ok(DatasetScale::Small),
            "medium" => Ok(DatasetScale::Medium),
            "large" => Ok(DatasetScale::Large),
            other => Err(format!(
                "unknown scale `{other}` (expected small, medium or large)"
            )),
        }
    }
}

impl fmt::Display for DatasetScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Scenario {
    /// Parses and validates a scenario document. A `factors` path is resolved
    /// against the current directory.
    pub fn parse(doc: &str) -> Result<Scenario> {
        Self::parse_recording(doc, None).map(|(s, _)| s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let doc = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_recording(&doc, path.parent()).map(|(s, _)| s)
    }

    /// Parses a document and also returns the dotted paths of every key that
    /// was filled from a default.
    pub fn parse_recording(doc: &str, base_dir: Option<&Path>) -> Result<(Scenario, Vec<String>)> {
        let de = toml::Deserializer::new(doc);
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::invalid(
                if path == "." { "<root>".into() } else { path },
                e.inner().message(),
            )
        })?;
        let mut defaults = Vec::new();
        let scenario = raw.resolve(base_dir, &mut defaults)?;
        scenario.validate()?;
        Ok((scenario, defaults))
    }

    /// Fully explicit TOML; parsing it back yields an equal scenario.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario always serializes")
    }

    pub fn silo_count(&self) -> usize {
        self.silo_clusters.len()
    }

    /// Copy of this scenario at a different dataset size with every node
    /// count re-derived from the sizing rule.
    pub fn at_size(
        &self,
        total_size_gb: f64,
        replication_factor_for_scale: u32,
    ) -> Result<Scenario> {
        let mut s = self.clone();
        s.dataset.total_size_gb = total_size_gb;
        s.dataset.replication_factor_for_scale = replication_factor_for_scale;
        s.retier();
        s.validate()?;
        Ok(s)
    }

    pub fn at_scale(&self, scale: DatasetScale) -> Result<Scenario> {
        self.at_size(scale.total_size_gb(), scale.replication_factor())
    }

    /// Silos are sized by their shard, the central cluster by the whole
    /// dataset, the orchestrator always gets the smallest tier.
    pub fn retier(&mut self) {
        for (k, cluster) in self.silo_clusters.iter_mut().enumerate() {
            cluster.node_count = cluster_tier_for(self.dataset.shard_gb(k)).node_count();
        }
        self.central_cluster.node_count = cluster_tier_for(self.dataset.total_size_gb).node_count();
        self.orchestrator_cluster.node_count = Tier::Small.node_count();
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        positive("dataset.total_size_gb", d.total_size_gb)?;
        if d.replication_factor_for_scale < 1 {
            return Err(ScenarioError::invalid(
                "dataset.replication_factor_for_scale",
                "must be >= 1",
            ));
        }
        if d.silo_shares.is_empty() {
            return Err(ScenarioError::invalid(
                "dataset.silo_shares",
                "at least one silo is required",
            ));
        }
        for (i, &share) in d.silo_shares.iter().enumerate() {
            if !(share > 0.0 && share <= 1.0) {
                return Err(ScenarioError::invalid(
                    format!("dataset.silo_shares[{i}]"),
                    format!("each share must be in (0, 1], got {share}"),
                ));
            }
        }
        let sum: f64 = d.silo_shares.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(ScenarioError::invalid(
                "dataset.silo_shares",
                format!("silo_shares must sum to 1, got {sum}"),
            ));
        }
        if d.silo_count() != self.silo_clusters.len() {
            return Err(ScenarioError::invalid(
                "silo_clusters",
                format!(
                    "{} silo clusters for {} silo shares",
                    self.silo_clusters.len(),
                    d.silo_count()
                ),
            ));
        }

        for (i, c) in self.silo_clusters.iter().enumerate() {
            validate_cluster(&format!("silo_clusters[{i}]"), c)?;
            if self.silo_clusters[..i].iter().any(|o| o.name == c.name) {
                return Err(ScenarioError::invalid(
                    format!("silo_clusters[{i}].name"),
                    format!("duplicate silo name `{}`", c.name),
                ));
            }
        }
        validate_cluster("central_cluster", &self.central_cluster)?;
        validate_cluster("orchestrator_cluster", &self.orchestrator_cluster)?;

        self.factors
            .validate()
            .map_err(|e| ScenarioError::invalid(format!("factors.{}", e.field), e.reason))?;

        // Every region must have a carbon intensity and belong to exactly one provider.
        let mut owners: BTreeMap<&str, (&Provider, String)> = BTreeMap::new();
        let mut endpoints: Vec<(String, &str, &Provider)> = self
            .silo_clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    format!("silo_clusters[{i}]"),
                    c.region.as_str(),
                    &c.provider,
                )
            })
            .collect();
        endpoints.push((
            "central_cluster".into(),
            &self.central_cluster.region,
            &self.central_cluster.provider,
        ));
        endpoints.push((
            "orchestrator_cluster".into(),
            &self.orchestrator_cluster.region,
            &self.orchestrator_cluster.provider,
        ));
        endpoints.push((
            "shared_storage".into(),
            &self.shared_storage.region,
            &self.shared_storage.provider,
        ));
        for (path, region, provider) in endpoints {
            if !self.factors.ci_by_region.contains_key(region) {
                return Err(ScenarioError::invalid(
                    format!("{path}.region"),
                    format!("region `{region}` has no entry in factors.ci_by_region"),
                ));
            }
            if self.factors.pue(provider).is_err() {
                return Err(ScenarioError::invalid(
                    format!("{path}.provider"),
                    format!("provider `{provider}` has no entry in factors.pue_by_provider"),
                ));
            }
            match owners.get(region) {
                Some((owner, first)) if *owner != provider => {
                    return Err(ScenarioError::invalid(
                        format!("{path}.region"),
                        format!("region `{region}` is assigned to {provider} here but to {owner} at {first}"),
                    ));
                }
                Some(_) => {}
                None => {
                    owners.insert(region, (provider, path));
                }
            }
        }

        let p = &self.plan;
        if p.rounds < 1 {
            return Err(ScenarioError::invalid("plan.rounds", "must be >= 1"));
        }
        if p.local_epochs < 1 {
            return Err(ScenarioError::invalid("plan.local_epochs", "must be >= 1"));
        }
        if p.payload_bytes() == 0 {
            return Err(ScenarioError::invalid(
                "plan.model_param_count",
                "model_param_count * bytes_per_param must be > 0",
            ));
        }
        positive("plan.learning_rate", p.learning_rate)?;
        fraction("plan.cpu_load", p.cpu_load)?;
        fraction("plan.gpu_load", p.gpu_load)?;
        positive("plan.train_gb_per_hour", p.train_gb_per_hour)?;
        positive("plan.aggregate_gb_per_hour", p.aggregate_gb_per_hour)?;
        positive("plan.intra_cloud_gb_per_hour", p.intra_cloud_gb_per_hour)?;
        positive("plan.internet_gb_per_hour", p.internet_gb_per_hour)?;
        if let BatchMode::Minibatch { batch_size: 0 } = p.batch_mode {
            return Err(ScenarioError::invalid(
                "plan.batch_mode.minibatch.batch_size",
                "must be >= 1",
            ));
        }

        non_negative("retention_hours", self.retention_hours)?;
        non_negative(
            "prices.storage_per_gb_month",
            self.prices.storage_per_gb_month,
        )?;
        non_negative("prices.egress_per_gb", self.prices.egress_per_gb)?;
        Ok(())
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(
            path,
            format!("must be a finite value >= 0, got {v}"),
        ))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(
            path,
            format!("must be a finite value > 0, got {v}"),
        ))
    }
}

fn fraction(path: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ScenarioError::invalid(
            path,
            format!("must be within [0, 1], got {v}"),
        ))
    }
}

fn validate_cluster(path: &str, c: &ClusterSpec) -> Result<()> {
    if c.name.trim().is_empty() {
        return Err(ScenarioError::invalid(
            format!("{path}.name"),
            "must not be empty",
        ));
    }
    if c.node_count < 1 {
        return Err(ScenarioError::invalid(
            format!("{path}.node_count"),
            "must be >= 1",
        ));
    }
    non_negative(&format!("{path}.cpu_tdp_watts"), c.cpu_tdp_watts)?;
    non_negative(&format!("{path}.gpu_tdp_watts"), c.gpu_tdp_watts)?;
    non_negative(&format!("{path}.memory_gb_per_node"), c.memory_gb_per_node)?;
    non_negative(&format!("{path}.hourly_price"), c.hourly_price)?;
    Ok(())
}

// Document layer: every optional key is an Option so defaults can be recorded.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    dataset: RawDataset,
    silo_clusters: Vec<RawCluster>,
    central_cluster: RawCluster,
    orchestrator_cluster: RawCluster,
    shared_storage: RawSharedStorage,
    factors: Option<toml::Value>,
    plan: RawPlan,
    retention_hours: Option<f64>,
    prices: Option<RawPrices>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    total_size_gb: f64,
    silo_shares: Option<Vec<f64>>,
    replication_factor_for_scale: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    name: String,
    provider: Provider,
    region: String,
    node_count: Option<u32>,
    cpu_tdp_watts: Option<f64>,
    gpus_per_node: Option<u32>,
    gpu_tdp_watts: Option<f64>,
    memory_gb_per_node: Option<f64>,
    hourly_price: Option<f64>,
    storage_medium: Option<StorageMedium>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSharedStorage {
    medium: StorageMedium,
    region: String,
    provider: Option<Provider>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    rounds: u32,
    local_epochs: u32,
    model_param_count: u64,
    bytes_per_param: Option<u32>,
    learning_rate: f64,
    batch_mode: Option<BatchMode>,
    seed: Option<u64>,
    cpu_load: Option<f64>,
    gpu_load: Option<f64>,
    train_gb_per_hour: Option<f64>,
    aggregate_gb_per_hour: Option<f64>,
    intra_cloud_gb_per_hour: Option<f64>,
    internet_gb_per_hour: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrices {
    storage_per_gb_month: Option<f64>,
    egress_per_gb: Option<f64>,
}

struct Recorder<'a>(&'a mut Vec<String>);

impl Recorder<'_> {
    fn or<T>(&mut self, value: Option<T>, path: impl Into<String>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(path.into());
            default
        })
    }
}

impl RawCluster {
    fn resolve(self, path: &str, tier: Tier, rec: &mut Recorder<'_>) -> ClusterSpec {
        let t = tier.template(
            self.name.clone(),
            self.provider.clone(),
            self.region.clone(),
        );
        ClusterSpec {
            node_count: rec.or(self.node_count, format!("{path}.node_count"), t.node_count),
            cpu_tdp_watts: rec.or(
                self.cpu_tdp_watts,
                format!("{path}.cpu_tdp_watts"),
                t.cpu_tdp_watts,
            ),
            gpus_per_node: rec.or(
                self.gpus_per_node,
                format!("{path}.gpus_per_node"),
                t.gpus_per_node,
            ),
            gpu_tdp_watts: rec.or(
                self.gpu_tdp_watts,
                format!("{path}.gpu_tdp_watts"),
                t.gpu_tdp_watts,
            ),
            memory_gb_per_node: rec.or(
                self.memory_gb_per_node,
                format!("{path}.memory_gb_per_node"),
                t.memory_gb_per_node,
            ),
            hourly_price: rec.or(
                self.hourly_price,
                format!("{path}.hourly_price"),
                t.hourly_price,
            ),
            storage_medium: rec.or(
                self.storage_medium,
                format!("{path}.storage_medium"),
                t.storage_medium,
            ),
            name: self.name,
            provider: self.provider,
            region: self.region,
        }
    }
}

impl RawScenario {
    fn resolve(self, base_dir: Option<&Path>, defaults: &mut Vec<String>) -> Result<Scenario> {
        let mut rec = Recorder(defaults);
        let silo_count = self.silo_clusters.len();
        if silo_count == 0 {
            return Err(ScenarioError::invalid(
                "silo_clusters",
                "at least one silo cluster is required",
            ));
        }
        let silo_shares = rec.or(
            self.dataset.silo_shares,
            "dataset.silo_shares",
            vec![1.0 / silo_count as f64; silo_count],
        );
        let dataset = DatasetSpec {
            total_size_gb: self.dataset.total_size_gb,
            replication_factor_for_scale: rec.or(
                self.dataset.replication_factor_for_scale,
                "dataset.replication_factor_for_scale",
                1,
            ),
            silo_shares,
        };
        if dataset.silo_count() != silo_count {
            return Err(ScenarioError::invalid(
                "silo_clusters",
                format!(
                    "{silo_count} silo clusters for {} silo shares",
                    dataset.silo_count()
                ),
            ));
        }

        let silo_clusters = self
            .silo_clusters
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                let tier = cluster_tier_for(dataset.shard_gb(k));
                c.resolve(&format!("silo_clusters[{k}]"), tier, &mut rec)
            })
            .collect();
        let central_cluster = self.central_cluster.resolve(
            "central_cluster",
            cluster_tier_for(dataset.total_size_gb),
            &mut rec,
        );
        let orchestrator_cluster =
            self.orchestrator_cluster
                .resolve("orchestrator_cluster", Tier::Small, &mut rec);

        let shared_storage = SharedStorage {
            provider: rec.or(
                self.shared_storage.provider,
                "shared_storage.provider",
                orchestrator_cluster.provider.clone(),
            ),
            medium: self.shared_storage.medium,
            region: self.shared_storage.region,
        };

        let factors = match self.factors {
            None => {
                rec.0.push("factors".into());
                EmissionFactors::default()
            }
            Some(toml::Value::String(rel)) => {
                let path = base_dir
                    .map(|b| b.join(&rel))
                    .unwrap_or_else(|| PathBuf::from(&rel));
                let doc = std::fs::read_to_string(&path)
                    .map_err(|source| ScenarioError::Io { path, source })?;
                EmissionFactors::from_toml_str(&doc)
                    .map_err(|e| ScenarioError::invalid("factors", e.to_string()))?
            }
            Some(value @ toml::Value::Table(_)) => {
                serde_path_to_error::deserialize::<_, EmissionFactors>(value).map_err(|e| {
                    ScenarioError::invalid(format!("factors.{}", e.path()), e.inner().to_string())
                })?
            }
            Some(_) => {
                return Err(ScenarioError::invalid(
                    "factors",
                    "expected an inline table or a path to a factors file",
                ))
            }
        };

        let p = self.plan;
        let plan = TrainingPlan {
            rounds: p.rounds,
            local_epochs: p.local_epochs,
            model_param_count: p.model_param_count,
            bytes_per_param: rec.or(p.bytes_per_param, "plan.bytes_per_param", 4),
            learning_rate: p.learning_rate,
            batch_mode: rec.or(p.batch_mode, "plan.batch_mode", BatchMode::FullBatch),
            seed: rec.or(p.seed, "plan.seed", 42),
            cpu_load: rec.or(p.cpu_load, "plan.cpu_load", 0.5),
            gpu_load: rec.or(p.gpu_load, "plan.gpu_load", 0.8),
            train_gb_per_hour: rec.or(p.train_gb_per_hour, "plan.train_gb_per_hour", 10.0),
            aggregate_gb_per_hour: rec.or(
                p.aggregate_gb_per_hour,
                "plan.aggregate_gb_per_hour",
                3600.0,
            ),
            intra_cloud_gb_per_hour: rec.or(
                p.intra_cloud_gb_per_hour,
                "plan.intra_cloud_gb_per_hour",
                450.0,
            ),
            internet_gb_per_hour: rec.or(p.internet_gb_per_hour, "plan.internet_gb_per_hour", 45.0),
        };

        let prices = match self.prices {
            Some(p) => Prices {
                storage_per_gb_month: rec.or(
                    p.storage_per_gb_month,
                    "prices.storage_per_gb_month",
                    0.02,
                ),
                egress_per_gb: rec.or(p.egress_per_gb, "prices.egress_per_gb", 0.0),
            },
            None => {
                rec.0.push("prices".into());
                Prices {
                    storage_per_gb_month: 0.02,
                    egress_per_gb: 0.0,
                }
            }
        };

        Ok(Scenario {
            retention_hours: rec.or(
                self.retention_hours,
                "retention_hours",
                DEFAULT_RETENTION_HOURS,
            ),
            dataset,
            silo_clusters,
            central_cluster,
            orchestrator_cluster,
            shared_storage,
            factors,
            plan,
            prices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[dataset]
total_size_gb = 4.0

[[silo_clusters]]
name = "a"
provider = "Azure"
region = "westeurope"

[[silo_clusters]]
name = "b"
provider = "Azure"
region = "westeurope"

[central_cluster]
name = "central"
provider = "Azure"
region = "westeurope"

[orchestrator_cluster]
name = "orchestrator"
provider = "Azure"
region = "westeurope"

[shared_storage]
medium = "SSD"
region = "westeurope"

[factors.ci_by_region]
westeurope = 400.0

[plan]
rounds = 3
local_epochs = 1
model_param_count = 1000
learning_rate = 0.05
"#;

    fn err_path(doc: &str) -> String {
        Scenario::parse(doc)
            .unwrap_err()
            .path()
            .unwrap()
            .to_string()
    }

    #[test]
    fn minimal_document_parses_with_two_silos() {
        let (s, defaults) = Scenario::parse_recording(MINIMAL, None).unwrap();
        assert_eq!(s.silo_clusters.len(), 2);
        assert_eq!(s.dataset.silo_shares, vec![0.5, 0.5]);
        assert_eq!(s.retention_hours, 720.0);
        assert_eq!(s.plan.bytes_per_param, 4);
        assert_eq!(s.plan.payload_bytes(), 4000);
        // 2 GB shards are small, the 4 GB whole is medium
        assert_eq!(s.silo_clusters[0].node_count, 1);
        assert_eq!(s.central_cluster.node_count, 2);
        assert_eq!(s.orchestrator_cluster.node_count, 1);
        assert_eq!(s.shared_storage.provider, Provider::Azure);
        for key in [
            "retention_hours",
            "dataset.silo_shares",
            "silo_clusters[1].node_count",
            "plan.seed",
            "prices",
        ] {
            assert!(
                defaults.iter().any(|d| d == key),
                "{key} not recorded in {defaults:?}"
            );
        }
        assert!(!defaults.iter().any(|d| d == "factors"));
    }

    #[test]
    fn shares_must_sum_to_one() {
        let doc = MINIMAL.replace(
            "total_size_gb = 4.0",
            "total_size_gb = 4.0\nsilo_shares = [0.5, 0.6]",
        );
        let err = Scenario::parse(&doc).unwrap_err();
        assert_eq!(err.path(), Some("dataset.silo_shares"));
        assert!(
            err.to_string().contains("silo_shares must sum to 1"),
            "{err}"
        );
    }

    #[test]
    fn unknown_and_missing_keys_name_their_path() {
        let doc = MINIMAL.replace("rounds = 3", "rounds = 3\nround_count = 4");
        assert_eq!(err_path(&doc), "plan.round_count");

        let doc = MINIMAL.replace("learning_rate = 0.05", "");
        assert_eq!(err_path(&doc), "plan");

        let doc = MINIMAL.replace(
            "westeurope = 400.0",
            "westeurope = 400.0\nwest_europe = 1.0\n[factors.extra]",
        );
        assert!(err_path(&doc).starts_with("factors"));

        let doc = format!("bogus = 1\n{MINIMAL}");
        assert!(Scenario::parse(&doc)
            .unwrap_err()
            .to_string()
            .contains("bogus"));
    }

    #[test]
    fn invariant_violations_name_their_path() {
        let doc = MINIMAL.replace("total_size_gb = 4.0", "total_size_gb = 0.0");
        assert_eq!(err_path(&doc), "dataset.total_size_gb");

        let doc = MINIMAL.replace(
            "total_size_gb = 4.0",
            "total_size_gb = 4.0\nsilo_shares = [1.0]",
        );
        assert_eq!(err_path(&doc), "silo_clusters");

        let doc = MINIMAL.replacen("region = \"westeurope\"", "region = \"mars-north\"", 1);
        assert_eq!(err_path(&doc), "silo_clusters[0].region");

        let doc = MINIMAL.replace("name = \"b\"", "name = \"a\"");
        assert_eq!(err_path(&doc), "silo_clusters[1].name");

        let doc = MINIMAL.replace("rounds = 3", "rounds = 0");
        assert_eq!(err_path(&doc), "plan.rounds");

        let doc = MINIMAL.replace(
            "learning_rate = 0.05",
            "learning_rate = 0.05\ngpu_load = 1.5",
        );
        assert_eq!(err_path(&doc), "plan.gpu_load");

        let doc = MINIMAL.replace("[plan]", "[factors.pue_by_provider]\nAzure = 0.5\n[plan]");
        assert_eq!(err_path(&doc), "factors.pue_by_provider.Azure");

        let doc = MINIMAL.replacen("provider = \"Azure\"", "provider = \"AWS\"", 1);
        assert_eq!(err_path(&doc), "silo_clusters[1].region");
    }

    #[test]
    fn factors_may_reference_a_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("grid.factors"),
            "[ci_by_region]\nwesteurope = 123.0\n",
        )
        .unwrap();
        let doc = format!(
            "factors = \"grid.factors\"\n{}",
            MINIMAL.replace("[factors.ci_by_region]\nwesteurope = 400.0", "")
        );
        std::fs::write(dir.path().join("x.scenario"), &doc).unwrap();
        let s = Scenario::from_file(dir.path().join("x.scenario"))
            .map_err(|e| e.to_string())
            .unwrap();
        assert_eq!(s.factors.ci("westeurope").unwrap(), 123.0);
        assert_eq!(s.factors.network_kwh_per_gb_high, 0.06);
    }

    #[test]
    fn tier_examples_and_boundaries() {
        assert_eq!(cluster_tier_for(1.2), Tier::Small);
        assert_eq!(cluster_tier_for(2.0), Tier::Small);
        assert_eq!(cluster_tier_for(2.0000001), Tier::Medium);
        assert_eq!(cluster_tier_for(12.0), Tier::Medium);
        assert_eq!(cluster_tier_for(20.0), Tier::Medium);
        assert_eq!(cluster_tier_for(120.0), Tier::Large);
        assert_eq!(
            [Tier::Small, Tier::Medium, Tier::Large].map(Tier::node_count),
            [1, 2, 4]
        );
    }

    #[test]
    fn bundled_scenarios_mirror_the_three_scales() {
        let sizes: Vec<f64> = bundled::all()
            .unwrap()
            .iter()
            .map(|(_, s)| s.dataset.total_size_gb)
            .collect();
        assert_eq!(sizes, vec![1.2, 12.0, 120.0]);
        assert_eq!(bundled::medium().unwrap().dataset.total_size_gb, 12.0);
        let large = bundled::large().unwrap();
        assert_eq!(large.at_scale(DatasetScale::Large).unwrap(), large);
    }

    #[test]
    fn equal_shares_divide_exactly() {
        let s = bundled::medium().unwrap();
        for k in 0..s.silo_count() {
            assert_eq!(s.dataset.shard_gb(k), 4.0);
        }
    }

    #[test]
    fn at_scale_retiers_every_cluster() {
        let s = bundled::small()
            .unwrap()
            .at_scale(DatasetScale::Large)
            .unwrap();
        assert_eq!(s.dataset.total_size_gb, 120.0);
        assert_eq!(s.central_cluster.node_count, 4);
        assert!(s.silo_clusters.iter().all(|c| c.node_count == 4));
        assert_eq!(s.orchestrator_cluster.node_count, 1);
    }

    proptest! {
        #[test]
        fn tier_is_monotone(a in 0.001f64..500.0, b in 0.001f64..500.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cluster_tier_for(lo) <= cluster_tier_for(hi));
        }

        #[test]
        fn parse_serialize_parse_is_idempotent(
            size in 0.1f64..300.0,
            k in 1usize..6,
            rounds in 1u32..30,
            retention in 0.0f64..5000.0,
        ) {
            let mut s = bundled::small().unwrap();
            let template = s.silo_clusters[0].clone();
            s.silo_clusters = (0..k)
                .map(|i| ClusterSpec { name: format!("silo-{i}"), ..template.clone() })
                .collect();
            s.dataset.silo_shares = vec![1.0 / k as f64; k];
            s.plan.rounds = rounds;
            s.retention_hours = retention;
            let s = s.at_size(size, 1).unwrap();
            let first = Scenario::parse(&s.to_toml_string()).unwrap();
            let second = Scenario::parse(&first.to_toml_string()).unwrap();
            prop_assert_eq!(&first, &s);
            prop_assert_eq!(first, second);
        }

        #[test]
        fn equal_shares_give_total_over_k(size in 0.1f64..1000.0, k in 1usize..12) {
            let d = DatasetSpec {
                total_size_gb: size,
                silo_shares: vec![1.0 / k as f64; k],
                replication_factor_for_scale: 1,
            };
            for i in 0..k {
                prop_assert_eq!(d.shard_gb(i), size / k as f64);
            }
        }
    }
}
