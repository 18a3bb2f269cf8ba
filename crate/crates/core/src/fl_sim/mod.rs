//! Deterministic simulation of both deployment styles over a [`Scenario`].
//!
//! The toy model is linear regression trained by gradient descent on
//! synthetic data. Every simulated duration is derived from counted work:
//! a trainer call that processed `m` of the `N` synthetic samples stands for
//! `m / N * total_size_gb` GB-epochs of real data, which runs at
//! `plan.train_gb_per_hour`. Node count does not change throughput; a larger
//! tier is more hardware for the same time.
//!
//! Federated round layout, per silo `k` (silos run concurrently):
//!
//! ```text
//! download global ─► train local_epochs ─► upload weights
//! ```
//!
//! then, once the slowest silo is done, the orchestrator reads the uploaded
//! weights (one payload), aggregates, and writes the new global model (one
//! payload). That is `2K + 2` payload transfers per round through the shared
//! storage, which holds `K + 1` weight blobs for the whole run.
//!
//! Centralized layout: every silo ships its shard over the internet to the
//! central region, the copy is stored for `retention_hours`, and the central
//! cluster trains `rounds * local_epochs` epochs over the union.

pub mod synthetic;
pub mod trace;
pub mod train;

use thiserror::Error;

use crate::emission_model::ComputeSpec;
use crate::scenario::{ClusterSpec, Scenario};

pub use synthetic::{generate_synthetic, partition_iid, Samples, SyntheticDataset};
pub use trace::{
    events_from_jsonl, events_to_jsonl, wall_clock, Actor, CoefficientClass, Device, EventKind,
    FinalModel, Mode, Payload, TraceError, TraceLog, UsageEvent,
};
pub use train::{fedavg_aggregate, local_train, mse, LocalUpdate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(
        "training diverged at epoch {epoch} with learning_rate {learning_rate}: loss is not finite"
    )]
    Divergence { learning_rate: f64, epoch: u32 },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("partition: {0}")]
    Partition(String),
    #[error("aggregation: {0}")]
    Aggregate(String),
}

/// Compute (one event per device class present) and memory events for one
/// busy interval of a cluster.
fn busy_interval(
    events: &mut Vec<UsageEvent>,
    actor: Actor,
    cluster: &ClusterSpec,
    scenario: &Scenario,
    start: f64,
    hours: f64,
    working_set_gb: f64,
) {
    let plan = &scenario.plan;
    events.push(UsageEvent::compute(
        actor,
        start,
        Device::Cpu,
        ComputeSpec {
            unit_count: cluster.node_count,
            tdp_watts: cluster.cpu_tdp_watts,
            load_fraction: plan.cpu_load,
            duration_hours: hours,
        },
    ));
    if cluster.gpu_count() > 0 {
        events.push(UsageEvent::compute(
            actor,
            start,
            Device::Gpu,
            ComputeSpec {
                unit_count: cluster.gpu_count(),
                tdp_watts: cluster.gpu_tdp_watts,
                load_fraction: plan.gpu_load,
                duration_hours: hours,
            },
        ));
    }
    // Provisioned memory, grown when the working set does not fit.
    let gb = cluster.provisioned_memory_gb().max(working_set_gb);
    events.push(UsageEvent::new(actor, start, hours, Payload::Memory { gb }));
}

fn transfer(
    actor: Actor,
    start: f64,
    bytes: u64,
    src: &str,
    dst: &str,
    class: CoefficientClass,
    gb_per_hour: f64,
) -> UsageEvent {
    UsageEvent::new(
        actor,
        start,
        bytes as f64 / 1e9 / gb_per_hour,
        Payload::Transfer {
            bytes,
            src_region: src.to_string(),
            dst_region: dst.to_string(),
            coefficient_class: class,
        },
    )
}

fn final_model(weights: Vec<f64>, train: &Samples, holdout: &Samples) -> FinalModel {
    FinalModel {
        training_loss: mse(train, &weights),
        eval_loss: mse(holdout, &weights),
        weights,
    }
}

fn datasets(dataset: &SyntheticDataset) -> Result<(Samples, Samples), SimError> {
    Ok((
        generate_synthetic(dataset)?,
        generate_synthetic(&dataset.holdout())?,
    ))
}

pub fn run_federated(
    scenario: &Scenario,
    dataset: &SyntheticDataset,
) -> Result<TraceLog, SimError> {
    let plan = &scenario.plan;
    let (samples, holdout) = datasets(dataset)?;
    let shards = partition_iid(&samples, &scenario.dataset.silo_shares, plan.seed)?;
    let sizes: Vec<usize> = shards.iter().map(Samples::len).collect();
    let gb_per_sample = scenario.dataset.total_size_gb / samples.len() as f64;
    let payload = plan.payload_bytes();
    let storage_region = scenario.shared_storage.region.as_str();
    let k = scenario.silo_count();

    let mut events = Vec::new();
    let mut global = vec![0.0; samples.n_features()];
    let mut round_start = 0.0;

    for _ in 0..plan.rounds {
        let mut locals = Vec::with_capacity(k);
        let mut silos_done = round_start;
        for (silo, (cluster, shard)) in scenario.silo_clusters.iter().zip(&shards).enumerate() {
            let actor = Actor::Silo(silo);
            let down = transfer(
                actor,
                round_start,
                payload,
                storage_region,
                &cluster.region,
                CoefficientClass::IntraCloud,
                plan.intra_cloud_gb_per_hour,
            );
            let train_start = down.end_hour();
            events.push(down);

            let update = local_train(
                shard,
                &global,
                plan.local_epochs,
                plan.learning_rate,
                plan.batch_mode,
            )?;
            let hours = update.samples_processed as f64 * gb_per_sample / plan.train_gb_per_hour;
            let shard_gb = shard.len() as f64 * gb_per_sample;
            busy_interval(
                &mut events,
                actor,
                cluster,
                scenario,
                train_start,
                hours,
                shard_gb,
            );

            let up = transfer(
                actor,
                train_start + hours,
                payload,
                &cluster.region,
                storage_region,
                CoefficientClass::IntraCloud,
                plan.intra_cloud_gb_per_hour,
            );
            silos_done = silos_done.max(up.end_hour());
            events.push(up);
            locals.push(update.weights);
        }

        let orch = &scenario.orchestrator_cluster;
        let read = transfer(
            Actor::Orchestrator,
            silos_done,
            payload,
            storage_region,
            &orch.region,
            CoefficientClass::IntraCloud,
            plan.intra_cloud_gb_per_hour,
        );
        let agg_start = read.end_hour();
        events.push(read);
        let weights_gb = k as f64 * plan.payload_gb();
        let agg_hours = weights_gb / plan.aggregate_gb_per_hour;
        busy_interval(
            &mut events,
            Actor::Orchestrator,
            orch,
            scenario,
            agg_start,
            agg_hours,
            weights_gb,
        );
        global = fedavg_aggregate(&locals, &sizes)?;
        let write = transfer(
            Actor::Orchestrator,
            agg_start + agg_hours,
            payload,
            &orch.region,
            storage_region,
            CoefficientClass::IntraCloud,
            plan.intra_cloud_gb_per_hour,
        );
        round_start = write.end_hour();
        events.push(write);
    }

    if round_start > 0.0 {
        events.push(UsageEvent::new(
            Actor::Orchestrator,
            0.0,
            round_start,
            Payload::Storage {
                gb: (k + 1) as f64 * plan.payload_gb(),
                medium: scenario.shared_storage.medium,
                region: scenario.shared_storage.region.clone(),
                replicated: true,
            },
        ));
    }

    Ok(TraceLog::new(
        Mode::Federated,
        events,
        final_model(global, &samples, &holdout),
    ))
}

/// Bytes of one silo's shard when shipped.
pub fn shard_bytes(scenario: &Scenario, silo: usize) -> u64 {
    (scenario.dataset.shard_gb(silo) * 1e9).round() as u64
}

pub fn run_centralized(
    scenario: &Scenario,
    dataset: &SyntheticDataset,
) -> Result<TraceLog, SimError> {
    let plan = &scenario.plan;
    let central = &scenario.central_cluster;
    let (samples, holdout) = datasets(dataset)?;
    let gb_per_sample = scenario.dataset.total_size_gb / samples.len() as f64;

    let mut events = Vec::new();
    let mut arrived = 0.0_f64;
    for (silo, cluster) in scenario.silo_clusters.iter().enumerate() {
        let t = transfer(
            Actor::Silo(silo),
            0.0,
            shard_bytes(scenario, silo),
            &cluster.region,
            &central.region,
            CoefficientClass::Internet,
            plan.internet_gb_per_hour,
        );
        arrived = arrived.max(t.end_hour());
        events.push(t);
    }

    events.push(UsageEvent::new(
        Actor::Central,
        arrived,
        scenario.retention_hours,
        Payload::Storage {
            gb: scenario.dataset.total_size_gb,
            medium: central.storage_medium,
            region: central.region.clone(),
            replicated: true,
        },
    ));

    let mut weights = vec![0.0; samples.n_features()];
    let mut t = arrived;
    for _ in 0..plan.rounds * plan.local_epochs {
        let update = local_train(&samples, &weights, 1, plan.learning_rate, plan.batch_mode)?;
        let hours = update.samples_processed as f64 * gb_per_sample / plan.train_gb_per_hour;
        let data_gb = samples.len() as f64 * gb_per_sample;
        busy_interval(
            &mut events,
            Actor::Central,
            central,
            scenario,
            t,
            hours,
            data_gb,
        );
        t += hours;
        weights = update.weights;
    }

    Ok(TraceLog::new(
        Mode::Centralized,
        events,
        final_model(weights, &samples, &holdout),
    ))
}

pub fn run(
    mode: Mode,
    scenario: &Scenario,
    dataset: &SyntheticDataset,
) -> Result<TraceLog, SimError> {
    match mode {
        Mode::Federated => run_federated(scenario, dataset),
        Mode::Centralized => run_centralized(scenario, dataset),
    }
}
