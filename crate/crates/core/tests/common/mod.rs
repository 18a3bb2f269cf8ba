//! Random trace generation shared by the property and acceptance tests.
#![allow(dead_code)]

use fedcarbon::emission_model::{ComputeSpec, StorageMedium};
use fedcarbon::fl_sim::{
    Actor, CoefficientClass, Device, FinalModel, Mode, Payload, TraceLog, UsageEvent,
};
use fedcarbon::scenario::{bundled, Scenario};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

/// Bundled small scenario with a second region on another provider, so
/// random traces exercise more than one PUE and CI.
pub fn two_region_scenario() -> Scenario {
    let mut s = bundled::small().unwrap();
    s.central_cluster.region = "us-east-1".into();
    s.central_cluster.provider = fedcarbon::emission_model::Provider::Aws;
    s.factors.ci_by_region.insert("us-east-1".into(), 380.0);
    s.prices.egress_per_gb = 0.05;
    s.validate().unwrap();
    s
}

const REGIONS: [&str; 2] = ["westeurope", "us-east-1"];

pub fn random_event(rng: &mut Pcg64, silos: usize) -> UsageEvent {
    let actor = match rng.random_range(0..3) {
        0 => Actor::Silo(rng.random_range(0..silos)),
        1 => Actor::Orchestrator,
        _ => Actor::Central,
    };
    let start = rng.random_range(0.0..100.0);
    let hours = rng.random_range(0.0..10.0);
    let payload = match rng.random_range(0..4) {
        0 => {
            let device = if rng.random_bool(0.5) {
                Device::Cpu
            } else {
                Device::Gpu
            };
            let spec = ComputeSpec {
                unit_count: rng.random_range(1..8),
                tdp_watts: rng.random_range(10.0..400.0),
                load_fraction: rng.random_range(0.0..=1.0),
                duration_hours: hours,
            };
            return UsageEvent::compute(actor, start, device, spec);
        }
        1 => Payload::Memory {
            gb: rng.random_range(0.0..256.0),
        },
        2 => Payload::Transfer {
            bytes: rng.random_range(0..200_000_000_000u64),
            src_region: REGIONS[rng.random_range(0..2)].into(),
            dst_region: REGIONS[rng.random_range(0..2)].into(),
            coefficient_class: if rng.random_bool(0.5) {
                CoefficientClass::Internet
            } else {
                CoefficientClass::IntraCloud
            },
        },
        _ => Payload::Storage {
            gb: rng.random_range(0.0..500.0),
            medium: if rng.random_bool(0.5) {
                StorageMedium::Hdd
            } else {
                StorageMedium::Ssd
            },
            region: REGIONS[rng.random_range(0..2)].into(),
            replicated: rng.random_bool(0.5),
        },
    };
    UsageEvent::new(actor, start, hours, payload)
}

fn model() -> FinalModel {
    FinalModel {
        weights: vec![],
        training_loss: 0.0,
        eval_loss: 0.0,
    }
}

pub fn trace_of(mode: Mode, events: Vec<UsageEvent>) -> TraceLog {
    TraceLog::new(mode, events, model())
}

pub fn random_trace(seed: u64, silos: usize) -> TraceLog {
    let mut rng = Pcg64::seed_from_u64(seed);
    let n = rng.random_range(0..40);
    let mode = if rng.random_bool(0.5) {
        Mode::Federated
    } else {
        Mode::Centralized
    };
    trace_of(
        mode,
        (0..n).map(|_| random_event(&mut rng, silos)).collect(),
    )
}

/// Events of `b` moved to start after `a` finishes, then appended.
pub fn concat_shifted(a: &TraceLog, b: &TraceLog) -> TraceLog {
    let shift = a.wall_clock_hours;
    let mut events = a.events.clone();
    events.extend(b.events.iter().cloned().map(|mut e| {
        e.start_hour += shift;
        e
    }));
    trace_of(a.mode, events)
}

/// Every duration and every transfer volume multiplied by `k`.
pub fn scaled(t: &TraceLog, k: u32) -> TraceLog {
    let kf = f64::from(k);
    let events = t
        .events
        .iter()
        .cloned()
        .map(|mut e| {
            e.start_hour *= kf;
            e.duration_hours *= kf;
            match &mut e.payload {
                Payload::Compute { spec, .. } => spec.duration_hours *= kf,
                Payload::Transfer { bytes, .. } => *bytes *= u64::from(k),
                Payload::Memory { .. } | Payload::Storage { .. } => {}
            }
            e
        })
        .collect();
    trace_of(t.mode, events)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
