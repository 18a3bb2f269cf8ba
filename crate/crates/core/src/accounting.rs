//! Folds a trace into energy, emissions and cost.
//!
//! Training emissions are `c_cpu + c_gpu + c_memory + c_network`; the total
//! adds `c_transfer` (raw-data movement over the internet) and `c_storage`.
//! Weight exchange inside a cloud is `c_network`, part of training.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emission_model::{
    compute_energy_kwh, emissions_gco2e, memory_energy_kwh, network_energy_kwh, storage_energy_kwh,
    EmissionFactors, ModelError, Provider, GB_PER_TB,
};
use crate::fl_sim::{
    Actor, CoefficientClass, Device, Mode, Payload, TraceError, TraceLog, UsageEvent,
};
use crate::scenario::{ClusterSpec, Scenario};

/// Hours in a billing month.
pub const HOURS_PER_MONTH: f64 = 730.0;

/// Category names in report order.
pub const CATEGORIES: [&str; 6] = ["cpu", "gpu", "memory", "network", "transfer", "storage"];

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("unknown actor `{0}`: no matching cluster in the scenario")]
    UnknownActor(String),
    #[error("region `{0}` is not served by any cluster or storage in the scenario")]
    UnknownRegion(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("invalid accounting option {0}")]
    Options(String),
}

/// Which endpoint's grid and datacenter a transfer is charged to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferEndpoint {
    #[default]
    Destination,
    Source,
}

/// Functional unit and embodied carbon for an SCI figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SciParams {
    pub functional_units: u64,
    pub embodied_g: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AccountingOptions {
    pub transfer_endpoint: TransferEndpoint,
    pub sci: Option<SciParams>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyKwh {
    pub cpu: f64,
    pub gpu: f64,
    pub memory: f64,
    pub network: f64,
    pub transfer: f64,
    pub storage: f64,
    pub total: f64,
}

impl EnergyKwh {
    pub fn by_category(&self) -> [f64; 6] {
        [
            self.cpu,
            self.gpu,
            self.memory,
            self.network,
            self.transfer,
            self.storage,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionsG {
    pub c_cpu: f64,
    pub c_gpu: f64,
    pub c_memory: f64,
    pub c_network: f64,
    pub c_transfer: f64,
    pub c_storage: f64,
}

impl EmissionsG {
    pub fn by_category(&self) -> [f64; 6] {
        [
            self.c_cpu,
            self.c_gpu,
            self.c_memory,
            self.c_network,
            self.c_transfer,
            self.c_storage,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub compute: f64,
    pub storage: f64,
    pub egress: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionReport {
    pub mode: Mode,
    pub energy_kwh: EnergyKwh,
    pub emissions_g: EmissionsG,
    pub c_train_g: f64,
    pub c_total_g: f64,
    pub cost: Cost,
    pub wall_clock_hours: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sci_g_per_unit: Option<f64>,
}

impl EmissionReport {
    /// Builds the report from per-category sums; every derived total is
    /// computed here and only here.
    fn assemble(
        mode: Mode,
        e: [f64; 6],
        c: [f64; 6],
        cost: [f64; 3],
        wall_clock_hours: f64,
    ) -> Self {
        let energy_kwh = EnergyKwh {
            cpu: e[0],
            gpu: e[1],
            memory: e[2],
            network: e[3],
            transfer: e[4],
            storage: e[5],
            total: e[0] + e[1] + e[2] + e[3] + e[4] + e[5],
        };
        let emissions_g = EmissionsG {
            c_cpu: c[0],
            c_gpu: c[1],
            c_memory: c[2],
            c_network: c[3],
            c_transfer: c[4],
            c_storage: c[5],
        };
        let c_train_g = c[0] + c[1] + c[2] + c[3];
        let c_total_g = c_train_g + c[4] + c[5];
        Self {
            mode,
            energy_kwh,
            emissions_g,
            c_train_g,
            c_total_g,
            cost: Cost {
                compute: cost[0],
                storage: cost[1],
                egress: cost[2],
                total: cost[0] + cost[1] + cost[2],
            },
            wall_clock_hours,
            sci_g_per_unit: None,
        }
    }

    pub fn empty(mode: Mode) -> Self {
        Self::assemble(mode, [0.0; 6], [0.0; 6], [0.0; 3], 0.0)
    }

    /// Fieldwise sum, for reports over disjoint pieces of one run.
    pub fn combine(&self, other: &Self) -> Self {
        let e = add6(
            self.energy_kwh.by_category(),
            other.energy_kwh.by_category(),
        );
        let c = add6(
            self.emissions_g.by_category(),
            other.emissions_g.by_category(),
        );
        let cost = [
            self.cost.compute + other.cost.compute,
            self.cost.storage + other.cost.storage,
            self.cost.egress + other.cost.egress,
        ];
        Self::assemble(
            self.mode,
            e,
            c,
            cost,
            self.wall_clock_hours + other.wall_clock_hours,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn add6(a: [f64; 6], b: [f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| a[i] + b[i])
}

struct Context<'a> {
    scenario: &'a Scenario,
    factors: &'a EmissionFactors,
    region_provider: BTreeMap<&'a str, &'a Provider>,
}

impl<'a> Context<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let mut region_provider = BTreeMap::new();
        let clusters = scenario
            .silo_clusters
            .iter()
            .chain([&scenario.central_cluster, &scenario.orchestrator_cluster]);
        for c in clusters {
            region_provider
                .entry(c.region.as_str())
                .or_insert(&c.provider);
        }
        region_provider
            .entry(scenario.shared_storage.region.as_str())
            .or_insert(&scenario.shared_storage.provider);
        Self {
            scenario,
            factors: &scenario.factors,
            region_provider,
        }
    }

    fn cluster(&self, actor: Actor) -> Result<&'a ClusterSpec, AccountingError> {
        match actor {
            Actor::Silo(k) => self
                .scenario
                .silo_clusters
                .get(k)
                .ok_or_else(|| AccountingError::UnknownActor(actor.to_string())),
            Actor::Orchestrator => Ok(&self.scenario.orchestrator_cluster),
            Actor::Central => Ok(&self.scenario.central_cluster),
        }
    }

    /// Grams for `kwh` consumed in `region`.
    fn grams_in(&self, kwh: f64, region: &str) -> Result<f64, AccountingError> {
        let provider = self
            .region_provider
            .get(region)
            .ok_or_else(|| AccountingError::UnknownRegion(region.to_string()))?;
        self.grams(kwh, provider, region)
    }

    fn grams(&self, kwh: f64, provider: &Provider, region: &str) -> Result<f64, AccountingError> {
        Ok(emissions_gco2e(
            kwh,
            self.factors.pue(provider)?,
            self.factors.ci(region)?,
        )?)
    }
}

/// Category index, energy, grams and cost contributions of one event.
struct Charge {
    category: usize,
    kwh: f64,
    grams: f64,
    compute_cost: f64,
    storage_cost: f64,
    egress_cost: f64,
}

fn charge(
    ctx: &Context<'_>,
    event: &UsageEvent,
    options: &AccountingOptions,
) -> Result<Charge, AccountingError> {
    event.validate()?;
    let factors = ctx.factors;
    let prices = &ctx.scenario.prices;
    let mut out = Charge {
        category: 0,
        kwh: 0.0,
        grams: 0.0,
        compute_cost: 0.0,
        storage_cost: 0.0,
        egress_cost: 0.0,
    };
    match &event.payload {
        Payload::Compute { device, spec } => {
            let cluster = ctx.cluster(event.actor)?;
            out.kwh = compute_energy_kwh(spec)?;
            out.grams = ctx.grams(out.kwh, &cluster.provider, &cluster.region)?;
            match device {
                Device::Cpu => {
                    out.category = 0;
                    // One CPU event per busy interval, so node-hours are billed here.
                    out.compute_cost =
                        spec.duration_hours * f64::from(spec.unit_count) * cluster.hourly_price;
                }
                Device::Gpu => out.category = 1,
            }
        }
        Payload::Memory { gb } => {
            let cluster = ctx.cluster(event.actor)?;
            out.category = 2;
            out.kwh = memory_energy_kwh(*gb, event.duration_hours, factors)?;
            out.grams = ctx.grams(out.kwh, &cluster.provider, &cluster.region)?;
        }
        Payload::Transfer {
            bytes,
            src_region,
            dst_region,
            coefficient_class,
        } => {
            let gb = *bytes as f64 / 1e9;
            let (category, coefficient) = match coefficient_class {
                CoefficientClass::IntraCloud => (3, factors.network_kwh_per_gb_low),
                CoefficientClass::Internet => {
                    out.egress_cost = gb * prices.egress_per_gb;
                    (4, factors.network_kwh_per_gb_high)
                }
            };
            out.category = category;
            out.kwh = network_energy_kwh(gb, coefficient)?;
            let region = match options.transfer_endpoint {
                TransferEndpoint::Destination => dst_region,
                TransferEndpoint::Source => src_region,
            };
            out.grams = ctx.grams_in(out.kwh, region)?;
        }
        Payload::Storage {
            gb,
            medium,
            region,
            replicated,
        } => {
            out.category = 5;
            let copies = if *replicated {
                f64::from(factors.redundancy_copies)
            } else {
                1.0
            };
            out.kwh = storage_energy_kwh(gb / GB_PER_TB, event.duration_hours, *medium, factors)?
                * copies;
            out.grams = ctx.grams_in(out.kwh, region)?;
            out.storage_cost =
                gb * event.duration_hours / HOURS_PER_MONTH * prices.storage_per_gb_month;
        }
    }
    Ok(out)
}

pub fn account(trace: &TraceLog, scenario: &Scenario) -> Result<EmissionReport, AccountingError> {
    account_with(trace, scenario, &AccountingOptions::default())
}

pub fn account_with(
    trace: &TraceLog,
    scenario: &Scenario,
    options: &AccountingOptions,
) -> Result<EmissionReport, AccountingError> {
    let ctx = Context::new(scenario);
    let mut energy = [0.0; 6];
    let mut grams = [0.0; 6];
    let mut cost = [0.0; 3];
    for event in &trace.events {
        let c = charge(&ctx, event, options)?;
        energy[c.category] += c.kwh;
        grams[c.category] += c.grams;
        cost[0] += c.compute_cost;
        cost[1] += c.storage_cost;
        cost[2] += c.egress_cost;
    }
    let mut report =
        EmissionReport::assemble(trace.mode, energy, grams, cost, trace.wall_clock_hours);
    if let Some(sci) = options.sci {
        if sci.functional_units == 0 {
            return Err(AccountingError::Options(
                "sci.functional_units must be > 0".into(),
            ));
        }
        if !(sci.embodied_g.is_finite() && sci.embodied_g >= 0.0) {
            return Err(AccountingError::Options(
                "sci.embodied_g must be >= 0".into(),
            ));
        }
        report.sci_g_per_unit =
            Some((report.c_total_g + sci.embodied_g) / sci.functional_units as f64);
    }
    Ok(report)
}

/// One metric side by side. `ratio` is `cl / fl`: 1 when both are zero,
/// absent when only `fl` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub fl: f64,
    pub cl: f64,
    pub delta: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub cl_total_exceeds_fl: bool,
    pub fl_train_exceeds_cl_train: bool,
    pub fl_faster: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fl: EmissionReport,
    pub cl: EmissionReport,
    pub metrics: Vec<MetricComparison>,
    pub verdict: Verdict,
}

impl ComparisonReport {
    pub fn metric(&self, name: &str) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

fn metric_values(r: &EmissionReport) -> Vec<(&'static str, f64)> {
    let e = &r.emissions_g;
    vec![
        ("c_cpu", e.c_cpu),
        ("c_gpu", e.c_gpu),
        ("c_memory", e.c_memory),
        ("c_network", e.c_network),
        ("c_transfer", e.c_transfer),
        ("c_storage", e.c_storage),
        ("c_train", r.c_train_g),
        ("c_total", r.c_total_g),
        ("energy_total_kwh", r.energy_kwh.total),
        ("cost_compute", r.cost.compute),
        ("cost_storage", r.cost.storage),
        ("cost_egress", r.cost.egress),
        ("cost_total", r.cost.total),
        ("wall_clock_hours", r.wall_clock_hours),
    ]
}

pub fn compare(fl: &EmissionReport, cl: &EmissionReport) -> ComparisonReport {
    let metrics = metric_values(fl)
        .into_iter()
        .zip(metric_values(cl))
        .map(|((name, f), (_, c))| MetricComparison {
            metric: name.to_string(),
            fl: f,
            cl: c,
            delta: c - f,
            ratio: if f != 0.0 {
                Some(c / f)
            } else if c == 0.0 {
                Some(1.0)
            } else {
                None
            },
        })
        .collect();
    ComparisonReport {
        fl: fl.clone(),
        cl: cl.clone(),
        metrics,
        verdict: Verdict {
            cl_total_exceeds_fl: cl.c_total_g > fl.c_total_g,
            fl_train_exceeds_cl_train: fl.c_train_g > cl.c_train_g,
            fl_faster: fl.wall_clock_hours < cl.wall_clock_hours,
        },
    }
}

/// Flat export: one row per (mode, category), optionally tagged with a scale.
pub fn csv_header(with_scale: bool) -> Vec<&'static str> {
    let mut h = vec!["mode", "category", "energy_kwh", "emissions_g"];
    if with_scale {
        h.insert(0, "scale");
    }
    h
}

pub fn csv_rows(report: &EmissionReport, scale: Option<&str>) -> Vec<Vec<String>> {
    let energy = report.energy_kwh.by_category();
    let grams = report.emissions_g.by_category();
    CATEGORIES
        .iter()
        .enumerate()
        .map(|(i, cat)| {
            let mut row = vec![
                report.mode.to_string(),
                cat.to_string(),
                energy[i].to_string(),
                grams[i].to_string(),
            ];
            if let Some(s) = scale {
                row.insert(0, s.to_string());
            }
            row
        })
        .collect()
}

/// CSV for a set of `(scale, report)` pairs; scale column only when tagged.
pub fn to_csv<'a>(
    reports: impl IntoIterator<Item = (Option<&'a str>, &'a EmissionReport)>,
) -> String {
    let reports: Vec<_> = reports.into_iter().collect();
    let with_scale = reports.iter().any(|(s, _)| s.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(with_scale))
        .expect("in-memory write");
    for (scale, report) in reports {
        for row in csv_rows(report, scale.or(with_scale.then_some(""))) {
            w.write_record(row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
