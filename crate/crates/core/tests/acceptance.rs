//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{random_trace, rel_close, two_region_scenario};
use fedcarbon::accounting::{account, compare};
use fedcarbon::cli::{cmd_compare, render_compare, Format};
use fedcarbon::emission_model::{
    compute_energy_kwh, emissions_gco2e, memory_energy_kwh, network_energy_kwh, sci_rate,
    storage_energy_kwh, ComputeSpec, EmissionFactors, SciInputs, StorageMedium,
};
use fedcarbon::fl_sim::{run_centralized, run_federated, shard_bytes, EventKind, SyntheticDataset};
use fedcarbon::registry::{Registry, TfCosine, DEFAULT_THRESHOLD};
use fedcarbon::scenario::{bundled, BatchMode};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ac1_coefficients() -> Check {
    let text = EmissionFactors::default().to_toml_string();
    for line in [
        "storage_hdd_wh_per_tb_hour = 0.65",
        "storage_ssd_wh_per_tb_hour = 1.2",
        "network_kwh_per_gb_low = 0.001",
        "network_kwh_per_gb_high = 0.06",
        "memory_kwh_per_gb_hour = 0.000392",
        "redundancy_copies = 3",
        "AWS = 1.135",
        "GCP = 1.1",
        "Azure = 1.185",
    ] {
        ensure(text.lines().any(|l| l == line), || {
            format!("missing `{line}` in serialized factors")
        })?;
    }
    Ok(())
}

fn ac2_formulas() -> Check {
    let f = EmissionFactors::default();
    let spec = |u, w, l, h| ComputeSpec {
        unit_count: u,
        tdp_watts: w,
        load_fraction: l,
        duration_hours: h,
    };
    let err = |e: fedcarbon::emission_model::ModelError| e.to_string();
    let cases: Vec<(&str, f64, f64)> = vec![
        (
            "compute 1x300W",
            compute_energy_kwh(&spec(1, 300.0, 1.0, 1.0)).map_err(err)?,
            0.3,
        ),
        (
            "compute 2x145W",
            compute_energy_kwh(&spec(2, 145.0, 0.5, 2.0)).map_err(err)?,
            0.29,
        ),
        (
            "storage SSD",
            storage_energy_kwh(1.0, 1.0, StorageMedium::Ssd, &f).map_err(err)?,
            0.0012,
        ),
        (
            "storage HDD",
            storage_energy_kwh(1.0, 1.0, StorageMedium::Hdd, &f).map_err(err)?,
            0.00065,
        ),
        ("network", network_energy_kwh(10.0, 0.06).map_err(err)?, 0.6),
        (
            "memory",
            memory_energy_kwh(16.0, 2.0, &f).map_err(err)?,
            0.012544,
        ),
        (
            "emissions",
            emissions_gco2e(0.3, 1.185, 400.0).map_err(err)?,
            142.2,
        ),
        (
            "sci 1",
            sci_rate(&SciInputs {
                energy_kwh: 1.0,
                carbon_intensity_g_per_kwh: 100.0,
                embodied_g: 0.0,
                functional_units: 1,
            })
            .map_err(err)?,
            100.0,
        ),
        (
            "sci 2",
            sci_rate(&SciInputs {
                energy_kwh: 2.0,
                carbon_intensity_g_per_kwh: 50.0,
                embodied_g: 10.0,
                functional_units: 2,
            })
            .map_err(err)?,
            55.0,
        ),
    ];
    for (name, got, want) in cases {
        ensure(rel_close(got, want, 1e-12), || {
            format!("{name}: {got} != {want}")
        })?;
    }
    let zero = storage_energy_kwh(0.0, 100.0, StorageMedium::Ssd, &f).map_err(err)?;
    ensure(zero == 0.0, || format!("zero-volume storage gave {zero}"))
}

fn ac3_gpt3() -> Check {
    let tons = emissions_gco2e(1_287_000.0, 1.0, 388.5).map_err(|e| e.to_string())? / 1e6;
    ensure((499.9..=500.1).contains(&tons), || {
        format!("{tons} t outside [499.9, 500.1]")
    })
}

fn ac4_identities() -> Check {
    let s = two_region_scenario();
    for seed in 0..1000u64 {
        let t = random_trace(seed, s.silo_count());
        let r = account(&t, &s).map_err(|e| format!("seed {seed}: {e}"))?;
        let e = &r.emissions_g;
        ensure(
            r.c_train_g == e.c_cpu + e.c_gpu + e.c_memory + e.c_network,
            || format!("seed {seed}: c_train identity"),
        )?;
        ensure(
            r.c_total_g == r.c_train_g + e.c_transfer + e.c_storage,
            || format!("seed {seed}: c_total identity"),
        )?;
        let en = r.energy_kwh.by_category();
        ensure(r.energy_kwh.total == en.iter().sum::<f64>(), || {
            format!("seed {seed}: energy conservation")
        })?;

        // additivity against a second trace appended after the first
        let other = random_trace(seed ^ 0x5eed, s.silo_count());
        let other = common::trace_of(t.mode, other.events);
        let whole = account(&common::concat_shifted(&t, &other), &s).map_err(|e| e.to_string())?;
        let parts = r.combine(&account(&other, &s).map_err(|e| e.to_string())?);
        for (name, a, b) in [
            ("c_total", whole.c_total_g, parts.c_total_g),
            ("energy", whole.energy_kwh.total, parts.energy_kwh.total),
            ("cost", whole.cost.total, parts.cost.total),
            ("wall_clock", whole.wall_clock_hours, parts.wall_clock_hours),
        ] {
            ensure(rel_close(a, b, 1e-12), || {
                format!("seed {seed}: additivity of {name}: {a} vs {b}")
            })?;
        }
    }
    Ok(())
}

fn ac5_fedavg() -> Check {
    let mut s = bundled::small().map_err(|e| e.to_string())?;
    s.plan.rounds = 1;
    s.plan.local_epochs = 1;
    s.plan.batch_mode = BatchMode::FullBatch;
    for seed in 0..100u64 {
        s.plan.seed = seed;
        let d = SyntheticDataset::standard(seed);
        let fl = run_federated(&s, &d).map_err(|e| e.to_string())?;
        let cl = run_centralized(&s, &d).map_err(|e| e.to_string())?;
        for (a, b) in fl.final_model.weights.iter().zip(&cl.final_model.weights) {
            ensure(rel_close(*a, *b, 1e-10), || {
                format!("seed {seed}: {a} vs {b}")
            })?;
        }
    }
    Ok(())
}

fn ac6_parity() -> Check {
    for (name, s) in bundled::all().map_err(|e| e.to_string())? {
        let d = SyntheticDataset::standard(s.plan.seed);
        let fl = run_federated(&s, &d)
            .map_err(|e| e.to_string())?
            .final_model
            .eval_loss;
        let cl = run_centralized(&s, &d)
            .map_err(|e| e.to_string())?
            .final_model
            .eval_loss;
        ensure((fl - cl).abs() <= 0.05 * cl, || {
            format!("{name}: eval loss FL {fl} vs CL {cl}")
        })?;
    }
    Ok(())
}

fn ac7_ordering() -> Check {
    for (name, s) in bundled::all().map_err(|e| e.to_string())? {
        let d = SyntheticDataset::standard(s.plan.seed);
        let fl = account(&run_federated(&s, &d).map_err(|e| e.to_string())?, &s)
            .map_err(|e| e.to_string())?;
        let cl = account(&run_centralized(&s, &d).map_err(|e| e.to_string())?, &s)
            .map_err(|e| e.to_string())?;
        let v = compare(&fl, &cl).verdict;
        ensure(v.cl_total_exceeds_fl, || {
            format!("{name}: c_total CL {} <= FL {}", cl.c_total_g, fl.c_total_g)
        })?;
        if name == "large" {
            ensure(cl.c_train_g > fl.c_train_g, || {
                format!("{name}: c_train CL {} <= FL {}", cl.c_train_g, fl.c_train_g)
            })?;
        } else {
            ensure(fl.c_train_g >= cl.c_train_g, || {
                format!("{name}: c_train FL {} < CL {}", fl.c_train_g, cl.c_train_g)
            })?;
        }
        ensure(v.fl_faster, || {
            format!(
                "{name}: wall clock FL {} >= CL {}",
                fl.wall_clock_hours, cl.wall_clock_hours
            )
        })?;
    }
    Ok(())
}

fn ac8_bytes() -> Check {
    for (name, s) in bundled::all().map_err(|e| e.to_string())? {
        let d = SyntheticDataset::standard(s.plan.seed);
        let fl = run_federated(&s, &d).map_err(|e| e.to_string())?;
        let brute: u64 = fl.events.iter().filter_map(|e| e.transfer_bytes()).sum();
        let k = s.silo_count() as u64;
        let want = u64::from(s.plan.rounds) * (2 * k + 2) * s.plan.payload_bytes();
        ensure(brute == want, || {
            format!("{name}: FL bytes {brute} != {want}")
        })?;

        let cl = run_centralized(&s, &d).map_err(|e| e.to_string())?;
        let brute: u64 = cl.events.iter().filter_map(|e| e.transfer_bytes()).sum();
        let want: u64 = (0..s.silo_count()).map(|k| shard_bytes(&s, k)).sum();
        ensure(brute == want, || {
            format!("{name}: CL bytes {brute} != {want}")
        })?;
        let total = (s.dataset.total_size_gb * 1e9).round() as u64;
        ensure(want == total, || {
            format!("{name}: shard bytes {want} != dataset bytes {total}")
        })?;
        ensure(
            cl.events_of(EventKind::Transfer).count() == s.silo_count(),
            || format!("{name}: one transfer per silo expected"),
        )?;
    }
    Ok(())
}

fn ac9_determinism() -> Check {
    for (name, s) in bundled::all().map_err(|e| e.to_string())? {
        let a = render_compare(
            &cmd_compare(&s).map_err(|e| e.to_string())?,
            Format::Structured,
        );
        let b = render_compare(
            &cmd_compare(&s).map_err(|e| e.to_string())?,
            Format::Structured,
        );
        ensure(a == b, || format!("{name}: structured reports differ"))?;
    }
    Ok(())
}

fn ac10_registry() -> Check {
    let err = |e: fedcarbon::registry::RegistryError| e.to_string();
    let scorer = TfCosine::default();
    let mut reg = Registry::new();
    let a = reg
        .submit("churn prediction for airline bookings", &[], "alice")
        .map_err(err)?
        .id;
    reg.approve(a, 1.2).map_err(err)?;
    let b = reg
        .submit("airline booking churn prediction model", &[], "bob")
        .map_err(err)?
        .id;
    let hits = reg.check(b, DEFAULT_THRESHOLD, &scorer).map_err(err)?;
    ensure(
        hits.first().is_some_and(|m| m.id == a && m.score >= 0.8),
        || format!("matches {hits:?}"),
    )?;
    reg.mark_duplicate(b, a).map_err(err)?;
    reg.submit("fraud detection on card payments", &[], "carol")
        .map_err(err)?;
    reg.reject(3).map_err(err)?;
    let replayed = Registry::from_log_str(&reg.to_log_string()).map_err(err)?;
    ensure(replayed == reg, || "replayed registry differs".into())
}

fn main() -> ExitCode {
    let checks: [Criterion; 10] = [
        ("AC1 coefficient exactness", ac1_coefficients),
        ("AC2 formula examples", ac2_formulas),
        ("AC3 large-model back-check", ac3_gpt3),
        (
            "AC4 train/total identities over 1000 traces",
            ac4_identities,
        ),
        ("AC5 FedAvg one round equals GD step, 100 seeds", ac5_fedavg),
        ("AC6 eval-loss parity", ac6_parity),
        ("AC7 FL vs CL ordering", ac7_ordering),
        ("AC8 byte conservation", ac8_bytes),
        ("AC9 deterministic compare reports", ac9_determinism),
        ("AC10 registry replay and duplicate workflow", ac10_registry),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} passed, {failed} failed in {:.2?}",
        checks.len() - failed,
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
