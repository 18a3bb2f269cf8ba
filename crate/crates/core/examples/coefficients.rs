//! The default emission factors and the per-resource energy formulas.

use fedcarbon::emission_model::{
    compute_energy_kwh, emissions_gco2e, memory_energy_kwh, network_energy_kwh, sci_rate,
    storage_energy_kwh, ComputeSpec, EmissionFactors, Provider, SciInputs, StorageMedium,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let factors = EmissionFactors::default();
    println!("{}", factors.to_toml_string());

    let gpu = ComputeSpec {
        unit_count: 1,
        tdp_watts: 300.0,
        load_fraction: 1.0,
        duration_hours: 1.0,
    };
    let kwh = compute_energy_kwh(&gpu)?;
    let pue = factors.pue(&Provider::Azure)?;
    println!(
        "1 GPU-hour at 300 W: {kwh} kWh -> {} gCO2e at CI 400 on Azure",
        emissions_gco2e(kwh, pue, 400.0)?
    );

    let ssd = storage_energy_kwh(1.0, 1.0, StorageMedium::Ssd, &factors)?;
    println!(
        "1 TB SSD for 1 h: {ssd} kWh ({} kWh with {} copies)",
        ssd * f64::from(factors.redundancy_copies),
        factors.redundancy_copies
    );
    println!(
        "10 GB over the internet: {} kWh",
        network_energy_kwh(10.0, factors.network_kwh_per_gb_high)?
    );
    println!(
        "10 GB inside a cloud: {} kWh",
        network_energy_kwh(10.0, factors.network_kwh_per_gb_low)?
    );
    println!(
        "64 GB of memory for 2 h: {} kWh",
        memory_energy_kwh(64.0, 2.0, &factors)?
    );

    let tons = emissions_gco2e(1_287_000.0, 1.0, 388.5)? / 1e6;
    println!("1,287 MWh at 388.5 g/kWh: {tons:.1} t CO2e");

    let sci = sci_rate(&SciInputs {
        energy_kwh: 2.0,
        carbon_intensity_g_per_kwh: 400.0,
        embodied_g: 100.0,
        functional_units: 10,
    })?;
    println!("SCI for 2 kWh at 400 g/kWh, 100 g embodied, 10 units: {sci} g/unit");
    Ok(())
}
