//! Account one trace under different coefficients and charging options.

use fedcarbon::accounting::{
    account, account_with, AccountingOptions, SciParams, TransferEndpoint,
};
use fedcarbon::emission_model::Provider;
use fedcarbon::fl_sim::{run_centralized, SyntheticDataset};
use fedcarbon::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = bundled::medium()?;
    // Move the central cluster to another cloud and grid.
    scenario.central_cluster.provider = Provider::Aws;
    scenario.central_cluster.region = "us-east-1".into();
    scenario
        .factors
        .ci_by_region
        .insert("us-east-1".into(), 380.0);
    scenario.prices.egress_per_gb = 0.09;
    scenario.validate()?;

    let trace = run_centralized(&scenario, &SyntheticDataset::standard(scenario.plan.seed))?;
    let at_dst = account(&trace, &scenario)?;
    let at_src = account_with(
        &trace,
        &scenario,
        &AccountingOptions {
            transfer_endpoint: TransferEndpoint::Source,
            sci: Some(SciParams {
                functional_units: 1000,
                embodied_g: 5000.0,
            }),
        },
    )?;
    println!(
        "c_transfer charged at destination: {:.3} g",
        at_dst.emissions_g.c_transfer
    );
    println!(
        "c_transfer charged at source:      {:.3} g",
        at_src.emissions_g.c_transfer
    );
    println!("egress cost: {:.2}", at_dst.cost.egress);
    println!(
        "SCI: {:.4} g per inference",
        at_src.sci_g_per_unit.unwrap_or_default()
    );

    let mut low = scenario.clone();
    low.factors.network_kwh_per_gb_high = low.factors.network_kwh_per_gb_low;
    let r = account(
        &run_centralized(&low, &SyntheticDataset::standard(low.plan.seed))?,
        &low,
    )?;
    println!(
        "with the intra-cloud coefficient for raw data: c_transfer {:.3} g",
        r.emissions_g.c_transfer
    );
    Ok(())
}
