//! Run the federated pipeline and print the first round of its usage trace.

use fedcarbon::fl_sim::{run_federated, EventKind, SyntheticDataset};
use fedcarbon::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = bundled::small()?;
    scenario.plan.rounds = 1;
    let trace = run_federated(&scenario, &SyntheticDataset::standard(scenario.plan.seed))?;
    print!("{}", trace.to_jsonl());
    println!(
        "transfers: {}, bytes: {}, wall clock: {} h",
        trace.events_of(EventKind::Transfer).count(),
        trace.transfer_bytes(),
        trace.wall_clock_hours
    );
    println!("eval loss after one round: {}", trace.final_model.eval_loss);
    Ok(())
}
