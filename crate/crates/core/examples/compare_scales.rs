//! Run both pipelines on the three bundled scales and print the headline
//! numbers side by side.

use fedcarbon::accounting::{account, compare};
use fedcarbon::fl_sim::{run_centralized, run_federated, SyntheticDataset};
use fedcarbon::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:<7} {:>12} {:>12} {:>12} {:>12} {:>9} {:>9} {:>10} {:>10}",
        "scale",
        "train FL g",
        "train CL g",
        "total FL g",
        "total CL g",
        "wall FL",
        "wall CL",
        "eval FL",
        "eval CL"
    );
    for (name, scenario) in bundled::all()? {
        let data = SyntheticDataset::standard(scenario.plan.seed);
        let fl_trace = run_federated(&scenario, &data)?;
        let cl_trace = run_centralized(&scenario, &data)?;
        let cmp = compare(
            &account(&fl_trace, &scenario)?,
            &account(&cl_trace, &scenario)?,
        );
        println!(
            "{:<7} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>9.3} {:>9.3} {:>10.5} {:>10.5}",
            name,
            cmp.fl.c_train_g,
            cmp.cl.c_train_g,
            cmp.fl.c_total_g,
            cmp.cl.c_total_g,
            cmp.fl.wall_clock_hours,
            cmp.cl.wall_clock_hours,
            fl_trace.final_model.eval_loss,
            cl_trace.final_model.eval_loss,
        );
        println!(
            "        cl_total_exceeds_fl={} fl_train_exceeds_cl_train={} fl_faster={}",
            cmp.verdict.cl_total_exceeds_fl,
            cmp.verdict.fl_train_exceeds_cl_train,
            cmp.verdict.fl_faster
        );
    }
    Ok(())
}
