//! Load a scenario, list what was defaulted, and re-derive cluster tiers at
//! each dataset scale.

use fedcarbon::scenario::{bundled, cluster_tier_for, DatasetScale, Scenario};

const MINIMAL: &str = r#"
[dataset]
total_size_gb = 30.0
silo_shares = [0.5, 0.25, 0.25]

[[silo_clusters]]
name = "hospital-a"
provider = "Azure"
region = "westeurope"

[[silo_clusters]]
name = "hospital-b"
provider = "Azure"
region = "westeurope"

[[silo_clusters]]
name = "hospital-c"
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
westeurope = 390.0

[plan]
rounds = 5
local_epochs = 1
model_param_count = 1000000
learning_rate = 0.1
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (scenario, defaults) = Scenario::parse_recording(MINIMAL, None)?;
    println!("defaulted keys:");
    for key in &defaults {
        println!("  {key}");
    }
    for (k, c) in scenario.silo_clusters.iter().enumerate() {
        println!(
            "{}: shard {} GB -> {} nodes",
            c.name,
            scenario.dataset.shard_gb(k),
            c.node_count
        );
    }
    println!("central: {} nodes", scenario.central_cluster.node_count);

    let base = bundled::small()?;
    for scale in DatasetScale::ALL {
        let s = base.at_scale(scale)?;
        println!(
            "{scale}: {} GB, central tier {}, silo tier {}",
            s.dataset.total_size_gb,
            cluster_tier_for(s.dataset.total_size_gb),
            cluster_tier_for(s.dataset.shard_gb(0)),
        );
    }
    Ok(())
}
