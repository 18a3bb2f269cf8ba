//! Submit, approve, detect a paraphrased duplicate and replay the log.

use fedcarbon::registry::{Registry, TfCosine, DEFAULT_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scorer = TfCosine::default();
    let mut reg = Registry::new();
    let datasets = vec!["bookings-2023".to_string()];

    let a = reg
        .submit("churn prediction for airline bookings", &datasets, "alice")?
        .id;
    let tier = reg.approve(a, 120.0)?.assigned_tier;
    println!("request {a} approved on a {:?} cluster", tier);

    let b = reg
        .submit("airline booking churn prediction model", &datasets, "bob")?
        .id;
    let hits = reg.check(b, DEFAULT_THRESHOLD, &scorer)?;
    for m in &hits {
        println!(
            "request {b} resembles {} (owner {}, score {:.3})",
            m.id, m.owner, m.score
        );
    }
    if let Some(best) = hits.first() {
        let (_, owner) = reg.mark_duplicate(b, best.id)?;
        println!("request {b} marked duplicate; contact {owner}");
    }

    let log = reg.to_log_string();
    print!("{log}");
    assert_eq!(Registry::from_log_str(&log)?, reg);
    println!("replay reproduces the registry");
    Ok(())
}
