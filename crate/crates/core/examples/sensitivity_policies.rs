//! Combine per-model binary votes with the any, all and at-least-k policies.
//!
//! cargo run -p ensemblegate --example sensitivity_policies

use ensemblegate::{apply_policy, SensitivityPolicy};

fn main() -> ensemblegate::Result<()> {
    // rows are models, columns are samples; 1 means "present"
    let votes = vec![
        vec![0, 1, 1, 1, 0],
        vec![0, 0, 1, 1, 0],
        vec![0, 0, 0, 1, 1],
    ];
    println!("{:<15} {votes:?}", "votes:");
    for policy in [
        SensitivityPolicy::Any,
        SensitivityPolicy::AtLeast(2),
        SensitivityPolicy::All,
    ] {
        println!("{:<15} {:?}", format!("{policy}:"), apply_policy(policy, &votes)?);
    }
    match apply_policy(SensitivityPolicy::AtLeast(4), &votes) {
        Ok(_) => unreachable!(),
        Err(e) => println!("{:<15} {e}", "at_least(k=4):"),
    }
    Ok(())
}
