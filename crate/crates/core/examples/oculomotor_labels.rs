//! Label every gaze sample of a trace and summarize the movement phases.
//!
//! `cargo run --example oculomotor_labels -- [scenario] [seed]`

use std::collections::BTreeMap;

use gazegate::oculomotor::{likelihood_series, OculomotorConfig};
use gazegate::scenario::{builtin, generate};

fn main() -> gazegate::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "multi_object_shift".into());
    let seed = args.next().map_or(Ok(3), |s| s.parse()).expect("seed must be an integer");

    let trace = generate(&builtin(&name, seed)?)?;
    let estimates = likelihood_series(&trace.gaze, &OculomotorConfig::default());

    let mut counts = BTreeMap::new();
    for e in &estimates {
        *counts.entry(format!("{:?}", e.label)).or_insert(0usize) += 1;
    }
    for (label, n) in &counts {
        println!("{label:>14}: {n:5} samples ({:.1} %)", 100.0 * *n as f64 / estimates.len() as f64);
    }

    // run-length view of the first ten seconds
    let mut runs: Vec<(String, f64, usize)> = Vec::new();
    for e in estimates.iter().take_while(|e| e.t < 10.0) {
        let label = format!("{:?}", e.label);
        match runs.last_mut() {
            Some((l, _, n)) if *l == label => *n += 1,
            _ => runs.push((label, e.t, 1)),
        }
    }
    for (label, t, n) in runs {
        println!("{t:6.2} s  {label:<14} x{n}");
    }
    Ok(())
}
