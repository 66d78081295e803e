//! Sweep the dwell period T on one trace. Longer periods wake fusion less
//! often and save more energy.
//!
//! `cargo run --release --example sweep_t -- [scenario] [seed]`

use gazegate::energy::EnergyParams;
use gazegate::metrics::{sweep_csv_row, sweep_t, MatchRule, SWEEP_HEADER};
use gazegate::pipeline::{FusionContext, FusionOutcome, PipelineConfig};
use gazegate::scenario::{builtin_extended, generate};

fn main() -> gazegate::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "multi_object_shift".into());
    let seed = args.next().map_or(Ok(4), |s| s.parse()).expect("seed must be an integer");

    let trace = generate(&builtin_extended(&name, seed, 120.0)?)?;
    let truth = trace.truth.clone().expect("builtins carry truth");
    // truth-backed fusion isolates the effect of T from classifier error
    let mut oracle = |ctx: &FusionContext<'_>| -> gazegate::Result<FusionOutcome> {
        let accepted = truth.interval_at(ctx.t).is_some();
        Ok(FusionOutcome { accepted, score: if accepted { 1.0 } else { 0.0 } })
    };
    let rows = sweep_t(
        &trace,
        &PipelineConfig::default(),
        &[0.25, 0.5, 1.0, 2.0, 4.0],
        &mut oracle,
        &EnergyParams::calibrated(),
        &MatchRule::default(),
    )?;
    println!("{SWEEP_HEADER},invocations");
    for r in &rows {
        println!("{},{}", sweep_csv_row(r), r.invocations);
    }
    Ok(())
}
