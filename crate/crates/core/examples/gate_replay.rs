//! Drive the gate sample by sample with a fusion stage that accepts exactly
//! inside the truth intervals, and print every state change.
//!
//! `cargo run --example gate_replay -- [scenario] [seed]`

use gazegate::gate::{Gate, GateConfig, GateEvent};
use gazegate::oculomotor::{OculomotorClassifier, OculomotorConfig};
use gazegate::scenario::{builtin, generate};

fn main() -> gazegate::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "pursuit_basic".into());
    let seed = args.next().map_or(Ok(2), |s| s.parse()).expect("seed must be an integer");

    let trace = generate(&builtin(&name, seed)?)?;
    let truth = trace.truth.clone().expect("builtins carry truth");
    let mut classifier = OculomotorClassifier::new(OculomotorConfig::default());
    let mut gate = Gate::new(GateConfig::default())?;

    let mut last_phase = gate.state().phase;
    for sample in &trace.gaze {
        let estimate = classifier.push(*sample);
        let mut event = gate.step(sample, &estimate)?;
        if event == GateEvent::InvokeFusion {
            // resolved immediately; the full pipeline adds a fusion latency
            let accepted = truth.interval_at(sample.t).is_some();
            println!("{:7.2} s  fusion request -> {}", sample.t, if accepted { "accept" } else { "reject" });
            event = gate.resolve_fusion(accepted, if accepted { 1.0 } else { 0.0 }, sample.t)?;
        }
        if let GateEvent::StopRecording(s) = event {
            println!("{:7.2} s  snippet [{:.2}, {:.2}) closed", sample.t, s.t_start, s.t_end);
        }
        let phase = gate.state().phase;
        if phase != last_phase {
            println!("{:7.2} s  {} -> {}", sample.t, last_phase.as_str(), phase.as_str());
            last_phase = phase;
        }
    }
    if let Some(s) = gate.finish(trace.gaze.last().map_or(0.0, |g| g.t)) {
        println!("end of trace closes snippet [{:.2}, {:.2})", s.t_start, s.t_end);
    }
    Ok(())
}
