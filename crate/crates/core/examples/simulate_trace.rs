//! Generate a builtin scenario, write it as JSONL, and read it back.
//!
//! `cargo run --example simulate_trace -- [scenario] [seed]`

use gazegate::scenario::{builtin, generate};
use gazegate::trace::{load_trace, save_trace};

fn main() -> gazegate::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "pursuit_basic".into());
    let seed = args.next().map_or(Ok(1), |s| s.parse()).expect("seed must be an integer");

    let spec = builtin(&name, seed)?;
    let trace = generate(&spec)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join(format!("{name}-{seed}.trace.jsonl"));
    save_trace(&trace, &path)?;
    let back = load_trace(&path)?;
    assert_eq!(back, trace);

    let truth = trace.truth.as_ref().expect("builtins carry truth");
    println!("{name} seed {seed}: {} gaze samples, {} frames", trace.gaze.len(), trace.frames.len());
    println!("dropouts: {}", trace.gaze.iter().filter(|g| !g.valid).count());
    for iv in &truth.intervals {
        println!("  attention on object {} from {:.2} s to {:.2} s", iv.instance, iv.t_start, iv.t_end);
    }
    Ok(())
}
