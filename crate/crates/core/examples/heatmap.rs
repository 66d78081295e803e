//! Render a gaze heatmap stack and print the fused peak as ASCII art.
//!
//! `cargo run --example heatmap`

use gazegate::fusion::{build_gaze_stack, gaussian_heatmap, recency_weights, GRID};
use gazegate::trace::GazeSample;

fn main() -> gazegate::Result<()> {
    let single = gaussian_heatmap((0.5, 0.5), 1.0, 3.0)?;
    let peak = single.grid.iter().cloned().fold(f64::MIN, f64::max);
    println!("single heatmap: peak {peak:.5}, mass {:.5}", single.grid.sum());

    // a short left-to-right sweep, newest sample weighted most
    let samples: Vec<GazeSample> =
        (0..6).map(|k| GazeSample::new(k as f64 / 30.0, 0.2 + 0.1 * k as f64, 0.4)).collect();
    let stack = build_gaze_stack(&samples, &recency_weights(samples.len()), 3.0, GRID)?;
    let total = stack.iter().fold(ndarray::Array2::<f64>::zeros((GRID, GRID)), |acc, h| acc + &h.grid);
    let max = total.iter().cloned().fold(0.0, f64::max);

    let ramp = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for row in total.rows().into_iter().step_by(2).skip(8).take(12) {
        let line: String = row
            .iter()
            .map(|v| ramp[((v / max) * (ramp.len() - 1) as f64).round() as usize])
            .collect();
        println!("|{line}|");
    }
    Ok(())
}
