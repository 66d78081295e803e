//! Harvest labelled fusion windows from a small synthetic corpus and train
//! the classification head.
//!
//! `cargo run --release --example train_head -- [traces_per_scenario] [epochs]`

use gazegate::corpus::{harvest_all, CorpusSpec};
use gazegate::fusion::{train_head, TrainConfig};
use gazegate::pipeline::{FusionConfig, PipelineConfig};

fn main() -> gazegate::Result<()> {
    let mut args = std::env::args().skip(1);
    let per: usize = args.next().map_or(Ok(3), |s| s.parse()).expect("count must be an integer");
    let epochs: usize = args.next().map_or(Ok(8), |s| s.parse()).expect("epochs must be an integer");

    let corpus = CorpusSpec {
        traces_per_scenario: per,
        ..CorpusSpec::default()
    };
    let traces = corpus.generate()?;
    let examples = harvest_all(&traces, &PipelineConfig::default(), &FusionConfig::default())?;
    let positives = examples.iter().filter(|e| e.label).count();
    println!("{} traces -> {} windows, {positives} positive", traces.len(), examples.len());

    let head = train_head(&examples, &TrainConfig { epochs, seed: 7, ..TrainConfig::default() })?;
    println!("epoch  lr        median loss  val loss  val acc");
    for e in &head.log {
        println!(
            "{:5}  {:.6}  {:11.5}  {:>8}  {:>7}",
            e.epoch,
            e.learning_rate,
            e.median_batch_loss,
            e.validation_loss.map_or("-".into(), |v| format!("{v:.4}")),
            e.validation_accuracy.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
    println!("kept epoch {}, test accuracy {:?}", head.best_epoch, head.test_accuracy);
    Ok(())
}
