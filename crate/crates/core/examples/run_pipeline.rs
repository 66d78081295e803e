//! Compare the attention-gated pipeline against the eye-only baseline on
//! every builtin scenario.
//!
//! `cargo run --release --example run_pipeline -- [traces_per_scenario]`

use gazegate::corpus::{harvest_all, CorpusSpec};
use gazegate::energy::{energy_report, DutyTimes, EnergyParams};
use gazegate::fusion::{train_head, TrainConfig};
use gazegate::metrics::{comparison_table, match_events, precision_recall, Counts, MatchRule, TableRow};
use gazegate::pipeline::{collect_eye_only, collect_snippets, FusionConfig, PipelineConfig, TvaFusion};
use gazegate::scenario::{builtin, generate, BUILTINS};

fn main() -> gazegate::Result<()> {
    let per: u64 = std::env::args().nth(1).map_or(Ok(5), |s| s.parse()).expect("count must be an integer");
    let cfg = PipelineConfig::default();
    let fusion_cfg = FusionConfig::default();
    let corpus = CorpusSpec { traces_per_scenario: 3, ..CorpusSpec::default() };
    let examples = harvest_all(&corpus.generate()?, &cfg, &fusion_cfg)?;
    let head = train_head(&examples, &TrainConfig { epochs: 8, seed: 7, ..TrainConfig::default() })?;

    let rule = MatchRule::default();
    let params = EnergyParams::calibrated();
    let (mut gated, mut eye) = (Counts::default(), Counts::default());
    let (mut gated_savings, mut eye_savings) = (0.0, 0.0);
    for name in BUILTINS {
        for seed in 0..per {
            let trace = generate(&builtin(name, seed)?)?;
            let truth = trace.truth.as_ref().expect("builtins carry truth");
            let mut fusion = TvaFusion::new(head.model.clone(), fusion_cfg);
            let a = collect_snippets(&trace, &cfg, &mut fusion)?;
            let b = collect_eye_only(&trace, &cfg)?;
            gated += match_events(&a.snippets, truth, &rule);
            eye += match_events(&b.snippets, truth, &rule);
            gated_savings += energy_report(&DutyTimes::from_log(&a.log)?, &params)?.savings;
            eye_savings += energy_report(&DutyTimes::from_log(&b.log)?, &params)?.savings;
        }
    }
    let runs = (BUILTINS.len() as u64 * per) as f64;
    let row = |method: &str, c: Counts, savings: f64| {
        let (precision, recall) = precision_recall(c);
        TableRow { method: method.into(), precision, recall, ap: None, savings: Some(savings / runs) }
    };
    print!("{}", comparison_table(&[row("gaze + scene", gated, gated_savings), row("eye only", eye, eye_savings)]));
    Ok(())
}
