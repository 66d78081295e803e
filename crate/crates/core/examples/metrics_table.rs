//! Event matching and average precision on a hand-made example.
//!
//! `cargo run --example metrics_table`

use gazegate::gate::Snippet;
use gazegate::metrics::{
    average_precision, comparison_table, match_events, precision_recall, MatchRule, Scored, TableRow,
};
use gazegate::trace::{AttentionTruth, TruthInterval};

fn main() -> gazegate::Result<()> {
    let truth = AttentionTruth::new(vec![
        TruthInterval { t_start: 2.0, t_end: 6.0, instance: 1 },
        TruthInterval { t_start: 10.0, t_end: 14.0, instance: 2 },
        TruthInterval { t_start: 20.0, t_end: 22.0, instance: 3 },
    ])?;
    let snippet = |t_start, t_end| Snippet { t_start, t_end, trigger_score: 1.0 };
    // one good match, one mostly-outside snippet, one spurious snippet
    let snippets = [snippet(2.5, 6.0), snippet(13.5, 18.0), snippet(30.0, 31.0)];

    let counts = match_events(&snippets, &truth, &MatchRule::default());
    let (precision, recall) = precision_recall(counts);
    println!("{counts:?}");

    let scored = [(0.9, true), (0.8, false), (0.7, true), (0.4, true), (0.2, false)]
        .map(|(score, positive)| Scored { score, positive });
    let ap = average_precision(&scored)?;

    print!(
        "{}",
        comparison_table(&[TableRow { method: "example".into(), precision, recall, ap: Some(ap), savings: None }])
    );
    Ok(())
}
