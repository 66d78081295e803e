//! Event-level precision and recall, average precision over decision
//! scores, and the `T` sweep joining accuracy with duty-cycle energy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::energy::{energy_report, trigger_rate, DutyTimes, EnergyParams};
use crate::error::{Error, Result};
use crate::gate::Snippet;
use crate::pipeline::{collect_snippets, AttentionFusion, PipelineConfig, ReplayOutcome};
use crate::trace::{AttentionTruth, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchRule {
    /// Fraction of a snippet's duration that must overlap its truth interval.
    pub min_overlap: f64,
}

impl Default for MatchRule {
    fn default() -> Self {
        MatchRule { min_overlap: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Whether `snippet` may be matched to the truth interval `[t0, t1)`.
pub fn eligible(snippet: &Snippet, t0: f64, t1: f64, rule: &MatchRule) -> bool {
    let ov = overlap(snippet.t_start, snippet.t_end, t0, t1);
    ov > 0.0 && ov >= rule.min_overlap * snippet.duration()
}

/// Greedy one-to-one matching: snippets in start order each take the
/// earliest unmatched truth interval they are eligible for.
pub fn match_events(snippets: &[Snippet], truth: &AttentionTruth, rule: &MatchRule) -> Counts {
    let mut order: Vec<&Snippet> = snippets.iter().collect();
    order.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let mut used = vec![false; truth.intervals.len()];
    let mut tp = 0;
    for s in order {
        if let Some(k) = truth
            .intervals
            .iter()
            .enumerate()
            .position(|(k, iv)| !used[k] && eligible(s, iv.t_start, iv.t_end, rule))
        {
            used[k] = true;
            tp += 1;
        }
    }
    Counts {
        tp,
        fp: snippets.len() - tp,
        fn_: truth.intervals.len() - tp,
    }
}

/// `(precision, recall)`; `None` marks a zero denominator.
pub fn precision_recall(c: Counts) -> (Option<f64>, Option<f64>) {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

/// A decision score with its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub score: f64,
    pub positive: bool,
}

/// Sum over unique descending score thresholds of the recall gain times the
/// precision at that threshold.
pub fn average_precision(samples: &[Scored]) -> Result<f64> {
    let positives = samples.iter().filter(|s| s.positive).count();
    if positives == 0 {
        return Err(Error::Metrics("average precision needs at least one positive".into()));
    }
    let mut sorted: Vec<Scored> = samples.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let (mut tp, mut taken) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            tp += usize::from(sorted[i].positive);
            taken += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / taken as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ap: Option<f64>,
}

/// Labels each fusion decision by whether its time falls in a truth interval.
pub fn scored_decisions(outcome: &ReplayOutcome, truth: &AttentionTruth) -> Vec<Scored> {
    outcome
        .decisions
        .iter()
        .map(|d| Scored {
            score: d.score,
            positive: truth.interval_at(d.t).is_some(),
        })
        .collect()
}

pub fn metrics_report(outcome: &ReplayOutcome, truth: &AttentionTruth, rule: &MatchRule) -> MetricsReport {
    let counts = match_events(&outcome.snippets, truth, rule);
    let (precision, recall) = precision_recall(counts);
    MetricsReport {
        counts,
        precision,
        recall,
        ap: average_precision(&scored_decisions(outcome, truth)).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub t_seconds: f64,
    pub alpha: f64,
    pub savings: f64,
    pub metrics: MetricsReport,
    pub invocations: usize,
}

/// One replay per `T`, everything else fixed.
pub fn sweep_t(
    trace: &Trace,
    cfg: &PipelineConfig,
    t_values: &[f64],
    fusion: &mut dyn AttentionFusion,
    energy: &EnergyParams,
    rule: &MatchRule,
) -> Result<Vec<SweepRow>> {
    if t_values.len() < 2 {
        return Err(Error::Metrics(format!(
            "a sweep needs at least two T values (got {})",
            t_values.len()
        )));
    }
    let empty = AttentionTruth::default();
    let truth = trace.truth.as_ref().unwrap_or(&empty);
    t_values
        .iter()
        .map(|&t| {
            let mut c = *cfg;
            c.gate.period = t;
            let outcome = collect_snippets(trace, &c, fusion)?;
            let duty = DutyTimes::from_log(&outcome.log)?;
            let report = energy_report(&duty, energy)?;
            Ok(SweepRow {
                t_seconds: t,
                alpha: trigger_rate(&outcome.log)?,
                savings: report.savings,
                metrics: metrics_report(&outcome, truth, rule),
                invocations: outcome.log.invocations(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "undefined".into())
}

pub const SWEEP_HEADER: &str = "T_seconds,alpha,savings,precision,recall,AP,TP,FP,FN";

pub fn sweep_csv_row(r: &SweepRow) -> String {
    format!(
        "{:.6},{:.6},{:.6},{},{},{},{},{},{}",
        r.t_seconds,
        r.alpha,
        r.savings,
        opt(r.metrics.precision),
        opt(r.metrics.recall),
        opt(r.metrics.ap),
        r.metrics.counts.tp,
        r.metrics.counts.fp,
        r.metrics.counts.fn_
    )
}

/// Percentage with two decimals, or `undefined`.
pub fn percent(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2} %", 100.0 * x)).unwrap_or_else(|| "undefined".into())
}

/// One line of the accuracy and energy comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ap: Option<f64>,
    pub savings: Option<f64>,
}

/// Markdown table: method, precision, recall, AP, energy savings.
pub fn comparison_table(rows: &[TableRow]) -> String {
    let mut out = String::from("| Method | Precision | Recall | AP | Energy savings |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.method,
            percent(r.precision),
            percent(r.recall),
            percent(r.ap),
            percent(r.savings)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TruthInterval;
    use proptest::prelude::*;

    fn snip(a: f64, b: f64) -> Snippet {
        Snippet {
            t_start: a,
            t_end: b,
            trigger_score: 1.0,
        }
    }

    fn truth(iv: &[(f64, f64)]) -> AttentionTruth {
        AttentionTruth::new(
            iv.iter()
                .enumerate()
                .map(|(k, &(a, b))| TruthInterval {
                    t_start: a,
                    t_end: b,
                    instance: k as u32,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn matching_examples() {
        let rule = MatchRule::default();
        let t = truth(&[(0.0, 5.0), (10.0, 15.0), (20.0, 25.0)]);
        assert_eq!(match_events(&[], &t, &rule), Counts { tp: 0, fp: 0, fn_: 3 });
        let exact = truth(&[(3.0, 13.0)]);
        assert_eq!(match_events(&[snip(3.0, 13.0)], &exact, &rule), Counts { tp: 1, fp: 0, fn_: 0 });
        // half of the snippet on each interval: the earlier one wins
        let two = truth(&[(0.0, 5.0), (5.0, 10.0)]);
        assert_eq!(match_events(&[snip(2.5, 7.5)], &two, &rule), Counts { tp: 1, fp: 0, fn_: 1 });
    }

    #[test]
    fn precision_recall_examples() {
        let (p, r) = precision_recall(Counts { tp: 7, fp: 1, fn_: 1 });
        assert_eq!((p, r), (Some(0.875), Some(0.875)));
        assert_eq!(precision_recall(Counts::default()), (None, None));
    }

    #[test]
    fn ap_worked_example() {
        let s = [
            Scored { score: 0.9, positive: true },
            Scored { score: 0.8, positive: false },
            Scored { score: 0.7, positive: true },
        ];
        assert!((average_precision(&s).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        let tied = [
            Scored { score: 0.5, positive: true },
            Scored { score: 0.5, positive: false },
        ];
        assert_eq!(average_precision(&tied).unwrap(), 0.5);
        let none = [Scored { score: 0.5, positive: false }];
        assert!(average_precision(&none).is_err());
    }

    #[test]
    fn table_reproduces_reference_layout() {
        let rows = [
            TableRow {
                method: "TVA".into(),
                precision: Some(0.875),
                recall: Some(0.864),
                ap: None,
                savings: Some(0.8636),
            },
            TableRow {
                method: "Eye tracking alone".into(),
                precision: Some(0.4052),
                recall: Some(0.127),
                ap: None,
                savings: None,
            },
        ];
        let t = comparison_table(&rows);
        assert!(t.contains("| TVA | 87.50 % | 86.40 % | undefined | 86.36 % |"), "{t}");
        assert!(t.contains("| Eye tracking alone | 40.52 % | 12.70 % |"));
    }

    /// Largest number of disjoint eligible pairs, by exhaustive search.
    fn brute_max_matching(snippets: &[Snippet], truth: &AttentionTruth, rule: &MatchRule) -> usize {
        fn go(i: usize, s: &[Snippet], t: &AttentionTruth, rule: &MatchRule, used: &mut Vec<bool>) -> usize {
            if i == s.len() {
                return 0;
            }
            let mut best = go(i + 1, s, t, rule, used);
            for k in 0..t.intervals.len() {
                let iv = &t.intervals[k];
                if !used[k] && eligible(&s[i], iv.t_start, iv.t_end, rule) {
                    used[k] = true;
                    best = best.max(1 + go(i + 1, s, t, rule, used));
                    used[k] = false;
                }
            }
            best
        }
        go(0, snippets, truth, rule, &mut vec![false; truth.intervals.len()])
    }

    fn disjoint(cuts: Vec<f64>) -> Vec<(f64, f64)> {
        let mut c = cuts;
        c.sort_by(f64::total_cmp);
        c.dedup();
        c.chunks_exact(2).filter(|p| p[1] > p[0]).map(|p| (p[0], p[1])).collect()
    }

    /// Thresholds at each unique score; precision and recall recounted from
    /// scratch at every one.
    fn ap_oracle(samples: &[Scored]) -> f64 {
        let mut thresholds: Vec<f64> = samples.iter().map(|s| s.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let pos = samples.iter().filter(|s| s.positive).count() as f64;
        let mut prev = 0.0;
        let mut ap = 0.0;
        for th in thresholds {
            let picked: Vec<&Scored> = samples.iter().filter(|s| s.score >= th).collect();
            let tp = picked.iter().filter(|s| s.positive).count() as f64;
            let recall = tp / pos;
            ap += (recall - prev) * tp / picked.len() as f64;
            prev = recall;
        }
        ap
    }

    proptest! {
        #[test]
        fn ap_matches_threshold_recount(
            raw in prop::collection::vec((0u8..6, any::<bool>()), 1..20),
        ) {
            let samples: Vec<Scored> = raw.iter().map(|&(s, p)| Scored { score: f64::from(s) / 5.0, positive: p }).collect();
            match average_precision(&samples) {
                Ok(ap) => {
                    prop_assert!((ap - ap_oracle(&samples)).abs() < 1e-12);
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
                }
                Err(_) => prop_assert!(samples.iter().all(|s| !s.positive)),
            }
        }

        #[test]
        fn greedy_matches_exhaustive_search(
            s_cuts in prop::collection::vec(0.0f64..50.0, 0..10),
            t_cuts in prop::collection::vec(0.0f64..50.0, 0..10),
            shift in -20.0f64..20.0,
        ) {
            let rule = MatchRule::default();
            let snippets: Vec<Snippet> = disjoint(s_cuts).into_iter().map(|(a, b)| snip(a, b)).collect();
            let t = truth(&disjoint(t_cuts));
            let c = match_events(&snippets, &t, &rule);
            prop_assert_eq!(c.tp, brute_max_matching(&snippets, &t, &rule));
            prop_assert_eq!(c.tp + c.fp, snippets.len());
            prop_assert_eq!(c.tp + c.fn_, t.intervals.len());
            // translation symmetry
            let moved: Vec<Snippet> = snippets.iter().map(|s| snip(s.t_start + shift + 100.0, s.t_end + shift + 100.0)).collect();
            let moved_truth = truth(&t.intervals.iter().map(|i| (i.t_start + shift + 100.0, i.t_end + shift + 100.0)).collect::<Vec<_>>());
            let c2 = match_events(&moved, &moved_truth, &rule);
            prop_assert_eq!(c, c2);
            let (p, r) = precision_recall(c);
            prop_assert!(p.is_none_or(|p| (0.0..=1.0).contains(&p)));
            prop_assert!(r.is_none_or(|r| (0.0..=1.0).contains(&r)));
        }
    }
}
