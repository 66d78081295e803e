//! Labelled fusion-stage examples harvested from synthetic traces.
//!
//! The gate replays each trace with a fusion stage that always rejects, so
//! every window the gate would hand to fusion is seen. A window is positive
//! iff its request time falls inside a truth interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Example, ReferenceExtractor, GRID};
use crate::pipeline::{collect_snippets, FusionConfig, FusionContext, FusionOutcome, PipelineConfig};
use crate::scenario::{builtin_extended, generate, BUILTINS};
use crate::trace::Trace;

/// Which builtin scenarios and seeds make up a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub scenarios: Vec<String>,
    /// Seeds `first_seed .. first_seed + traces_per_scenario`. The default
    /// leaves seeds below 1000 free for evaluation.
    pub first_seed: u64,
    pub traces_per_scenario: usize,
    /// Minimum trace length; `0` keeps one block per trace.
    pub min_duration: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            scenarios: BUILTINS.iter().map(|s| s.to_string()).collect(),
            first_seed: 1000,
            traces_per_scenario: 5,
            min_duration: 0.0,
        }
    }
}

impl CorpusSpec {
    /// `(scenario, seed)` pairs, scenario-major.
    pub fn members(&self) -> Vec<(String, u64)> {
        self.scenarios
            .iter()
            .flat_map(|s| (0..self.traces_per_scenario as u64).map(move |k| (s.clone(), self.first_seed + k)))
            .collect()
    }

    pub fn generate(&self) -> Result<Vec<Trace>> {
        if self.scenarios.is_empty() || self.traces_per_scenario == 0 {
            return Err(Error::Config("corpus has no traces".into()));
        }
        self.members()
            .iter()
            .map(|(name, seed)| generate(&builtin_extended(name, *seed, self.min_duration)?))
            .collect()
    }
}

/// One example per fusion request of a reject-everything replay.
pub fn harvest(trace: &Trace, cfg: &PipelineConfig, fusion: &FusionConfig) -> Result<Vec<Example>> {
    let truth = trace
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config(format!("trace '{}' carries no truth", trace.meta.scenario)))?;
    let extractor = ReferenceExtractor { grid: GRID };
    let history = cfg.gate.window_n;
    let mut out = Vec::new();
    let mut record = |ctx: &FusionContext<'_>| -> Result<FusionOutcome> {
        let (fused, likelihoods) = crate::pipeline::fusion_input(ctx, &extractor, GRID, history, fusion.sigma)?;
        out.push(Example {
            fused,
            likelihoods,
            label: truth.interval_at(ctx.t).is_some(),
        });
        Ok(FusionOutcome {
            accepted: false,
            score: 0.0,
        })
    };
    collect_snippets(trace, cfg, &mut record)?;
    Ok(out)
}

/// Examples from every trace, in trace order.
pub fn harvest_all(traces: &[Trace], cfg: &PipelineConfig, fusion: &FusionConfig) -> Result<Vec<Example>> {
    let mut all = Vec::new();
    for t in traces {
        all.extend(harvest(t, cfg, fusion)?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;

    #[test]
    fn members_are_scenario_major() {
        let spec = CorpusSpec {
            scenarios: vec!["a".into(), "b".into()],
            first_seed: 10,
            traces_per_scenario: 2,
            min_duration: 0.0,
        };
        let m = spec.members();
        assert_eq!(m, vec![("a".into(), 10), ("a".into(), 11), ("b".into(), 10), ("b".into(), 11)]);
    }

    #[test]
    fn blank_stare_harvest_is_all_negative_and_pursuit_has_positives() {
        let cfg = PipelineConfig::default();
        let fusion = FusionConfig::default();
        let blank = generate(&builtin("blank_stare", 1).unwrap()).unwrap();
        let neg = harvest(&blank, &cfg, &fusion).unwrap();
        assert!(!neg.is_empty());
        assert!(neg.iter().all(|e| !e.label));
        let pursuit = generate(&builtin("pursuit_basic", 1).unwrap()).unwrap();
        let pos = harvest(&pursuit, &cfg, &fusion).unwrap();
        assert!(pos.iter().any(|e| e.label));
        assert_eq!(pos[0].likelihoods.len(), cfg.gate.window_n);
    }
}
