//! Trace replay: drives the classifier, gate and fusion stage over a recorded
//! trace and keeps the decision log used for energy accounting.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    build_gaze_stack, fuse, recency_weights, AttentionDecision, DecisionStage, FusedTensor, FusionModel,
    ReferenceExtractor, SceneExtractor,
};
use crate::gate::{EyeOnlyDetector, Gate, GateConfig, GateEvent, GatePhase, Snippet};
use crate::oculomotor::{MovementEstimate, OculomotorClassifier, OculomotorConfig};
use crate::trace::{GazeSample, SceneFrame, Trace, TIME_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub oculomotor: OculomotorConfig,
    pub gate: GateConfig,
    /// Seconds between a fusion request and its decision reaching the gate.
    pub fusion_latency: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            oculomotor: OculomotorConfig::default(),
            gate: GateConfig::default(),
            fusion_latency: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.oculomotor.validate()?;
        self.gate.validate()?;
        if !(self.fusion_latency >= 0.0 && self.fusion_latency.is_finite()) {
            return Err(Error::Parameter(format!(
                "fusion_latency must be >= 0 (got {})",
                self.fusion_latency
            )));
        }
        Ok(())
    }
}

/// Everything the fusion stage sees when the gate asks for a decision.
#[derive(Debug, Clone, Copy)]
pub struct FusionContext<'a> {
    pub t: f64,
    /// Newest gaze samples, oldest first, at most `window_N`.
    pub gaze: &'a [GazeSample],
    /// Likelihoods aligned with `gaze`.
    pub likelihoods: &'a [f64],
    /// Latest scene frame at or before `t`.
    pub frame: Option<&'a SceneFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOutcome {
    pub accepted: bool,
    pub score: f64,
}

/// The second stage, invoked synchronously by the replay.
pub trait AttentionFusion {
    fn decide(&mut self, ctx: &FusionContext<'_>) -> Result<FusionOutcome>;
}

impl<F> AttentionFusion for F
where
    F: FnMut(&FusionContext<'_>) -> Result<FusionOutcome>,
{
    fn decide(&mut self, ctx: &FusionContext<'_>) -> Result<FusionOutcome> {
        self(ctx)
    }
}

/// Gives the same answer to every request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedFusion(pub FusionOutcome);

impl FixedFusion {
    pub fn accept_all() -> Self {
        FixedFusion(FusionOutcome {
            accepted: true,
            score: 1.0,
        })
    }

    pub fn reject_all() -> Self {
        FixedFusion(FusionOutcome {
            accepted: false,
            score: 0.0,
        })
    }
}

impl AttentionFusion for FixedFusion {
    fn decide(&mut self, _: &FusionContext<'_>) -> Result<FusionOutcome> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Heatmap spread in grid cells.
    pub sigma: f64,
    pub threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            sigma: 2.0,
            threshold: crate::fusion::model::DEFAULT_THRESHOLD,
        }
    }
}

/// Builds the fused tensor and likelihood vector for one request.
pub fn fusion_input(
    ctx: &FusionContext<'_>,
    extractor: &dyn SceneExtractor,
    grid: usize,
    history: usize,
    sigma: f64,
) -> Result<(FusedTensor, Vec<f64>)> {
    let frame = ctx
        .frame
        .ok_or_else(|| Error::Parameter(format!("no scene frame at or before t={}", ctx.t)))?;
    let scene = extractor.extract(frame)?;
    let stack = build_gaze_stack(ctx.gaze, &recency_weights(history), sigma, grid)?;
    let fused = fuse(&scene, &stack)?;
    let mut likelihoods = vec![ctx.likelihoods.first().copied().unwrap_or(0.0); history];
    let pad = history - ctx.likelihoods.len().min(history);
    let tail = &ctx.likelihoods[ctx.likelihoods.len().saturating_sub(history)..];
    likelihoods[pad..].copy_from_slice(tail);
    Ok((fused, likelihoods))
}

/// The trained gaze-scene classifier as a fusion stage.
#[derive(Debug, Clone)]
pub struct TvaFusion {
    pub model: FusionModel,
    pub config: FusionConfig,
    extractor: ReferenceExtractor,
}

impl TvaFusion {
    pub fn new(model: FusionModel, config: FusionConfig) -> Self {
        let extractor = ReferenceExtractor {
            grid: model.dims.grid,
        };
        TvaFusion {
            model,
            config,
            extractor,
        }
    }

    pub fn decision(&self, ctx: &FusionContext<'_>) -> Result<AttentionDecision> {
        let d = self.model.dims;
        let (fused, l) = fusion_input(ctx, &self.extractor, d.grid, d.history, self.config.sigma)?;
        crate::fusion::classify_attention(ctx.t, &fused, &l, &self.model, self.config.threshold)
    }
}

impl AttentionFusion for TvaFusion {
    fn decide(&mut self, ctx: &FusionContext<'_>) -> Result<FusionOutcome> {
        let d = self.decision(ctx)?;
        Ok(FusionOutcome {
            accepted: d.a_t,
            score: d.score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogEvent {
    Begin,
    InvokeFusion,
    StartRecording,
    FusionRejected,
    StopRecording,
    End,
}

impl LogEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            LogEvent::Begin => "Begin",
            LogEvent::InvokeFusion => "InvokeFusion",
            LogEvent::StartRecording => "StartRecording",
            LogEvent::FusionRejected => "FusionRejected",
            LogEvent::StopRecording => "StopRecording",
            LogEvent::End => "End",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Begin" => LogEvent::Begin,
            "InvokeFusion" => LogEvent::InvokeFusion,
            "StartRecording" => LogEvent::StartRecording,
            "FusionRejected" => LogEvent::FusionRejected,
            "StopRecording" => LogEvent::StopRecording,
            "End" => LogEvent::End,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub t: f64,
    /// Phase after the event.
    pub phase: GatePhase,
    pub event: LogEvent,
    pub score: Option<f64>,
    pub accepted: Option<bool>,
}

/// Time-ordered gate events between a `Begin` and an `End` row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLog {
    pub entries: Vec<LogEntry>,
}

/// Seconds spent waiting on fusion and recording within a log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedDuty {
    pub span: f64,
    pub fusion: f64,
    pub recording: f64,
}

impl DecisionLog {
    fn push(&mut self, t: f64, phase: GatePhase, event: LogEvent) {
        self.entries.push(LogEntry {
            t,
            phase,
            event,
            score: None,
            accepted: None,
        });
    }

    pub fn invocations(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.event == LogEvent::InvokeFusion)
            .count()
    }

    /// Sums the fusion-pending and recording intervals. Each interval is
    /// rounded to whole nanoseconds before summing, so equal durations at
    /// different clock offsets give bit-identical totals.
    pub fn duty(&self) -> Result<LoggedDuty> {
        let (Some(first), Some(last)) = (self.entries.first(), self.entries.last()) else {
            return Err(Error::Metrics("empty decision log".into()));
        };
        let nanos = |from: f64, to: f64| ((to - from) * 1e9).round() as i64;
        let mut fusion = 0i64;
        let mut recording = 0i64;
        let mut open_fusion: Option<f64> = None;
        let mut open_recording: Option<f64> = None;
        for e in &self.entries {
            match e.event {
                LogEvent::InvokeFusion => open_fusion = Some(e.t),
                LogEvent::StartRecording => {
                    if let Some(s) = open_fusion.take() {
                        fusion += nanos(s, e.t);
                    }
                    open_recording = Some(e.t);
                }
                LogEvent::FusionRejected => {
                    if let Some(s) = open_fusion.take() {
                        fusion += nanos(s, e.t);
                    }
                }
                LogEvent::StopRecording => {
                    if let Some(s) = open_recording.take() {
                        recording += nanos(s, e.t);
                    }
                }
                LogEvent::Begin | LogEvent::End => {}
            }
        }
        if let Some(s) = open_fusion {
            fusion += nanos(s, last.t);
        }
        if let Some(s) = open_recording {
            recording += nanos(s, last.t);
        }
        Ok(LoggedDuty {
            span: last.t - first.t,
            fusion: fusion as f64 * 1e-9,
            recording: recording as f64 * 1e-9,
        })
    }

    /// Times and scores use shortest round-trip formatting, so reading the
    /// log back reproduces them exactly.
    pub fn write_csv(&self, sink: &mut dyn Write) -> Result<()> {
        let io = |e: std::io::Error| Error::Config(format!("cannot write decision log: {e}"));
        writeln!(sink, "t,phase,event,score,accepted").map_err(io)?;
        for e in &self.entries {
            let score = e.score.map(|s| s.to_string()).unwrap_or_default();
            let accepted = e.accepted.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                sink,
                "{},{},{},{score},{accepted}",
                e.t,
                e.phase.as_str(),
                e.event.as_str()
            )
            .map_err(io)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`DecisionLog::write_csv`]; `#` lines are
    /// comments.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "t,phase,event,score,accepted" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected decision log header, found `{line}`"),
                    });
                }
                header_seen = true;
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(bad(format!("expected 5 columns, found {}", cols.len())));
            }
            let t: f64 = cols[0].parse().map_err(|_| bad(format!("bad time `{}`", cols[0])))?;
            let phase = match cols[1] {
                "Idle" => GatePhase::Idle,
                "Candidate" => GatePhase::Candidate,
                "FusionPending" => GatePhase::FusionPending,
                "Recording" => GatePhase::Recording,
                "Cooldown" => GatePhase::Cooldown,
                other => return Err(bad(format!("unknown phase `{other}`"))),
            };
            let event = LogEvent::parse(cols[2]).ok_or_else(|| bad(format!("unknown event `{}`", cols[2])))?;
            let score = match cols[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(format!("bad score `{s}`")))?),
            };
            let accepted = match cols[4] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                other => return Err(bad(format!("bad accepted flag `{other}`"))),
            };
            if entries.last().is_some_and(|p: &LogEntry| t < p.t) {
                return Err(bad("decision log times go backwards".into()));
            }
            entries.push(LogEntry {
                t,
                phase,
                event,
                score,
                accepted,
            });
        }
        Ok(DecisionLog { entries })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOutcome {
    pub snippets: Vec<Snippet>,
    pub log: DecisionLog,
    /// One per fusion request.
    pub decisions: Vec<AttentionDecision>,
}

/// Deterministic replay of the gate over `trace`, with fusion decisions
/// delivered `fusion_latency` seconds after each request.
pub fn collect_snippets(
    trace: &Trace,
    cfg: &PipelineConfig,
    fusion: &mut dyn AttentionFusion,
) -> Result<ReplayOutcome> {
    cfg.validate()?;
    let mut out = ReplayOutcome::default();
    let (Some(first), Some(last)) = (trace.gaze.first(), trace.gaze.last()) else {
        return Ok(out);
    };
    let n = cfg.gate.window_n;
    let mut clf = OculomotorClassifier::new(cfg.oculomotor);
    let mut gate = Gate::new(cfg.gate)?;
    let mut gaze_hist: VecDeque<GazeSample> = VecDeque::with_capacity(n + 1);
    let mut lik_hist: VecDeque<f64> = VecDeque::with_capacity(n + 1);
    let mut pending: Option<(f64, FusionOutcome)> = None;
    out.log.push(first.t, GatePhase::Idle, LogEvent::Begin);

    for sample in &trace.gaze {
        let estimate: MovementEstimate = clf.push(*sample);
        gaze_hist.push_back(*sample);
        lik_hist.push_back(estimate.likelihood);
        if gaze_hist.len() > n {
            gaze_hist.pop_front();
            lik_hist.pop_front();
        }
        if let Some((due, outcome)) = pending {
            if sample.t >= due - TIME_EPS {
                pending = None;
                let ev = gate.resolve_fusion(outcome.accepted, outcome.score, sample.t)?;
                record(&mut out, &gate, sample.t, ev);
            }
        }
        let ev = gate.step(sample, &estimate)?;
        record(&mut out, &gate, sample.t, ev);
        if ev == GateEvent::InvokeFusion {
            let gaze = gaze_hist.make_contiguous().to_vec();
            let likelihoods = lik_hist.make_contiguous().to_vec();
            let ctx = FusionContext {
                t: sample.t,
                gaze: &gaze,
                likelihoods: &likelihoods,
                frame: trace.frame_at(sample.t),
            };
            let outcome = fusion.decide(&ctx)?;
            out.decisions.push(AttentionDecision {
                t: sample.t,
                a_t: outcome.accepted,
                score: outcome.score,
                stage: if outcome.accepted {
                    DecisionStage::Accepted
                } else {
                    DecisionStage::FusionRejected
                },
            });
            if let Some(entry) = out.log.entries.last_mut() {
                entry.score = Some(outcome.score);
                entry.accepted = Some(outcome.accepted);
            }
            if cfg.fusion_latency <= 0.0 {
                let ev = gate.resolve_fusion(outcome.accepted, outcome.score, sample.t)?;
                record(&mut out, &gate, sample.t, ev);
            } else {
                pending = Some((sample.t + cfg.fusion_latency, outcome));
            }
        }
    }
    if let Some(snippet) = gate.finish(last.t) {
        record(&mut out, &gate, last.t, GateEvent::StopRecording(snippet));
    }
    out.log.push(last.t, gate.state().phase, LogEvent::End);
    Ok(out)
}

fn record(out: &mut ReplayOutcome, gate: &Gate, t: f64, ev: GateEvent) {
    let phase = gate.state().phase;
    let (event, score) = match ev {
        GateEvent::None => return,
        GateEvent::InvokeFusion => (LogEvent::InvokeFusion, None),
        GateEvent::StartRecording(s) => (LogEvent::StartRecording, Some(s)),
        GateEvent::FusionRejected(s) => (LogEvent::FusionRejected, Some(s)),
        GateEvent::StopRecording(snippet) => {
            out.snippets.push(snippet);
            (LogEvent::StopRecording, None)
        }
    };
    out.log.entries.push(LogEntry {
        t,
        phase,
        event,
        score,
        accepted: None,
    });
}

/// Replay of the gaze-only baseline. Its log has no fusion rows.
pub fn collect_eye_only(trace: &Trace, cfg: &PipelineConfig) -> Result<ReplayOutcome> {
    cfg.validate()?;
    let mut out = ReplayOutcome::default();
    let (Some(first), Some(last)) = (trace.gaze.first(), trace.gaze.last()) else {
        return Ok(out);
    };
    let mut clf = OculomotorClassifier::new(cfg.oculomotor);
    let mut det = EyeOnlyDetector::new(cfg.gate)?;
    out.log.push(first.t, GatePhase::Idle, LogEvent::Begin);
    for sample in &trace.gaze {
        let estimate = clf.push(*sample);
        match det.step(sample, &estimate) {
            GateEvent::StartRecording(score) => out.log.entries.push(LogEntry {
                t: sample.t,
                phase: GatePhase::Recording,
                event: LogEvent::StartRecording,
                score: Some(score),
                accepted: Some(true),
            }),
            GateEvent::StopRecording(snippet) => {
                out.snippets.push(snippet);
                out.log.push(sample.t, GatePhase::Cooldown, LogEvent::StopRecording);
            }
            _ => {}
        }
    }
    if let Some(snippet) = det.finish(last.t) {
        out.snippets.push(snippet);
        out.log.push(last.t, GatePhase::Cooldown, LogEvent::StopRecording);
    }
    out.log.push(last.t, GatePhase::Idle, LogEvent::End);
    Ok(out)
}

pub fn save_decision_log(log: &DecisionLog, path: &Path, header: &str) -> Result<()> {
    crate::io::write_atomic(path, |w| {
        if !header.is_empty() {
            w.write_all(header.as_bytes()).map_err(|e| Error::file(path, e))?;
        }
        log.write_csv(w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceMeta;

    fn entry(t: f64, event: LogEvent) -> LogEntry {
        LogEntry {
            t,
            phase: GatePhase::Idle,
            event,
            score: None,
            accepted: None,
        }
    }

    #[test]
    fn duty_sums_pending_and_recording_intervals() {
        use LogEvent::*;
        let log = DecisionLog {
            entries: vec![
                entry(0.0, Begin),
                entry(10.0, InvokeFusion),
                entry(10.1, FusionRejected),
                entry(50.0, InvokeFusion),
                entry(50.1, StartRecording),
                entry(60.1, StopRecording),
                entry(350.0, InvokeFusion),
                entry(350.1, StartRecording),
                entry(360.0, End),
            ],
        };
        let d = log.duty().unwrap();
        assert!((d.span - 360.0).abs() < 1e-12);
        assert!((d.fusion - 0.3).abs() < 1e-9);
        assert!((d.recording - 19.9).abs() < 1e-9);
        assert!(DecisionLog::default().duty().is_err());
    }

    #[test]
    fn duty_does_not_depend_on_clock_offset() {
        use LogEvent::*;
        let at = |t0: f64| {
            let log = DecisionLog {
                entries: vec![
                    entry(0.0, Begin),
                    entry(t0, InvokeFusion),
                    entry(t0 + 0.1, StartRecording),
                    entry(t0 + 10.1, StopRecording),
                    entry(120.0, End),
                ],
            };
            log.duty().unwrap()
        };
        let base = at(1.0 / 30.0);
        for k in 2..3000 {
            let d = at(k as f64 / 30.0 * 0.037);
            assert_eq!(d.fusion.to_bits(), base.fusion.to_bits());
            assert_eq!(d.recording.to_bits(), base.recording.to_bits());
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut log = DecisionLog::default();
        log.push(0.0, GatePhase::Idle, LogEvent::Begin);
        log.entries.push(LogEntry {
            t: 1.5,
            phase: GatePhase::FusionPending,
            event: LogEvent::InvokeFusion,
            score: Some(0.75),
            accepted: Some(true),
        });
        log.push(2.0, GatePhase::Recording, LogEvent::End);
        log.push(2.0 + 7.0 / 30.0, GatePhase::Idle, LogEvent::End);
        let mut buf = b"# config_hash abc\n".to_vec();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("1.5,FusionPending,InvokeFusion,0.75,true"));
        assert_eq!(DecisionLog::read_csv(&text).unwrap(), log);
        assert!(matches!(
            DecisionLog::read_csv("t,phase,event,score,accepted\n1,Nowhere,End,,\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_trace_gives_empty_outputs() {
        let trace = Trace {
            meta: TraceMeta::default(),
            gaze: Vec::new(),
            frames: Vec::new(),
            truth: None,
        };
        let out = collect_snippets(&trace, &PipelineConfig::default(), &mut FixedFusion::accept_all()).unwrap();
        assert!(out.snippets.is_empty() && out.log.entries.is_empty() && out.decisions.is_empty());
    }

    #[test]
    fn fusion_sees_window_and_latency_delays_recording() {
        let gaze: Vec<_> = (0..120).map(|k| GazeSample::new(k as f64 / 30.0, 0.5, 0.5)).collect();
        let trace = Trace {
            meta: TraceMeta::default(),
            gaze,
            frames: Vec::new(),
            truth: None,
        };
        let mut seen = Vec::new();
        let mut fusion = |ctx: &FusionContext<'_>| {
            seen.push((ctx.t, ctx.gaze.len(), ctx.likelihoods.len(), ctx.frame.is_none()));
            Ok(FusionOutcome {
                accepted: true,
                score: 0.9,
            })
        };
        let out = collect_snippets(&trace, &PipelineConfig::default(), &mut fusion).unwrap();
        assert_eq!(seen.len(), 1);
        assert!((seen[0].0 - 1.0).abs() < 1e-9);
        assert_eq!((seen[0].1, seen[0].2, seen[0].3), (4, 4, true));
        // decision arrives at the first sample 0.1 s later; the trace ends first
        assert_eq!(out.snippets.len(), 1);
        let s = out.snippets[0];
        assert!((s.t_start - 1.1).abs() < 1e-9, "{s:?}");
        assert!((s.t_end - 119.0 / 30.0).abs() < 1e-9);
        let events: Vec<LogEvent> = out.log.entries.iter().map(|e| e.event).collect();
        use LogEvent::*;
        assert_eq!(events, [Begin, InvokeFusion, StartRecording, StopRecording, End]);
        let duty = out.log.duty().unwrap();
        assert!((duty.fusion - 0.1).abs() < 1e-9);
    }
}
