//! The always-on, eye-only attention gate.
//!
//! [`Gate`] watches gaze alone and asks the fusion stage for a decision once
//! the majority of the last `T` seconds of gaze sits inside a small
//! median-centred box. Accepted decisions start a fixed-length recording;
//! rejections and finished recordings fall into a short cooldown.
//!
//! ```text
//!   Idle <-> Candidate --full T window holds--> FusionPending
//!                                                 |accept      |reject
//!                                                 v            v
//!                      Idle <--cooldown-- Cooldown <--stop-- Recording
//! ```
//!
//! [`EyeOnlyDetector`] is the gaze-only baseline: it needs a saccade to
//! pursuit/fixation transition, then `T` seconds free of saccades with the
//! same majority rule, and records without consulting the scene.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oculomotor::{detect_transition, MovementEstimate, MovementLabel};
use crate::trace::{GazeSample, TIME_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Period `T` over which gaze must stay focused, in seconds.
    #[serde(rename = "T")]
    pub period: f64,
    /// Side of the focus box as a fraction of frame width and height.
    pub area_fraction: f64,
    /// Fraction of valid samples that must fall inside the box.
    pub majority_q: f64,
    /// Number of gaze positions and likelihoods handed to fusion.
    #[serde(rename = "window_N")]
    pub window_n: usize,
    pub snippet_duration: f64,
    pub cooldown: f64,
    /// Run length used when looking for a saccade to pursuit transition.
    pub transition_run: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            period: 1.0,
            area_fraction: 0.05,
            majority_q: 0.90,
            window_n: 4,
            snippet_duration: 10.0,
            cooldown: 0.5,
            transition_run: 3,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.period > 0.0 && self.period.is_finite()) {
            bad.push(format!("T must be > 0 (got {})", self.period));
        }
        if !(self.area_fraction > 0.0 && self.area_fraction < 1.0) {
            bad.push(format!("area_fraction must lie in (0,1) (got {})", self.area_fraction));
        }
        if !(self.majority_q > 0.0 && self.majority_q <= 1.0) {
            bad.push(format!("majority_q must lie in (0,1] (got {})", self.majority_q));
        }
        if self.window_n < 1 {
            bad.push("window_N must be >= 1".to_string());
        }
        if !(self.snippet_duration > 0.0) {
            bad.push(format!("snippet_duration must be > 0 (got {})", self.snippet_duration));
        }
        if !(self.cooldown >= 0.0) {
            bad.push(format!("cooldown must be >= 0 (got {})", self.cooldown));
        }
        if self.transition_run < 1 {
            bad.push("transition_run must be >= 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fraction of valid samples inside the `area_fraction`-sided square centred
/// on the coordinate-wise median. `None` when no sample is valid.
pub fn focus_fraction(window: &[GazeSample], area_fraction: f64) -> Option<f64> {
    let mut xs: Vec<f64> = window.iter().filter(|s| s.valid).map(|s| s.x).collect();
    if xs.is_empty() {
        return None;
    }
    let mut ys: Vec<f64> = window.iter().filter(|s| s.valid).map(|s| s.y).collect();
    let (mx, my) = (median(&mut xs), median(&mut ys));
    let half = 0.5 * area_fraction;
    let inside = window
        .iter()
        .filter(|s| s.valid && (s.x - mx).abs() <= half && (s.y - my).abs() <= half)
        .count();
    Some(inside as f64 / xs.len() as f64)
}

/// The majority rule: at least `majority_q` of the valid samples lie in the
/// median-centred focus box.
pub fn potential_attention(window: &[GazeSample], cfg: &GateConfig) -> bool {
    focus_fraction(window, cfg.area_fraction).is_some_and(|f| f >= cfg.majority_q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GatePhase {
    Idle,
    Candidate,
    FusionPending,
    Recording,
    Cooldown,
}

impl GatePhase {
    pub fn as_str(self) -> &'static str {
        match self {
            GatePhase::Idle => "Idle",
            GatePhase::Candidate => "Candidate",
            GatePhase::FusionPending => "FusionPending",
            GatePhase::Recording => "Recording",
            GatePhase::Cooldown => "Cooldown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateState {
    pub phase: GatePhase,
    pub phase_entry_t: f64,
    /// Start time of the snippet being recorded.
    pub active_snippet: Option<f64>,
}

/// A recorded moment `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub t_start: f64,
    pub t_end: f64,
    pub trigger_score: f64,
}

impl Snippet {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateEvent {
    None,
    InvokeFusion,
    StartRecording(f64),
    FusionRejected(f64),
    StopRecording(Snippet),
}

/// Two-stage trigger state machine. Consumes gaze only.
#[derive(Debug, Clone)]
pub struct Gate {
    cfg: GateConfig,
    state: GateState,
    window: VecDeque<GazeSample>,
    scratch: Vec<GazeSample>,
    recent: VecDeque<MovementEstimate>,
    episode_start: f64,
    clock: f64,
    score: f64,
}

impl Gate {
    pub fn new(cfg: GateConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Gate {
            cfg,
            state: GateState {
                phase: GatePhase::Idle,
                phase_entry_t: f64::NEG_INFINITY,
                active_snippet: None,
            },
            window: VecDeque::new(),
            scratch: Vec::new(),
            recent: VecDeque::with_capacity(2 * cfg.transition_run + 1),
            episode_start: f64::NEG_INFINITY,
            clock: f64::NEG_INFINITY,
            score: 0.0,
        })
    }

    pub fn state(&self) -> GateState {
        self.state
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    fn enter(&mut self, phase: GatePhase, t: f64) {
        if self.state.phase != phase {
            self.state.phase = phase;
            self.state.phase_entry_t = t;
        }
    }

    fn start_episode(&mut self, t: f64) {
        self.window.clear();
        self.episode_start = t;
    }

    /// Advances the gate by one gaze sample; the sample time is the clock.
    pub fn step(&mut self, sample: &GazeSample, estimate: &MovementEstimate) -> Result<GateEvent> {
        let clock = sample.t;
        if clock < self.clock {
            return Err(Error::Protocol(format!(
                "clock went backwards from {} to {clock}",
                self.clock
            )));
        }
        if self.clock == f64::NEG_INFINITY {
            self.start_episode(clock);
            self.state.phase_entry_t = clock;
        }
        self.clock = clock;

        // dropouts carry no movement label
        if sample.valid {
            self.recent.push_back(*estimate);
            if self.recent.len() > 2 * self.cfg.transition_run {
                self.recent.pop_front();
            }
        }

        match self.state.phase {
            GatePhase::FusionPending => Ok(GateEvent::None),
            GatePhase::Recording => {
                let start = self.state.active_snippet.expect("recording without a start");
                if clock >= start + self.cfg.snippet_duration - TIME_EPS {
                    let snippet = Snippet {
                        t_start: start,
                        t_end: start + self.cfg.snippet_duration,
                        trigger_score: self.score,
                    };
                    self.state.active_snippet = None;
                    self.enter(GatePhase::Cooldown, clock);
                    Ok(GateEvent::StopRecording(snippet))
                } else {
                    Ok(GateEvent::None)
                }
            }
            GatePhase::Cooldown => {
                if clock >= self.state.phase_entry_t + self.cfg.cooldown - TIME_EPS {
                    self.enter(GatePhase::Idle, clock);
                    self.start_episode(clock);
                    Ok(self.watch(sample))
                } else {
                    Ok(GateEvent::None)
                }
            }
            GatePhase::Idle | GatePhase::Candidate => Ok(self.watch(sample)),
        }
    }

    fn watch(&mut self, sample: &GazeSample) -> GateEvent {
        let clock = sample.t;
        self.window.push_back(*sample);
        while self
            .window
            .front()
            .is_some_and(|s| s.t < clock - self.cfg.period - TIME_EPS)
        {
            self.window.pop_front();
        }
        self.scratch.clear();
        self.scratch.extend(self.window.iter().copied());
        let holds = potential_attention(&self.scratch, &self.cfg);
        let full = self.episode_start <= clock - self.cfg.period + TIME_EPS;
        if full && holds {
            self.enter(GatePhase::FusionPending, clock);
            return GateEvent::InvokeFusion;
        }
        let valid = self.scratch.iter().filter(|s| s.valid).count();
        let promising =
            detect_transition(&self.recent, self.cfg.transition_run) || (valid >= 2 && holds);
        let next = if promising {
            GatePhase::Candidate
        } else {
            GatePhase::Idle
        };
        self.enter(next, clock);
        GateEvent::None
    }

    /// Delivers the fusion decision requested by the last `InvokeFusion`.
    pub fn resolve_fusion(&mut self, accepted: bool, score: f64, clock: f64) -> Result<GateEvent> {
        if self.state.phase != GatePhase::FusionPending {
            return Err(Error::Protocol(format!(
                "fusion decision delivered while gate is {}",
                self.state.phase.as_str()
            )));
        }
        self.clock = self.clock.max(clock);
        if accepted {
            self.score = score;
            self.state.active_snippet = Some(clock);
            self.enter(GatePhase::Recording, clock);
            Ok(GateEvent::StartRecording(score))
        } else {
            self.enter(GatePhase::Cooldown, clock);
            Ok(GateEvent::FusionRejected(score))
        }
    }

    /// Closes a recording cut short by the end of the stream.
    pub fn finish(&mut self, clock: f64) -> Option<Snippet> {
        let start = self.state.active_snippet.take()?;
        self.enter(GatePhase::Cooldown, clock);
        Some(Snippet {
            t_start: start,
            t_end: clock.min(start + self.cfg.snippet_duration),
            trigger_score: self.score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EyePhase {
    Waiting,
    Tracking { anchor: f64 },
    Recording { start: f64 },
    Cooldown { since: f64 },
}

/// Gaze-only baseline detector: transition, then `T` seconds of uninterrupted
/// pursuit or fixation satisfying the majority rule.
#[derive(Debug, Clone)]
pub struct EyeOnlyDetector {
    cfg: GateConfig,
    phase: EyePhase,
    recent: VecDeque<MovementEstimate>,
    window: Vec<GazeSample>,
    score: f64,
}

impl EyeOnlyDetector {
    pub fn new(cfg: GateConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(EyeOnlyDetector {
            cfg,
            phase: EyePhase::Waiting,
            recent: VecDeque::with_capacity(2 * cfg.transition_run + 1),
            window: Vec::new(),
            score: 0.0,
        })
    }

    pub fn is_recording(&self) -> bool {
        matches!(self.phase, EyePhase::Recording { .. })
    }

    /// Returns `StartRecording` or `StopRecording` when those happen.
    pub fn step(&mut self, sample: &GazeSample, estimate: &MovementEstimate) -> GateEvent {
        let clock = sample.t;
        // dropouts carry no movement label
        if sample.valid {
            self.recent.push_back(*estimate);
            if self.recent.len() > 2 * self.cfg.transition_run {
                self.recent.pop_front();
            }
        }
        match self.phase {
            EyePhase::Waiting => {
                if detect_transition(&self.recent, self.cfg.transition_run) {
                    self.window.clear();
                    self.window.push(*sample);
                    self.phase = EyePhase::Tracking { anchor: clock };
                }
                GateEvent::None
            }
            EyePhase::Tracking { anchor } => {
                if estimate.label == MovementLabel::Saccade {
                    self.phase = EyePhase::Waiting;
                    return GateEvent::None;
                }
                self.window.push(*sample);
                if clock < anchor + self.cfg.period - TIME_EPS {
                    return GateEvent::None;
                }
                match focus_fraction(&self.window, self.cfg.area_fraction) {
                    Some(f) if f >= self.cfg.majority_q => {
                        self.score = f;
                        self.phase = EyePhase::Recording { start: clock };
                        GateEvent::StartRecording(f)
                    }
                    _ => {
                        self.phase = EyePhase::Waiting;
                        GateEvent::None
                    }
                }
            }
            EyePhase::Recording { start } => {
                if clock >= start + self.cfg.snippet_duration - TIME_EPS {
                    self.phase = EyePhase::Cooldown { since: clock };
                    GateEvent::StopRecording(Snippet {
                        t_start: start,
                        t_end: start + self.cfg.snippet_duration,
                        trigger_score: self.score,
                    })
                } else {
                    GateEvent::None
                }
            }
            EyePhase::Cooldown { since } => {
                if clock >= since + self.cfg.cooldown - TIME_EPS {
                    self.phase = EyePhase::Waiting;
                }
                GateEvent::None
            }
        }
    }

    pub fn finish(&mut self, clock: f64) -> Option<Snippet> {
        let EyePhase::Recording { start } = self.phase else {
            return None;
        };
        self.phase = EyePhase::Cooldown { since: clock };
        Some(Snippet {
            t_start: start,
            t_end: clock.min(start + self.cfg.snippet_duration),
            trigger_score: self.score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oculomotor::{likelihood_series, OculomotorConfig};
    use proptest::prelude::*;

    const DT: f64 = 1.0 / 30.0;

    fn at(k: usize, x: f64, y: f64) -> GazeSample {
        GazeSample::new(k as f64 * DT, x, y)
    }

    #[test]
    fn identical_samples_always_hold() {
        let window: Vec<_> = (0..10).map(|k| at(k, 0.3, 0.7)).collect();
        for q in [0.01, 0.5, 1.0] {
            for area in [1e-6, 0.05, 0.9] {
                let cfg = GateConfig {
                    majority_q: q,
                    area_fraction: area,
                    ..GateConfig::default()
                };
                assert!(potential_attention(&window, &cfg));
            }
        }
    }

    #[test]
    fn ninety_two_of_hundred_inside_holds() {
        // 92 samples scattered inside a 0.04 square, 8 far away
        let mut window = Vec::new();
        for k in 0..92 {
            let dx = 0.02 * ((k % 10) as f64 / 9.0 - 0.5);
            let dy = 0.02 * ((k / 10) as f64 / 9.0 - 0.5);
            window.push(at(k, 0.5 + dx, 0.5 + dy));
        }
        for k in 92..100 {
            window.push(at(k, 0.95, 0.05));
        }
        // counting oracle
        let inside = window
            .iter()
            .filter(|s| (s.x - 0.5).abs() <= 0.025 && (s.y - 0.5).abs() <= 0.025)
            .count();
        assert_eq!(inside, 92);
        assert!(potential_attention(&window, &GateConfig::default()));
        let strict = GateConfig {
            majority_q: 0.93,
            ..GateConfig::default()
        };
        assert!(!potential_attention(&window, &strict));
    }

    #[test]
    fn split_gaze_does_not_hold() {
        let window: Vec<_> = (0..100)
            .map(|k| if k % 2 == 0 { at(k, 0.1, 0.1) } else { at(k, 0.9, 0.9) })
            .collect();
        assert!(!potential_attention(&window, &GateConfig::default()));
    }

    #[test]
    fn no_valid_samples_never_holds() {
        let window: Vec<_> = (0..5).map(|k| GazeSample::invalid(k as f64 * DT)).collect();
        assert!(!potential_attention(&window, &GateConfig::default()));
        assert!(!potential_attention(&[], &GateConfig::default()));
    }

    fn drive(gate: &mut Gate, gaze: &[GazeSample]) -> Vec<(f64, GateEvent)> {
        let est = likelihood_series(gaze, &OculomotorConfig::default());
        let mut out = Vec::new();
        for (s, e) in gaze.iter().zip(&est) {
            let ev = gate.step(s, e).unwrap();
            if ev != GateEvent::None {
                out.push((s.t, ev));
            }
            if ev == GateEvent::InvokeFusion {
                let ev = gate.resolve_fusion(false, 0.1, s.t).unwrap();
                out.push((s.t, ev));
            }
        }
        out
    }

    /// Offline replay: first instant at which the trailing T window holds.
    fn first_full_window(gaze: &[GazeSample], cfg: &GateConfig) -> Option<f64> {
        let start = gaze.first()?.t;
        gaze.iter().map(|s| s.t).find(|&t| {
            if t < start + cfg.period - TIME_EPS {
                return false;
            }
            let w: Vec<_> = gaze
                .iter()
                .copied()
                .filter(|s| s.t >= t - cfg.period - TIME_EPS && s.t <= t)
                .collect();
            potential_attention(&w, cfg)
        })
    }

    #[test]
    fn fixation_stream_invokes_fusion_when_first_window_fills() {
        let gaze: Vec<_> = (0..90).map(|k| at(k, 0.4, 0.6)).collect();
        let cfg = GateConfig::default();
        let mut gate = Gate::new(cfg).unwrap();
        let events = drive(&mut gate, &gaze);
        let expected = first_full_window(&gaze, &cfg).unwrap();
        assert!((expected - 1.0).abs() < 1e-9);
        assert_eq!(events[0], (expected, GateEvent::InvokeFusion));
    }

    #[test]
    fn wandering_after_saccades_never_triggers() {
        // a new far-away target every two samples
        let gaze: Vec<_> = (0..300)
            .map(|k| {
                let j = (k / 2) as f64;
                at(k, 0.1 + 0.8 * ((j * 0.37).fract()), 0.1 + 0.8 * ((j * 0.61).fract()))
            })
            .collect();
        let mut gate = Gate::new(GateConfig::default()).unwrap();
        assert!(drive(&mut gate, &gaze).is_empty());
    }

    #[test]
    fn accepted_fusion_records_for_snippet_duration() {
        let cfg = GateConfig::default();
        let mut gate = Gate::new(cfg).unwrap();
        let gaze: Vec<_> = (0..600).map(|k| at(k, 0.5, 0.5)).collect();
        let est = likelihood_series(&gaze, &OculomotorConfig::default());
        let mut snippet = None;
        for (s, e) in gaze.iter().zip(&est) {
            if (s.t - 5.0).abs() < 1e-9 {
                assert_eq!(gate.state().phase, GatePhase::FusionPending);
                let ev = gate.resolve_fusion(true, 0.8, s.t).unwrap();
                assert_eq!(ev, GateEvent::StartRecording(0.8));
            }
            if let GateEvent::StopRecording(sn) = gate.step(s, e).unwrap() {
                snippet = Some(sn);
                break;
            }
        }
        let sn = snippet.unwrap();
        assert!((sn.t_start - 5.0).abs() < 1e-9);
        assert!((sn.t_end - 15.0).abs() < 1e-9);
        assert_eq!(sn.trigger_score, 0.8);
    }

    #[test]
    fn late_fusion_decision_is_a_protocol_error() {
        let mut gate = Gate::new(GateConfig::default()).unwrap();
        assert!(matches!(gate.resolve_fusion(true, 1.0, 0.0), Err(Error::Protocol(_))));
    }

    #[test]
    fn backwards_clock_is_rejected() {
        let mut gate = Gate::new(GateConfig::default()).unwrap();
        let e = MovementEstimate {
            t: 1.0,
            label: MovementLabel::Fixation,
            likelihood: 1.0,
        };
        gate.step(&GazeSample::new(1.0, 0.5, 0.5), &e).unwrap();
        assert!(gate.step(&GazeSample::new(0.5, 0.5, 0.5), &e).is_err());
    }

    #[test]
    fn rejection_cools_down_before_retrigger() {
        let cfg = GateConfig::default();
        let mut gate = Gate::new(cfg).unwrap();
        let gaze: Vec<_> = (0..200).map(|k| at(k, 0.5, 0.5)).collect();
        let events = drive(&mut gate, &gaze);
        let invokes: Vec<f64> = events
            .iter()
            .filter(|(_, e)| *e == GateEvent::InvokeFusion)
            .map(|(t, _)| *t)
            .collect();
        assert!(invokes.len() >= 2);
        for pair in invokes.windows(2) {
            // cooldown, then a fresh T window
            assert!(pair[1] - pair[0] >= cfg.cooldown + cfg.period - 1e-9);
        }
    }

    #[test]
    fn eye_only_needs_transition_and_clean_window() {
        let cfg = GateConfig::default();
        // fixation without a preceding saccade: never records
        let still: Vec<_> = (0..120).map(|k| at(k, 0.5, 0.5)).collect();
        let mut det = EyeOnlyDetector::new(cfg).unwrap();
        let est = likelihood_series(&still, &OculomotorConfig::default());
        assert!(still.iter().zip(&est).all(|(s, e)| det.step(s, e) == GateEvent::None));

        // a three-sample saccade from 0.1 to 0.7, then fixation
        let mut gaze: Vec<_> = (0..10).map(|k| at(k, 0.1, 0.5)).collect();
        for (i, x) in [0.3, 0.5, 0.7].into_iter().enumerate() {
            gaze.push(at(10 + i, x, 0.5));
        }
        for k in 13..120 {
            gaze.push(at(k, 0.7, 0.5));
        }
        let est = likelihood_series(&gaze, &OculomotorConfig::default());
        let mut det = EyeOnlyDetector::new(cfg).unwrap();
        let starts: Vec<f64> = gaze
            .iter()
            .zip(&est)
            .filter_map(|(s, e)| match det.step(s, e) {
                GateEvent::StartRecording(_) => Some(s.t),
                _ => None,
            })
            .collect();
        assert_eq!(starts.len(), 1);
        // transition confirmed three samples after the saccade, plus T
        assert!((starts[0] - (15.0 * DT + 1.0)).abs() < 1e-9, "{starts:?}");
    }

    proptest! {
        #[test]
        fn stricter_majority_never_triggers_earlier(
            centre in (0.2f64..0.8, 0.2f64..0.8),
            noise in prop::collection::vec((-0.04f64..0.04, -0.04f64..0.04), 120),
        ) {
            let gaze: Vec<_> = noise.iter().enumerate()
                .map(|(k, (dx, dy))| at(k, centre.0 + dx, centre.1 + dy))
                .collect();
            let first = |q: f64| {
                let mut gate = Gate::new(GateConfig { majority_q: q, ..GateConfig::default() }).unwrap();
                drive(&mut gate, &gaze).iter()
                    .find(|(_, e)| *e == GateEvent::InvokeFusion)
                    .map_or(f64::INFINITY, |(t, _)| *t)
            };
            prop_assert!(first(0.95) >= first(0.8));
        }
    }
}
