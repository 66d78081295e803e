//! Eye-movement phase classification over a sliding window of gaze samples.
//!
//! Velocity gates saccades (I-VT style) and a dispersion test separates
//! fixations from smooth pursuit (I-DT style). The attention likelihood of a
//! sample is an exponential moving average of the indicator "the eye is in
//! pursuit or fixation".

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::GazeSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MovementLabel {
    Saccade,
    SmoothPursuit,
    Fixation,
    Unknown,
}

impl MovementLabel {
    /// Pursuit and fixation are the phases consistent with sustained attention.
    pub fn is_attentive(self) -> bool {
        matches!(self, MovementLabel::SmoothPursuit | MovementLabel::Fixation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementEstimate {
    pub t: f64,
    pub label: MovementLabel,
    /// Likelihood in `[0, 1]` that the eye is in an attention-consistent phase.
    pub likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OculomotorConfig {
    /// Speed above which a sample is a saccade, in normalized units per second.
    pub v_saccade: f64,
    /// Speed at or below which the eye may be fixating.
    pub v_drift: f64,
    /// Largest pairwise distance inside the window still counted as a fixation.
    pub dispersion_max: f64,
    /// Number of valid samples used for the dispersion test.
    pub window: usize,
    pub ema_alpha: f64,
}

impl Default for OculomotorConfig {
    fn default() -> Self {
        OculomotorConfig {
            v_saccade: 1.2,
            v_drift: 0.15,
            dispersion_max: 0.01,
            window: 6,
            ema_alpha: 0.3,
        }
    }
}

impl OculomotorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_drift > 0.0 && self.v_saccade > self.v_drift) {
            return Err(Error::Parameter(format!(
                "oculomotor thresholds need v_saccade > v_drift > 0 (got {} and {})",
                self.v_saccade, self.v_drift
            )));
        }
        if self.window < 2 {
            return Err(Error::Parameter("oculomotor window must hold at least 2 samples".into()));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "ema_alpha {} must lie in (0, 1]",
                self.ema_alpha
            )));
        }
        if !(self.dispersion_max >= 0.0) {
            return Err(Error::Parameter("dispersion_max must be >= 0".into()));
        }
        Ok(())
    }
}

/// Largest pairwise distance among the valid samples.
pub fn dispersion(samples: &[GazeSample]) -> f64 {
    let valid: Vec<&GazeSample> = samples.iter().filter(|s| s.valid).collect();
    let mut worst = 0.0f64;
    for (i, a) in valid.iter().enumerate() {
        for b in &valid[i + 1..] {
            worst = worst.max(a.distance_to(b));
        }
    }
    worst
}

/// Labels the newest sample of `samples` (oldest first).
///
/// Boundary values fall to the slower phase: a speed exactly at `v_saccade`
/// is not a saccade, and a speed exactly at `v_drift` with dispersion exactly
/// at `dispersion_max` is a fixation.
pub fn classify_window(samples: &[GazeSample], cfg: &OculomotorConfig) -> MovementLabel {
    let mut newest = samples.iter().rev().filter(|s| s.valid);
    let (Some(b), Some(a)) = (newest.next(), newest.next()) else {
        return MovementLabel::Unknown;
    };
    let dt = b.t - a.t;
    if !(dt > 0.0) {
        return MovementLabel::Unknown;
    }
    let speed = a.distance_to(b) / dt;
    if speed > cfg.v_saccade {
        MovementLabel::Saccade
    } else if speed <= cfg.v_drift && dispersion(samples) <= cfg.dispersion_max {
        MovementLabel::Fixation
    } else {
        MovementLabel::SmoothPursuit
    }
}

/// Streaming classifier; each output depends only on samples already pushed.
#[derive(Debug, Clone)]
pub struct OculomotorClassifier {
    cfg: OculomotorConfig,
    window: VecDeque<GazeSample>,
    scratch: Vec<GazeSample>,
    ema: f64,
}

impl OculomotorClassifier {
    pub fn new(cfg: OculomotorConfig) -> Self {
        OculomotorClassifier {
            window: VecDeque::with_capacity(cfg.window + 1),
            scratch: Vec::with_capacity(cfg.window),
            cfg,
            ema: 0.0,
        }
    }

    pub fn push(&mut self, sample: GazeSample) -> MovementEstimate {
        if !sample.valid {
            // dropouts freeze the likelihood rather than resetting it
            return MovementEstimate {
                t: sample.t,
                label: MovementLabel::Unknown,
                likelihood: self.ema,
            };
        }
        self.window.push_back(sample);
        if self.window.len() > self.cfg.window {
            self.window.pop_front();
        }
        if self.window.len() < 2 {
            return MovementEstimate {
                t: sample.t,
                label: MovementLabel::Unknown,
                likelihood: 0.0,
            };
        }
        self.scratch.clear();
        self.scratch.extend(self.window.iter().copied());
        let label = classify_window(&self.scratch, &self.cfg);
        let indicator = if label.is_attentive() { 1.0 } else { 0.0 };
        self.ema = self.cfg.ema_alpha * indicator + (1.0 - self.cfg.ema_alpha) * self.ema;
        MovementEstimate {
            t: sample.t,
            label,
            likelihood: self.ema.clamp(0.0, 1.0),
        }
    }
}

/// One estimate per gaze sample, computed causally.
pub fn likelihood_series(gaze: &[GazeSample], cfg: &OculomotorConfig) -> Vec<MovementEstimate> {
    let mut clf = OculomotorClassifier::new(*cfg);
    gaze.iter().map(|s| clf.push(*s)).collect()
}

/// True iff the newest estimates end with at least `run_len` attentive labels
/// immediately preceded by at least `run_len` saccade labels.
pub fn detect_transition<'a, I>(estimates: I, run_len: usize) -> bool
where
    I: IntoIterator<Item = &'a MovementEstimate>,
    I::IntoIter: DoubleEndedIterator,
{
    if run_len == 0 {
        return false;
    }
    let mut rev = estimates.into_iter().rev().peekable();
    let mut attentive = 0;
    while rev.next_if(|e| e.label.is_attentive()).is_some() {
        attentive += 1;
    }
    if attentive < run_len {
        return false;
    }
    let mut saccades = 0;
    while rev.next_if(|e| e.label == MovementLabel::Saccade).is_some() {
        saccades += 1;
        if saccades >= run_len {
            return true;
        }
    }
    false
}
