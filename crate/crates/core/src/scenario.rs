//! Seeded synthetic traces: moving objects on a textured luma canvas, a
//! scripted gaze process, and the attention truth implied by the script.
//!
//! Randomness comes from ChaCha8 with one stream per concern, all keyed by
//! the scenario seed: stream 1 drives gaze noise and wander targets, stream 2
//! drives rendering (background texture and pixel noise). Builtin layouts
//! draw from stream 3. Output is therefore identical on every platform.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{
    AttentionTruth, GazeSample, SceneFrame, Trace, TraceMeta, TruthInterval, DEFAULT_FRAME_RATE,
    DEFAULT_GAZE_RATE, TIME_EPS,
};

const GAZE_STREAM: u64 = 1;
const RENDER_STREAM: u64 = 2;
const LAYOUT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Background {
    /// Mean luma.
    pub level: f64,
    /// Amplitude of the smooth value-noise texture.
    pub texture: f64,
    /// Texture lattice cells across the canvas width.
    pub cells: u32,
    /// Per-pixel, per-frame Gaussian noise.
    pub frame_noise: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            level: 0.3,
            texture: 0.08,
            cells: 6,
            frame_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disc,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u32,
    pub shape: Shape,
    /// Radius (or half side) as a fraction of canvas width.
    pub size: f64,
    pub intensity: f64,
    /// Piecewise-linear path in normalized coordinates; held constant
    /// outside the first and last waypoint.
    pub path: Vec<Waypoint>,
}

impl ObjectSpec {
    pub fn position(&self, t: f64) -> (f64, f64) {
        let p = &self.path;
        let i = p.partition_point(|w| w.t <= t);
        if i == 0 {
            return (p[0].x, p[0].y);
        }
        if i == p.len() {
            let last = p[p.len() - 1];
            return (last.x, last.y);
        }
        let (a, b) = (p[i - 1], p[i]);
        let f = (t - a.t) / (b.t - a.t);
        (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
    }

    /// Whether a normalized point lies on the object at time `t`.
    pub fn covers(&self, p: (f64, f64), t: f64, canvas: Canvas) -> bool {
        let (cx, cy) = self.position(t);
        let w = f64::from(canvas.width);
        let h = f64::from(canvas.height);
        let dx = (p.0 - cx) * w;
        let dy = (p.1 - cy) * h;
        let r = self.size * w;
        match self.shape {
            Shape::Disc => dx.hypot(dy) <= r,
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SaccadeTarget {
    Point { x: f64, y: f64 },
    Object(u32),
}

/// One scripted gaze phase. Phases run back to back from `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", deny_unknown_fields)]
pub enum Phase {
    /// Pursuit of an object centroid delayed by `lag` seconds.
    FollowObject {
        duration: f64,
        object: u32,
        jitter: f64,
        lag: f64,
    },
    FixatePoint {
        duration: f64,
        x: f64,
        y: f64,
        jitter: f64,
    },
    /// Linear sweep from the current position to the target.
    SaccadeTo {
        duration: f64,
        target: SaccadeTarget,
    },
    /// Random short dwells inside `region`.
    WanderBlankly {
        duration: f64,
        region: Region,
        jitter: f64,
        dwell_min: f64,
        dwell_max: f64,
        /// Minimum distance between consecutive dwell points.
        min_jump: f64,
    },
}

impl Phase {
    pub fn duration(&self) -> f64 {
        match *self {
            Phase::FollowObject { duration, .. }
            | Phase::FixatePoint { duration, .. }
            | Phase::SaccadeTo { duration, .. }
            | Phase::WanderBlankly { duration, .. } => duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazeNoise {
    /// Probability that a sample is marked invalid.
    pub dropout: f64,
    /// Probability that a sample is displaced by a one-sample glint.
    pub spike_rate: f64,
    pub spike_amplitude: f64,
}

impl Default for GazeNoise {
    fn default() -> Self {
        GazeNoise {
            dropout: 0.01,
            spike_rate: 0.03,
            spike_amplitude: 0.08,
        }
    }
}

fn default_gaze_rate() -> f64 {
    DEFAULT_GAZE_RATE
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration: f64,
    pub canvas: Canvas,
    #[serde(default = "default_gaze_rate")]
    pub gaze_rate: f64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default)]
    pub background: Background,
    pub objects: Vec<ObjectSpec>,
    pub gaze_script: Vec<Phase>,
    #[serde(default)]
    pub noise: GazeNoise,
    pub seed: u64,
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed scenario spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario specs serialize")
    }

    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Every violated invariant, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            v.push(format!("duration {} must be finite and >= 0", self.duration));
        }
        if self.canvas.width == 0 || self.canvas.height == 0 {
            v.push("canvas must have positive width and height".into());
        }
        if !(self.gaze_rate > 0.0 && self.frame_rate > 0.0 && self.gaze_rate >= self.frame_rate) {
            v.push("rates must be positive with gaze_rate >= frame_rate".into());
        }
        let b = &self.background;
        if !(unit(b.level) && b.texture >= 0.0 && b.frame_noise >= 0.0 && b.cells >= 1) {
            v.push("background needs level in [0,1], texture and frame_noise >= 0, cells >= 1".into());
        }
        let n = &self.noise;
        if !((0.0..1.0).contains(&n.dropout) && (0.0..1.0).contains(&n.spike_rate) && n.spike_amplitude >= 0.0) {
            v.push("noise rates must lie in [0,1) and spike_amplitude >= 0".into());
        }
        let aspect = f64::from(self.canvas.width) / f64::from(self.canvas.height.max(1));
        for (k, o) in self.objects.iter().enumerate() {
            if self.objects[..k].iter().any(|p| p.id == o.id) {
                v.push(format!("duplicate object id {}", o.id));
            }
            if !(o.size > 0.0 && o.size < 0.5) || !unit(o.intensity) {
                v.push(format!("object {}: size must lie in (0,0.5) and intensity in [0,1]", o.id));
            }
            if o.path.is_empty() {
                v.push(format!("object {} has an empty path", o.id));
            }
            if o.path.windows(2).any(|w| !(w[1].t > w[0].t)) {
                v.push(format!("object {}: waypoint times must increase", o.id));
            }
            let (ex, ey) = (o.size, o.size * aspect);
            if o.path.iter().any(|w| {
                w.x - ex < 0.0 || w.x + ex > 1.0 || w.y - ey < 0.0 || w.y + ey > 1.0
            }) {
                v.push(format!("object {} leaves the canvas", o.id));
            }
        }
        let mut total = 0.0;
        for (k, phase) in self.gaze_script.iter().enumerate() {
            let d = phase.duration();
            total += d;
            if !(d > 0.0 && d.is_finite()) {
                v.push(format!("phase {k}: duration {d} must be > 0"));
            }
            let known = |id: u32| self.object(id).is_some();
            match *phase {
                Phase::FollowObject { object, jitter, lag, .. } => {
                    if !known(object) {
                        v.push(format!("phase {k}: unknown object {object}"));
                    }
                    if !(jitter >= 0.0 && lag >= 0.0) {
                        v.push(format!("phase {k}: jitter and lag must be >= 0"));
                    }
                }
                Phase::FixatePoint { x, y, jitter, .. } => {
                    if !(unit(x) && unit(y) && jitter >= 0.0) {
                        v.push(format!("phase {k}: fixation point must lie in [0,1]^2 with jitter >= 0"));
                    }
                }
                Phase::SaccadeTo { target, .. } => match target {
                    SaccadeTarget::Point { x, y } if !(unit(x) && unit(y)) => {
                        v.push(format!("phase {k}: saccade target outside [0,1]^2"));
                    }
                    SaccadeTarget::Object(id) if !known(id) => {
                        v.push(format!("phase {k}: unknown object {id}"));
                    }
                    _ => {}
                },
                Phase::WanderBlankly {
                    region: r,
                    jitter,
                    dwell_min,
                    dwell_max,
                    min_jump,
                    ..
                } => {
                    if !(unit(r.x0) && unit(r.x1) && unit(r.y0) && unit(r.y1) && r.x0 < r.x1 && r.y0 < r.y1) {
                        v.push(format!("phase {k}: wander region must be a non-empty box in [0,1]^2"));
                    } else if min_jump >= 0.5 * (r.x1 - r.x0).hypot(r.y1 - r.y0) {
                        v.push(format!("phase {k}: min_jump too large for the wander region"));
                    }
                    if !(jitter >= 0.0 && dwell_min > 0.0 && dwell_max >= dwell_min && min_jump >= 0.0) {
                        v.push(format!("phase {k}: need jitter >= 0 and 0 < dwell_min <= dwell_max"));
                    }
                }
            }
        }
        if (total - self.duration).abs() > 1e-6 {
            v.push(format!("phases cover {total} s but duration is {} s", self.duration));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(v))
        }
    }

    /// Phase start times, in script order.
    pub fn phase_starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.gaze_script
            .iter()
            .map(|p| {
                let s = t;
                t += p.duration();
                s
            })
            .collect()
    }

    /// Attention intervals implied by the script: every pursuit phase, and
    /// every fixation whose point stays on one object throughout.
    pub fn truth(&self) -> AttentionTruth {
        let mut intervals = Vec::new();
        for (phase, start) in self.gaze_script.iter().zip(self.phase_starts()) {
            let end = start + phase.duration();
            match *phase {
                Phase::FollowObject { object, .. } => intervals.push(TruthInterval {
                    t_start: start,
                    t_end: end,
                    instance: object,
                }),
                Phase::FixatePoint { x, y, .. } => {
                    let times = sample_times(start, end, self.gaze_rate);
                    if let Some(o) = self.objects.iter().find(|o| {
                        !times.is_empty() && times.iter().all(|&t| o.covers((x, y), t, self.canvas))
                    }) {
                        intervals.push(TruthInterval {
                            t_start: start,
                            t_end: end,
                            instance: o.id,
                        });
                    }
                }
                _ => {}
            }
        }
        AttentionTruth { intervals }
    }
}

/// `k / rate` for every `k` with the time inside `[start, end)`.
fn sample_times(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let first = (start * rate - TIME_EPS * rate).ceil().max(0.0) as u64;
    (first..)
        .map(|k| k as f64 / rate)
        .take_while(|&t| t < end - TIME_EPS)
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Noise-free gaze target for every sample time, in order.
fn scripted_gaze(spec: &ScenarioSpec, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<((f64, f64), f64)> {
    let mut out = Vec::with_capacity(times.len());
    let mut idx = 0;
    let mut current = match spec.gaze_script.first() {
        Some(Phase::FollowObject { object, lag, .. }) => {
            spec.object(*object).expect("validated").position(-lag)
        }
        Some(Phase::FixatePoint { x, y, .. }) => (*x, *y),
        Some(Phase::WanderBlankly { region: r, .. }) => (0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1)),
        _ => (0.5, 0.5),
    };
    for (k, (phase, start)) in spec.gaze_script.iter().zip(spec.phase_starts()).enumerate() {
        let end = start + phase.duration();
        let from = idx;
        while idx < times.len() && times[idx] < end - TIME_EPS {
            idx += 1;
        }
        let ts = &times[from..idx];
        match *phase {
            Phase::FollowObject { object, jitter, lag, .. } => {
                let o = spec.object(object).expect("validated");
                for &t in ts {
                    current = o.position(t - lag);
                    out.push((current, jitter));
                }
            }
            Phase::FixatePoint { x, y, jitter, .. } => {
                for _ in ts {
                    current = (x, y);
                    out.push((current, jitter));
                }
            }
            Phase::SaccadeTo { duration, target } => {
                let goal = match target {
                    SaccadeTarget::Point { x, y } => (x, y),
                    SaccadeTarget::Object(id) => {
                        let o = spec.object(id).expect("validated");
                        // land where the pursuit that follows will be
                        let lag = match spec.gaze_script.get(k + 1) {
                            Some(Phase::FollowObject { lag, .. }) => *lag,
                            _ => 0.0,
                        };
                        o.position(end - lag)
                    }
                };
                let origin = current;
                for &t in ts {
                    let f = ((t - start) / duration).clamp(0.0, 1.0);
                    out.push(((origin.0 + f * (goal.0 - origin.0), origin.1 + f * (goal.1 - origin.1)), 0.0));
                }
                current = goal;
            }
            Phase::WanderBlankly {
                region: r,
                jitter,
                dwell_min,
                dwell_max,
                min_jump,
                ..
            } => {
                let mut next_move = start;
                for &t in ts {
                    if t >= next_move - TIME_EPS {
                        current = loop {
                            let p = (rng.random_range(r.x0..=r.x1), rng.random_range(r.y0..=r.y1));
                            if (p.0 - current.0).hypot(p.1 - current.1) >= min_jump {
                                break p;
                            }
                        };
                        next_move = t + rng.random_range(dwell_min..=dwell_max);
                    }
                    out.push((current, jitter));
                }
            }
        }
    }
    out
}

/// Adds jitter, glints and dropouts.
fn observe(spec: &ScenarioSpec, times: &[f64], targets: &[((f64, f64), f64)], rng: &mut ChaCha8Rng) -> Vec<GazeSample> {
    let n = spec.noise;
    times
        .iter()
        .zip(targets)
        .map(|(&t, &((x, y), jitter))| {
            let (jx, jy) = (normal(rng), normal(rng));
            let spike = rng.random::<f64>() < n.spike_rate;
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let drop = rng.random::<f64>() < n.dropout;
            if drop {
                return GazeSample::invalid(t);
            }
            let mut px = x + jitter * jx;
            let mut py = y + jitter * jy;
            if spike {
                px += n.spike_amplitude * angle.cos();
                py += n.spike_amplitude * angle.sin();
            }
            GazeSample::new(t, px.clamp(0.0, 1.0), py.clamp(0.0, 1.0))
        })
        .collect()
}

fn smoothstep(f: f64) -> f64 {
    f * f * (3.0 - 2.0 * f)
}

/// Static value-noise background, row-major.
fn background_plane(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (w, h) = (spec.canvas.width as usize, spec.canvas.height as usize);
    let b = spec.background;
    let cx = b.cells as usize;
    let cy = ((b.cells as f64 * h as f64 / w as f64).ceil() as usize).max(1);
    let lattice: Vec<f64> = (0..(cx + 1) * (cy + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
    let at = |i: usize, j: usize| lattice[j * (cx + 1) + i];
    let mut plane = Vec::with_capacity(w * h);
    for r in 0..h {
        let v = (r as f64 + 0.5) / h as f64 * cy as f64;
        let (j, fy) = ((v.floor() as usize).min(cy - 1), smoothstep(v - v.floor().min((cy - 1) as f64)));
        for c in 0..w {
            let u = (c as f64 + 0.5) / w as f64 * cx as f64;
            let (i, fx) = ((u.floor() as usize).min(cx - 1), smoothstep(u - u.floor().min((cx - 1) as f64)));
            let top = at(i, j) * (1.0 - fx) + at(i + 1, j) * fx;
            let bottom = at(i, j + 1) * (1.0 - fx) + at(i + 1, j + 1) * fx;
            plane.push(b.level + b.texture * (top * (1.0 - fy) + bottom * fy));
        }
    }
    plane
}

fn render_frame(spec: &ScenarioSpec, t: f64, background: &[f64], rng: &mut ChaCha8Rng) -> SceneFrame {
    let (w, h) = (spec.canvas.width as usize, spec.canvas.height as usize);
    let mut plane = background.to_vec();
    for o in &spec.objects {
        let (x, y) = o.position(t);
        let (cx, cy) = (x * w as f64, y * h as f64);
        let r = o.size * w as f64;
        let c0 = ((cx - r - 1.0).floor().max(0.0)) as usize;
        let c1 = ((cx + r + 1.0).ceil() as usize).min(w);
        let r0 = ((cy - r - 1.0).floor().max(0.0)) as usize;
        let r1 = ((cy + r + 1.0).ceil() as usize).min(h);
        for row in r0..r1 {
            for col in c0..c1 {
                let dx = col as f64 + 0.5 - cx;
                let dy = row as f64 + 0.5 - cy;
                let cover = match o.shape {
                    Shape::Disc => (r - dx.hypot(dy) + 0.5).clamp(0.0, 1.0),
                    Shape::Square => {
                        (r - dx.abs() + 0.5).clamp(0.0, 1.0) * (r - dy.abs() + 0.5).clamp(0.0, 1.0)
                    }
                };
                let px = &mut plane[row * w + col];
                *px = *px * (1.0 - cover) + o.intensity * cover;
            }
        }
    }
    let noise = spec.background.frame_noise;
    let luma = plane
        .iter()
        .map(|&v| {
            let v = (v + noise * normal(rng)).clamp(0.0, 1.0);
            ((v * 1000.0).round() / 1000.0) as f32
        })
        .collect();
    SceneFrame {
        t,
        width: spec.canvas.width,
        height: spec.canvas.height,
        luma,
        instances: None,
    }
}

/// Renders a scenario into a trace. Deterministic in `spec` alone.
pub fn generate(spec: &ScenarioSpec) -> Result<Trace> {
    spec.validate()?;
    let meta = TraceMeta {
        scenario: spec.name.clone(),
        seed: spec.seed,
        gaze_rate: spec.gaze_rate,
        frame_rate: spec.frame_rate,
    };
    let gaze_times = sample_times(0.0, spec.duration, spec.gaze_rate);
    let frame_times = sample_times(0.0, spec.duration, spec.frame_rate);
    let mut gaze_rng = stream(spec.seed, GAZE_STREAM);
    let targets = scripted_gaze(spec, &gaze_times, &mut gaze_rng);
    let gaze = observe(spec, &gaze_times, &targets, &mut gaze_rng);
    let mut render_rng = stream(spec.seed, RENDER_STREAM);
    let background = background_plane(spec, &mut render_rng);
    let frames = frame_times
        .iter()
        .map(|&t| render_frame(spec, t, &background, &mut render_rng))
        .collect();
    let truth = if spec.duration > 0.0 {
        Some(AttentionTruth::new(spec.truth().intervals)?)
    } else {
        None
    };
    let trace = Trace {
        meta,
        gaze,
        frames,
        truth,
    };
    trace.validate()?;
    Ok(trace)
}

pub const BUILTINS: [&str; 4] = ["pursuit_basic", "jittery_pursuit", "blank_stare", "multi_object_shift"];

/// Seeded layout helper for the builtin scenarios. Objects live in one half
/// of the canvas and idle gaze in the other; the half is drawn per seed.
struct Layout {
    rng: ChaCha8Rng,
    objects_left: bool,
    script: Vec<Phase>,
    t: f64,
    jitter: f64,
}

const CANVAS: Canvas = Canvas {
    width: 48,
    height: 36,
};
const LAG: f64 = 0.1;
const SACCADE: f64 = 0.1;

impl Layout {
    fn new(seed: u64, jitter: f64) -> Self {
        let mut rng = stream(seed, LAYOUT_STREAM);
        let objects_left = rng.random_bool(0.5);
        Layout {
            rng,
            objects_left,
            script: Vec::new(),
            t: 0.0,
            jitter,
        }
    }

    /// Horizontal band for objects (or for idle gaze when `!objects`).
    fn band(&self, objects: bool) -> (f64, f64) {
        if objects == self.objects_left {
            (0.1, 0.4)
        } else {
            (0.6, 0.9)
        }
    }

    fn idle_region(&self) -> Region {
        let (x0, x1) = self.band(false);
        Region { x0, y0: 0.15, x1, y1: 0.85 }
    }

    fn idle_point(&mut self) -> (f64, f64) {
        let r = self.idle_region();
        (self.rng.random_range(r.x0..r.x1), self.rng.random_range(r.y0..r.y1))
    }

    /// A slow wandering path inside the object band and `rows`.
    fn object(&mut self, id: u32, rows: (f64, f64), speed: (f64, f64), until: f64) -> ObjectSpec {
        let size = self.rng.random_range(0.06..0.08);
        let (bx0, bx1) = self.band(true);
        let aspect = f64::from(CANVAS.width) / f64::from(CANVAS.height);
        let (x0, x1) = (bx0 + size, bx1 - size);
        let (y0, y1) = (rows.0 + size * aspect, rows.1 - size * aspect);
        let mut path = vec![Waypoint {
            t: 0.0,
            x: self.rng.random_range(x0..x1),
            y: self.rng.random_range(y0..y1),
        }];
        while path.last().expect("non-empty").t < until {
            let last = *path.last().expect("non-empty");
            let (x, y) = (self.rng.random_range(x0..x1), self.rng.random_range(y0..y1));
            let v = self.rng.random_range(speed.0..speed.1);
            let dt = ((x - last.x).hypot(y - last.y) / v).max(0.5);
            path.push(Waypoint { t: last.t + dt, x, y });
        }
        let shape = if self.rng.random_bool(0.5) { Shape::Disc } else { Shape::Square };
        ObjectSpec {
            id,
            shape,
            size,
            intensity: self.rng.random_range(0.8..0.95),
            path,
        }
    }

    fn push(&mut self, mut phase: Phase) {
        // whole gaze periods keep every saccade three samples long
        let q = |d: &mut f64| *d = (*d * DEFAULT_GAZE_RATE).round().max(1.0) / DEFAULT_GAZE_RATE;
        match &mut phase {
            Phase::FollowObject { duration, .. }
            | Phase::FixatePoint { duration, .. }
            | Phase::SaccadeTo { duration, .. }
            | Phase::WanderBlankly { duration, .. } => q(duration),
        }
        self.t += phase.duration();
        self.script.push(phase);
    }

    fn wander(&mut self, duration: f64) {
        let region = self.idle_region();
        let jitter = self.jitter;
        self.push(Phase::WanderBlankly {
            duration,
            region,
            jitter,
            dwell_min: 0.25,
            dwell_max: 0.6,
            min_jump: 0.1,
        });
    }

    fn follow(&mut self, object: u32, duration: f64) {
        self.push(Phase::SaccadeTo {
            duration: SACCADE,
            target: SaccadeTarget::Object(object),
        });
        let jitter = self.jitter;
        self.push(Phase::FollowObject {
            duration,
            object,
            jitter,
            lag: LAG,
        });
        let (x, y) = self.idle_point();
        self.push(Phase::SaccadeTo {
            duration: SACCADE,
            target: SaccadeTarget::Point { x, y },
        });
    }

    /// A short glance, a saccade across the idle band, then a long fixation
    /// on background.
    fn stare(&mut self, duration: f64) {
        let (x0, x1) = self.band(false);
        let low = self.rng.random_bool(0.5);
        let mut row = |top: bool| {
            let x = self.rng.random_range(x0..x1);
            let y = if top { self.rng.random_range(0.15..0.35) } else { self.rng.random_range(0.65..0.85) };
            (x, y)
        };
        let (gx, gy) = row(low);
        let (x, y) = row(!low);
        self.push(Phase::SaccadeTo {
            duration: SACCADE,
            target: SaccadeTarget::Point { x: gx, y: gy },
        });
        self.push(Phase::FixatePoint {
            duration: 0.2,
            x: gx,
            y: gy,
            jitter: 0.5 * self.jitter,
        });
        self.push(Phase::SaccadeTo {
            duration: SACCADE,
            target: SaccadeTarget::Point { x, y },
        });
        self.push(Phase::FixatePoint {
            duration,
            x,
            y,
            jitter: 0.5 * self.jitter,
        });
    }

    fn truncate(&mut self, end: f64) {
        let mut t = 0.0;
        let mut kept = Vec::new();
        for mut phase in self.script.drain(..) {
            if t >= end - TIME_EPS {
                break;
            }
            let room = end - t;
            match &mut phase {
                Phase::FollowObject { duration, .. }
                | Phase::FixatePoint { duration, .. }
                | Phase::SaccadeTo { duration, .. }
                | Phase::WanderBlankly { duration, .. } => *duration = duration.min(room),
            }
            t += phase.duration();
            kept.push(phase);
        }
        self.script = kept;
        self.t = t;
    }

    fn epoch_length(&mut self) -> f64 {
        self.rng.random_range(7.0..10.0)
    }

    fn gap(&mut self) -> f64 {
        self.rng.random_range(8.0..10.0)
    }
}

/// The four canned scenarios; `seed` varies layout, timing and noise draws.
pub fn builtin(name: &str, seed: u64) -> Result<ScenarioSpec> {
    builtin_blocks(name, seed, 0.0)
}

/// A builtin lasting exactly `duration` seconds: its episode structure
/// repeats and the last phase is cut at `duration`.
pub fn builtin_extended(name: &str, seed: u64, duration: f64) -> Result<ScenarioSpec> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::Parameter(format!("duration {duration} must be >= 0")));
    }
    builtin_blocks(name, seed, duration)
}

/// Repeats the named block until the script reaches `min_duration`, and at
/// least once; a positive `min_duration` is then also the exact length.
fn builtin_blocks(name: &str, seed: u64, min_duration: f64) -> Result<ScenarioSpec> {
    if !BUILTINS.contains(&name) {
        return Err(Error::UnknownScenario {
            name: name.to_string(),
            available: BUILTINS.to_vec(),
        });
    }
    let jitter = if name == "jittery_pursuit" { 0.005 } else { 0.003 };
    let mut l = Layout::new(seed, jitter);
    // script first, then objects long enough to cover it
    let lead = l.rng.random_range(3.0..5.0);
    l.wander(lead);
    loop {
        match name {
            "pursuit_basic" => {
                let d = l.epoch_length();
                l.follow(1, d);
                let g = l.gap();
                l.wander(g);
            }
            "jittery_pursuit" => {
                for _ in 0..2 {
                    let d = l.epoch_length();
                    l.follow(1, d);
                    let g = l.gap();
                    l.wander(g);
                }
            }
            "blank_stare" => {
                for _ in 0..3 {
                    let d = l.rng.random_range(8.0..12.0);
                    l.stare(d);
                    let g = l.rng.random_range(3.0..5.0);
                    l.wander(g);
                }
            }
            _ => {
                for id in [1, 2] {
                    let d = l.epoch_length();
                    l.follow(id, d);
                    let g = l.gap();
                    l.wander(g);
                }
            }
        }
        if l.t >= min_duration {
            break;
        }
    }
    if min_duration > 0.0 {
        l.truncate(min_duration);
    }
    let until = l.t + 1.0;
    let speed = if name == "jittery_pursuit" { (0.008, 0.012) } else { (0.01, 0.02) };
    let objects = if name == "multi_object_shift" || name == "blank_stare" {
        vec![
            l.object(1, (0.1, 0.5), speed, until),
            l.object(2, (0.5, 0.9), speed, until),
        ]
    } else {
        vec![l.object(1, (0.1, 0.9), speed, until)]
    };
    let noise = match name {
        "jittery_pursuit" => GazeNoise {
            dropout: 0.02,
            spike_rate: 0.05,
            spike_amplitude: 0.08,
        },
        // a still, vacant eye: few glints
        "blank_stare" => GazeNoise {
            spike_rate: 0.01,
            ..GazeNoise::default()
        },
        _ => GazeNoise::default(),
    };
    let spec = ScenarioSpec {
        name: name.to_string(),
        duration: l.t,
        canvas: CANVAS,
        gaze_rate: DEFAULT_GAZE_RATE,
        frame_rate: DEFAULT_FRAME_RATE,
        background: Background::default(),
        objects,
        gaze_script: l.script,
        noise,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::write_trace;

    fn disc(path: Vec<Waypoint>) -> ObjectSpec {
        ObjectSpec {
            id: 7,
            shape: Shape::Disc,
            size: 0.08,
            intensity: 0.9,
            path,
        }
    }

    fn follow_spec(jitter: f64, noise: GazeNoise) -> ScenarioSpec {
        ScenarioSpec {
            name: "follow".into(),
            duration: 5.0,
            canvas: CANVAS,
            gaze_rate: 30.0,
            frame_rate: 30.0,
            background: Background::default(),
            objects: vec![disc(vec![
                Waypoint { t: 0.0, x: 0.2, y: 0.3 },
                Waypoint { t: 5.0, x: 0.7, y: 0.6 },
            ])],
            gaze_script: vec![
                Phase::FixatePoint { duration: 1.0, x: 0.9, y: 0.9, jitter: 0.0 },
                Phase::FollowObject { duration: 3.0, object: 7, jitter, lag: 0.1 },
                Phase::SaccadeTo { duration: 0.1, target: SaccadeTarget::Point { x: 0.9, y: 0.1 } },
                Phase::WanderBlankly {
                    duration: 0.9,
                    region: Region { x0: 0.8, y0: 0.1, x1: 0.95, y1: 0.3 },
                    jitter: 0.0,
                    dwell_min: 0.2,
                    dwell_max: 0.3,
                    min_jump: 0.02,
                },
            ],
            noise,
            seed: 11,
        }
    }

    fn quiet() -> GazeNoise {
        GazeNoise { dropout: 0.0, spike_rate: 0.0, spike_amplitude: 0.0 }
    }

    fn bytes(trace: &Trace) -> Vec<u8> {
        let mut buf = Vec::new();
        write_trace(trace, &mut buf).unwrap();
        buf
    }

    #[test]
    fn zero_duration_gives_empty_trace() {
        let mut spec = follow_spec(0.0, quiet());
        spec.duration = 0.0;
        spec.gaze_script.clear();
        let trace = generate(&spec).unwrap();
        assert!(trace.gaze.is_empty() && trace.frames.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let spec = builtin("jittery_pursuit", 5).unwrap();
        assert_eq!(bytes(&generate(&spec).unwrap()), bytes(&generate(&spec).unwrap()));
        let other = builtin("jittery_pursuit", 6).unwrap();
        assert_ne!(bytes(&generate(&spec).unwrap()), bytes(&generate(&other).unwrap()));
    }

    /// Re-derives truth by walking the script independently of `truth()`.
    fn replay_truth(spec: &ScenarioSpec) -> Vec<(f64, f64, u32)> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for p in &spec.gaze_script {
            let next = t + p.duration();
            if let Phase::FollowObject { object, .. } = p {
                out.push((t, next, *object));
            }
            t = next;
        }
        out
    }

    #[test]
    fn three_second_follow_gives_three_second_truth() {
        let spec = follow_spec(0.002, quiet());
        let trace = generate(&spec).unwrap();
        let truth = trace.truth.unwrap();
        assert_eq!(truth.intervals.len(), 1);
        let iv = truth.intervals[0];
        assert_eq!((iv.t_start, iv.t_end - iv.t_start, iv.instance), (1.0, 3.0, 7));
        let oracle = replay_truth(&spec);
        assert_eq!(oracle, vec![(iv.t_start, iv.t_end, iv.instance)]);
    }

    #[test]
    fn fixation_on_object_counts_as_truth() {
        let mut spec = follow_spec(0.0, quiet());
        spec.objects = vec![disc(vec![Waypoint { t: 0.0, x: 0.9, y: 0.85 }])];
        spec.gaze_script[1] = Phase::FixatePoint { duration: 3.0, x: 0.5, y: 0.5, jitter: 0.0 };
        let truth = spec.truth();
        assert_eq!(truth.intervals.len(), 1);
        assert_eq!((truth.intervals[0].t_start, truth.intervals[0].t_end), (0.0, 1.0));
    }

    #[test]
    fn builtins_have_documented_truth() {
        for seed in 0..5 {
            let blank = builtin("blank_stare", seed).unwrap();
            assert!(blank.truth().intervals.is_empty());
            let basic = builtin("pursuit_basic", seed).unwrap();
            assert_eq!(basic.objects.len(), 1);
            let follows = basic.gaze_script.iter().filter(|p| matches!(p, Phase::FollowObject { .. })).count();
            assert_eq!(follows, 1);
            assert_eq!(basic.truth().intervals.len(), 1);
            let multi = builtin("multi_object_shift", seed).unwrap();
            let ids: std::collections::BTreeSet<u32> = multi.truth().intervals.iter().map(|i| i.instance).collect();
            assert!(multi.truth().intervals.len() >= 2 && ids.len() >= 2);
        }
    }

    #[test]
    fn extended_builtin_repeats_blocks() {
        let spec = builtin_extended("pursuit_basic", 3, 120.0).unwrap();
        assert!((spec.duration - 120.0).abs() < 1e-9);
        assert!(spec.truth().intervals.len() >= 5);
        generate(&spec).unwrap();
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let err = builtin("nope", 0).unwrap_err();
        let msg = err.to_string();
        for name in BUILTINS {
            assert!(msg.contains(name), "{msg}");
        }
        assert_eq!(err.kind(), "scenario");
    }

    #[test]
    fn invalid_spec_lists_every_violation() {
        let mut spec = follow_spec(0.0, quiet());
        spec.duration = 6.0;
        spec.objects[0].path[1].x = 1.2;
        spec.gaze_script[1] = Phase::FollowObject { duration: 3.0, object: 99, jitter: 0.0, lag: 0.1 };
        let Err(Error::Scenario(v)) = generate(&spec) else {
            panic!("expected a scenario error");
        };
        assert_eq!(v.len(), 3, "{v:?}");
        let round = ScenarioSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(round, spec);
    }

    #[test]
    fn pursuit_gaze_tracks_lagged_centroid() {
        let sigma = 0.01;
        let spec = follow_spec(sigma, quiet());
        let trace = generate(&spec).unwrap();
        let o = &spec.objects[0];
        let errs: Vec<(f64, f64)> = trace
            .gaze
            .iter()
            .filter(|g| g.t >= 1.0 && g.t < 4.0 - TIME_EPS)
            .map(|g| {
                let (x, y) = o.position(g.t - 0.1);
                (g.x - x, g.y - y)
            })
            .collect();
        let n = errs.len() as f64;
        assert_eq!(errs.len(), 90);
        let mx = errs.iter().map(|e| e.0).sum::<f64>() / n;
        let my = errs.iter().map(|e| e.1).sum::<f64>() / n;
        let bound = 3.0 * sigma / n.sqrt();
        assert!(mx.abs() <= bound && my.abs() <= bound, "{mx} {my} > {bound}");
    }

    #[test]
    fn truth_never_overlaps_wander_or_saccades() {
        for name in BUILTINS {
            for seed in 0..4 {
                let spec = builtin_extended(name, seed, 60.0).unwrap();
                let truth = spec.truth();
                for (p, s) in spec.gaze_script.iter().zip(spec.phase_starts()) {
                    if matches!(p, Phase::WanderBlankly { .. } | Phase::SaccadeTo { .. }) {
                        let e = s + p.duration();
                        for iv in &truth.intervals {
                            assert!(iv.t_end <= s + 1e-9 || iv.t_start >= e - 1e-9, "{name}/{seed}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn frames_show_the_object() {
        let spec = follow_spec(0.0, quiet());
        let trace = generate(&spec).unwrap();
        let f = &trace.frames[0];
        let (x, y) = spec.objects[0].position(0.0);
        let col = (x * f64::from(f.width)) as usize;
        let row = (y * f64::from(f.height)) as usize;
        let centre = f.luma[row * f.width as usize + col];
        assert!((f64::from(centre) - 0.9).abs() < 0.05, "{centre}");
        let corner = f64::from(f.luma[0]);
        assert!(corner < 0.5);
    }
}
