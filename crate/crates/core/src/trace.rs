//! Gaze and scene traces, ground truth, and the line-delimited JSON trace
//! format.
//!
//! A trace file holds one JSON object per line. The first line is always the
//! `meta` record; `gaze` and `frame` records follow interleaved in timestamp
//! order (gaze first on ties) and an optional `truth` record closes the file:
//!
//! ```text
//! {"kind":"meta","scenario":"pursuit_basic","seed":7,"gaze_rate":30.0,"frame_rate":30.0}
//! {"kind":"gaze","t":0.0,"x":0.41,"y":0.52,"valid":true}
//! {"kind":"frame","t":0.0,"width":48,"height":36,"luma":[0.31,0.312,...]}
//! {"kind":"truth","intervals":[{"t_start":4.1,"t_end":13.1,"instance":1}]}
//! ```
//!
//! `luma` is row-major. Frames may carry an `instances` array of the same
//! shape holding per-pixel object ids (0 = background).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when comparing timestamps that come from `k / rate` arithmetic.
pub const TIME_EPS: f64 = 1e-9;

pub const DEFAULT_GAZE_RATE: f64 = 30.0;
pub const DEFAULT_FRAME_RATE: f64 = 30.0;

/// A gaze position in normalized scene-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Tracker confidence gate. Coordinates of invalid samples carry no
    /// meaning.
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        GazeSample { t, x, y, valid: true }
    }

    pub fn invalid(t: f64) -> Self {
        GazeSample {
            t,
            x: 0.0,
            y: 0.0,
            valid: false,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, other: &GazeSample) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One luma frame from the world camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub t: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major, values in `[0, 1]`.
    pub luma: Vec<f32>,
    /// Simulator-only per-pixel object ids, same shape as `luma`.
    pub instances: Option<Vec<u32>>,
}

impl SceneFrame {
    pub fn new(t: f64, width: u32, height: u32, luma: Vec<f32>) -> Result<Self> {
        let frame = SceneFrame {
            t,
            width,
            height,
            luma,
            instances: None,
        };
        frame.check().map_err(Error::validation)?;
        Ok(frame)
    }

    pub fn luma_at(&self, x: u32, y: u32) -> f32 {
        self.luma[(y * self.width + x) as usize]
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(format!("frame timestamp {} must be finite and >= 0", self.t));
        }
        let area = self.width as usize * self.height as usize;
        if self.luma.len() != area {
            return Err(format!(
                "frame at t={} has {} luma values, expected {}x{}={}",
                self.t,
                self.luma.len(),
                self.width,
                self.height,
                area
            ));
        }
        if let Some(bad) = self.luma.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("frame at t={} has luma value {} outside [0,1]", self.t, bad));
        }
        if let Some(instances) = &self.instances {
            if instances.len() != area {
                return Err(format!(
                    "frame at t={} has an instance map of {} entries, expected {}",
                    self.t,
                    instances.len(),
                    area
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub instance: u32,
}

impl TruthInterval {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// Ground-truth attention epochs, sorted and non-overlapping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTruth {
    pub intervals: Vec<TruthInterval>,
}

impl AttentionTruth {
    pub fn new(intervals: Vec<TruthInterval>) -> Result<Self> {
        let truth = AttentionTruth { intervals };
        truth.check().map_err(Error::validation)?;
        Ok(truth)
    }

    pub fn interval_at(&self, t: f64) -> Option<&TruthInterval> {
        self.intervals.iter().find(|iv| iv.contains(t))
    }

    fn check(&self) -> std::result::Result<(), String> {
        for iv in &self.intervals {
            if !(iv.t_start.is_finite() && iv.t_end.is_finite()) || iv.t_start >= iv.t_end {
                return Err(format!(
                    "truth interval [{}, {}) must satisfy t_start < t_end",
                    iv.t_start, iv.t_end
                ));
            }
        }
        for pair in self.intervals.windows(2) {
            if pair[1].t_start < pair[0].t_end {
                return Err(format!(
                    "truth intervals [{}, {}) and [{}, {}) overlap or are out of order",
                    pair[0].t_start, pair[0].t_end, pair[1].t_start, pair[1].t_end
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub seed: u64,
    pub gaze_rate: f64,
    pub frame_rate: f64,
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta {
            scenario: String::new(),
            seed: 0,
            gaze_rate: DEFAULT_GAZE_RATE,
            frame_rate: DEFAULT_FRAME_RATE,
        }
    }
}

/// Paired gaze and scene streams over a shared time base.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub gaze: Vec<GazeSample>,
    pub frames: Vec<SceneFrame>,
    pub truth: Option<AttentionTruth>,
}

impl Trace {
    /// Checks every type invariant. Nothing is repaired.
    pub fn validate(&self) -> Result<()> {
        check_meta(&self.meta).map_err(Error::validation)?;
        for (i, g) in self.gaze.iter().enumerate() {
            check_gaze(g).map_err(Error::validation)?;
            if i > 0 && g.t <= self.gaze[i - 1].t {
                return Err(Error::validation(format!(
                    "gaze timestamps not strictly increasing at t={}",
                    g.t
                )));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            f.check().map_err(Error::validation)?;
            if i > 0 && f.t <= self.frames[i - 1].t {
                return Err(Error::validation(format!(
                    "frame timestamps not strictly increasing at t={}",
                    f.t
                )));
            }
        }
        if let Some(truth) = &self.truth {
            truth.check().map_err(Error::validation)?;
        }
        check_span(self).map_err(Error::validation)
    }

    /// Time covered by the gaze stream.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.gaze.first()?.t, self.gaze.last()?.t))
    }

    /// Latest frame captured at or before `t`.
    pub fn frame_at(&self, t: f64) -> Option<&SceneFrame> {
        let idx = self.frames.partition_point(|f| f.t <= t + TIME_EPS);
        if idx == 0 {
            None
        } else {
            Some(&self.frames[idx - 1])
        }
    }
}

fn check_meta(meta: &TraceMeta) -> std::result::Result<(), String> {
    if !(meta.gaze_rate.is_finite() && meta.gaze_rate > 0.0) {
        return Err(format!("gaze_rate {} must be positive", meta.gaze_rate));
    }
    if !(meta.frame_rate.is_finite() && meta.frame_rate > 0.0) {
        return Err(format!("frame_rate {} must be positive", meta.frame_rate));
    }
    if meta.gaze_rate < meta.frame_rate {
        return Err(format!(
            "gaze_rate {} must be at least frame_rate {}",
            meta.gaze_rate, meta.frame_rate
        ));
    }
    Ok(())
}

fn check_gaze(g: &GazeSample) -> std::result::Result<(), String> {
    if !g.t.is_finite() || g.t < 0.0 {
        return Err(format!("gaze timestamp {} must be finite and >= 0", g.t));
    }
    if g.valid && !((0.0..=1.0).contains(&g.x) && (0.0..=1.0).contains(&g.y)) {
        return Err(format!(
            "valid gaze sample at t={} lies outside [0,1]^2: ({}, {})",
            g.t, g.x, g.y
        ));
    }
    Ok(())
}

fn check_span(trace: &Trace) -> std::result::Result<(), String> {
    let (Some(g0), Some(f0)) = (trace.gaze.first(), trace.frames.first()) else {
        return Ok(());
    };
    let g1 = trace.gaze.last().unwrap();
    let f1 = trace.frames.last().unwrap();
    let slack = 1.0 / trace.meta.frame_rate + TIME_EPS;
    if (g0.t - f0.t).abs() > slack || (g1.t - f1.t).abs() > slack {
        return Err(format!(
            "gaze span [{}, {}] and frame span [{}, {}] do not cover the same time",
            g0.t, g1.t, f0.t, f1.t
        ));
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum OutRecord<'a> {
    Meta {
        scenario: &'a str,
        seed: u64,
        gaze_rate: f64,
        frame_rate: f64,
    },
    Gaze {
        t: f64,
        x: f64,
        y: f64,
        valid: bool,
    },
    Frame {
        t: f64,
        width: u32,
        height: u32,
        luma: &'a [f32],
        #[serde(skip_serializing_if = "Option::is_none")]
        instances: Option<&'a [u32]>,
    },
    Truth {
        intervals: &'a [TruthInterval],
    },
}

/// Writes `trace` as line-delimited JSON. The trace is validated first.
pub fn write_trace<W: Write>(trace: &Trace, sink: W) -> Result<()> {
    trace.validate()?;
    let mut out = BufWriter::new(sink);
    let mut record = 0usize;
    let mut emit = |out: &mut BufWriter<W>, rec: OutRecord<'_>| -> Result<()> {
        record += 1;
        let io = |source| Error::TraceIo { record, source };
        serde_json::to_writer(&mut *out, &rec).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)
    };

    let meta = &trace.meta;
    emit(
        &mut out,
        OutRecord::Meta {
            scenario: &meta.scenario,
            seed: meta.seed,
            gaze_rate: meta.gaze_rate,
            frame_rate: meta.frame_rate,
        },
    )?;

    let (mut gi, mut fi) = (0, 0);
    while gi < trace.gaze.len() || fi < trace.frames.len() {
        let take_gaze = match (trace.gaze.get(gi), trace.frames.get(fi)) {
            (Some(g), Some(f)) => g.t <= f.t,
            (Some(_), None) => true,
            _ => false,
        };
        if take_gaze {
            let g = trace.gaze[gi];
            gi += 1;
            emit(
                &mut out,
                OutRecord::Gaze {
                    t: g.t,
                    x: g.x,
                    y: g.y,
                    valid: g.valid,
                },
            )?;
        } else {
            let f = &trace.frames[fi];
            fi += 1;
            emit(
                &mut out,
                OutRecord::Frame {
                    t: f.t,
                    width: f.width,
                    height: f.height,
                    luma: &f.luma,
                    instances: f.instances.as_deref(),
                },
            )?;
        }
    }

    if let Some(truth) = &trace.truth {
        emit(
            &mut out,
            OutRecord::Truth {
                intervals: &truth.intervals,
            },
        )?;
    }
    out.flush().map_err(|source| Error::TraceIo {
        record: record + 1,
        source,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InRecord {
    kind: String,
    t: Option<f64>,
    x: Option<f64>,
    y: Option<f64>,
    valid: Option<bool>,
    width: Option<u32>,
    height: Option<u32>,
    luma: Option<Vec<f32>>,
    instances: Option<Vec<u32>>,
    intervals: Option<Vec<TruthInterval>>,
    seed: Option<u64>,
    scenario: Option<String>,
    gaze_rate: Option<f64>,
    frame_rate: Option<f64>,
}

fn required<T>(value: Option<T>, field: &str, kind: &str, line: usize) -> Result<T> {
    value.ok_or_else(|| Error::Parse {
        line,
        message: format!("`{kind}` record is missing field `{field}`"),
    })
}

/// Reads a line-delimited trace and validates every invariant.
pub fn read_trace<R: Read>(source: R) -> Result<Trace> {
    let mut reader = BufReader::new(source);
    let mut buf = String::new();
    let mut line = 0usize;
    let mut meta: Option<TraceMeta> = None;
    let mut trace = Trace::default();
    let mut truth_line = None;

    loop {
        buf.clear();
        let n = reader
            .read_line(&mut buf)
            .map_err(|source| Error::TraceIo {
                record: line + 1,
                source,
            })?;
        if n == 0 {
            break;
        }
        line += 1;
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        let rec: InRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let kind = rec.kind.as_str();
        if meta.is_none() && kind != "meta" {
            return Err(Error::Parse {
                line,
                message: format!("expected a `meta` record first, found `{kind}`"),
            });
        }
        let invalid = |message: String| Error::Validation {
            line: Some(line),
            message,
        };
        match kind {
            "meta" => {
                if meta.is_some() {
                    return Err(Error::Parse {
                        line,
                        message: "duplicate `meta` record".into(),
                    });
                }
                let m = TraceMeta {
                    scenario: rec.scenario.unwrap_or_default(),
                    seed: required(rec.seed, "seed", kind, line)?,
                    gaze_rate: required(rec.gaze_rate, "gaze_rate", kind, line)?,
                    frame_rate: required(rec.frame_rate, "frame_rate", kind, line)?,
                };
                check_meta(&m).map_err(invalid)?;
                meta = Some(m);
            }
            "gaze" => {
                let g = GazeSample {
                    t: required(rec.t, "t", kind, line)?,
                    x: required(rec.x, "x", kind, line)?,
                    y: required(rec.y, "y", kind, line)?,
                    valid: required(rec.valid, "valid", kind, line)?,
                };
                check_gaze(&g).map_err(invalid)?;
                if let Some(prev) = trace.gaze.last() {
                    if g.t <= prev.t {
                        return Err(invalid(format!(
                            "gaze timestamp {} does not increase past {}",
                            g.t, prev.t
                        )));
                    }
                }
                trace.gaze.push(g);
            }
            "frame" => {
                let f = SceneFrame {
                    t: required(rec.t, "t", kind, line)?,
                    width: required(rec.width, "width", kind, line)?,
                    height: required(rec.height, "height", kind, line)?,
                    luma: required(rec.luma, "luma", kind, line)?,
                    instances: rec.instances,
                };
                f.check().map_err(invalid)?;
                if let Some(prev) = trace.frames.last() {
                    if f.t <= prev.t {
                        return Err(invalid(format!(
                            "frame timestamp {} does not increase past {}",
                            f.t, prev.t
                        )));
                    }
                }
                trace.frames.push(f);
            }
            "truth" => {
                if truth_line.is_some() {
                    return Err(Error::Parse {
                        line,
                        message: "duplicate `truth` record".into(),
                    });
                }
                let truth = AttentionTruth {
                    intervals: required(rec.intervals, "intervals", kind, line)?,
                };
                truth.check().map_err(invalid)?;
                trace.truth = Some(truth);
                truth_line = Some(line);
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown record kind `{other}`"),
                })
            }
        }
    }

    trace.meta = meta.ok_or(Error::Parse {
        line: line.max(1),
        message: "trace has no `meta` record".into(),
    })?;
    check_span(&trace).map_err(Error::validation)?;
    Ok(trace)
}

pub fn save_trace(trace: &Trace, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, |w| write_trace(trace, w))
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_trace(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TraceMeta {
        TraceMeta {
            scenario: "unit".into(),
            seed: 3,
            ..TraceMeta::default()
        }
    }

    fn to_lines(trace: &Trace) -> Vec<String> {
        let mut buf = Vec::new();
        write_trace(trace, &mut buf).unwrap();
        String::from_utf8(buf).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn empty_trace_is_only_meta() {
        let trace = Trace {
            meta: meta(),
            ..Trace::default()
        };
        let lines = to_lines(&trace);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains(r#""kind":"meta""#));
        assert_eq!(read_trace(lines.join("\n").as_bytes()).unwrap(), trace);
    }

    #[test]
    fn gaze_lines_follow_meta_in_time_order() {
        let trace = Trace {
            meta: meta(),
            gaze: (0..3).map(|k| GazeSample::new(k as f64 / 30.0, 0.5, 0.5)).collect(),
            ..Trace::default()
        };
        let lines = to_lines(&trace);
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains(r#""kind":"meta""#));
        for (k, l) in lines[1..].iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["kind"], "gaze");
            assert_eq!(v["t"].as_f64().unwrap(), k as f64 / 30.0);
        }
    }

    #[test]
    fn out_of_range_valid_gaze_is_rejected() {
        let text = concat!(
            r#"{"kind":"meta","scenario":"x","seed":1,"gaze_rate":30.0,"frame_rate":30.0}"#,
            "\n",
            r#"{"kind":"gaze","t":0.0,"x":1.5,"y":0.5,"valid":true}"#,
            "\n"
        );
        match read_trace(text.as_bytes()) {
            Err(Error::Validation { line: Some(2), .. }) => {}
            other => panic!("expected validation error on line 2, got {other:?}"),
        }
        // the same coordinates are fine when the tracker flagged the sample
        let ok = text.replace("\"valid\":true", "\"valid\":false");
        assert!(read_trace(ok.as_bytes()).is_ok());
    }

    #[test]
    fn unknown_kind_is_named() {
        let text = concat!(
            r#"{"kind":"meta","scenario":"x","seed":1,"gaze_rate":30.0,"frame_rate":30.0}"#,
            "\n",
            r#"{"kind":"blink","t":0.0}"#
        );
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(err.to_string().contains("`blink`"), "{err}");
    }

    #[test]
    fn malformed_line_cites_line_number() {
        let text = concat!(
            r#"{"kind":"meta","scenario":"x","seed":1,"gaze_rate":30.0,"frame_rate":30.0}"#,
            "\n",
            r#"{"kind":"gaze","t":0.0,"x":0.2,"y":0.5,"valid":true}"#,
            "\n",
            r#"{"kind":"gaze","t":0.1,"x":0.2,"#
        );
        assert!(matches!(read_trace(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let text = concat!(
            r#"{"kind":"meta","scenario":"x","seed":1,"gaze_rate":30.0,"frame_rate":30.0}"#,
            "\n",
            r#"{"kind":"gaze","t":0.5,"x":0.2,"y":0.5,"valid":true}"#,
            "\n",
            r#"{"kind":"gaze","t":0.5,"x":0.2,"y":0.5,"valid":true}"#
        );
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(Error::Validation { line: Some(3), .. })
        ));
    }

    #[test]
    fn meta_must_come_first() {
        let text = r#"{"kind":"gaze","t":0.5,"x":0.2,"y":0.5,"valid":true}"#;
        assert!(matches!(read_trace(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn gaze_rate_below_frame_rate_is_invalid() {
        let text = r#"{"kind":"meta","scenario":"x","seed":1,"gaze_rate":10.0,"frame_rate":30.0}"#;
        assert!(matches!(read_trace(text.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn overlapping_truth_is_invalid() {
        let truth = AttentionTruth::new(vec![
            TruthInterval {
                t_start: 0.0,
                t_end: 2.0,
                instance: 1,
            },
            TruthInterval {
                t_start: 1.0,
                t_end: 3.0,
                instance: 2,
            },
        ]);
        assert!(truth.is_err());
    }

    struct FailingSink;
    impl Write for FailingSink {
        fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
            Err(std::io::Error::other("disk full"))
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Err(std::io::Error::other("disk full"))
        }
    }

    #[test]
    fn sink_failure_reports_position() {
        let trace = Trace {
            meta: meta(),
            gaze: vec![GazeSample::new(0.0, 0.1, 0.1)],
            ..Trace::default()
        };
        let err = write_trace(&trace, FailingSink).unwrap_err();
        assert!(matches!(err, Error::TraceIo { .. }), "{err:?}");
    }

    #[test]
    fn frame_lookup_picks_latest_not_after() {
        let frames = (0..3)
            .map(|k| SceneFrame::new(k as f64 * 0.5, 1, 1, vec![0.5]).unwrap())
            .collect();
        let trace = Trace {
            meta: meta(),
            frames,
            ..Trace::default()
        };
        assert!(trace.frame_at(-0.1).is_none());
        assert_eq!(trace.frame_at(0.7).unwrap().t, 0.5);
        assert_eq!(trace.frame_at(1.0).unwrap().t, 1.0);
    }
}
