//! Component energy model, duty-cycle accounting and savings against a
//! record-everything baseline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::DecisionLog;

/// Text of the shipped calibration set.
pub const CALIBRATED_PARAMS: &str = include_str!("../data/energy_default.params");

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImagingParams {
    pub p_sensor_idle: f64,
    /// Active sensor power per pixel of sensor resolution, W/px.
    pub sensor_active_slope: f64,
    /// Sensor resolution, pixels.
    pub r: f64,
    /// Transferred frame resolution, pixels.
    pub r_frame: f64,
    /// External clock, Hz.
    pub f: f64,
    pub t_exp: f64,
    pub p_isp_active: f64,
    pub p_isp_idle: f64,
    pub t_isp: f64,
    /// Interface energy per transferred pixel, J/px.
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelinePowers {
    pub p_eye_camera: f64,
    pub p_world_camera: f64,
    pub p_eye_tracking: f64,
    pub p_fusion: f64,
    pub p_encoding_storing: f64,
}

impl PipelinePowers {
    pub fn always_on(&self) -> f64 {
        self.p_eye_camera + self.p_eye_tracking
    }

    pub fn capture(&self) -> f64 {
        self.p_world_camera + self.p_encoding_storing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DutyTimes {
    pub t_always_on: f64,
    pub t_fusion: f64,
    pub t_auto_captured: f64,
}

impl DutyTimes {
    /// Times measured from a replay log.
    pub fn from_log(log: &DecisionLog) -> Result<Self> {
        let d = log.duty()?;
        Ok(DutyTimes {
            t_always_on: d.span,
            t_fusion: d.fusion,
            t_auto_captured: d.recording,
        })
    }

    pub fn from_fractions(span: f64, fusion: f64, capture: f64) -> Self {
        DutyTimes {
            t_always_on: span,
            t_fusion: fusion * span,
            t_auto_captured: capture * span,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0 && v <= self.t_always_on;
        if !(self.t_always_on.is_finite() && self.t_always_on >= 0.0)
            || !ok(self.t_fusion)
            || !ok(self.t_auto_captured)
        {
            return Err(Error::Parameter(format!(
                "duty times must satisfy 0 <= T_fusion, T_auto_captured <= T_always_on (got {self:?})"
            )));
        }
        Ok(())
    }
}

fn require_clock(p: &ImagingParams) -> Result<()> {
    if p.f > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("external clock f must be > 0 (got {})", p.f)))
    }
}

/// Exposure at idle power plus read-out at active power.
pub fn sensor_energy(p: &ImagingParams) -> Result<f64> {
    require_clock(p)?;
    Ok(p.p_sensor_idle * p.t_exp + p.sensor_active_slope * p.r * (p.r_frame / p.f))
}

/// Processing at active power plus the exposure and read-out at idle power.
pub fn isp_energy(p: &ImagingParams) -> Result<f64> {
    require_clock(p)?;
    Ok(p.p_isp_active * p.t_isp + p.p_isp_idle * (p.t_exp + p.r_frame / p.f))
}

pub fn comm_energy(p: &ImagingParams) -> f64 {
    p.k * p.r_frame
}

/// Energy of one frame through sensor, ISP and interface.
pub fn imaging_energy(p: &ImagingParams) -> Result<f64> {
    Ok(sensor_energy(p)? + isp_energy(p)? + comm_energy(p))
}

/// Always-on eye pipeline plus the fusion and capture duty.
pub fn gated_energy(times: &DutyTimes, powers: &PipelinePowers) -> Result<f64> {
    times.validate()?;
    Ok(times.t_always_on * powers.always_on()
        + times.t_fusion * (powers.p_world_camera + powers.p_fusion)
        + times.t_auto_captured * powers.capture())
}

/// World camera and encoder on for the whole span, eye pipeline off.
pub fn baseline_energy(powers: &PipelinePowers, t_always_on: f64) -> f64 {
    t_always_on * powers.capture()
}

/// `1 - E / E_baseline`; negative when gating costs more than recording
/// everything.
pub fn savings(energy: f64, powers: &PipelinePowers, t_always_on: f64) -> Result<f64> {
    let baseline = baseline_energy(powers, t_always_on);
    if !(baseline > 0.0) {
        return Err(Error::Parameter("record-everything baseline energy is zero".into()));
    }
    Ok(1.0 - energy / baseline)
}

/// Fraction of the logged span spent waiting on fusion or recording.
pub fn trigger_rate(log: &DecisionLog) -> Result<f64> {
    let d = log.duty()?;
    if !(d.span > 0.0) {
        return Err(Error::Metrics("decision log spans zero time".into()));
    }
    Ok(((d.fusion + d.recording) / d.span).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParams {
    pub imaging: ImagingParams,
    pub powers: PipelinePowers,
    pub battery_capacity_wh: f64,
    /// Fusion and capture fractions of a reference day, if given.
    pub reference_duty: Option<(f64, f64)>,
}

const IMAGING_KEYS: [&str; 10] = [
    "P_sensor_idle",
    "sensor_active_slope",
    "R",
    "R_frame",
    "f",
    "T_exp",
    "P_ISP_active",
    "P_ISP_idle",
    "T_ISP",
    "k",
];
const POWER_KEYS: [&str; 5] = [
    "P_eye_camera",
    "P_world_camera",
    "P_eye_tracking",
    "P_fusion",
    "P_encoding_storing",
];

impl EnergyParams {
    pub fn calibrated() -> Self {
        Self::parse(CALIBRATED_PARAMS).expect("shipped parameter file parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            let known = IMAGING_KEYS.contains(&key)
                || POWER_KEYS.contains(&key)
                || matches!(
                    key,
                    "battery_capacity_Wh" | "reference_fusion_fraction" | "reference_capture_fraction"
                );
            if !known {
                return Err(bad(format!("unknown parameter `{key}`")));
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(format!("`{key}` is not a number: `{}`", value.trim())))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(format!("`{key}` must be finite and >= 0 (got {v})")));
            }
            if values.insert(key.to_string(), v).is_some() {
                return Err(bad(format!("duplicate parameter `{key}`")));
            }
        }
        let get = |key: &str| {
            values
                .get(key)
                .copied()
                .ok_or_else(|| Error::Parameter(format!("missing energy parameter `{key}`")))
        };
        let imaging = ImagingParams {
            p_sensor_idle: get("P_sensor_idle")?,
            sensor_active_slope: get("sensor_active_slope")?,
            r: get("R")?,
            r_frame: get("R_frame")?,
            f: get("f")?,
            t_exp: get("T_exp")?,
            p_isp_active: get("P_ISP_active")?,
            p_isp_idle: get("P_ISP_idle")?,
            t_isp: get("T_ISP")?,
            k: get("k")?,
        };
        if imaging.r < imaging.r_frame {
            return Err(Error::Parameter(format!(
                "sensor resolution R ({}) is below R_frame ({})",
                imaging.r, imaging.r_frame
            )));
        }
        let powers = PipelinePowers {
            p_eye_camera: get("P_eye_camera")?,
            p_world_camera: get("P_world_camera")?,
            p_eye_tracking: get("P_eye_tracking")?,
            p_fusion: get("P_fusion")?,
            p_encoding_storing: get("P_encoding_storing")?,
        };
        let reference_duty = match (
            values.get("reference_fusion_fraction"),
            values.get("reference_capture_fraction"),
        ) {
            (Some(&a), Some(&b)) if a <= 1.0 && b <= 1.0 => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::Parameter(
                    "reference fractions must both be given and lie in [0,1]".into(),
                ))
            }
        };
        Ok(EnergyParams {
            imaging,
            powers,
            battery_capacity_wh: get("battery_capacity_Wh")?,
            reference_duty,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub duty: DutyTimes,
    pub e_always_on: f64,
    pub e_fusion: f64,
    pub e_capture: f64,
    pub e_total: f64,
    pub e_baseline: f64,
    pub savings: f64,
    pub trigger_rate: f64,
    pub average_power_w: f64,
    pub battery_hours: f64,
}

pub fn energy_report(duty: &DutyTimes, params: &EnergyParams) -> Result<EnergyReport> {
    let p = &params.powers;
    let e_total = gated_energy(duty, p)?;
    if !(duty.t_always_on > 0.0) {
        return Err(Error::Parameter("duty span must be > 0".into()));
    }
    let average_power_w = e_total / duty.t_always_on;
    Ok(EnergyReport {
        duty: *duty,
        e_always_on: duty.t_always_on * p.always_on(),
        e_fusion: duty.t_fusion * (p.p_world_camera + p.p_fusion),
        e_capture: duty.t_auto_captured * p.capture(),
        e_total,
        e_baseline: baseline_energy(p, duty.t_always_on),
        savings: savings(e_total, p, duty.t_always_on)?,
        trigger_rate: ((duty.t_fusion + duty.t_auto_captured) / duty.t_always_on).min(1.0),
        average_power_w,
        battery_hours: if average_power_w > 0.0 {
            params.battery_capacity_wh / average_power_w
        } else {
            f64::INFINITY
        },
    })
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "T_always_on,T_fusion,T_auto_captured,E_always_on_J,E_fusion_J,E_capture_J,E_total_J,E_baseline_J,savings,trigger_rate,average_power_W,battery_hours";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4}",
            self.duty.t_always_on,
            self.duty.t_fusion,
            self.duty.t_auto_captured,
            self.e_always_on,
            self.e_fusion,
            self.e_capture,
            self.e_total,
            self.e_baseline,
            self.savings,
            self.trigger_rate,
            self.average_power_w,
            self.battery_hours
        )
    }

    pub fn write_csv(&self, sink: &mut dyn Write) -> Result<()> {
        writeln!(sink, "{}\n{}", Self::CSV_HEADER, self.csv_row())
            .map_err(|e| Error::Config(format!("cannot write energy report: {e}")))
    }
}
