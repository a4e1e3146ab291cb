//! Scenario execution and comparison: scenario files, measurement series,
//! dead-time alignment, error metrics, CSV artifacts.
//!
//! A scenario describes one experiment (initial inputs, input steps, run
//! length, which model variants to run) in a TOML file where every physical
//! quantity carries an explicit unit, e.g. `t_w_g_in = "80 °C"`. The harness
//! runs the nonlinear variants through the integrator and the linear variant
//! through the state-space model anchored at the scenario's initial steady
//! state, then assembles a comparison report whose every number can be
//! recomputed from the emitted CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{AhpdError, Result};
use crate::linearize::linearize;
use crate::model::{InputVector, Model, ModelParams, OutputVector, Variant};
use crate::props::PropertyParams;
use crate::solver::{solve_steady_state, SolverOptions};
use crate::transient::{integrate, InputSchedule, IntegrationOptions};

// ---------------------------------------------------------------------------
// quantities with units

/// Physical dimension of a parsed quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Temperature,
    MassFlow,
    VolumeFlow,
    Power,
    Time,
}

/// Parses a quantity string like `"80 °C"`, `"1200 kg/h"`, `"450 L/h"` into
/// an SI value and its dimension. The accepted units are exactly
/// {°C, K, kg/h, kg/s, m³/h, L/h, kW, W, s, min}.
pub fn parse_quantity(s: &str) -> Result<(f64, Dim)> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| AhpdError::Unit(format!("'{s}': expected '<number> <unit>'")))?;
    let (num, unit) = s.split_at(split);
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| AhpdError::Unit(format!("'{s}': bad number '{num}'")))?;
    let (si, dim) = match unit.trim() {
        "°C" => (v + 273.15, Dim::Temperature),
        "K" => (v, Dim::Temperature),
        "kg/h" => (v / 3600.0, Dim::MassFlow),
        "kg/s" => (v, Dim::MassFlow),
        "m³/h" => (v / 3600.0, Dim::VolumeFlow),
        "L/h" => (v / 3.6e6, Dim::VolumeFlow),
        "kW" => (v * 1e3, Dim::Power),
        "W" => (v, Dim::Power),
        "s" => (v, Dim::Time),
        "min" => (v * 60.0, Dim::Time),
        other => {
            return Err(AhpdError::Unit(format!("'{s}': unknown unit '{other}'")));
        }
    };
    Ok((si, dim))
}

/// Dimension of a named input/output channel.
pub fn channel_dim(name: &str) -> Result<Dim> {
    if name.starts_with("t_") {
        Ok(Dim::Temperature)
    } else if name.starts_with("mdot_") {
        Ok(Dim::MassFlow)
    } else if name.starts_with("vdot_") {
        Ok(Dim::VolumeFlow)
    } else if name.starts_with("qdot_") {
        Ok(Dim::Power)
    } else {
        Err(AhpdError::Unit(format!("unknown channel '{name}'")))
    }
}

/// Unit suffix used when writing a channel to CSV (SI-consistent).
pub fn channel_unit(name: &str) -> &'static str {
    if name.starts_with("t_") {
        "K"
    } else if name.starts_with("mdot_") {
        "kg/s"
    } else if name.starts_with("vdot_") {
        "m³/h"
    } else {
        "W"
    }
}

fn to_csv_value(name: &str, si: f64) -> f64 {
    if name.starts_with("vdot_") {
        si * 3600.0
    } else {
        si
    }
}

fn from_unit(unit: &str, v: f64) -> Result<f64> {
    let (si, _) = parse_quantity(&format!("{v} {unit}"))?;
    Ok(si)
}

// ---------------------------------------------------------------------------
// scenarios

/// Which model to run in a scenario: the three nonlinear variants plus the
/// linear state-space model anchored at the scenario's initial steady state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantSel {
    BaseA,
    BaseB,
    V1,
    V2,
}

impl VariantSel {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantSel::BaseA => "base-a",
            VariantSel::BaseB => "base-b",
            VariantSel::V1 => "v1",
            VariantSel::V2 => "v2",
        }
    }

    pub fn nonlinear(&self) -> Option<Variant> {
        match self {
            VariantSel::BaseA => Some(Variant::BaseA),
            VariantSel::V1 => Some(Variant::V1),
            VariantSel::V2 => Some(Variant::V2),
            VariantSel::BaseB => None,
        }
    }
}

impl std::str::FromStr for VariantSel {
    type Err = AhpdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base-a" => Ok(VariantSel::BaseA),
            "base-b" => Ok(VariantSel::BaseB),
            "v1" => Ok(VariantSel::V1),
            "v2" => Ok(VariantSel::V2),
            other => Err(AhpdError::InvalidInput(format!(
                "unknown variant '{other}' (expected base-a, base-b, v1 or v2)"
            ))),
        }
    }
}

/// Fluid volumes (m³) between the temperature sensors and the heat
/// exchangers, per water circuit and direction; zero volumes mean no dead
/// time.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadTimeGeometry {
    pub g_in: f64,
    pub g_out: f64,
    pub ac_in: f64,
    pub ac_out: f64,
    pub e_in: f64,
    pub e_out: f64,
}

impl DeadTimeGeometry {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g_in", self.g_in),
            ("g_out", self.g_out),
            ("ac_in", self.ac_in),
            ("ac_out", self.ac_out),
            ("e_in", self.e_in),
            ("e_out", self.e_out),
        ] {
            if !(v >= 0.0) {
                return Err(AhpdError::InvalidInput(format!(
                    "dead-time volume {name} must be ≥ 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One experiment definition.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub variants: Vec<VariantSel>,
    pub u0: InputVector,
    pub schedule: InputSchedule,
    pub t_end: f64,
    pub dt: f64,
    pub output_every: usize,
    /// Measurement CSV to compare against, resolved relative to the
    /// scenario file.
    pub measurement: Option<PathBuf>,
    pub volumes: DeadTimeGeometry,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    variants: Vec<String>,
    t_end: String,
    #[serde(default)]
    dt: Option<String>,
    #[serde(default)]
    output_every: Option<usize>,
    inputs: BTreeMap<String, String>,
    #[serde(default)]
    steps: Vec<BTreeMap<String, String>>,
    #[serde(default)]
    measurement: Option<String>,
    #[serde(default)]
    volumes: Option<DeadTimeGeometry>,
}

fn parse_channel(name: &str, quantity: &str) -> Result<f64> {
    let (v, dim) = parse_quantity(quantity)?;
    let want = channel_dim(name)?;
    if dim != want {
        return Err(AhpdError::Unit(format!(
            "channel '{name}' expects {want:?}, got {dim:?} from '{quantity}'"
        )));
    }
    Ok(v)
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| AhpdError::Schema {
            path: origin.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut variants = Vec::new();
        for v in &raw.variants {
            variants.push(v.parse::<VariantSel>()?);
        }
        if variants.is_empty() {
            return Err(AhpdError::InvalidInput("scenario runs no variants".into()));
        }

        let mut u0 = InputVector::reference_operating_point();
        for (name, q) in &raw.inputs {
            u0.set(name, parse_channel(name, q)?)?;
        }
        u0.validate(&ModelParams::default())?;

        let (t_end, dim) = parse_quantity(&raw.t_end)?;
        if dim != Dim::Time {
            return Err(AhpdError::Unit(format!("t_end must be a time, got '{}'", raw.t_end)));
        }
        let dt = match &raw.dt {
            Some(s) => {
                let (v, dim) = parse_quantity(s)?;
                if dim != Dim::Time {
                    return Err(AhpdError::Unit(format!("dt must be a time, got '{s}'")));
                }
                v
            }
            None => 1.0,
        };

        // Steps are cumulative changes to the then-current inputs.
        let mut times = vec![0.0];
        let mut values = vec![u0];
        let mut current = u0;
        for step in &raw.steps {
            let at_q = step.get("at").ok_or_else(|| AhpdError::Schema {
                path: origin.display().to_string(),
                reason: "step without 'at' time".into(),
            })?;
            let (at, dim) = parse_quantity(at_q)?;
            if dim != Dim::Time {
                return Err(AhpdError::Unit(format!("step 'at' must be a time, got '{at_q}'")));
            }
            for (name, q) in step {
                if name == "at" {
                    continue;
                }
                current.set(name, parse_channel(name, q)?)?;
            }
            current.validate(&ModelParams::default())?;
            times.push(at);
            values.push(current);
        }
        let schedule = InputSchedule::new(times, values)?;

        let measurement = raw.measurement.as_ref().map(|rel| {
            origin
                .parent()
                .map(|d| d.join(rel))
                .unwrap_or_else(|| PathBuf::from(rel))
        });
        if let Some(p) = &measurement {
            if !p.exists() {
                return Err(AhpdError::Schema {
                    path: origin.display().to_string(),
                    reason: format!("referenced measurement file {} does not exist", p.display()),
                });
            }
        }
        let volumes = raw.volumes.unwrap_or_default();
        volumes.validate()?;

        Ok(Scenario {
            name: raw.name,
            variants,
            u0,
            schedule,
            t_end,
            dt,
            output_every: raw.output_every.unwrap_or(5),
            measurement,
            volumes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AhpdError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))?;
        Self::from_toml_str(&text, path)
    }
}

// ---------------------------------------------------------------------------
// measurement series

/// Time-stamped channel data as measured (SI values after parsing).
#[derive(Debug, Clone)]
pub struct MeasurementSeries {
    pub times: Vec<f64>,
    /// (signal name, SI values per time stamp).
    pub channels: Vec<(String, Vec<f64>)>,
    /// Set when a dead-time shift ran past the ends of the series.
    pub truncated: bool,
}

impl MeasurementSeries {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AhpdError::Schema {
                path: "<measurement series>".into(),
                reason: "time grid must be strictly increasing".into(),
            });
        }
        for (name, vals) in &self.channels {
            if vals.len() != self.times.len() {
                return Err(AhpdError::Schema {
                    path: "<measurement series>".into(),
                    reason: format!("channel {name} has {} values for {} times", vals.len(), self.times.len()),
                });
            }
        }
        Ok(())
    }
}

fn interp(times: &[f64], vals: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return vals[0];
    }
    if t >= *times.last().unwrap() {
        return *vals.last().unwrap();
    }
    let k = times.partition_point(|&s| s < t).max(1);
    let (t0, t1) = (times[k - 1], times[k]);
    let (y0, y1) = (vals[k - 1], vals[k]);
    if (t1 - t0).abs() < 1e-12 {
        y1
    } else {
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }
}

/// Reads a measurement CSV: first column `time__s`, every other column named
/// `<signal>__<unit>`; values converted to SI.
pub fn read_measurements(path: &Path) -> Result<MeasurementSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AhpdError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| AhpdError::Schema {
        path: path.display().to_string(),
        reason: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"time__s") {
        return Err(AhpdError::Schema {
            path: path.display().to_string(),
            reason: format!("first column must be 'time__s', got '{}'", cols.first().unwrap_or(&"")),
        });
    }
    let mut names = Vec::new();
    let mut units = Vec::new();
    for c in &cols[1..] {
        let (name, unit) = c.rsplit_once("__").ok_or_else(|| AhpdError::Schema {
            path: path.display().to_string(),
            reason: format!("column '{c}' lacks a '__<unit>' suffix"),
        })?;
        names.push(name.to_string());
        units.push(unit.to_string());
    }
    let mut times = Vec::new();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(AhpdError::Schema {
                path: path.display().to_string(),
                reason: format!("line {}: {} fields, expected {}", lineno + 2, fields.len(), cols.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| AhpdError::Schema {
                path: path.display().to_string(),
                reason: format!("line {}: bad number '{s}'", lineno + 2),
            })
        };
        times.push(parse(fields[0])?);
        for (j, f) in fields[1..].iter().enumerate() {
            data[j].push(from_unit(&units[j], parse(f)?)?);
        }
    }
    let series = MeasurementSeries {
        times,
        channels: names.into_iter().zip(data).collect(),
        truncated: false,
    };
    series.validate()?;
    Ok(series)
}

/// Volume flow (m³/s) per water circuit, for converting sensor-to-HX fluid
/// volumes into dead times.
#[derive(Debug, Clone, Copy)]
pub struct CircuitFlows {
    pub g: f64,
    pub ac: f64,
    pub e: f64,
}

impl CircuitFlows {
    /// Volume flows from the mass-flow inputs, at liquid water density.
    pub fn from_inputs(u: &InputVector, rho_w: f64) -> Self {
        CircuitFlows {
            g: u.mdot_w_g / rho_w,
            ac: u.mdot_w_ac / rho_w,
            e: u.mdot_w_e / rho_w,
        }
    }
}

/// Compensates sensor dead times: inlet temperature channels are delayed by
/// `V_in/V̇` (the water seen by the sensor reaches the HX later), outlet
/// channels are advanced by `V_out/V̇`. Values are linearly interpolated;
/// where the shift runs past the ends of the series the edge value is held
/// and the result is flagged truncated.
pub fn dead_time_shift(
    series: &MeasurementSeries,
    flows: &CircuitFlows,
    geometry: &DeadTimeGeometry,
) -> Result<MeasurementSeries> {
    if !(flows.g > 0.0 && flows.ac > 0.0 && flows.e > 0.0) {
        return Err(AhpdError::InvalidInput(
            "dead-time shift needs positive circuit flows".into(),
        ));
    }
    geometry.validate()?;
    let shift_for = |name: &str| -> f64 {
        // Positive shift = delay (inlets), negative = advance (outlets).
        match name {
            "t_w_g_in" => geometry.g_in / flows.g,
            "t_w_ac_in" => geometry.ac_in / flows.ac,
            "t_w_e_in" => geometry.e_in / flows.e,
            "t_w_g_out" => -geometry.g_out / flows.g,
            "t_w_ac_out" => -geometry.ac_out / flows.ac,
            "t_w_e_out" => -geometry.e_out / flows.e,
            _ => 0.0,
        }
    };
    let span = (series.times[0], *series.times.last().unwrap());
    let mut truncated = series.truncated;
    let mut channels = Vec::with_capacity(series.channels.len());
    for (name, vals) in &series.channels {
        let dt = shift_for(name);
        if dt == 0.0 {
            channels.push((name.clone(), vals.clone()));
            continue;
        }
        let shifted: Vec<f64> = series
            .times
            .iter()
            .map(|&t| {
                let src = t - dt;
                if src < span.0 || src > span.1 {
                    truncated = true;
                }
                interp(&series.times, vals, src)
            })
            .collect();
        channels.push((name.clone(), shifted));
    }
    Ok(MeasurementSeries {
        times: series.times.clone(),
        channels,
        truncated,
    })
}

/// Mean relative absolute error of the three heat flows (driving, re-cooling,
/// chilled), as a fraction.
pub fn rae_q(sim: [f64; 3], meas: [f64; 3]) -> Result<f64> {
    if meas.iter().any(|&m| m == 0.0) {
        return Err(AhpdError::InvalidInput(
            "RAE_Q undefined for zero measured heat flow".into(),
        ));
    }
    Ok(sim
        .iter()
        .zip(&meas)
        .map(|(s, m)| ((s - m) / m).abs())
        .sum::<f64>()
        / 3.0)
}

// ---------------------------------------------------------------------------
// metrics on trajectories

/// Settling-time estimates for one channel after a step, in seconds from
/// the step instant. `None` when the channel never settles inside the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settling {
    /// First time after which the channel stays within 5% of its net change
    /// around the final value.
    pub band5: Option<f64>,
    /// First time the channel has covered 95% of its net change.
    pub cross95: Option<f64>,
}

/// Channel value just before the step: the last sample strictly before
/// `t_step`. Interpolating across the step would smear the jump into the
/// baseline.
fn pre_step_value(times: &[f64], y: &[f64], t_step: f64) -> f64 {
    match times.partition_point(|&t| t < t_step - 1e-9) {
        0 => y[0],
        k => y[k - 1],
    }
}

/// Settling estimators for a sampled channel with a step at `t_step`.
pub fn settling_times(times: &[f64], y: &[f64], t_step: f64) -> Settling {
    let y0 = pre_step_value(times, y, t_step);
    let y_inf = *y.last().unwrap();
    let net = y_inf - y0;
    if net.abs() < 1e-12 {
        return Settling {
            band5: Some(0.0),
            cross95: Some(0.0),
        };
    }
    let band = 0.05 * net.abs();
    let mut band5 = None;
    for (k, (&t, &v)) in times.iter().zip(y).enumerate() {
        if t < t_step {
            continue;
        }
        if (v - y_inf).abs() <= band {
            if band5.is_none() {
                band5 = Some(t - t_step);
            }
        } else {
            band5 = None;
        }
        let _ = k;
    }
    let cross95 = times
        .iter()
        .zip(y)
        .find(|(&t, &v)| t >= t_step && (v - y0) / net >= 0.95)
        .map(|(&t, _)| t - t_step);
    Settling { band5, cross95 }
}

/// Initial-response direction after a step: +1, −1 or 0.
///
/// Sign of the output deviation integrated over the first response lobe —
/// up to 60 s after the step, but stopping early at the first sign reversal
/// of the deviation. The early stop keeps a short excursion in one
/// direction from being outvoted by the recovery that follows it, which is
/// exactly the feature the flag exists to detect; for monotone responses it
/// is the plain 60 s integral.
pub fn initial_direction(times: &[f64], y: &[f64], t_step: f64) -> i8 {
    let y0 = pre_step_value(times, y, t_step);
    let t1 = t_step + 60.0;
    let mut integral = 0.0;
    let n = 240;
    let mut lobe_sign = 0.0f64;
    for k in 0..n {
        let ta = t_step + (t1 - t_step) * k as f64 / n as f64;
        let tb = t_step + (t1 - t_step) * (k + 1) as f64 / n as f64;
        let fa = interp(times, y, ta) - y0;
        let fb = interp(times, y, tb) - y0;
        if lobe_sign == 0.0 && fb.abs() > 1e-6 {
            lobe_sign = fb.signum();
        }
        if lobe_sign != 0.0 && fb * lobe_sign < -1e-6 {
            break;
        }
        integral += 0.5 * (fa + fb) * (tb - ta);
    }
    if integral > 1e-9 {
        1
    } else if integral < -1e-9 {
        -1
    } else {
        0
    }
}

// ---------------------------------------------------------------------------
// scenario execution

/// Sampled run of one variant on the scenario grid.
#[derive(Debug, Clone)]
pub struct RunTable {
    pub variant: String,
    pub times: Vec<f64>,
    pub inputs: Vec<InputVector>,
    pub outputs: Vec<OutputVector>,
    pub clamped: bool,
}

impl RunTable {
    pub fn output_channel(&self, name: &str) -> Option<Vec<f64>> {
        let idx = OutputVector::NAMES.iter().position(|n| *n == name)?;
        Some(self.outputs.iter().map(|y| y.as_array()[idx]).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelMetrics {
    pub max_abs: f64,
    pub rms: f64,
}

/// Comparison of one variant's run against the scenario reference.
#[derive(Debug, Clone)]
pub struct VariantReport {
    pub variant: String,
    /// What the errors are measured against: "measurement" or a variant name.
    pub reference: String,
    pub channels: Vec<(String, ChannelMetrics)>,
    /// RAE_Q of the final heat flows vs the reference, if computable.
    pub rae_q: Option<f64>,
    /// Per output channel, settling estimates after the first input step.
    pub settling: Vec<(String, Settling)>,
    /// Per output channel, the initial-response direction after the step.
    pub direction: Vec<(String, i8)>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub scenario: String,
    pub variants: Vec<VariantReport>,
    /// Variants that failed, with the error text (the others still ran).
    pub failures: Vec<(String, String)>,
}

pub struct ScenarioResult {
    pub runs: Vec<RunTable>,
    pub report: ComparisonReport,
}

fn run_nonlinear(
    scenario: &Scenario,
    variant: Variant,
    mp: &ModelParams,
    pp: &PropertyParams,
) -> Result<RunTable> {
    let model = Model::new(variant, mp, pp);
    let sp = solve_steady_state(&model, &scenario.u0, None, &SolverOptions::default())?;
    let opts = IntegrationOptions {
        dt: scenario.dt,
        output_every: scenario.output_every,
        solver: SolverOptions::default(),
    };
    let traj = integrate(
        &model,
        &sp.x,
        &sp.z,
        &scenario.schedule,
        0.0,
        scenario.t_end,
        &opts,
    )?;
    Ok(RunTable {
        variant: variant.as_str().to_string(),
        times: traj.times,
        inputs: traj.inputs,
        outputs: traj.outputs,
        clamped: traj.clamped,
    })
}

fn run_linear(scenario: &Scenario, mp: &ModelParams, pp: &PropertyParams) -> Result<RunTable> {
    let model = Model::new(Variant::BaseA, mp, pp);
    let sp = solve_steady_state(&model, &scenario.u0, None, &SolverOptions::default())?;
    let ss = linearize(&model, &sp)?;
    let (lt, ly) = ss.simulate(&scenario.schedule, scenario.t_end, scenario.dt)?;
    // Keep the same samples a nonlinear run stores: every n-th step plus
    // breakpoints and the end point.
    let stride = scenario.dt * scenario.output_every as f64;
    let keep = |t: f64| -> bool {
        let on_stride = (t / stride - (t / stride).round()).abs() < 1e-9;
        let on_break = scenario
            .schedule
            .breakpoints()
            .iter()
            .any(|&b| (b - t).abs() < 1e-9);
        on_stride || on_break || (t - scenario.t_end).abs() < 1e-9 || t == 0.0
    };
    let mut times = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (k, &t) in lt.iter().enumerate() {
        if keep(t) {
            times.push(t);
            inputs.push(scenario.schedule.at(t));
            outputs.push(ly[k]);
        }
    }
    Ok(RunTable {
        variant: "base-b".to_string(),
        times,
        inputs,
        outputs,
        clamped: false,
    })
}

/// Reference signals per output channel, interpolated onto `times`.
struct Reference {
    name: String,
    series: Vec<(String, Vec<f64>)>,
}

fn reference_for(
    scenario: &Scenario,
    runs: &[RunTable],
    times: &[f64],
) -> Result<Option<Reference>> {
    if let Some(path) = &scenario.measurement {
        let raw = read_measurements(path)?;
        let flows = CircuitFlows::from_inputs(&scenario.u0, 998.0);
        let shifted = dead_time_shift(&raw, &flows, &scenario.volumes)?;
        let mut series = Vec::new();
        for name in OutputVector::NAMES {
            if let Some(vals) = shifted.channel(name) {
                let on_grid: Vec<f64> = times
                    .iter()
                    .map(|&t| interp(&shifted.times, vals, t))
                    .collect();
                series.push((name.to_string(), on_grid));
            }
        }
        return Ok(Some(Reference {
            name: "measurement".to_string(),
            series,
        }));
    }
    // Model-vs-model: compare against the reference nonlinear variant when
    // it is part of the scenario.
    if let Some(base) = runs.iter().find(|r| r.variant == "base-a") {
        let mut series = Vec::new();
        for name in OutputVector::NAMES {
            let vals = base.output_channel(name).unwrap();
            let on_grid: Vec<f64> = times.iter().map(|&t| interp(&base.times, &vals, t)).collect();
            series.push((name.to_string(), on_grid));
        }
        return Ok(Some(Reference {
            name: "base-a".to_string(),
            series,
        }));
    }
    Ok(None)
}

/// Runs every requested variant of a scenario and assembles the comparison
/// report. A variant failure is recorded and does not abort the others.
pub fn run_scenario(
    scenario: &Scenario,
    mp: &ModelParams,
    pp: &PropertyParams,
) -> Result<ScenarioResult> {
    let mut runs: Vec<RunTable> = Vec::new();
    let mut failures = Vec::new();
    for sel in &scenario.variants {
        let result = match sel.nonlinear() {
            Some(v) => run_nonlinear(scenario, v, mp, pp),
            None => run_linear(scenario, mp, pp),
        };
        match result {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((sel.as_str().to_string(), e.to_string())),
        }
    }
    if runs.is_empty() {
        return Err(AhpdError::InvalidInput(format!(
            "every variant of scenario '{}' failed: {failures:?}",
            scenario.name
        )));
    }

    // The step the settling/direction metrics refer to: the first breakpoint
    // after t = 0, if any.
    let t_step = scenario
        .schedule
        .breakpoints()
        .iter()
        .copied()
        .find(|&b| b > 0.0);

    let mut reports = Vec::new();
    for run in &runs {
        let reference = reference_for(scenario, &runs, &run.times)?;
        let mut channels = Vec::new();
        let mut rae = None;
        if let Some(r) = &reference {
            if r.name != run.variant {
                for (name, ref_vals) in &r.series {
                    let vals = run.output_channel(name).unwrap();
                    let mut max_abs = 0.0f64;
                    let mut sq = 0.0;
                    for (a, b) in vals.iter().zip(ref_vals) {
                        let e = a - b;
                        max_abs = max_abs.max(e.abs());
                        sq += e * e;
                    }
                    channels.push((
                        name.clone(),
                        ChannelMetrics {
                            max_abs,
                            rms: (sq / vals.len() as f64).sqrt(),
                        },
                    ));
                }
                let q_names = ["qdot_g", "qdot_ac", "qdot_e"];
                let sim_q: Vec<Option<f64>> = q_names
                    .iter()
                    .map(|n| run.output_channel(n).map(|v| *v.last().unwrap()))
                    .collect();
                let ref_q: Vec<Option<f64>> = q_names
                    .iter()
                    .map(|n| {
                        r.series
                            .iter()
                            .find(|(rn, _)| rn == n)
                            .map(|(_, v)| *v.last().unwrap())
                    })
                    .collect();
                if sim_q.iter().all(Option::is_some) && ref_q.iter().all(Option::is_some) {
                    rae = rae_q(
                        [sim_q[0].unwrap(), sim_q[1].unwrap(), sim_q[2].unwrap()],
                        [ref_q[0].unwrap(), ref_q[1].unwrap(), ref_q[2].unwrap()],
                    )
                    .ok();
                }
            }
        }
        let mut settling = Vec::new();
        let mut direction = Vec::new();
        if let Some(ts) = t_step {
            for name in ["t_w_g_out", "t_w_ac_out", "t_w_e_out"] {
                let vals = run.output_channel(name).unwrap();
                settling.push((name.to_string(), settling_times(&run.times, &vals, ts)));
                direction.push((name.to_string(), initial_direction(&run.times, &vals, ts)));
            }
        }
        reports.push(VariantReport {
            variant: run.variant.clone(),
            reference: reference.map(|r| r.name).unwrap_or_else(|| "none".to_string()),
            channels,
            rae_q: rae,
            settling,
            direction,
        });
    }
    Ok(ScenarioResult {
        runs,
        report: ComparisonReport {
            scenario: scenario.name.clone(),
            variants: reports,
            failures,
        },
    })
}

// ---------------------------------------------------------------------------
// steady sweeps

/// One axis value of a steady sweep: outputs per variant, or the failure
/// text for variants that did not converge there.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: String,
    pub values: Vec<f64>,
    pub variants: Vec<String>,
    /// `outputs[variant][point]`.
    pub outputs: Vec<Vec<std::result::Result<OutputVector, String>>>,
}

/// Solves steady states along one input axis with the remaining inputs held
/// at `fixed`. The linear variant predicts via its steady gain around the
/// anchor at `fixed`.
pub fn steady_sweep(
    axis: &str,
    values: &[f64],
    fixed: &InputVector,
    variants: &[VariantSel],
    mp: &ModelParams,
    pp: &PropertyParams,
) -> Result<SweepTable> {
    let axis_idx = InputVector::NAMES
        .iter()
        .position(|n| *n == axis)
        .ok_or_else(|| AhpdError::InvalidInput(format!("unknown input channel '{axis}'")))?;
    let mut outputs = Vec::new();
    for sel in variants {
        let mut column = Vec::new();
        match sel.nonlinear() {
            Some(v) => {
                let model = Model::new(v, mp, pp);
                let mut warm: Option<crate::solver::SteadyPoint> = None;
                for &val in values {
                    let mut u = *fixed;
                    u.set(axis, val)?;
                    let res = solve_steady_state(
                        &model,
                        &u,
                        warm.as_ref().map(|sp| (&sp.x, &sp.z)),
                        &SolverOptions::default(),
                    );
                    match res {
                        Ok(sp) => {
                            column.push(Ok(sp.y));
                            warm = Some(sp);
                        }
                        Err(e) => column.push(Err(e.to_string())),
                    }
                }
            }
            None => {
                let model = Model::new(Variant::BaseA, mp, pp);
                let sp = solve_steady_state(&model, fixed, None, &SolverOptions::default())?;
                let ss = linearize(&model, &sp)?;
                let gain = ss.steady_gain()?;
                for &val in values {
                    let du = val - fixed.as_array()[axis_idx];
                    let mut y = sp.y.as_array();
                    for i in 0..y.len() {
                        y[i] += gain[(i, axis_idx)] * du;
                    }
                    column.push(Ok(OutputVector::from_array(y)));
                }
            }
        }
        outputs.push(column);
    }
    Ok(SweepTable {
        axis: axis.to_string(),
        values: values.to_vec(),
        variants: variants.iter().map(|v| v.as_str().to_string()).collect(),
        outputs,
    })
}

// ---------------------------------------------------------------------------
// CSV artifacts

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a run table: `time__s`, the 7 input channels, the 6 output
/// channels; 17 significant digits, comma separator, LF endings.
pub fn write_run_csv(run: &RunTable, path: &Path) -> Result<()> {
    let mut s = String::new();
    s.push_str("time__s");
    for name in InputVector::NAMES.iter().chain(OutputVector::NAMES.iter()) {
        s.push_str(&format!(",{}__{}", name, channel_unit(name)));
    }
    s.push('\n');
    for k in 0..run.times.len() {
        s.push_str(&fmt(run.times[k]));
        let u = run.inputs[k].as_array();
        for (j, name) in InputVector::NAMES.iter().enumerate() {
            s.push(',');
            s.push_str(&fmt(to_csv_value(name, u[j])));
        }
        let y = run.outputs[k].as_array();
        for (j, name) in OutputVector::NAMES.iter().enumerate() {
            s.push(',');
            s.push_str(&fmt(to_csv_value(name, y[j])));
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| AhpdError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))
}

/// Writes a sweep table: axis column, then six output columns per variant
/// (`<variant>/<signal>__<unit>`); failed points are written as `nan`.
pub fn write_sweep_csv(table: &SweepTable, path: &Path) -> Result<()> {
    let mut s = String::new();
    s.push_str(&format!("{}__{}", table.axis, channel_unit(&table.axis)));
    for variant in &table.variants {
        for name in OutputVector::NAMES {
            s.push_str(&format!(",{variant}/{name}__{}", channel_unit(name)));
        }
    }
    s.push('\n');
    for (k, &val) in table.values.iter().enumerate() {
        s.push_str(&fmt(to_csv_value(&table.axis, val)));
        for column in &table.outputs {
            match &column[k] {
                Ok(y) => {
                    let arr = y.as_array();
                    for (j, name) in OutputVector::NAMES.iter().enumerate() {
                        s.push(',');
                        s.push_str(&fmt(to_csv_value(name, arr[j])));
                    }
                }
                Err(_) => {
                    for _ in OutputVector::NAMES {
                        s.push_str(",nan");
                    }
                }
            }
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| AhpdError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))
}

impl ComparisonReport {
    /// Deterministic plain-text rendering.
    pub fn render(&self) -> String {
        let mut s = format!("scenario: {}\n", self.scenario);
        for v in &self.variants {
            s.push_str(&format!("variant {} (vs {}):\n", v.variant, v.reference));
            for (name, m) in &v.channels {
                s.push_str(&format!(
                    "  {name}: max_abs {:.6e}, rms {:.6e}\n",
                    m.max_abs, m.rms
                ));
            }
            if let Some(r) = v.rae_q {
                s.push_str(&format!("  rae_q: {r:.6e}\n"));
            }
            for (name, st) in &v.settling {
                s.push_str(&format!(
                    "  settling {name}: band5 {}, cross95 {}\n",
                    st.band5.map(|t| format!("{t:.1} s")).unwrap_or_else(|| "-".into()),
                    st.cross95.map(|t| format!("{t:.1} s")).unwrap_or_else(|| "-".into()),
                ));
            }
            for (name, d) in &v.direction {
                s.push_str(&format!("  direction {name}: {d:+}\n"));
            }
        }
        for (variant, err) in &self.failures {
            s.push_str(&format!("FAILED {variant}: {err}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantity_parsing_covers_the_unit_set() {
        assert_relative_eq!(parse_quantity("80 °C").unwrap().0, 353.15);
        assert_relative_eq!(parse_quantity("353.15 K").unwrap().0, 353.15);
        assert_relative_eq!(parse_quantity("1200 kg/h").unwrap().0, 1.0 / 3.0);
        assert_relative_eq!(parse_quantity("0.5 kg/s").unwrap().0, 0.5);
        assert_relative_eq!(parse_quantity("4.5 m³/h").unwrap().0, 1.25e-3);
        assert_relative_eq!(parse_quantity("450 L/h").unwrap().0, 1.25e-4);
        assert_relative_eq!(parse_quantity("17.3 kW").unwrap().0, 17_300.0);
        assert_relative_eq!(parse_quantity("250 W").unwrap().0, 250.0);
        assert_relative_eq!(parse_quantity("2 min").unwrap().0, 120.0);
        assert!(parse_quantity("3 furlongs").is_err());
        assert!(parse_quantity("80°C").is_err());
        // Dimension checking catches unit/channel mismatches.
        assert!(parse_channel("t_w_g_in", "80 kg/h").is_err());
    }

    #[test]
    fn scenario_round_trip_from_toml() {
        let text = r#"
name = "hot-water-step"
variants = ["base-a", "base-b"]
t_end = "40 min"
dt = "1 s"
output_every = 5

[inputs]
t_w_g_in = "70 °C"
vdot_rso = "450 L/h"

[[steps]]
at = "60 s"
t_w_g_in = "80 °C"
"#;
        let sc = Scenario::from_toml_str(text, Path::new("mem.toml")).unwrap();
        assert_eq!(sc.name, "hot-water-step");
        assert_eq!(sc.variants, vec![VariantSel::BaseA, VariantSel::BaseB]);
        assert_relative_eq!(sc.t_end, 2400.0);
        assert_relative_eq!(sc.u0.t_w_g_in, 343.15);
        // Unset channels fall back to the reference operating point.
        assert_relative_eq!(sc.u0.t_w_e_in, 287.15);
        assert_relative_eq!(sc.schedule.at(59.0).t_w_g_in, 343.15);
        assert_relative_eq!(sc.schedule.at(60.0).t_w_g_in, 353.15);
    }

    #[test]
    fn scenario_rejects_bad_input() {
        let bad_unit = r#"
name = "x"
variants = ["base-a"]
t_end = "10 s"
[inputs]
t_w_g_in = "80 kg/h"
"#;
        assert!(Scenario::from_toml_str(bad_unit, Path::new("m")).is_err());
        let bad_variant = r#"
name = "x"
variants = ["base-c"]
t_end = "10 s"
[inputs]
"#;
        assert!(Scenario::from_toml_str(bad_variant, Path::new("m")).is_err());
    }

    #[test]
    fn rae_q_reading_example() {
        let r = rae_q([21.0, 34.0, 14.0], [21.3, 34.9, 14.5]).unwrap();
        assert_relative_eq!(r, 0.024786, max_relative = 1e-3);
        assert_relative_eq!(rae_q([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(rae_q([1.0, 1.0, 1.0], [0.0, 1.0, 1.0]).is_err());
    }

    fn ramp_series() -> MeasurementSeries {
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let ramp: Vec<f64> = times.iter().map(|&t| 300.0 + 0.1 * t).collect();
        MeasurementSeries {
            times: times.clone(),
            channels: vec![
                ("t_w_g_in".to_string(), ramp.clone()),
                ("t_w_g_out".to_string(), ramp),
            ],
            truncated: false,
        }
    }

    #[test]
    fn dead_time_shift_moves_ramps_by_v_over_flow() {
        let series = ramp_series();
        let flows = CircuitFlows {
            g: 2.2 / 3600.0,
            ac: 1.0,
            e: 1.0,
        };
        let geometry = DeadTimeGeometry {
            g_in: 2.2e-3,
            g_out: 2.2e-3,
            ..Default::default()
        };
        // V = 2.2 L at 2.2 m³/h → 3.6 s shift.
        let shifted = dead_time_shift(&series, &flows, &geometry).unwrap();
        let inl = shifted.channel("t_w_g_in").unwrap();
        let out = shifted.channel("t_w_g_out").unwrap();
        assert_relative_eq!(inl[50], 300.0 + 0.1 * (50.0 - 3.6), max_relative = 1e-12);
        assert_relative_eq!(out[50], 300.0 + 0.1 * (50.0 + 3.6), max_relative = 1e-12);
        assert!(shifted.truncated, "edge samples run past the series span");

        // Zero volumes are the identity.
        let id = dead_time_shift(&series, &flows, &DeadTimeGeometry::default()).unwrap();
        assert_eq!(id.channel("t_w_g_in").unwrap(), series.channel("t_w_g_in").unwrap());
        assert!(!id.truncated);
    }

    #[test]
    fn settling_estimator_on_first_order_response() {
        let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.5).collect();
        let tau = 100.0;
        let y: Vec<f64> = times
            .iter()
            .map(|&t| {
                if t < 10.0 {
                    1.0
                } else {
                    1.0 + 5.0 * (1.0 - (-(t - 10.0) / tau).exp())
                }
            })
            .collect();
        let s = settling_times(&times, &y, 10.0);
        // First-order: 95% at 3τ, inside the 5% band from 3τ on.
        assert_relative_eq!(s.cross95.unwrap(), 3.0 * tau, max_relative = 0.01);
        assert_relative_eq!(s.band5.unwrap(), 3.0 * tau, max_relative = 0.02);
        assert_eq!(initial_direction(&times, &y, 10.0), 1);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(initial_direction(&times, &neg, 10.0), -1);
    }

    #[test]
    fn measurement_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meas.csv");
        std::fs::write(
            &path,
            "time__s,t_w_g_in__°C,qdot_g__kW,mdot_w_g__kg/h\n\
             0,70,17.3,1200\n\
             10,71,17.5,1200\n",
        )
        .unwrap();
        let m = read_measurements(&path).unwrap();
        assert_eq!(m.times, vec![0.0, 10.0]);
        assert_relative_eq!(m.channel("t_w_g_in").unwrap()[0], 343.15);
        assert_relative_eq!(m.channel("qdot_g").unwrap()[1], 17_500.0);
        assert_relative_eq!(m.channel("mdot_w_g").unwrap()[0], 1.0 / 3.0);
        // Missing unit suffix is a schema error naming the column.
        std::fs::write(&path, "time__s,t_w_g_in\n0,70\n").unwrap();
        let err = read_measurements(&path).unwrap_err().to_string();
        assert!(err.contains("t_w_g_in"), "{err}");
    }
}
