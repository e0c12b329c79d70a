//! The 27 gait descriptors: 11 spatio-temporal and 16 kinematic.
//!
//! Descriptors are computed per cycle. A cycle is one left stride
//! `[HS_L(k), HS_L(k+1)]` together with the right stride that starts inside
//! it. Recording-level values are the mean over cycles.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{segment_cycles, EventError, GaitCycle, GaitEvents, CYCLE_POINTS};
use crate::kinematics::{channel_index, KinematicSignals, Side, SignalName};
use crate::model::{Landmark, LandmarkRecording, Point};

pub const DESCRIPTOR_COUNT: usize = 27;
pub const SPATIOTEMPORAL_COUNT: usize = 11;
pub const KINEMATIC_COUNT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descriptor {
    StepWidth,
    LeftStrideLength,
    RightStrideLength,
    LeftStrideTime,
    RightStrideTime,
    RightStepTime,
    LeftStepTime,
    RightCadence,
    LeftCadence,
    StancePercentage,
    SwingPercentage,
    TrunkMaxTilt,
    TrunkMinTilt,
    PelvisMaxTilt,
    PelvisMinTilt,
    HipMaxAdduction,
    HipMinAbduction,
    PelvisMaxRotation,
    PelvisMinRotation,
    HipMaxExtensionStance,
    HipMaxFlexionSwing,
    HipMaxFlexionStance,
    KneeInitialContact,
    KneeAtToeOff,
    KneeMaxFlexionLoadResponse,
    KneeMaxFlexionSwing,
    KneeMaxExtensionBeforeHeelStrike,
}

impl Descriptor {
    pub const ALL: [Descriptor; DESCRIPTOR_COUNT] = [
        Descriptor::StepWidth,
        Descriptor::LeftStrideLength,
        Descriptor::RightStrideLength,
        Descriptor::LeftStrideTime,
        Descriptor::RightStrideTime,
        Descriptor::RightStepTime,
        Descriptor::LeftStepTime,
        Descriptor::RightCadence,
        Descriptor::LeftCadence,
        Descriptor::StancePercentage,
        Descriptor::SwingPercentage,
        Descriptor::TrunkMaxTilt,
        Descriptor::TrunkMinTilt,
        Descriptor::PelvisMaxTilt,
        Descriptor::PelvisMinTilt,
        Descriptor::HipMaxAdduction,
        Descriptor::HipMinAbduction,
        Descriptor::PelvisMaxRotation,
        Descriptor::PelvisMinRotation,
        Descriptor::HipMaxExtensionStance,
        Descriptor::HipMaxFlexionSwing,
        Descriptor::HipMaxFlexionStance,
        Descriptor::KneeInitialContact,
        Descriptor::KneeAtToeOff,
        Descriptor::KneeMaxFlexionLoadResponse,
        Descriptor::KneeMaxFlexionSwing,
        Descriptor::KneeMaxExtensionBeforeHeelStrike,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_kinematic(self) -> bool {
        self.index() >= SPATIOTEMPORAL_COUNT
    }

    pub fn kinematic() -> impl Iterator<Item = Descriptor> {
        Descriptor::ALL.into_iter().skip(SPATIOTEMPORAL_COUNT)
    }

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::StepWidth => "step_width",
            Descriptor::LeftStrideLength => "left_stride_length",
            Descriptor::RightStrideLength => "right_stride_length",
            Descriptor::LeftStrideTime => "left_stride_time",
            Descriptor::RightStrideTime => "right_stride_time",
            Descriptor::RightStepTime => "right_step_time",
            Descriptor::LeftStepTime => "left_step_time",
            Descriptor::RightCadence => "right_cadence",
            Descriptor::LeftCadence => "left_cadence",
            Descriptor::StancePercentage => "stance_percentage",
            Descriptor::SwingPercentage => "swing_percentage",
            Descriptor::TrunkMaxTilt => "trunk_max_tilt",
            Descriptor::TrunkMinTilt => "trunk_min_tilt",
            Descriptor::PelvisMaxTilt => "pelvis_max_tilt",
            Descriptor::PelvisMinTilt => "pelvis_min_tilt",
            Descriptor::HipMaxAdduction => "hip_max_adduction",
            Descriptor::HipMinAbduction => "hip_min_abduction",
            Descriptor::PelvisMaxRotation => "pelvis_max_rotation",
            Descriptor::PelvisMinRotation => "pelvis_min_rotation",
            Descriptor::HipMaxExtensionStance => "hip_max_extension_stance",
            Descriptor::HipMaxFlexionSwing => "hip_max_flexion_swing",
            Descriptor::HipMaxFlexionStance => "hip_max_flexion_stance",
            Descriptor::KneeInitialContact => "knee_initial_contact",
            Descriptor::KneeAtToeOff => "knee_at_toe_off",
            Descriptor::KneeMaxFlexionLoadResponse => "knee_max_flexion_load_response",
            Descriptor::KneeMaxFlexionSwing => "knee_max_flexion_swing",
            Descriptor::KneeMaxExtensionBeforeHeelStrike => "knee_max_extension_before_heel_strike",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Descriptor::StepWidth => "step width",
            Descriptor::LeftStrideLength => "left stride length",
            Descriptor::RightStrideLength => "right stride length",
            Descriptor::LeftStrideTime => "left stride time",
            Descriptor::RightStrideTime => "right stride time",
            Descriptor::RightStepTime => "right step time",
            Descriptor::LeftStepTime => "left step time",
            Descriptor::RightCadence => "right cadence",
            Descriptor::LeftCadence => "left cadence",
            Descriptor::StancePercentage => "percentage of foot stance",
            Descriptor::SwingPercentage => "percentage of foot swing",
            Descriptor::TrunkMaxTilt => "trunk max. tilt",
            Descriptor::TrunkMinTilt => "trunk min. tilt",
            Descriptor::PelvisMaxTilt => "pelvis max. tilt",
            Descriptor::PelvisMinTilt => "pelvis min. tilt",
            Descriptor::HipMaxAdduction => "hip max. adduction",
            Descriptor::HipMinAbduction => "hip min. abduction",
            Descriptor::PelvisMaxRotation => "pelvis max. rotation",
            Descriptor::PelvisMinRotation => "pelvis min. rotation",
            Descriptor::HipMaxExtensionStance => "hip max. extension during stance",
            Descriptor::HipMaxFlexionSwing => "hip max. flexion during swing",
            Descriptor::HipMaxFlexionStance => "hip max. flexion during stance",
            Descriptor::KneeInitialContact => "knee initial contact position",
            Descriptor::KneeAtToeOff => "knee position at toe-off",
            Descriptor::KneeMaxFlexionLoadResponse => "knee max. flexion in load response",
            Descriptor::KneeMaxFlexionSwing => "knee max. flexion during swing",
            Descriptor::KneeMaxExtensionBeforeHeelStrike => "knee max. extension before heel strike",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Descriptor::StepWidth | Descriptor::LeftStrideLength | Descriptor::RightStrideLength => "m",
            Descriptor::LeftStrideTime
            | Descriptor::RightStrideTime
            | Descriptor::RightStepTime
            | Descriptor::LeftStepTime => "s",
            Descriptor::RightCadence | Descriptor::LeftCadence => "steps/min",
            Descriptor::StancePercentage | Descriptor::SwingPercentage => "%",
            _ => "deg",
        }
    }

    pub fn from_name(s: &str) -> Option<Descriptor> {
        Descriptor::ALL.into_iter().find(|d| d.name() == s)
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values indexed by [`Descriptor::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector(pub [f64; DESCRIPTOR_COUNT]);

impl DescriptorVector {
    pub fn get(&self, d: Descriptor) -> f64 {
        self.0[d.index()]
    }

    pub fn set(&mut self, d: Descriptor, v: f64) {
        self.0[d.index()] = v;
    }

    /// Element-wise mean; `None` for an empty slice.
    pub fn mean(vs: &[DescriptorVector]) -> Option<DescriptorVector> {
        if vs.is_empty() {
            return None;
        }
        let mut out = [0.0; DESCRIPTOR_COUNT];
        for v in vs {
            for (o, x) in out.iter_mut().zip(&v.0) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= vs.len() as f64;
        }
        Some(DescriptorVector(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    /// End of the load-response window as a cycle fraction.
    pub load_response_end: f64,
    /// Start of the pre-heel-strike window as a cycle fraction.
    pub pre_strike_start: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig { load_response_end: 0.10, pre_strike_start: 0.90 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DescriptorError {
    #[error(transparent)]
    Events(#[from] EventError),
    #[error("no complete left/right cycle pair")]
    NoCycle,
    #[error("no toe-off inside the cycle starting at t = {0}")]
    MissingToeOff(f64),
    #[error("signal {0} missing")]
    MissingSignal(String),
    #[error("malformed descriptor file: {0}")]
    Malformed(String),
}

/// Heel-strike times of one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclePair {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

/// Left strides paired with the right stride that starts inside them.
pub fn pair_cycles(events: &GaitEvents) -> Vec<CyclePair> {
    let l = &events.left_heel_strikes;
    let r = &events.right_heel_strikes;
    let mut out = Vec::new();
    for w in l.windows(2) {
        if let Some(j) = r.iter().position(|&t| t >= w[0] && t < w[1]) {
            if j + 1 < r.len() {
                out.push(CyclePair { left: (w[0], w[1]), right: (r[j], r[j + 1]) });
            }
        }
    }
    out
}

fn ankle_at(rec: &LandmarkRecording, lm: Landmark, t: f64) -> Point {
    let i = rec.times.partition_point(|&x| x < t);
    if i == 0 {
        return rec.poses[0][lm.index()];
    }
    if i >= rec.len() {
        return rec.poses[rec.len() - 1][lm.index()];
    }
    let w = (t - rec.times[i - 1]) / (rec.times[i] - rec.times[i - 1]);
    let (a, b) = (rec.poses[i - 1][lm.index()], rec.poses[i][lm.index()]);
    a + (b - a) * w
}

fn stance_percent(events: &GaitEvents, side: Side, stride: (f64, f64)) -> Option<f64> {
    events.toe_off_between(side, stride.0, stride.1).map(|to| 100.0 * (to - stride.0) / (stride.1 - stride.0))
}

/// The 11 spatio-temporal values of one cycle, in descriptor order.
pub fn spatiotemporal_cycle(
    pair: &CyclePair,
    events: &GaitEvents,
    rec: &LandmarkRecording,
    direction: &Point,
) -> Result<[f64; SPATIOTEMPORAL_COUNT], DescriptorError> {
    let lateral = Point::new(-direction.y, direction.x, 0.0);
    let width_at = |t: f64| (ankle_at(rec, Landmark::LeftAnkle, t) - ankle_at(rec, Landmark::RightAnkle, t)).dot(&lateral).abs();
    let step_width = (width_at(pair.left.0) + width_at(pair.right.0)) / 2.0;
    let stride_len = |lm: Landmark, (a, b): (f64, f64)| (ankle_at(rec, lm, b) - ankle_at(rec, lm, a)).dot(direction);
    let right_step = pair.right.0 - pair.left.0;
    let left_step = pair.left.1 - pair.right.0;
    let stance = match (stance_percent(events, Side::Left, pair.left), stance_percent(events, Side::Right, pair.right)) {
        (Some(a), Some(b)) => (a + b) / 2.0,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(DescriptorError::MissingToeOff(pair.left.0)),
    };
    Ok([
        step_width,
        stride_len(Landmark::LeftAnkle, pair.left),
        stride_len(Landmark::RightAnkle, pair.right),
        pair.left.1 - pair.left.0,
        pair.right.1 - pair.right.0,
        right_step,
        left_step,
        60.0 / right_step,
        60.0 / left_step,
        stance,
        100.0 - stance,
    ])
}

/// Phase-window scans over one normalized cycle.
struct Windows<'a> {
    values: &'a [f64],
    toe_off: f64,
}

impl Windows<'_> {
    fn u(k: usize) -> f64 {
        k as f64 / (CYCLE_POINTS - 1) as f64
    }

    fn at(&self, u: f64) -> f64 {
        let pos = u * (CYCLE_POINTS - 1) as f64;
        let lo = (pos.floor() as usize).min(CYCLE_POINTS - 2);
        let w = pos - lo as f64;
        self.values[lo] + (self.values[lo + 1] - self.values[lo]) * w
    }

    fn fold(&self, lo: f64, hi: f64, include_hi: bool, f: fn(f64, f64) -> f64, extra: Option<f64>) -> f64 {
        let mut acc = extra;
        for k in 0..CYCLE_POINTS {
            let u = Self::u(k);
            if u + 1e-12 >= lo && (u < hi - 1e-12 || (include_hi && u <= hi + 1e-12)) {
                acc = Some(acc.map_or(self.values[k], |a| f(a, self.values[k])));
            }
        }
        acc.unwrap_or_else(|| self.at(lo))
    }

    fn stance(&self, f: fn(f64, f64) -> f64) -> f64 {
        self.fold(0.0, self.toe_off, false, f, None)
    }

    fn swing(&self, f: fn(f64, f64) -> f64) -> f64 {
        self.fold(self.toe_off, 1.0, true, f, Some(self.at(self.toe_off)))
    }

    fn range(&self, lo: f64, hi: f64, f: fn(f64, f64) -> f64) -> f64 {
        self.fold(lo, hi, true, f, None)
    }

    fn all(&self, f: fn(f64, f64) -> f64) -> f64 {
        self.range(0.0, 1.0, f)
    }
}

fn channel(cycle: &GaitCycle, name: SignalName, side: Side) -> Result<&[f64], DescriptorError> {
    channel_index(name, side)
        .and_then(|k| cycle.values.get(k))
        .map(|v| v.as_slice())
        .ok_or_else(|| DescriptorError::MissingSignal(format!("{name}/{side}")))
}

/// The 16 kinematic values of one cycle (left and right strides).
pub fn kinematic_cycle(
    left: &GaitCycle,
    right: &GaitCycle,
    cfg: &DescriptorConfig,
) -> Result<[f64; KINEMATIC_COUNT], DescriptorError> {
    let central = |name| channel(left, name, Side::Central);
    let trunk = Windows { values: central(SignalName::TrunkTilt)?, toe_off: 0.0 };
    let ptilt = Windows { values: central(SignalName::PelvisTilt)?, toe_off: 0.0 };
    let prot = Windows { values: central(SignalName::PelvisRotation)?, toe_off: 0.0 };
    let mut sided = [0.0; 11];
    for cycle in [left, right] {
        let to = cycle.toe_off_fraction().ok_or(DescriptorError::MissingToeOff(cycle.start))?;
        let add = Windows { values: channel(cycle, SignalName::HipAddAbd, cycle.side)?, toe_off: to };
        let hip = Windows { values: channel(cycle, SignalName::HipFlexExt, cycle.side)?, toe_off: to };
        let knee = Windows { values: channel(cycle, SignalName::KneeFlexExt, cycle.side)?, toe_off: to };
        let vals = [
            add.all(f64::max),
            add.all(f64::min),
            hip.stance(f64::min),
            hip.swing(f64::max),
            hip.stance(f64::max),
            knee.values[0],
            knee.at(to),
            knee.range(0.0, cfg.load_response_end, f64::max),
            knee.swing(f64::max),
            knee.range(cfg.pre_strike_start, 1.0, f64::min),
            0.0,
        ];
        for (s, v) in sided.iter_mut().zip(vals) {
            *s += v / 2.0;
        }
    }
    Ok([
        trunk.all(f64::max),
        trunk.all(f64::min),
        ptilt.all(f64::max),
        ptilt.all(f64::min),
        sided[0],
        sided[1],
        prot.all(f64::max),
        prot.all(f64::min),
        sided[2],
        sided[3],
        sided[4],
        sided[5],
        sided[6],
        sided[7],
        sided[8],
        sided[9],
    ])
}

/// Descriptors of one cycle with its left heel-strike time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDescriptors {
    pub start: f64,
    pub values: DescriptorVector,
}

/// Per-cycle descriptors of a recording. `direction` is the walking direction.
pub fn cycle_descriptors(
    rec: &LandmarkRecording,
    signals: &KinematicSignals,
    events: &GaitEvents,
    direction: &Point,
    cfg: &DescriptorConfig,
) -> Result<Vec<CycleDescriptors>, DescriptorError> {
    let left = segment_cycles(events, signals, Side::Left)?;
    let right = segment_cycles(events, signals, Side::Right)?;
    let mut out = Vec::new();
    for pair in pair_cycles(events) {
        let Some(lc) = left.iter().find(|c| c.start == pair.left.0) else { continue };
        let Some(rc) = right.iter().find(|c| c.start == pair.right.0) else { continue };
        if lc.toe_off.is_none() || rc.toe_off.is_none() {
            continue;
        }
        let st = spatiotemporal_cycle(&pair, events, rec, direction)?;
        let kin = kinematic_cycle(lc, rc, cfg)?;
        let mut v = [0.0; DESCRIPTOR_COUNT];
        v[..SPATIOTEMPORAL_COUNT].copy_from_slice(&st);
        v[SPATIOTEMPORAL_COUNT..].copy_from_slice(&kin);
        out.push(CycleDescriptors { start: pair.left.0, values: DescriptorVector(v) });
    }
    if out.is_empty() {
        return Err(DescriptorError::NoCycle);
    }
    Ok(out)
}

/// Mean over cycles.
pub fn recording_descriptors(cycles: &[CycleDescriptors]) -> Option<DescriptorVector> {
    DescriptorVector::mean(&cycles.iter().map(|c| c.values).collect::<Vec<_>>())
}

/// Recording-level spatio-temporal descriptors (mean over cycles).
pub fn spatiotemporal(
    events: &GaitEvents,
    rec: &LandmarkRecording,
    direction: &Point,
) -> Result<[f64; SPATIOTEMPORAL_COUNT], DescriptorError> {
    let pairs = pair_cycles(events);
    if pairs.is_empty() {
        return Err(DescriptorError::NoCycle);
    }
    let mut acc = [0.0; SPATIOTEMPORAL_COUNT];
    for p in &pairs {
        let v = spatiotemporal_cycle(p, events, rec, direction)?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x / pairs.len() as f64;
        }
    }
    Ok(acc)
}

/// One row of the descriptor CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRow {
    pub participant_id: String,
    pub trial_id: String,
    /// Left heel strike opening the cycle; `None` for recording means.
    pub cycle_start: Option<f64>,
    pub values: DescriptorVector,
}

pub fn write_descriptor_csv<W: Write>(out: W, rows: &[DescriptorRow], comments: &[String]) -> Result<(), std::io::Error> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id".to_string(), "trial_id".into(), "cycle_start".into()];
    header.extend(Descriptor::ALL.iter().map(|d| d.name().to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.participant_id.clone(), r.trial_id.clone(), r.cycle_start.map_or(String::new(), |t| t.to_string())];
        rec.extend(r.values.0.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_descriptor_csv<R: Read>(input: R) -> Result<Vec<DescriptorRow>, DescriptorError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rdr.headers().map_err(|e| DescriptorError::Malformed(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| DescriptorError::Malformed(format!("missing column {name}")));
    let (pc, tc, cc) = (col("participant_id")?, col("trial_id")?, col("cycle_start")?);
    let dcols = Descriptor::ALL.iter().map(|d| col(d.name())).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DescriptorError::Malformed(e.to_string()))?;
        let num = |c: usize| {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| DescriptorError::Malformed(format!("row {}, column {}", i + 1, c + 1)))
        };
        let mut v = [0.0; DESCRIPTOR_COUNT];
        for (slot, &c) in v.iter_mut().zip(&dcols) {
            *slot = num(c)?;
        }
        let cs = rec.get(cc).unwrap_or("").trim();
        rows.push(DescriptorRow {
            participant_id: rec.get(pc).unwrap_or("").to_string(),
            trial_id: rec.get(tc).unwrap_or("").to_string(),
            cycle_start: if cs.is_empty() { None } else { Some(num(cc)?) },
            values: DescriptorVector(v),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::channels;
    use std::f64::consts::PI;

    fn cycle(side: Side, toe_off: f64, f: impl Fn(SignalName, f64) -> f64) -> GaitCycle {
        GaitCycle {
            side,
            start: 0.0,
            end: 1.0,
            toe_off: Some(toe_off),
            values: channels()
                .iter()
                .map(|&(name, _)| (0..CYCLE_POINTS).map(|k| f(name, k as f64 / 100.0)).collect())
                .collect(),
        }
    }

    #[test]
    fn table_order_and_names() {
        assert_eq!(Descriptor::ALL.len(), 27);
        assert_eq!(Descriptor::kinematic().count(), 16);
        for (i, d) in Descriptor::ALL.iter().enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(Descriptor::from_name(d.name()), Some(*d));
        }
        assert_eq!(Descriptor::TrunkMaxTilt.index(), 11);
    }

    #[test]
    fn spatiotemporal_example() {
        let ev = GaitEvents {
            left_heel_strikes: vec![0.0, 1.0],
            right_heel_strikes: vec![0.5, 1.5],
            left_toe_offs: vec![0.6],
            right_toe_offs: vec![1.1],
        };
        let pairs = pair_cycles(&ev);
        assert_eq!(pairs.len(), 1);
        let times: Vec<f64> = (0..=45).map(|i| i as f64 / 30.0).collect();
        let poses = times
            .iter()
            .map(|&t| {
                let mut p = [Point::zeros(); crate::model::LANDMARK_COUNT];
                p[Landmark::LeftAnkle.index()] = Point::new(1.2 * t, 0.1, 0.0);
                p[Landmark::RightAnkle.index()] = Point::new(1.2 * t - 0.3, -0.05, 0.0);
                p
            })
            .collect();
        let rec = LandmarkRecording {
            source: crate::model::Source::Camera,
            nominal_rate: 30.0,
            participant_id: "p".into(),
            trial_id: "t".into(),
            times,
            poses,
        };
        let st = spatiotemporal_cycle(&pairs[0], &ev, &rec, &Point::new(1.0, 0.0, 0.0)).unwrap();
        assert!((st[0] - 0.15).abs() < 1e-12);
        assert!((st[1] - 1.2).abs() < 1e-12);
        assert_eq!(st[3], 1.0);
        assert_eq!(st[5], 0.5);
        assert_eq!(st[7], 120.0);
        assert!((st[9] - 60.0).abs() < 1e-9);
        assert_eq!(st[9] + st[10], 100.0);
    }

    #[test]
    fn swing_maximum_of_half_sine() {
        // max of 60 sin(pi u) on [0.6, 1] is at the toe-off instant
        let c = cycle(Side::Left, 0.6, |n, u| if n == SignalName::KneeFlexExt { 60.0 * (PI * u).sin() } else { 0.0 });
        let r = cycle(Side::Right, 0.6, |n, u| if n == SignalName::KneeFlexExt { 60.0 * (PI * u).sin() } else { 0.0 });
        let k = kinematic_cycle(&c, &r, &DescriptorConfig::default()).unwrap();
        let swing = k[Descriptor::KneeMaxFlexionSwing.index() - SPATIOTEMPORAL_COUNT];
        assert!((swing - 60.0 * (0.6 * PI).sin()).abs() < 1e-9, "{swing}");
        assert_eq!(k[Descriptor::KneeInitialContact.index() - SPATIOTEMPORAL_COUNT], 0.0);
    }

    #[test]
    fn constant_pelvis_tilt() {
        let c = cycle(Side::Left, 0.6, |n, _| if n == SignalName::PelvisTilt { 5.0 } else { 1.0 });
        let r = cycle(Side::Right, 0.6, |_, _| 1.0);
        let k = kinematic_cycle(&c, &r, &DescriptorConfig::default()).unwrap();
        assert_eq!(k[Descriptor::PelvisMaxTilt.index() - SPATIOTEMPORAL_COUNT], 5.0);
        assert_eq!(k[Descriptor::PelvisMinTilt.index() - SPATIOTEMPORAL_COUNT], 5.0);
    }

    #[test]
    fn window_extrema_match_brute_force() {
        let f = |n: SignalName, u: f64| match n {
            SignalName::HipFlexExt => 10.0 + 20.0 * (2.0 * PI * (u - 0.1)).cos(),
            SignalName::KneeFlexExt => 30.0 - 25.0 * (2.0 * PI * u).cos() + 3.0 * (6.0 * PI * u).sin(),
            _ => 0.0,
        };
        let c = cycle(Side::Left, 0.62, f);
        let k = kinematic_cycle(&c, &c.clone(), &DescriptorConfig::default()).unwrap();
        let knee = &c.values[channel_index(SignalName::KneeFlexExt, Side::Left).unwrap()];
        let hip = &c.values[channel_index(SignalName::HipFlexExt, Side::Left).unwrap()];
        let stance_max = hip[..=61].iter().cloned().fold(f64::MIN, f64::max);
        let stance_min = hip[..=61].iter().cloned().fold(f64::MAX, f64::min);
        let lr = knee[..=10].iter().cloned().fold(f64::MIN, f64::max);
        let pre = knee[90..].iter().cloned().fold(f64::MAX, f64::min);
        let idx = |d: Descriptor| d.index() - SPATIOTEMPORAL_COUNT;
        assert_eq!(k[idx(Descriptor::HipMaxFlexionStance)], stance_max);
        assert_eq!(k[idx(Descriptor::HipMaxExtensionStance)], stance_min);
        assert_eq!(k[idx(Descriptor::KneeMaxFlexionLoadResponse)], lr);
        assert_eq!(k[idx(Descriptor::KneeMaxExtensionBeforeHeelStrike)], pre);
        assert!((k[idx(Descriptor::KneeAtToeOff)] - knee[62]).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let mut v = DescriptorVector([0.0; DESCRIPTOR_COUNT]);
        for d in Descriptor::ALL {
            v.set(d, d.index() as f64 * 0.37);
        }
        let rows = vec![
            DescriptorRow { participant_id: "P1".into(), trial_id: "T1".into(), cycle_start: Some(0.5), values: v },
            DescriptorRow { participant_id: "P1".into(), trial_id: "T2".into(), cycle_start: None, values: v },
        ];
        let mut buf = Vec::new();
        write_descriptor_csv(&mut buf, &rows, &["config_hash=x".into()]).unwrap();
        assert_eq!(read_descriptor_csv(buf.as_slice()).unwrap(), rows);
    }
}
