//! Heel-strike and toe-off detection from the inter-ankle distance, and
//! gait-cycle segmentation.
//!
//! The signal is `d = (left ankle - right ankle) . walking direction`.
//! Maxima of `d` are left heel strikes and minima are right heel strikes.
//! After a left heel strike at peak value `P`, the right toe-off is the first
//! time `d` falls below `P - beta (P - V)`, with `V` the following valley
//! (the preceding one if none follows). Left toe-offs mirror this after
//! each valley.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{KinematicSignals, Side};
use crate::model::{Landmark, LandmarkRecording, Point};

/// Number of points in a normalized gait cycle (0..=100 %).
pub const CYCLE_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EventError {
    #[error("cannot determine walking direction: spine base moved {0:.3} m (need 0.5 m)")]
    NoWalkingDirection(f64),
    #[error("no alternation of inter-ankle extrema found")]
    NoAlternation,
    #[error("need at least 2 {side} heel strikes, found {found}")]
    TooFewEvents { side: Side, found: usize },
    #[error("need at least 2 samples")]
    TooShort,
    #[error("malformed events file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterAnkleSignal {
    pub times: Vec<f64>,
    /// Metres, positive when the left ankle is ahead.
    pub values: Vec<f64>,
    /// Horizontal unit vector.
    pub direction: Point,
}

/// Minimum spine-base travel for a usable walking direction.
pub const MIN_TRAVEL: f64 = 0.5;

pub fn walking_direction(rec: &LandmarkRecording) -> Result<Point, EventError> {
    if rec.len() < 2 {
        return Err(EventError::TooShort);
    }
    let d = rec.position(Landmark::SpineBase, rec.len() - 1) - rec.position(Landmark::SpineBase, 0);
    let h = Point::new(d.x, d.y, 0.0);
    let travel = h.norm();
    if !(travel >= MIN_TRAVEL) {
        return Err(EventError::NoWalkingDirection(travel));
    }
    Ok(h / travel)
}

pub fn inter_ankle(rec: &LandmarkRecording) -> Result<InterAnkleSignal, EventError> {
    let direction = walking_direction(rec)?;
    Ok(inter_ankle_along(rec, direction))
}

pub fn inter_ankle_along(rec: &LandmarkRecording, direction: Point) -> InterAnkleSignal {
    let values = rec
        .poses
        .iter()
        .map(|p| (p[Landmark::LeftAnkle.index()] - p[Landmark::RightAnkle.index()]).dot(&direction))
        .collect();
    InterAnkleSignal { times: rec.times.clone(), values, direction }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    /// Minimum prominence as a fraction of the signal's interquartile range.
    pub min_prominence_iqr: f64,
    /// Seconds between extrema of the same kind.
    pub min_separation: f64,
    /// Level-crossing fraction for toe-off.
    pub toe_off_fraction: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig { min_prominence_iqr: 0.25, min_separation: 0.4, toe_off_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitEvents {
    pub left_heel_strikes: Vec<f64>,
    pub right_heel_strikes: Vec<f64>,
    pub left_toe_offs: Vec<f64>,
    pub right_toe_offs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HeelStrike,
    ToeOff,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::HeelStrike => "heel_strike",
            EventKind::ToeOff => "toe_off",
        }
    }
}

impl GaitEvents {
    pub fn heel_strikes(&self, side: Side) -> &[f64] {
        match side {
            Side::Right => &self.right_heel_strikes,
            _ => &self.left_heel_strikes,
        }
    }

    pub fn toe_offs(&self, side: Side) -> &[f64] {
        match side {
            Side::Right => &self.right_toe_offs,
            _ => &self.left_toe_offs,
        }
    }

    pub fn shifted(&self, dt: f64) -> GaitEvents {
        let s = |v: &[f64]| v.iter().map(|t| t + dt).collect();
        GaitEvents {
            left_heel_strikes: s(&self.left_heel_strikes),
            right_heel_strikes: s(&self.right_heel_strikes),
            left_toe_offs: s(&self.left_toe_offs),
            right_toe_offs: s(&self.right_toe_offs),
        }
    }

    /// All events sorted by time.
    pub fn ordered(&self) -> Vec<(Side, EventKind, f64)> {
        let mut all = Vec::new();
        for side in [Side::Left, Side::Right] {
            all.extend(self.heel_strikes(side).iter().map(|&t| (side, EventKind::HeelStrike, t)));
            all.extend(self.toe_offs(side).iter().map(|&t| (side, EventKind::ToeOff, t)));
        }
        all.sort_by(|a, b| a.2.total_cmp(&b.2));
        all
    }

    /// First toe-off of `side` strictly inside `(start, end)`.
    pub fn toe_off_between(&self, side: Side, start: f64, end: f64) -> Option<f64> {
        self.toe_offs(side).iter().copied().find(|&t| t > start && t < end)
    }

    /// `side,kind,t` rows in time order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["side", "kind", "t"])?;
        for (side, kind, t) in self.ordered() {
            w.write_record([side.name(), kind.name(), &t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<GaitEvents, EventError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut ev = GaitEvents::default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| EventError::Malformed(e.to_string()))?;
            let t: f64 = rec.get(2).and_then(|s| s.trim().parse().ok()).ok_or_else(|| EventError::Malformed(format!("{rec:?}")))?;
            let target = match (rec.get(0), rec.get(1)) {
                (Some("left"), Some("heel_strike")) => &mut ev.left_heel_strikes,
                (Some("right"), Some("heel_strike")) => &mut ev.right_heel_strikes,
                (Some("left"), Some("toe_off")) => &mut ev.left_toe_offs,
                (Some("right"), Some("toe_off")) => &mut ev.right_toe_offs,
                _ => return Err(EventError::Malformed(format!("{rec:?}"))),
            };
            target.push(t);
        }
        Ok(ev)
    }
}

/// Linear-interpolation percentile of sorted data.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn iqr(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    percentile_sorted(&s, 0.75) - percentile_sorted(&s, 0.25)
}

/// Interior local maxima as (index, prominence).
fn local_maxima(v: &[f64]) -> Vec<(usize, f64)> {
    let n = v.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let peak = (i + j) / 2;
                out.push((peak, prominence(v, peak)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn prominence(v: &[f64], i: usize) -> f64 {
    let h = v[i];
    let mut left_min = h;
    for &x in v[..i].iter().rev() {
        if x > h {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = h;
    for &x in &v[i + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}

/// Peaks passing the prominence threshold, thinned greedily by height.
fn pick_peaks(times: &[f64], v: &[f64], min_prominence: f64, min_separation: f64) -> Vec<usize> {
    let mut cands: Vec<(usize, f64)> = local_maxima(v).into_iter().filter(|&(_, p)| p >= min_prominence).collect();
    cands.sort_by(|a, b| v[b.0].total_cmp(&v[a.0]).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = Vec::new();
    for (i, _) in cands {
        if kept.iter().all(|&k| (times[k] - times[i]).abs() >= min_separation) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Sub-sample extremum by a least-squares parabola over +-2 samples,
/// clamped to the neighbouring samples. Returns (time, value).
fn refine(times: &[f64], v: &[f64], i: usize) -> (f64, f64) {
    let lo = i.saturating_sub(2);
    let hi = (i + 2).min(v.len() - 1);
    if hi - lo < 2 {
        return (times[i], v[i]);
    }
    // normal equations for y = a + b s + c s^2, s = t - t_i
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for k in lo..=hi {
        let s = times[k] - times[i];
        let p = [1.0, s, s * s];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += p[a] * p[b];
            }
            r[a] += p[a] * v[k];
        }
    }
    let mat = nalgebra::Matrix3::from_fn(|a, b| m[a][b]);
    let Some(coef) = mat.lu().solve(&nalgebra::Vector3::from(r)) else {
        return (times[i], v[i]);
    };
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    if c.abs() < 1e-15 {
        return (times[i], v[i]);
    }
    let left = times[i.saturating_sub(1)] - times[i];
    let right = times[(i + 1).min(v.len() - 1)] - times[i];
    let s = (-b / (2.0 * c)).clamp(left, right);
    (times[i] + s, a + b * s + c * s * s)
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    index: usize,
    time: f64,
    value: f64,
    is_max: bool,
}

/// Keep the more extreme member of each run of same-kind extrema.
fn alternate(ext: Vec<Extremum>) -> Vec<Extremum> {
    let mut alt: Vec<Extremum> = Vec::with_capacity(ext.len());
    for e in ext {
        match alt.last_mut() {
            Some(last) if last.is_max == e.is_max => {
                let more = if e.is_max { e.value > last.value } else { e.value < last.value };
                if more {
                    *last = e;
                }
            }
            _ => alt.push(e),
        }
    }
    alt
}

/// First time after sample `from` where `v` crosses `level` in the given
/// direction, by linear interpolation.
fn crossing(times: &[f64], v: &[f64], from: usize, until: usize, level: f64, falling: bool) -> Option<f64> {
    let past = |x: f64| if falling { x < level } else { x > level };
    for j in from + 1..=until.min(v.len() - 1) {
        if past(v[j]) && !past(v[j - 1]) {
            let w = (level - v[j - 1]) / (v[j] - v[j - 1]);
            return Some(times[j - 1] + w * (times[j] - times[j - 1]));
        }
    }
    None
}

pub fn detect_events(s: &InterAnkleSignal) -> Result<GaitEvents, EventError> {
    detect_events_with(&s.times, &s.values, &EventConfig::default())
}

pub fn detect_events_with(times: &[f64], v: &[f64], cfg: &EventConfig) -> Result<GaitEvents, EventError> {
    if v.len() < 3 {
        return Err(EventError::NoAlternation);
    }
    let min_prom = cfg.min_prominence_iqr * iqr(v);
    if !(min_prom > 0.0) {
        return Err(EventError::NoAlternation);
    }
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let maxima = pick_peaks(times, v, min_prom, cfg.min_separation);
    let minima = pick_peaks(times, &neg, min_prom, cfg.min_separation);
    let mut ext: Vec<Extremum> = maxima
        .iter()
        .map(|&i| (i, true))
        .chain(minima.iter().map(|&i| (i, false)))
        .map(|(index, is_max)| {
            let (time, value) = if is_max {
                refine(times, v, index)
            } else {
                let (t, val) = refine(times, &neg, index);
                (t, -val)
            };
            Extremum { index, time, value, is_max }
        })
        .collect();
    ext.sort_by_key(|e| e.index);
    let alt = alternate(ext);
    if !alt.iter().any(|e| e.is_max) || !alt.iter().any(|e| !e.is_max) {
        return Err(EventError::NoAlternation);
    }
    let mut ev = GaitEvents::default();
    let n = v.len();
    for (k, e) in alt.iter().enumerate() {
        let opposite = alt.get(k + 1).or_else(|| k.checked_sub(1).map(|j| &alt[j]));
        let until = alt.get(k + 1).map_or(n - 1, |x| x.index);
        let to = opposite.and_then(|o| {
            let level = e.value - cfg.toe_off_fraction * (e.value - o.value);
            crossing(times, v, e.index, until, level, e.is_max)
        });
        if e.is_max {
            ev.left_heel_strikes.push(e.time);
            ev.right_toe_offs.extend(to);
        } else {
            ev.right_heel_strikes.push(e.time);
            ev.left_toe_offs.extend(to);
        }
    }
    Ok(ev)
}

/// Events of a whole recording (walking direction from the spine base).
pub fn recording_events(rec: &LandmarkRecording) -> Result<GaitEvents, EventError> {
    detect_events(&inter_ankle(rec)?)
}

/// Time of the first left heel strike, used to align recordings.
pub fn first_left_heel_strike(rec: &LandmarkRecording) -> Option<f64> {
    recording_events(rec).ok().and_then(|e| e.left_heel_strikes.first().copied())
}

/// One stride of one side, every channel resampled to [`CYCLE_POINTS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitCycle {
    pub side: Side,
    pub start: f64,
    pub end: f64,
    /// Ipsilateral toe-off inside the stride, absolute time.
    pub toe_off: Option<f64>,
    /// Per channel (see `kinematics::channels`), 101 points.
    pub values: Vec<Vec<f64>>,
}

impl GaitCycle {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Toe-off as a fraction of the cycle.
    pub fn toe_off_fraction(&self) -> Option<f64> {
        self.toe_off.map(|t| (t - self.start) / self.duration())
    }
}

/// Linear interpolation of `values` (on `times`) at `t`, clamped at the ends.
pub fn sample_at(times: &[f64], values: &[f64], t: f64) -> f64 {
    let j = times.partition_point(|&x| x < t);
    if j == 0 {
        return values[0];
    }
    if j >= times.len() {
        return values[times.len() - 1];
    }
    let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
    values[j - 1] + (values[j] - values[j - 1]) * w
}

/// Resample `[start, end]` of a series onto 101 equally spaced points.
pub fn normalize_cycle(times: &[f64], values: &[f64], start: f64, end: f64) -> Vec<f64> {
    (0..CYCLE_POINTS)
        .map(|k| sample_at(times, values, start + (end - start) * k as f64 / (CYCLE_POINTS - 1) as f64))
        .collect()
}

/// One cycle per consecutive ipsilateral heel-strike pair lying inside the
/// signal span.
pub fn segment_cycles(events: &GaitEvents, signals: &KinematicSignals, side: Side) -> Result<Vec<GaitCycle>, EventError> {
    let hs = events.heel_strikes(side);
    let (Some(&first), Some(&last)) = (signals.times.first(), signals.times.last()) else {
        return Err(EventError::TooShort);
    };
    let inside: Vec<f64> = hs.iter().copied().filter(|&t| t >= first && t <= last).collect();
    if inside.len() < 2 {
        return Err(EventError::TooFewEvents { side, found: inside.len() });
    }
    Ok(inside
        .windows(2)
        .map(|w| GaitCycle {
            side,
            start: w[0],
            end: w[1],
            toe_off: events.toe_off_between(side, w[0], w[1]),
            values: signals.signals.iter().map(|s| normalize_cycle(&signals.times, &s.values, w[0], w[1])).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{JointAngleSignal, SignalName};
    use std::f64::consts::PI;

    fn sampled(rate: f64, dur: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let n = (dur * rate).round() as usize + 1;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let v = t.iter().map(|&x| f(x)).collect();
        (t, v)
    }

    #[test]
    fn sine_maxima_are_left_heel_strikes() {
        let (t, v) = sampled(30.0, 3.0, |x| 0.3 * (2.0 * PI * x).sin());
        let ev = detect_events_with(&t, &v, &EventConfig::default()).unwrap();
        assert_eq!(ev.left_heel_strikes.len(), 3);
        for (got, want) in ev.left_heel_strikes.iter().zip([0.25, 1.25, 2.25]) {
            assert!((got - want).abs() <= 1.0 / 30.0, "{got}");
        }
        assert_eq!(ev.right_heel_strikes.len(), 3);
        // level crossing 10% below the peak of a sine: asin(0.8) from the peak
        let lag = (PI / 2.0 - 0.8f64.asin()) / (2.0 * PI);
        assert!((ev.right_toe_offs[0] - (0.25 + lag)).abs() < 2e-3, "{:?}", ev.right_toe_offs);
    }

    #[test]
    fn constant_signal_has_no_alternation() {
        let (t, v) = sampled(30.0, 3.0, |_| 0.1);
        assert_eq!(detect_events_with(&t, &v, &EventConfig::default()), Err(EventError::NoAlternation));
    }

    #[test]
    fn inter_ankle_projection() {
        let mut pose = [Point::zeros(); crate::model::LANDMARK_COUNT];
        pose[Landmark::LeftAnkle.index()] = Point::new(0.3, 0.1, 0.0);
        let mut second = pose;
        second[Landmark::SpineBase.index()] = Point::new(1.0, 0.0, 1.0);
        second[Landmark::LeftAnkle.index()] = Point::zeros();
        let rec = LandmarkRecording {
            source: crate::model::Source::Camera,
            nominal_rate: 30.0,
            participant_id: "p".into(),
            trial_id: "t".into(),
            times: vec![0.0, 1.0],
            poses: vec![pose, second],
        };
        let s = inter_ankle(&rec).unwrap();
        assert!((s.values[0] - 0.3).abs() < 1e-15);
        assert_eq!(s.values[1], 0.0);
        let still = LandmarkRecording { poses: vec![pose, pose], ..rec };
        assert!(matches!(inter_ankle(&still), Err(EventError::NoWalkingDirection(_))));
    }

    #[test]
    fn each_stride_has_one_toe_off() {
        let (t, v) = sampled(30.0, 6.0, |x| 0.35 * (2.0 * PI * x / 1.1).sin() + 0.05 * (4.0 * PI * x / 1.1).cos());
        let ev = detect_events_with(&t, &v, &EventConfig::default()).unwrap();
        for side in [Side::Left, Side::Right] {
            for w in ev.heel_strikes(side).windows(2) {
                let n = ev.toe_offs(side).iter().filter(|&&x| x > w[0] && x < w[1]).count();
                assert_eq!(n, 1, "{side} {w:?}");
            }
        }
    }

    #[test]
    fn adjacent_same_kind_extrema_keep_the_larger() {
        let e = |index: usize, value: f64, is_max: bool| Extremum { index, time: index as f64, value, is_max };
        let alt = alternate(vec![e(1, 1.0, true), e(3, 1.4, true), e(5, -1.0, false), e(7, -0.5, false), e(9, 0.9, true)]);
        let idx: Vec<usize> = alt.iter().map(|x| x.index).collect();
        assert_eq!(idx, vec![3, 5, 9]);
    }

    fn signals(times: Vec<f64>, values: Vec<f64>) -> KinematicSignals {
        KinematicSignals {
            times,
            signals: vec![JointAngleSignal { name: SignalName::KneeFlexExt, side: Side::Left, values }],
            gaps: vec![],
        }
    }

    #[test]
    fn segmentation_counts_and_ramp() {
        let times: Vec<f64> = (0..=60).map(|i| i as f64 / 30.0).collect();
        let ev = GaitEvents { left_heel_strikes: vec![0.0, 1.0], ..Default::default() };
        let cycles = segment_cycles(&ev, &signals(times.clone(), times.clone()), Side::Left).unwrap();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].duration(), 1.0);
        assert_eq!(cycles[0].values[0].len(), CYCLE_POINTS);
        for (k, v) in cycles[0].values[0].iter().enumerate() {
            assert!((v - k as f64 / 100.0).abs() < 1e-12);
        }
        let ev3 = GaitEvents { left_heel_strikes: vec![0.0, 0.9, 1.8], ..Default::default() };
        let c3 = segment_cycles(&ev3, &signals(times.clone(), times.clone()), Side::Left).unwrap();
        assert_eq!(c3.len(), 2);
        assert_eq!(c3[0].end, c3[1].start);
        let one = GaitEvents { left_heel_strikes: vec![0.5], ..Default::default() };
        assert_eq!(
            segment_cycles(&one, &signals(times.clone(), times), Side::Left),
            Err(EventError::TooFewEvents { side: Side::Left, found: 1 })
        );
    }

    #[test]
    fn events_csv_round_trip() {
        let ev = GaitEvents {
            left_heel_strikes: vec![0.25, 1.25],
            right_heel_strikes: vec![0.75],
            left_toe_offs: vec![0.85],
            right_toe_offs: vec![0.35, 1.35],
        };
        let mut buf = Vec::new();
        ev.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("side,kind,t\nleft,heel_strike,0.25\n"));
        assert_eq!(GaitEvents::read_csv(buf.as_slice()).unwrap(), ev);
    }
}
