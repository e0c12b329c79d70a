//! Synthetic walking trials with known joint angles and gait events.
//!
//! Joint-angle curves are two-harmonic functions of a warped gait phase.
//! Landmarks are placed by composing the same segment frames the
//! kinematics module measures, so extracting angles from a generated
//! recording returns the input curves. A camera-like error model then
//! corrupts the landmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::GaitEvents;
use crate::exec::Execution;
use crate::kinematics::{channels, rot_x, rot_y, rot_z, AngleSample, KinematicSignals, Side, SignalName};
use crate::model::{Landmark, LandmarkRecording, Point, Pose, Source, LANDMARK_COUNT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid gait parameters: {0}")]
    InvalidParams(String),
    #[error("invalid error model: {0}")]
    InvalidErrorModel(String),
}

/// `offset + a1 cos(2 pi (psi - p1)) + a2 cos(4 pi (psi - p2))`, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonics {
    pub offset: f64,
    pub a1: f64,
    pub p1: f64,
    pub a2: f64,
    pub p2: f64,
}

impl Harmonics {
    pub const fn new(offset: f64, a1: f64, p1: f64, a2: f64, p2: f64) -> Self {
        Harmonics { offset, a1, p1, a2, p2 }
    }

    pub const fn constant(v: f64) -> Self {
        Harmonics::new(v, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn eval(&self, psi: f64) -> f64 {
        self.offset + self.a1 * (2.0 * PI * (psi - self.p1)).cos() + self.a2 * (4.0 * PI * (psi - self.p2)).cos()
    }

    /// Minimum over one period, on a fine grid.
    fn min(&self) -> f64 {
        (0..2000).map(|i| self.eval(i as f64 / 2000.0)).fold(f64::INFINITY, f64::min)
    }
}

/// Segment lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segments {
    pub thigh: f64,
    pub shank: f64,
    /// Hip centre to spine middle.
    pub lumbar: f64,
    /// Spine middle to mid-shoulder.
    pub trunk: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub pelvis_width: f64,
    pub shoulder_width: f64,
}

impl Default for Segments {
    fn default() -> Self {
        Segments {
            thigh: 0.45,
            shank: 0.42,
            lumbar: 0.25,
            trunk: 0.28,
            upper_arm: 0.30,
            forearm: 0.27,
            pelvis_width: 0.20,
            shoulder_width: 0.36,
        }
    }
}

/// Default curves in [`SignalName::ALL`] order, for the left side.
/// Arms swing with the opposite leg.
pub const DEFAULT_CURVES: [Harmonics; 10] = [
    Harmonics::new(25.0, 8.0, 0.05, 0.0, 0.0),    // elbow flex/ext
    Harmonics::new(27.0, 25.0, 0.72, 7.0, 0.20),  // knee flex/ext
    Harmonics::new(10.0, 20.0, 0.0, 2.0, 0.10),   // hip flex/ext
    Harmonics::new(5.0, 15.0, 0.0, 0.0, 0.0),     // shoulder flex/ext
    Harmonics::new(4.0, 0.0, 0.0, 1.5, 0.15),     // trunk tilt
    Harmonics::new(8.0, 0.0, 0.0, 2.0, 0.10),     // pelvis tilt
    Harmonics::new(2.0, 5.0, 0.15, 0.0, 0.0),     // hip add/abd
    Harmonics::new(-8.0, 2.0, 0.10, 0.0, 0.0),    // shoulder add/abd
    Harmonics::new(0.0, 4.0, 0.0, 0.0, 0.0),      // trunk rotation
    Harmonics::new(0.0, -5.0, 0.0, 0.0, 0.0),     // pelvis rotation
];

pub const MIN_KNEE_FLEXION: f64 = 2.0;
pub const MIN_ELBOW_FLEXION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Seconds per stride.
    pub stride_period: f64,
    /// Stance share of a stride, as measured by the event detector.
    pub stance_fraction: f64,
    /// m/s along +X.
    pub walking_speed: f64,
    pub curves: [Harmonics; 10],
    /// Rotations that do not appear among the measured signals.
    pub hip_rotation: Harmonics,
    pub shoulder_rotation: Harmonics,
    pub pelvis_obliquity: Harmonics,
    pub trunk_obliquity: Harmonics,
    pub segments: Segments,
    /// Lateral pelvis sway amplitude, m.
    pub lateral_sway: f64,
    /// Vertical pelvis oscillation amplitude, m.
    pub vertical_bounce: f64,
    /// Gait phase at world time 0 is `-phase_offset`.
    pub phase_offset: f64,
    /// Recording length, s.
    pub duration: f64,
    /// World time of the first sample.
    pub start_time: f64,
    pub sample_rate: f64,
    /// Added to world time to give recorded timestamps.
    pub clock_offset: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            stride_period: 1.1,
            stance_fraction: 0.6,
            walking_speed: 1.2,
            curves: DEFAULT_CURVES,
            hip_rotation: Harmonics::new(0.0, 3.0, 0.3, 0.0, 0.0),
            shoulder_rotation: Harmonics::constant(5.0),
            pelvis_obliquity: Harmonics::new(0.0, 3.0, 0.15, 0.0, 0.0),
            trunk_obliquity: Harmonics::new(0.0, 1.5, 0.2, 0.0, 0.0),
            segments: Segments::default(),
            lateral_sway: 0.02,
            vertical_bounce: 0.015,
            phase_offset: 0.25,
            duration: 8.0,
            start_time: 0.0,
            sample_rate: 120.0,
            clock_offset: 0.0,
        }
    }
}

fn signal_slot(name: SignalName) -> usize {
    SignalName::ALL.iter().position(|&n| n == name).unwrap()
}

impl GaitParams {
    pub fn curve(&self, name: SignalName) -> &Harmonics {
        &self.curves[signal_slot(name)]
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        let s = &self.segments;
        let lengths = [s.thigh, s.shank, s.lumbar, s.trunk, s.upper_arm, s.forearm, s.pelvis_width, s.shoulder_width];
        if lengths.iter().any(|&l| !(l > 0.0)) {
            return bad("segment lengths must be positive".into());
        }
        if !(self.stride_period > 0.0) || !(self.sample_rate > 0.0) || !(self.walking_speed > 0.0) {
            return bad("stride period, speed and sample rate must be positive".into());
        }
        if !(self.stance_fraction > 0.0 && self.stance_fraction < 1.0) {
            return bad(format!("stance fraction {} outside (0, 1)", self.stance_fraction));
        }
        if self.duration < 3.0 * self.stride_period {
            return bad(format!("duration {} s is shorter than three strides", self.duration));
        }
        let knee = self.curve(SignalName::KneeFlexExt).min();
        if knee < MIN_KNEE_FLEXION {
            return bad(format!("knee flexion reaches {knee:.2} deg, minimum is {MIN_KNEE_FLEXION}"));
        }
        let elbow = self.curve(SignalName::ElbowFlexExt).min();
        if elbow < MIN_ELBOW_FLEXION {
            return bad(format!("elbow flexion reaches {elbow:.2} deg, minimum is {MIN_ELBOW_FLEXION}"));
        }
        Ok(())
    }

    /// A plausible random walker around the defaults.
    pub fn random(seed: u64) -> GaitParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut p = GaitParams {
                stride_period: rng.random_range(0.95..1.2),
                stance_fraction: rng.random_range(0.58..0.63),
                walking_speed: rng.random_range(1.0..1.4),
                ..GaitParams::default()
            };
            for c in p.curves.iter_mut() {
                c.offset += rng.random_range(-2.0..2.0);
                c.a1 *= rng.random_range(0.85..1.15);
                c.a2 *= rng.random_range(0.85..1.15);
                c.p1 += rng.random_range(-0.02..0.02);
                c.p2 += rng.random_range(-0.02..0.02);
            }
            let scale = rng.random_range(0.92..1.08);
            let s = &mut p.segments;
            for l in [&mut s.thigh, &mut s.shank, &mut s.lumbar, &mut s.trunk, &mut s.upper_arm, &mut s.forearm] {
                *l *= scale * rng.random_range(0.97..1.03);
            }
            s.pelvis_width *= rng.random_range(0.9..1.1);
            s.shoulder_width *= rng.random_range(0.9..1.1);
            if p.validate().is_ok() && calibrate(&p).is_ok() {
                return p;
            }
        }
    }

    /// Another trial of the same walker: small changes in pace.
    pub fn trial_variant(&self, seed: u64) -> GaitParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaitParams {
            stride_period: self.stride_period * rng.random_range(0.97..1.03),
            walking_speed: self.walking_speed * rng.random_range(0.95..1.05),
            phase_offset: rng.random_range(0.15..0.4),
            ..self.clone()
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate + 1e-9).floor() as usize + 1
    }
}

/// Continuous-time walker with a calibrated phase warp.
struct Walker<'a> {
    p: &'a GaitParams,
    alpha: f64,
    /// Phase left fixed by the warp (the unwarped left heel strike).
    center: f64,
}

struct Angles {
    values: [f64; crate::kinematics::SIGNAL_COUNT],
}

impl Walker<'_> {
    fn psi(&self, phi: f64) -> f64 {
        phi - self.alpha * (4.0 * PI * (phi - self.center)).sin() / (4.0 * PI)
    }

    fn phase(&self, t: f64) -> f64 {
        t / self.p.stride_period - self.p.phase_offset
    }

    /// Phase driving a channel: legs and central signals follow their own
    /// side, arms the opposite leg.
    fn channel_phase(name: SignalName, side: Side, phi_left: f64) -> f64 {
        let arm = matches!(name, SignalName::ElbowFlexExt | SignalName::ShoulderFlexExt | SignalName::ShoulderAddAbd);
        let right = side == Side::Right;
        if arm != right {
            phi_left + 0.5
        } else {
            phi_left
        }
    }

    fn angles(&self, t: f64) -> Angles {
        let phi = self.phase(t);
        let mut values = [0.0; crate::kinematics::SIGNAL_COUNT];
        for (k, (name, side)) in channels().into_iter().enumerate() {
            values[k] = self.p.curve(name).eval(self.psi(Self::channel_phase(name, side, phi)));
        }
        Angles { values }
    }

    fn pose(&self, t: f64) -> Pose {
        let p = self.p;
        let s = &p.segments;
        let phi = self.phase(t);
        let a = self.angles(t);
        let get = |name: SignalName, side: Side| a.values[crate::kinematics::channel_index(name, side).unwrap()];
        let psi_l = self.psi(phi);
        let psi_r = self.psi(phi + 0.5);
        let height = s.thigh + s.shank + 0.07;
        let centre = Point::new(
            p.walking_speed * t,
            p.lateral_sway * (2.0 * PI * phi).sin(),
            height + p.vertical_bounce * (4.0 * PI * phi).cos(),
        );
        let r2 = rot_y(get(SignalName::PelvisTilt, Side::Central))
            * rot_x(p.pelvis_obliquity.eval(psi_l))
            * rot_z(get(SignalName::PelvisRotation, Side::Central));
        let r3 = rot_y(get(SignalName::TrunkTilt, Side::Central))
            * rot_x(p.trunk_obliquity.eval(psi_l))
            * rot_z(get(SignalName::TrunkRotation, Side::Central));
        let (ex, ey, ez) = (Point::x(), Point::y(), Point::z());
        let mut pose = [Point::zeros(); LANDMARK_COUNT];
        let mut put = |l: Landmark, v: Point| pose[l.index()] = v;

        put(Landmark::SpineBase, centre + r2 * Point::new(-0.03, 0.0, 0.05));
        let spine_mid = centre + s.lumbar * (r2 * ez);
        put(Landmark::SpineMiddle, spine_mid);
        let mid_sh = spine_mid + s.trunk * (r3 * ez);
        put(Landmark::SpineShoulder, mid_sh);

        for side in [Side::Left, Side::Right] {
            let (sign, psi_leg, psi_arm) = if side == Side::Left { (1.0, psi_l, psi_r) } else { (-1.0, psi_r, psi_l) };
            let (hip_l, knee_l, ankle_l, sh_l, el_l, hand_l) = match side {
                Side::Left => (Landmark::LeftHip, Landmark::LeftKnee, Landmark::LeftAnkle, Landmark::LeftShoulder, Landmark::LeftElbow, Landmark::LeftHand),
                _ => (Landmark::RightHip, Landmark::RightKnee, Landmark::RightAnkle, Landmark::RightShoulder, Landmark::RightElbow, Landmark::RightHand),
            };
            // adduction is -x on the left and +x on the right
            let hip = centre + sign * s.pelvis_width / 2.0 * (r2 * ey);
            let r1 = rot_y(-get(SignalName::HipFlexExt, side))
                * rot_x(-sign * get(SignalName::HipAddAbd, side))
                * rot_z(sign * p.hip_rotation.eval(psi_leg))
                * r2;
            let knee = hip - s.thigh * (r1 * ez);
            let k = get(SignalName::KneeFlexExt, side).to_radians();
            let ankle = knee + s.shank * (r1 * Point::new(-k.sin(), 0.0, -k.cos()));
            put(hip_l, hip);
            put(knee_l, knee);
            put(ankle_l, ankle);

            let shoulder = mid_sh + sign * s.shoulder_width / 2.0 * (r3 * ey);
            let r4 = rot_y(-get(SignalName::ShoulderFlexExt, side))
                * rot_x(-sign * get(SignalName::ShoulderAddAbd, side))
                * rot_z(sign * p.shoulder_rotation.eval(psi_arm))
                * r3;
            let elbow = shoulder - s.upper_arm * (r4 * ez);
            let e = get(SignalName::ElbowFlexExt, side).to_radians();
            let hand = elbow + s.forearm * (r4 * Point::new(e.sin(), 0.0, -e.cos()));
            put(sh_l, shoulder);
            put(el_l, elbow);
            put(hand_l, hand);
            let _ = ex;
        }
        pose
    }

    /// Inter-ankle distance along +X at left-leg phase `phi`.
    fn inter_ankle(&self, phi: f64) -> f64 {
        let t = (phi + self.p.phase_offset) * self.p.stride_period;
        let pose = self.pose(t);
        pose[Landmark::LeftAnkle.index()].x - pose[Landmark::RightAnkle.index()].x
    }
}

/// Event phases within one stride, each in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
struct PhaseEvents {
    hs_left: f64,
    hs_right: f64,
    to_left: f64,
    to_right: f64,
}

const GRID: usize = 1024;
/// Same fraction the detector uses.
const TOE_OFF_FRACTION: f64 = 0.1;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

fn bisect_crossing(f: &dyn Fn(f64) -> f64, level: f64, mut a: f64, mut b: f64) -> f64 {
    let above_a = f(a) > level;
    for _ in 0..200 {
        let m = (a + b) / 2.0;
        if (f(m) > level) == above_a {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    (a + b) / 2.0
}

fn phase_events(w: &Walker) -> Result<PhaseEvents, SynthError> {
    let f = |phi: f64| w.inter_ankle(phi);
    let grid: Vec<f64> = (0..GRID).map(|i| f(i as f64 / GRID as f64)).collect();
    let imax = (0..GRID).max_by(|&a, &b| grid[a].total_cmp(&grid[b])).unwrap();
    let imin = (0..GRID).min_by(|&a, &b| grid[a].total_cmp(&grid[b])).unwrap();
    let h = 1.0 / GRID as f64;
    let hs_left = golden_max(&f, imax as f64 * h - h, imax as f64 * h + h);
    let neg = |phi: f64| -f(phi);
    let hs_right = golden_max(&neg, imin as f64 * h - h, imin as f64 * h + h);
    let (top, bottom) = (f(hs_left), f(hs_right));
    if !(top > bottom) {
        return Err(SynthError::InvalidParams("inter-ankle distance does not oscillate".into()));
    }
    let level_down = top - TOE_OFF_FRACTION * (top - bottom);
    let level_up = bottom + TOE_OFF_FRACTION * (top - bottom);
    let first_cross = |from: f64, to: f64, level: f64| -> Result<f64, SynthError> {
        let n = ((to - from) / h).ceil() as usize;
        let above0 = f(from) > level;
        let mut prev = from;
        for i in 1..=n {
            let x = (from + i as f64 * h).min(to);
            if (f(x) > level) != above0 {
                return Ok(bisect_crossing(&f, level, prev, x));
            }
            prev = x;
        }
        Err(SynthError::InvalidParams("no toe-off crossing".into()))
    };
    let next_min = if hs_right > hs_left { hs_right } else { hs_right + 1.0 };
    let to_right = first_cross(hs_left, next_min, level_down)?;
    let next_max = if hs_left > hs_right { hs_left } else { hs_left + 1.0 };
    let to_left = first_cross(hs_right, next_max, level_up)?;
    Ok(PhaseEvents { hs_left: frac(hs_left), hs_right: frac(hs_right), to_left: frac(to_left), to_right: frac(to_right) })
}

fn stance(ev: &PhaseEvents) -> f64 {
    frac(ev.to_left - ev.hs_left)
}

const MAX_WARP: f64 = 0.9;

/// Find the phase warp that gives the requested stance fraction.
fn calibrate(p: &GaitParams) -> Result<(f64, f64, PhaseEvents), SynthError> {
    let center = phase_events(&Walker { p, alpha: 0.0, center: 0.0 })?.hs_left;
    let eval = |alpha: f64| -> Result<(f64, PhaseEvents), SynthError> {
        let ev = phase_events(&Walker { p, alpha, center })?;
        Ok((stance(&ev) - p.stance_fraction, ev))
    };
    let (mut lo, mut hi) = (-MAX_WARP, MAX_WARP);
    let (flo, _) = eval(lo)?;
    let (fhi, _) = eval(hi)?;
    if flo.signum() == fhi.signum() {
        return Err(SynthError::InvalidParams(format!(
            "stance fraction {} not reachable (range {:.3}..{:.3})",
            p.stance_fraction,
            (flo + p.stance_fraction).min(fhi + p.stance_fraction),
            (flo + p.stance_fraction).max(fhi + p.stance_fraction)
        )));
    }
    let increasing = fhi > flo;
    for _ in 0..50 {
        let mid = (lo + hi) / 2.0;
        let (fm, _) = eval(mid)?;
        if (fm > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let alpha = (lo + hi) / 2.0;
    let (_, ev) = eval(alpha)?;
    Ok((alpha, center, ev))
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub truth: LandmarkRecording,
    /// In the recording's clock.
    pub events: GaitEvents,
    pub angles: KinematicSignals,
    /// Phase-warp coefficient found for the stance fraction.
    pub warp: f64,
}

/// Sample the walker at `params.sample_rate`.
pub fn generate(params: &GaitParams) -> Result<Generated, SynthError> {
    params.validate()?;
    let (alpha, center, ev) = calibrate(params)?;
    let w = Walker { p: params, alpha, center };
    let n = params.n_samples();
    let world: Vec<f64> = (0..n).map(|i| params.start_time + i as f64 / params.sample_rate).collect();
    let times: Vec<f64> = world.iter().map(|t| t + params.clock_offset).collect();
    let poses: Vec<Pose> = world.iter().map(|&t| w.pose(t)).collect();
    let samples: Vec<AngleSample> = world.iter().map(|&t| AngleSample { values: w.angles(t).values }).collect();

    let (t0, t1) = (world[0], world[n - 1]);
    let at_phase = |phase: f64| -> Vec<f64> {
        let first = ((t0 / params.stride_period - params.phase_offset - phase).floor()) as i64;
        let mut out = Vec::new();
        for k in first.. {
            let t = (phase + params.phase_offset + k as f64) * params.stride_period;
            if t > t1 {
                break;
            }
            if t > t0 {
                out.push(t + params.clock_offset);
            }
        }
        out
    };
    let events = GaitEvents {
        left_heel_strikes: at_phase(ev.hs_left),
        right_heel_strikes: at_phase(ev.hs_right),
        left_toe_offs: at_phase(ev.to_left),
        right_toe_offs: at_phase(ev.to_right),
    };
    let truth = LandmarkRecording {
        source: Source::SyntheticTruth,
        nominal_rate: params.sample_rate,
        participant_id: String::new(),
        trial_id: String::new(),
        times: times.clone(),
        poses,
    };
    Ok(Generated { truth, events, angles: KinematicSignals::from_samples(times, &samples), warp: alpha })
}

/// Camera-like corruption of landmark positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Constant per-landmark offset, m, in [`Landmark::ALL`] order.
    pub offsets: [Point; LANDMARK_COUNT],
    /// Amplitude of a slow sinusoidal drift per landmark and axis, m.
    pub drift_amplitude: f64,
    /// Hz; must stay below 2.
    pub drift_frequency: f64,
    /// White noise, m.
    pub noise_sigma: f64,
    /// Per-sample timing jitter, s.
    pub jitter_sigma: f64,
    /// Constant delay added to timestamps, s.
    pub latency: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::zero()
    }
}

impl ErrorModel {
    pub fn zero() -> ErrorModel {
        ErrorModel {
            offsets: [Point::zeros(); LANDMARK_COUNT],
            drift_amplitude: 0.0,
            drift_frequency: 0.0,
            noise_sigma: 0.0,
            jitter_sigma: 0.0,
            latency: 0.0,
        }
    }

    /// Offsets uniform in `+-max` per axis for central and left landmarks;
    /// right landmarks get the mirror image (lateral component negated).
    pub fn mirrored_offsets(max: f64, seed: u64) -> [Point; LANDMARK_COUNT] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = [Point::zeros(); LANDMARK_COUNT];
        for l in Landmark::ALL {
            let m = l.mirrored();
            if m != l && l.name().starts_with("right") {
                continue;
            }
            let v = Point::new(rng.random_range(-max..=max), rng.random_range(-max..=max), rng.random_range(-max..=max));
            if m == l {
                out[l.index()] = Point::new(v.x, 0.0, v.z);
            } else {
                out[l.index()] = v;
                out[m.index()] = Point::new(v.x, -v.y, v.z);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidErrorModel(m.into()));
        if self.noise_sigma < 0.0 || self.jitter_sigma < 0.0 || self.drift_amplitude < 0.0 {
            return bad("amplitudes and standard deviations must be non-negative");
        }
        if !(0.0..2.0).contains(&self.drift_frequency) {
            return bad("drift frequency must be in [0, 2) Hz");
        }
        if self.offsets.iter().any(|o| !o.iter().all(|v| v.is_finite())) || !self.latency.is_finite() {
            return bad("non-finite offset or latency");
        }
        Ok(())
    }
}

/// Apply offsets, drift, noise, timing jitter and latency, in that order.
pub fn corrupt(truth: &LandmarkRecording, em: &ErrorModel, seed: u64) -> Result<LandmarkRecording, SynthError> {
    em.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = truth.clone();
    out.source = Source::SyntheticCorrupted;
    if em.offsets.iter().any(|o| *o != Point::zeros()) {
        for pose in &mut out.poses {
            for (p, o) in pose.iter_mut().zip(&em.offsets) {
                *p += o;
            }
        }
    }
    if em.drift_amplitude > 0.0 {
        let phases: Vec<[f64; 3]> =
            (0..LANDMARK_COUNT).map(|_| std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI))).collect();
        let t0 = truth.times.first().copied().unwrap_or(0.0);
        for (pose, &t) in out.poses.iter_mut().zip(&truth.times) {
            for (p, ph) in pose.iter_mut().zip(&phases) {
                for axis in 0..3 {
                    p[axis] += em.drift_amplitude * (2.0 * PI * em.drift_frequency * (t - t0) + ph[axis]).sin();
                }
            }
        }
    }
    if em.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, em.noise_sigma).expect("sigma checked");
        for pose in &mut out.poses {
            for p in pose.iter_mut() {
                for axis in 0..3 {
                    p[axis] += normal.sample(&mut rng);
                }
            }
        }
    }
    if em.jitter_sigma > 0.0 && out.len() > 1 {
        let normal = Normal::new(0.0, em.jitter_sigma).expect("sigma checked");
        let src = out.clone();
        let (first, last) = (src.times[0], src.times[src.len() - 1]);
        for (i, pose) in out.poses.iter_mut().enumerate() {
            let t = (src.times[i] + normal.sample(&mut rng)).clamp(first, last);
            *pose = crate::ingest::pose_at(&src, t);
        }
    }
    if em.latency != 0.0 {
        for t in &mut out.times {
            *t += em.latency;
        }
    }
    Ok(out)
}

/// Paired synthetic dataset settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub participants: usize,
    pub trials: usize,
    pub seed: u64,
    pub duration: f64,
    pub camera_rate: f64,
    pub mocap_rate: f64,
    pub error: ErrorModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            participants: 20,
            trials: 6,
            seed: 7,
            duration: 8.0,
            camera_rate: 30.0,
            mocap_rate: 120.0,
            error: ErrorModel::zero(),
        }
    }
}

/// One trial seen by both systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrial {
    pub participant_id: String,
    pub trial_id: String,
    pub params: GaitParams,
    /// Exact landmarks at the mocap rate, mocap clock.
    pub mocap: LandmarkRecording,
    /// Corrupted landmarks at the camera rate, camera clock.
    pub camera: LandmarkRecording,
    pub mocap_events: GaitEvents,
    pub camera_events: GaitEvents,
    pub mocap_angles: KinematicSignals,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ a.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ b.wrapping_mul(0x94d0_49bb_1331_11eb)
}

pub fn participant_id(p: usize) -> String {
    format!("P{:02}", p + 1)
}

pub fn trial_id(t: usize) -> String {
    format!("T{}", t + 1)
}

/// Generate every participant and trial. Output order is participant-major
/// and independent of the execution mode.
pub fn generate_dataset(cfg: &SynthConfig, exec: Execution) -> Result<Vec<SynthTrial>, SynthError> {
    cfg.error.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.participants).flat_map(|p| (0..cfg.trials).map(move |t| (p, t))).collect();
    exec.try_map(&jobs, |&(p, t)| {
        let walker = GaitParams { duration: cfg.duration, ..GaitParams::random(mix(cfg.seed, p as u64 + 1, 0)) };
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, p as u64 + 1, t as u64 + 1));
        let base = walker.trial_variant(rng.random());
        let moc_p = GaitParams {
            sample_rate: cfg.mocap_rate,
            start_time: rng.random_range(0.0..0.3),
            clock_offset: rng.random_range(0.0..5.0),
            ..base.clone()
        };
        let cam_p = GaitParams {
            sample_rate: cfg.camera_rate,
            start_time: rng.random_range(0.0..0.3),
            clock_offset: rng.random_range(0.0..5.0),
            ..base.clone()
        };
        let moc = generate(&moc_p)?;
        let cam = generate(&cam_p)?;
        let (pid, tid) = (participant_id(p), trial_id(t));
        let label = |mut r: LandmarkRecording| {
            r.participant_id = pid.clone();
            r.trial_id = tid.clone();
            r
        };
        let camera = label(corrupt(&cam.truth, &cfg.error, rng.random())?);
        let camera_events = if cfg.error.latency != 0.0 { cam.events.shifted(cfg.error.latency) } else { cam.events };
        Ok(SynthTrial {
            participant_id: pid.clone(),
            trial_id: tid.clone(),
            params: base,
            mocap: label(moc.truth),
            camera,
            mocap_events: moc.events,
            camera_events,
            mocap_angles: moc.angles,
        })
    })
}
