//! Segment frames and joint angles.
//!
//! Frames are stored as rotation matrices whose columns are the segment's
//! X, Y, Z axes in world coordinates.
//!
//! | frame | Z | Y | X |
//! |---|---|---|---|
//! | knee (R1) | knee to hip | (knee to ankle) x Z | Y x Z |
//! | pelvis (R2) | X x Y | right hip to left hip | Y x (mid-hip to spine middle) |
//! | trunk (R3) | X x Y | right to left shoulder | Y x (spine middle to mid-shoulder) |
//! | elbow (R4) | elbow to shoulder | Z x (elbow to hand) | Y x Z |
//!
//! Clinical signs (degrees):
//!
//! | signal | value |
//! |---|---|
//! | hip flex/ext | `-y` of cardan(R1 R2ᵀ) |
//! | hip add/abd | left `-x`, right `+x` of cardan(R1 R2ᵀ) |
//! | shoulder flex/ext, add/abd | same rules on cardan(R4 R3ᵀ) |
//! | pelvis tilt, rotation | `y`, `z` of cardan(R2) |
//! | trunk tilt, rotation | `y`, `z` of cardan(R3) |
//! | knee, elbow flex/ext | 180 minus the angle between the two segment vectors |

use std::fmt;
use std::io::Write;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::model::{Landmark, LandmarkRecording, Point, Pose};

pub type RotationMatrix = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Central,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Central => "central",
        }
    }

    pub fn from_name(s: &str) -> Option<Side> {
        [Side::Left, Side::Right, Side::Central].into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The ten evaluated joint-angle signals, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalName {
    ElbowFlexExt,
    KneeFlexExt,
    HipFlexExt,
    ShoulderFlexExt,
    TrunkTilt,
    PelvisTilt,
    HipAddAbd,
    ShoulderAddAbd,
    TrunkRotation,
    PelvisRotation,
}

impl SignalName {
    pub const ALL: [SignalName; 10] = [
        SignalName::ElbowFlexExt,
        SignalName::KneeFlexExt,
        SignalName::HipFlexExt,
        SignalName::ShoulderFlexExt,
        SignalName::TrunkTilt,
        SignalName::PelvisTilt,
        SignalName::HipAddAbd,
        SignalName::ShoulderAddAbd,
        SignalName::TrunkRotation,
        SignalName::PelvisRotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalName::ElbowFlexExt => "elbow_flex_ext",
            SignalName::KneeFlexExt => "knee_flex_ext",
            SignalName::HipFlexExt => "hip_flex_ext",
            SignalName::ShoulderFlexExt => "shoulder_flex_ext",
            SignalName::TrunkTilt => "trunk_tilt",
            SignalName::PelvisTilt => "pelvis_tilt",
            SignalName::HipAddAbd => "hip_add_abd",
            SignalName::ShoulderAddAbd => "shoulder_add_abd",
            SignalName::TrunkRotation => "trunk_rotation",
            SignalName::PelvisRotation => "pelvis_rotation",
        }
    }

    /// Row label as printed in tables.
    pub fn label(self) -> &'static str {
        match self {
            SignalName::ElbowFlexExt => "Elbow flex/ext",
            SignalName::KneeFlexExt => "Knee flex/ext",
            SignalName::HipFlexExt => "Hip flex/ext",
            SignalName::ShoulderFlexExt => "Shoulder flex/ext",
            SignalName::TrunkTilt => "Trunk tilt",
            SignalName::PelvisTilt => "Pelvis tilt",
            SignalName::HipAddAbd => "Hip add/abd",
            SignalName::ShoulderAddAbd => "Shoulder add/abd",
            SignalName::TrunkRotation => "Trunk rotation",
            SignalName::PelvisRotation => "Pelvis rotation",
        }
    }

    pub fn from_name(s: &str) -> Option<SignalName> {
        SignalName::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn is_sided(self) -> bool {
        !matches!(
            self,
            SignalName::TrunkTilt | SignalName::PelvisTilt | SignalName::TrunkRotation | SignalName::PelvisRotation
        )
    }

    pub fn sides(self) -> &'static [Side] {
        if self.is_sided() {
            &[Side::Left, Side::Right]
        } else {
            &[Side::Central]
        }
    }
}

impl fmt::Display for SignalName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Intrinsic Y-X-Z angles in degrees: `R = Ry(y) Rx(x) Rz(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CardanAngles {
    pub y: f64,
    pub x: f64,
    pub z: f64,
}

pub fn rot_x(deg: f64) -> RotationMatrix {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> RotationMatrix {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> RotationMatrix {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

impl CardanAngles {
    pub fn new(y: f64, x: f64, z: f64) -> Self {
        CardanAngles { y, x, z }
    }

    pub fn to_matrix(self) -> RotationMatrix {
        rot_y(self.y) * rot_x(self.x) * rot_z(self.z)
    }
}

/// Decompose `r` as `Ry(y) Rx(x) Rz(z)` with `x` in [-90, 90].
///
/// When `|cos x| < 1e-6` the z angle is set to 0 and the remaining rotation
/// is carried by y.
pub fn cardan_yxz(r: &RotationMatrix) -> CardanAngles {
    let cx = r[(1, 0)].hypot(r[(1, 1)]);
    let x = (-r[(1, 2)]).atan2(cx);
    if cx < 1e-6 {
        let y = (-r[(2, 0)]).atan2(r[(0, 0)]);
        return CardanAngles { y: y.to_degrees(), x: x.to_degrees(), z: 0.0 };
    }
    CardanAngles {
        y: r[(0, 2)].atan2(r[(2, 2)]).to_degrees(),
        x: x.to_degrees(),
        z: r[(1, 0)].atan2(r[(1, 1)]).to_degrees(),
    }
}

/// Relative rotation of the thigh frame with respect to the pelvis.
pub fn hip_angles(r1: &RotationMatrix, r2: &RotationMatrix) -> CardanAngles {
    cardan_yxz(&(r1 * r2.transpose()))
}

/// Relative rotation of the upper-arm frame with respect to the trunk.
pub fn shoulder_angles(r4: &RotationMatrix, r3: &RotationMatrix) -> CardanAngles {
    cardan_yxz(&(r4 * r3.transpose()))
}

pub fn absolute_angles(r: &RotationMatrix) -> CardanAngles {
    cardan_yxz(r)
}

/// Clinical flexion (positive) from a relative hip or shoulder rotation.
pub fn flexion(a: &CardanAngles) -> f64 {
    -a.y
}

/// Clinical adduction (positive) from a relative hip or shoulder rotation.
pub fn adduction(a: &CardanAngles, side: Side) -> f64 {
    match side {
        Side::Right => a.x,
        _ => -a.x,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("degenerate geometry for frame {frame} at t = {t}")]
    DegenerateFrame { frame: &'static str, t: f64 },
    #[error("degenerate segment for {joint} at t = {t}")]
    DegenerateSegment { joint: &'static str, t: f64 },
    #[error("{failed} of {total} samples failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: Box<KinematicsError> },
    #[error("recording is empty")]
    Empty,
}

/// Minimum angle (rad) between the two vectors spanning a frame.
const MIN_SPAN_ANGLE: f64 = 1e-3;
const MIN_SEGMENT: f64 = 1e-6;

fn angle_between(a: &Point, b: &Point) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn spanned(a: &Point, b: &Point) -> bool {
    let ang = angle_between(a, b);
    a.norm() > MIN_SEGMENT && b.norm() > MIN_SEGMENT && ang > MIN_SPAN_ANGLE && ang < std::f64::consts::PI - MIN_SPAN_ANGLE
}

/// Z along `z_dir`, Y along `y_dir` (must already be orthogonal to Z up to scale).
fn frame_zy(z_dir: Point, y_dir: Point) -> RotationMatrix {
    let z = z_dir.normalize();
    let y = y_dir.normalize();
    let x = y.cross(&z);
    Matrix3::from_columns(&[x, y, z])
}

/// Y along `y_dir`, X = Y x `up`, Z = X x Y.
fn frame_yx(y_dir: Point, up: Point) -> RotationMatrix {
    let y = y_dir.normalize();
    let x = y.cross(&up).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentFrames {
    pub knee_left: RotationMatrix,
    pub knee_right: RotationMatrix,
    pub pelvis: RotationMatrix,
    pub trunk: RotationMatrix,
    pub elbow_left: RotationMatrix,
    pub elbow_right: RotationMatrix,
}

impl SegmentFrames {
    pub fn knee(&self, side: Side) -> &RotationMatrix {
        if side == Side::Right {
            &self.knee_right
        } else {
            &self.knee_left
        }
    }

    pub fn elbow(&self, side: Side) -> &RotationMatrix {
        if side == Side::Right {
            &self.elbow_right
        } else {
            &self.elbow_left
        }
    }

    pub fn all(&self) -> [(&'static str, &RotationMatrix); 6] {
        [
            ("knee_left", &self.knee_left),
            ("knee_right", &self.knee_right),
            ("pelvis", &self.pelvis),
            ("trunk", &self.trunk),
            ("elbow_left", &self.elbow_left),
            ("elbow_right", &self.elbow_right),
        ]
    }
}

fn lm(p: &Pose, l: Landmark) -> Point {
    p[l.index()]
}

pub fn mid_hip(p: &Pose) -> Point {
    (lm(p, Landmark::LeftHip) + lm(p, Landmark::RightHip)) / 2.0
}

pub fn mid_shoulder(p: &Pose) -> Point {
    (lm(p, Landmark::LeftShoulder) + lm(p, Landmark::RightShoulder)) / 2.0
}

fn knee_frame(p: &Pose, side: Side, t: f64) -> Result<RotationMatrix, KinematicsError> {
    let (hip, knee, ankle, name) = match side {
        Side::Right => (Landmark::RightHip, Landmark::RightKnee, Landmark::RightAnkle, "knee_right"),
        _ => (Landmark::LeftHip, Landmark::LeftKnee, Landmark::LeftAnkle, "knee_left"),
    };
    let v2 = lm(p, hip) - lm(p, knee);
    let v1 = lm(p, ankle) - lm(p, knee);
    if !spanned(&v1, &v2) {
        return Err(KinematicsError::DegenerateFrame { frame: name, t });
    }
    Ok(frame_zy(v2, v1.cross(&v2)))
}

fn elbow_frame(p: &Pose, side: Side, t: f64) -> Result<RotationMatrix, KinematicsError> {
    let (sh, el, hand, name) = match side {
        Side::Right => (Landmark::RightShoulder, Landmark::RightElbow, Landmark::RightHand, "elbow_right"),
        _ => (Landmark::LeftShoulder, Landmark::LeftElbow, Landmark::LeftHand, "elbow_left"),
    };
    let v2 = lm(p, sh) - lm(p, el);
    let v1 = lm(p, hand) - lm(p, el);
    if !spanned(&v1, &v2) {
        return Err(KinematicsError::DegenerateFrame { frame: name, t });
    }
    Ok(frame_zy(v2, v2.cross(&v1)))
}

fn pelvis_frame(p: &Pose, t: f64) -> Result<RotationMatrix, KinematicsError> {
    let y = lm(p, Landmark::LeftHip) - lm(p, Landmark::RightHip);
    let v2 = lm(p, Landmark::SpineMiddle) - mid_hip(p);
    if !spanned(&y, &v2) {
        return Err(KinematicsError::DegenerateFrame { frame: "pelvis", t });
    }
    Ok(frame_yx(y, v2))
}

fn trunk_frame(p: &Pose, t: f64) -> Result<RotationMatrix, KinematicsError> {
    let y = lm(p, Landmark::LeftShoulder) - lm(p, Landmark::RightShoulder);
    let v2 = mid_shoulder(p) - lm(p, Landmark::SpineMiddle);
    if !spanned(&y, &v2) {
        return Err(KinematicsError::DegenerateFrame { frame: "trunk", t });
    }
    Ok(frame_yx(y, v2))
}

/// All six segment frames for one pose; `t` only labels errors.
pub fn build_frames(pose: &Pose, t: f64) -> Result<SegmentFrames, KinematicsError> {
    Ok(SegmentFrames {
        knee_left: knee_frame(pose, Side::Left, t)?,
        knee_right: knee_frame(pose, Side::Right, t)?,
        pelvis: pelvis_frame(pose, t)?,
        trunk: trunk_frame(pose, t)?,
        elbow_left: elbow_frame(pose, Side::Left, t)?,
        elbow_right: elbow_frame(pose, Side::Right, t)?,
    })
}

/// Flexion at `center`: 0 when proximal, center and distal are collinear.
pub fn vector_angle_joint(center: &Point, proximal: &Point, distal: &Point) -> Option<f64> {
    let a = proximal - center;
    let b = distal - center;
    if a.norm() <= MIN_SEGMENT || b.norm() <= MIN_SEGMENT {
        return None;
    }
    Some(180.0 - angle_between(&a, &b).to_degrees())
}

/// The 16 signal values (10 names, sided ones twice) at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSample {
    pub values: [f64; SIGNAL_COUNT],
}

/// Number of (name, side) channels.
pub const SIGNAL_COUNT: usize = 16;

/// Channel order used throughout: each name in report order, left before right.
pub fn channels() -> [(SignalName, Side); SIGNAL_COUNT] {
    let mut out = [(SignalName::ElbowFlexExt, Side::Left); SIGNAL_COUNT];
    let mut i = 0;
    for name in SignalName::ALL {
        for &side in name.sides() {
            out[i] = (name, side);
            i += 1;
        }
    }
    out
}

pub fn channel_index(name: SignalName, side: Side) -> Option<usize> {
    channels().iter().position(|&c| c == (name, side))
}

/// Joint angles of one pose.
pub fn pose_angles(pose: &Pose, t: f64) -> Result<AngleSample, KinematicsError> {
    let f = build_frames(pose, t)?;
    let mut values = [0.0; SIGNAL_COUNT];
    let pelvis = absolute_angles(&f.pelvis);
    let trunk = absolute_angles(&f.trunk);
    for (k, (name, side)) in channels().into_iter().enumerate() {
        values[k] = match name {
            SignalName::ElbowFlexExt => {
                let (s, e, h) = match side {
                    Side::Right => (Landmark::RightShoulder, Landmark::RightElbow, Landmark::RightHand),
                    _ => (Landmark::LeftShoulder, Landmark::LeftElbow, Landmark::LeftHand),
                };
                vector_angle_joint(&lm(pose, e), &lm(pose, s), &lm(pose, h))
                    .ok_or(KinematicsError::DegenerateSegment { joint: "elbow", t })?
            }
            SignalName::KneeFlexExt => {
                let (h, k, a) = match side {
                    Side::Right => (Landmark::RightHip, Landmark::RightKnee, Landmark::RightAnkle),
                    _ => (Landmark::LeftHip, Landmark::LeftKnee, Landmark::LeftAnkle),
                };
                vector_angle_joint(&lm(pose, k), &lm(pose, h), &lm(pose, a))
                    .ok_or(KinematicsError::DegenerateSegment { joint: "knee", t })?
            }
            SignalName::HipFlexExt => flexion(&hip_angles(f.knee(side), &f.pelvis)),
            SignalName::HipAddAbd => adduction(&hip_angles(f.knee(side), &f.pelvis), side),
            SignalName::ShoulderFlexExt => flexion(&shoulder_angles(f.elbow(side), &f.trunk)),
            SignalName::ShoulderAddAbd => adduction(&shoulder_angles(f.elbow(side), &f.trunk), side),
            SignalName::TrunkTilt => trunk.y,
            SignalName::TrunkRotation => trunk.z,
            SignalName::PelvisTilt => pelvis.y,
            SignalName::PelvisRotation => pelvis.z,
        };
    }
    Ok(AngleSample { values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAngleSignal {
    pub name: SignalName,
    pub side: Side,
    /// Degrees.
    pub values: Vec<f64>,
}

/// All joint-angle signals of one recording on its own timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicSignals {
    pub times: Vec<f64>,
    /// In [`channels`] order.
    pub signals: Vec<JointAngleSignal>,
    /// Sample indices where extraction failed and values were interpolated.
    pub gaps: Vec<usize>,
}

impl KinematicSignals {
    pub fn get(&self, name: SignalName, side: Side) -> Option<&[f64]> {
        self.signals.iter().find(|s| s.name == name && s.side == side).map(|s| s.values.as_slice())
    }

    pub fn get_mut(&mut self, name: SignalName, side: Side) -> Option<&mut Vec<f64>> {
        self.signals.iter_mut().find(|s| s.name == name && s.side == side).map(|s| &mut s.values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Build from per-sample values in channel order.
    pub fn from_samples(times: Vec<f64>, samples: &[AngleSample]) -> KinematicSignals {
        let signals = channels()
            .into_iter()
            .enumerate()
            .map(|(k, (name, side))| JointAngleSignal { name, side, values: samples.iter().map(|s| s.values[k]).collect() })
            .collect();
        KinematicSignals { times, signals, gaps: Vec::new() }
    }
}

/// Share of samples allowed to fail before extraction errors out.
pub const MAX_GAP_FRACTION: f64 = 0.05;

pub fn extract_signals(rec: &LandmarkRecording) -> Result<KinematicSignals, KinematicsError> {
    extract_signals_with(rec, Execution::default())
}

/// Per-sample extraction. Isolated failures (< 5% of samples) are filled by
/// linear interpolation between neighbouring good samples and listed in `gaps`.
pub fn extract_signals_with(rec: &LandmarkRecording, exec: Execution) -> Result<KinematicSignals, KinematicsError> {
    let n = rec.len();
    if n == 0 {
        return Err(KinematicsError::Empty);
    }
    let results = exec.map_indexed(n, |i| pose_angles(&rec.poses[i], rec.times[i]));
    let gaps: Vec<usize> = (0..n).filter(|&i| results[i].is_err()).collect();
    if let Some(&g) = gaps.first() {
        if gaps.len() as f64 >= MAX_GAP_FRACTION * n as f64 {
            let first = results[g].clone().unwrap_err();
            return Err(KinematicsError::TooManyFailures { failed: gaps.len(), total: n, first: Box::new(first) });
        }
    }
    let good: Vec<usize> = (0..n).filter(|&i| results[i].is_ok()).collect();
    let samples: Vec<AngleSample> = (0..n)
        .map(|i| match &results[i] {
            Ok(s) => *s,
            Err(_) => {
                let j = good.partition_point(|&g| g < i);
                let before = j.checked_sub(1).map(|k| good[k]);
                let after = good.get(j).copied();
                match (before, after) {
                    (Some(a), Some(b)) => {
                        let w = (rec.times[i] - rec.times[a]) / (rec.times[b] - rec.times[a]);
                        let (va, vb) = (results[a].as_ref().unwrap(), results[b].as_ref().unwrap());
                        let mut values = va.values;
                        for (v, (x, y)) in values.iter_mut().zip(va.values.iter().zip(&vb.values)) {
                            *v = x + (y - x) * w;
                        }
                        AngleSample { values }
                    }
                    (Some(a), None) | (None, Some(a)) => *results[a].as_ref().unwrap(),
                    (None, None) => unreachable!("gap fraction check guarantees a good sample"),
                }
            }
        })
        .collect();
    let mut out = KinematicSignals::from_samples(rec.times.clone(), &samples);
    out.gaps = gaps;
    Ok(out)
}

/// Angles CSV: `t` then one `<signal>_<side>` column per channel (`side` is
/// `left`, `right` or `central`). `comments` become leading `# ` lines.
pub fn write_signals_csv<W: Write>(mut out: W, s: &KinematicSignals, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(s.signals.iter().map(|sig| format!("{}_{}", sig.name.name(), sig.side.name())));
    w.write_record(&header)?;
    for (i, t) in s.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(s.signals.iter().map(|sig| sig.values[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Debug dump: `t` followed by the 9 row-major entries of each frame.
pub fn write_frames_csv<W: Write>(out: W, rec: &LandmarkRecording) -> Result<(), Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    let names = ["knee_left", "knee_right", "pelvis", "trunk", "elbow_left", "elbow_right"];
    for n in names {
        for r in 0..3 {
            for c in 0..3 {
                header.push(format!("{n}_{r}{c}"));
            }
        }
    }
    w.write_record(&header)?;
    for (t, pose) in rec.times.iter().zip(&rec.poses) {
        let f = build_frames(pose, *t)?;
        let mut row = vec![t.to_string()];
        for (_, m) in f.all() {
            for r in 0..3 {
                for c in 0..3 {
                    row.push(m[(r, c)].to_string());
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
