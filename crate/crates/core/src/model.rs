//! Skeleton domain types and the marker-set to landmark mapping.
//!
//! World frame: right-handed, metres, Z up, X along the walking direction,
//! Y lateral (pointing to the subject's left).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Vector3<f64>;

/// The 15 skeleton landmarks shared by the camera tracker and the mapped
/// mocap marker set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landmark {
    SpineBase,
    SpineMiddle,
    SpineShoulder,
    LeftShoulder,
    LeftElbow,
    LeftHand,
    RightShoulder,
    RightElbow,
    RightHand,
    LeftHip,
    LeftKnee,
    LeftAnkle,
    RightHip,
    RightKnee,
    RightAnkle,
}

pub const LANDMARK_COUNT: usize = 15;

/// One skeleton sample: landmark positions indexed by [`Landmark::index`].
pub type Pose = [Point; LANDMARK_COUNT];

impl Landmark {
    pub const ALL: [Landmark; LANDMARK_COUNT] = [
        Landmark::SpineBase,
        Landmark::SpineMiddle,
        Landmark::SpineShoulder,
        Landmark::LeftShoulder,
        Landmark::LeftElbow,
        Landmark::LeftHand,
        Landmark::RightShoulder,
        Landmark::RightElbow,
        Landmark::RightHand,
        Landmark::LeftHip,
        Landmark::LeftKnee,
        Landmark::LeftAnkle,
        Landmark::RightHip,
        Landmark::RightKnee,
        Landmark::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stable name used in file headers.
    pub fn name(self) -> &'static str {
        match self {
            Landmark::SpineBase => "spine_base",
            Landmark::SpineMiddle => "spine_middle",
            Landmark::SpineShoulder => "spine_shoulder",
            Landmark::LeftShoulder => "left_shoulder",
            Landmark::LeftElbow => "left_elbow",
            Landmark::LeftHand => "left_hand",
            Landmark::RightShoulder => "right_shoulder",
            Landmark::RightElbow => "right_elbow",
            Landmark::RightHand => "right_hand",
            Landmark::LeftHip => "left_hip",
            Landmark::LeftKnee => "left_knee",
            Landmark::LeftAnkle => "left_ankle",
            Landmark::RightHip => "right_hip",
            Landmark::RightKnee => "right_knee",
            Landmark::RightAnkle => "right_ankle",
        }
    }

    pub fn from_name(name: &str) -> Option<Landmark> {
        Landmark::ALL.into_iter().find(|l| l.name() == name)
    }

    /// Mirror image across the sagittal plane (left <-> right).
    pub fn mirrored(self) -> Landmark {
        use Landmark::*;
        match self {
            LeftShoulder => RightShoulder,
            LeftElbow => RightElbow,
            LeftHand => RightHand,
            LeftHip => RightHip,
            LeftKnee => RightKnee,
            LeftAnkle => RightAnkle,
            RightShoulder => LeftShoulder,
            RightElbow => LeftElbow,
            RightHand => LeftHand,
            RightHip => LeftHip,
            RightKnee => LeftKnee,
            RightAnkle => LeftAnkle,
            central => central,
        }
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Plug-in-Gait markers consumed by the landmark mapping. Paired elbow,
/// wrist, knee and ankle markers carry `A`/`B` suffixes. The six thigh and
/// tibia markers are part of the marker set but never read by the mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Marker {
    Rpsi,
    Lpsi,
    Rasi,
    Lasi,
    T10,
    Strn,
    C7,
    Clav,
    Lsho,
    Rsho,
    LelbA,
    LelbB,
    LwrA,
    LwrB,
    RelbA,
    RelbB,
    RwrA,
    RwrB,
    LkneA,
    LkneB,
    LankA,
    LankB,
    RkneA,
    RkneB,
    RankA,
    RankB,
    Ltroc,
    Lthi,
    Ltib,
    Rtroc,
    Rthi,
    Rtib,
}

impl Marker {
    pub const ALL: [Marker; 32] = [
        Marker::Rpsi,
        Marker::Lpsi,
        Marker::Rasi,
        Marker::Lasi,
        Marker::T10,
        Marker::Strn,
        Marker::C7,
        Marker::Clav,
        Marker::Lsho,
        Marker::Rsho,
        Marker::LelbA,
        Marker::LelbB,
        Marker::LwrA,
        Marker::LwrB,
        Marker::RelbA,
        Marker::RelbB,
        Marker::RwrA,
        Marker::RwrB,
        Marker::LkneA,
        Marker::LkneB,
        Marker::LankA,
        Marker::LankB,
        Marker::RkneA,
        Marker::RkneB,
        Marker::RankA,
        Marker::RankB,
        Marker::Ltroc,
        Marker::Lthi,
        Marker::Ltib,
        Marker::Rtroc,
        Marker::Rthi,
        Marker::Rtib,
    ];

    pub fn name(self) -> &'static str {
        use Marker::*;
        match self {
            Rpsi => "RPSI",
            Lpsi => "LPSI",
            Rasi => "RASI",
            Lasi => "LASI",
            T10 => "T10",
            Strn => "STRN",
            C7 => "C7",
            Clav => "CLAV",
            Lsho => "LSHO",
            Rsho => "RSHO",
            LelbA => "LELB_A",
            LelbB => "LELB_B",
            LwrA => "LWR_A",
            LwrB => "LWR_B",
            RelbA => "RELB_A",
            RelbB => "RELB_B",
            RwrA => "RWR_A",
            RwrB => "RWR_B",
            LkneA => "LKNE_A",
            LkneB => "LKNE_B",
            LankA => "LANK_A",
            LankB => "LANK_B",
            RkneA => "RKNE_A",
            RkneB => "RKNE_B",
            RankA => "RANK_A",
            RankB => "RANK_B",
            Ltroc => "LTROC",
            Lthi => "LTHI",
            Ltib => "LTIB",
            Rtroc => "RTROC",
            Rthi => "RTHI",
            Rtib => "RTIB",
        }
    }

    pub fn from_name(name: &str) -> Option<Marker> {
        Marker::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Markers present in the lab set but ignored by the landmark mapping.
    pub fn is_excluded(self) -> bool {
        use Marker::*;
        matches!(self, Ltroc | Lthi | Ltib | Rtroc | Rthi | Rtib)
    }

    pub fn required() -> impl Iterator<Item = Marker> {
        Marker::ALL.into_iter().filter(|m| !m.is_excluded())
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample3D {
    pub t: f64,
    pub p: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Camera,
    MocapMapped,
    SyntheticTruth,
    SyntheticCorrupted,
}

/// Time-stamped trajectories of all 15 landmarks from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkRecording {
    pub source: Source,
    /// Nominal sampling rate in Hz.
    pub nominal_rate: f64,
    pub participant_id: String,
    pub trial_id: String,
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl LandmarkRecording {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn position(&self, landmark: Landmark, i: usize) -> Point {
        self.poses[i][landmark.index()]
    }

    pub fn trajectory(&self, landmark: Landmark) -> impl Iterator<Item = Sample3D> + '_ {
        self.times
            .iter()
            .zip(&self.poses)
            .map(move |(&t, pose)| Sample3D { t, p: pose[landmark.index()] })
    }

    /// Same recording with every landmark moved by `d`.
    pub fn translated(&self, d: Point) -> LandmarkRecording {
        let mut out = self.clone();
        for pose in &mut out.poses {
            for p in pose.iter_mut() {
                *p += d;
            }
        }
        out
    }

    /// Same recording with every landmark rotated about the world origin.
    pub fn rotated(&self, q: &Matrix3<f64>) -> LandmarkRecording {
        let mut out = self.clone();
        for pose in &mut out.poses {
            for p in pose.iter_mut() {
                *p = q * *p;
            }
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate_recording(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    Empty,
    LengthMismatch { times: usize, poses: usize },
    NonMonotone { index: usize, previous: f64, current: f64 },
    NonFiniteTime { index: usize },
    NonFinite { landmark: Landmark, index: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Empty => write!(f, "recording has no samples"),
            ValidationIssue::LengthMismatch { times, poses } => {
                write!(f, "{times} timestamps but {poses} poses")
            }
            ValidationIssue::NonMonotone { index, previous, current } => write!(
                f,
                "timestamp at sample {index} ({current}) does not increase from {previous}"
            ),
            ValidationIssue::NonFiniteTime { index } => {
                write!(f, "non-finite timestamp at sample {index}")
            }
            ValidationIssue::NonFinite { landmark, index } => {
                write!(f, "non-finite coordinate for {landmark} at sample {index}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub landmark_count: usize,
    pub samples: usize,
    pub duration: f64,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate_recording(r: &LandmarkRecording) -> ValidationReport {
    let mut issues = Vec::new();
    if r.times.is_empty() {
        issues.push(ValidationIssue::Empty);
    }
    if r.times.len() != r.poses.len() {
        issues.push(ValidationIssue::LengthMismatch { times: r.times.len(), poses: r.poses.len() });
    }
    for (i, t) in r.times.iter().enumerate() {
        if !t.is_finite() {
            issues.push(ValidationIssue::NonFiniteTime { index: i });
        }
    }
    for (i, w) in r.times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            issues.push(ValidationIssue::NonMonotone { index: i + 1, previous: w[0], current: w[1] });
        }
    }
    for (i, pose) in r.poses.iter().enumerate() {
        for lm in Landmark::ALL {
            if !pose[lm.index()].iter().all(|c| c.is_finite()) {
                issues.push(ValidationIssue::NonFinite { landmark: lm, index: i });
            }
        }
    }
    ValidationReport {
        landmark_count: LANDMARK_COUNT,
        samples: r.times.len(),
        duration: r.duration(),
        issues,
    }
}

/// Marker trajectories from an optical motion-capture system.
#[derive(Debug, Clone, PartialEq)]
pub struct MocapRecording {
    pub nominal_rate: f64,
    pub participant_id: String,
    pub trial_id: String,
    pub times: Vec<f64>,
    /// Gaps are stored as NaN coordinates.
    pub markers: BTreeMap<Marker, Vec<Point>>,
}

/// Regression hip joint centre (Davis et al. 1991 as used by Plug-in-Gait).
///
/// In the pelvis frame (origin mid-ASIS, x anterior, y left, z up):
///
/// ```text
/// C     = c_slope * leg_length + c_intercept
/// x_dis = xdis_slope * leg_length + xdis_intercept
/// X     =  C cos(theta) sin(beta) - (x_dis + r) cos(beta)
/// Y     = ±(inter_asis / 2 - C sin(theta))      (+ left, - right)
/// Z     = -C cos(theta) cos(beta) - (x_dis + r) sin(beta)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HipCenterModel {
    /// Leg length in metres (not recorded in the lab protocol, so configurable).
    pub leg_length: f64,
    pub marker_radius: f64,
    /// Radians.
    pub theta: f64,
    /// Radians.
    pub beta: f64,
    pub c_slope: f64,
    pub c_intercept: f64,
    pub xdis_slope: f64,
    pub xdis_intercept: f64,
}

impl Default for HipCenterModel {
    fn default() -> Self {
        HipCenterModel {
            leg_length: 0.90,
            marker_radius: 0.007,
            theta: 0.5,
            beta: 0.314,
            c_slope: 0.115,
            c_intercept: -0.0153,
            xdis_slope: 0.1288,
            xdis_intercept: -0.04856,
        }
    }
}

impl HipCenterModel {
    /// Hip centre offset in the pelvis frame for the given inter-ASIS distance.
    pub fn local_offset(&self, inter_asis: f64, side: crate::kinematics::Side) -> Point {
        let c = self.c_slope * self.leg_length + self.c_intercept;
        let xdis = self.xdis_slope * self.leg_length + self.xdis_intercept;
        let (st, ct) = self.theta.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        let x = c * ct * sb - (xdis + self.marker_radius) * cb;
        let y = inter_asis / 2.0 - c * st;
        let z = -c * ct * cb - (xdis + self.marker_radius) * sb;
        match side {
            crate::kinematics::Side::Right => Point::new(x, -y, z),
            _ => Point::new(x, y, z),
        }
    }

    /// World-frame hip centres (left, right) from the four pelvis markers.
    pub fn hip_centres(&self, lasi: Point, rasi: Point, lpsi: Point, rpsi: Point) -> Option<(Point, Point)> {
        let origin = (lasi + rasi) / 2.0;
        let y = (lasi - rasi).try_normalize(1e-12)?;
        let fwd = origin - (lpsi + rpsi) / 2.0;
        let z = fwd.cross(&y).try_normalize(1e-12)?;
        let x = y.cross(&z);
        let frame = Matrix3::from_columns(&[x, y, z]);
        let inter_asis = (lasi - rasi).norm();
        let left = origin + frame * self.local_offset(inter_asis, crate::kinematics::Side::Left);
        let right = origin + frame * self.local_offset(inter_asis, crate::kinematics::Side::Right);
        Some((left, right))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("marker {marker} missing at sample {index}")]
    MissingMarker { marker: Marker, index: usize },
    #[error("degenerate pelvis marker geometry at sample {index}")]
    DegeneratePelvis { index: usize },
}

fn midpoint(points: &[Point]) -> Point {
    points.iter().sum::<Point>() / points.len() as f64
}

/// Reduce a marker recording to the 15-landmark skeleton. Timestamps are
/// copied unchanged.
pub fn map_mocap_to_landmarks(
    m: &MocapRecording,
    hip: &HipCenterModel,
) -> Result<LandmarkRecording, MappingError> {
    let n = m.times.len();
    for marker in Marker::required() {
        let Some(track) = m.markers.get(&marker) else {
            return Err(MappingError::MissingMarker { marker, index: 0 });
        };
        if let Some(index) = (0..n).find(|&i| i >= track.len() || !track[i].iter().all(|c| c.is_finite())) {
            return Err(MappingError::MissingMarker { marker, index });
        }
    }
    let get = |mk: Marker, i: usize| m.markers[&mk][i];
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        use Marker::*;
        let (lasi, rasi, lpsi, rpsi) = (get(Lasi, i), get(Rasi, i), get(Lpsi, i), get(Rpsi, i));
        let (lhip, rhip) =
            hip.hip_centres(lasi, rasi, lpsi, rpsi).ok_or(MappingError::DegeneratePelvis { index: i })?;
        let mut pose = [Point::zeros(); LANDMARK_COUNT];
        let mut set = |lm: Landmark, p: Point| pose[lm.index()] = p;
        set(Landmark::SpineBase, midpoint(&[rpsi, lpsi, rasi, lasi]));
        set(Landmark::SpineMiddle, midpoint(&[get(T10, i), get(Strn, i)]));
        set(Landmark::SpineShoulder, midpoint(&[get(C7, i), get(Clav, i)]));
        set(Landmark::LeftShoulder, get(Lsho, i));
        set(Landmark::LeftElbow, midpoint(&[get(LelbA, i), get(LelbB, i)]));
        set(Landmark::LeftHand, midpoint(&[get(LwrA, i), get(LwrB, i)]));
        set(Landmark::RightShoulder, get(Rsho, i));
        set(Landmark::RightElbow, midpoint(&[get(RelbA, i), get(RelbB, i)]));
        set(Landmark::RightHand, midpoint(&[get(RwrA, i), get(RwrB, i)]));
        set(Landmark::LeftHip, lhip);
        set(Landmark::LeftKnee, midpoint(&[get(LkneA, i), get(LkneB, i)]));
        set(Landmark::LeftAnkle, midpoint(&[get(LankA, i), get(LankB, i)]));
        set(Landmark::RightHip, rhip);
        set(Landmark::RightKnee, midpoint(&[get(RkneA, i), get(RkneB, i)]));
        set(Landmark::RightAnkle, midpoint(&[get(RankA, i), get(RankB, i)]));
        poses.push(pose);
    }
    Ok(LandmarkRecording {
        source: Source::MocapMapped,
        nominal_rate: m.nominal_rate,
        participant_id: m.participant_id.clone(),
        trial_id: m.trial_id.clone(),
        times: m.times.clone(),
        poses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker_set(offset: Point) -> MocapRecording {
        let mut markers = BTreeMap::new();
        for (i, mk) in Marker::required().enumerate() {
            // distinct, non-degenerate positions
            let base = Point::new(0.01 * i as f64, 0.02 * (i % 5) as f64, 0.5 + 0.03 * i as f64);
            markers.insert(mk, vec![base + offset, base + offset + Point::new(0.01, 0.0, 0.0)]);
        }
        markers.insert(Marker::Lasi, vec![Point::new(0.0, 0.12, 1.0) + offset; 2]);
        markers.insert(Marker::Rasi, vec![Point::new(0.0, -0.12, 1.0) + offset; 2]);
        markers.insert(Marker::Lpsi, vec![Point::new(-0.15, 0.05, 1.0) + offset; 2]);
        markers.insert(Marker::Rpsi, vec![Point::new(-0.15, -0.05, 1.0) + offset; 2]);
        MocapRecording {
            nominal_rate: 120.0,
            participant_id: "p".into(),
            trial_id: "t".into(),
            times: vec![0.0, 1.0 / 120.0],
            markers,
        }
    }

    #[test]
    fn landmark_names_round_trip() {
        assert_eq!(Landmark::ALL.len(), 15);
        for lm in Landmark::ALL {
            assert_eq!(Landmark::from_name(lm.name()), Some(lm));
            assert_eq!(Landmark::ALL[lm.index()], lm);
        }
        assert_eq!(Marker::required().count(), 26);
        assert_eq!(Marker::ALL.iter().filter(|m| m.is_excluded()).count(), 6);
    }

    #[test]
    fn spine_base_is_midpoint_of_pelvis_markers() {
        let mut m = marker_set(Point::zeros());
        m.markers.insert(Marker::Rpsi, vec![Point::new(1.0, 1.0, 1.0); 2]);
        m.markers.insert(Marker::Lpsi, vec![Point::new(1.0, -1.0, 1.0); 2]);
        m.markers.insert(Marker::Rasi, vec![Point::new(-1.0, 1.0, 1.0); 2]);
        m.markers.insert(Marker::Lasi, vec![Point::new(-1.0, -1.0, 1.0); 2]);
        let r = map_mocap_to_landmarks(&m, &HipCenterModel::default()).unwrap();
        assert_eq!(r.position(Landmark::SpineBase, 0), Point::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn knee_is_midpoint_of_its_pair() {
        let mut m = marker_set(Point::zeros());
        m.markers.insert(Marker::LkneA, vec![Point::new(0.0, 0.1, 0.5); 2]);
        m.markers.insert(Marker::LkneB, vec![Point::new(0.0, -0.1, 0.5); 2]);
        let r = map_mocap_to_landmarks(&m, &HipCenterModel::default()).unwrap();
        assert_eq!(r.position(Landmark::LeftKnee, 0), Point::new(0.0, 0.0, 0.5));
        assert_eq!(r.position(Landmark::LeftShoulder, 1), m.markers[&Marker::Lsho][1]);
    }

    #[test]
    fn davis_hip_centre_hand_evaluated() {
        // inter-ASIS 0.24 m, leg length 0.90 m, r = 7 mm, theta = 0.5, beta = 0.314:
        // C = 0.0882, x_dis = 0.06736
        // X = 0.0882 cos0.5 sin0.314 - 0.07436 cos0.314 = -0.0468172...
        // Y = 0.12 - 0.0882 sin0.5                      =  0.0777147...
        // Z = -0.0882 cos0.5 cos0.314 - 0.07436 sin0.314 = -0.0965855...
        let m = marker_set(Point::zeros());
        let r = map_mocap_to_landmarks(&m, &HipCenterModel::default()).unwrap();
        let lhip = r.position(Landmark::LeftHip, 0);
        let rhip = r.position(Landmark::RightHip, 0);
        let expected = Point::new(-0.046_817_170_827_615_75, 0.077_714_667_495_109_27, 1.0 - 0.096_585_468_734_425_49);
        assert!((lhip - expected).norm() < 1e-12, "{lhip:?}");
        assert!((rhip - Point::new(expected.x, -expected.y, expected.z)).norm() < 1e-12);
    }

    #[test]
    fn translation_moves_midpoint_landmarks() {
        let d = Point::new(0.3, -1.2, 0.05);
        let a = map_mocap_to_landmarks(&marker_set(Point::zeros()), &HipCenterModel::default()).unwrap();
        let b = map_mocap_to_landmarks(&marker_set(d), &HipCenterModel::default()).unwrap();
        assert_eq!(a.times, b.times);
        for i in 0..a.len() {
            for lm in Landmark::ALL {
                let moved = b.position(lm, i) - a.position(lm, i);
                assert!((moved - d).norm() < 1e-12, "{lm}");
            }
        }
    }

    #[test]
    fn missing_marker_is_named() {
        let mut m = marker_set(Point::zeros());
        m.markers.get_mut(&Marker::RankB).unwrap()[1] = Point::new(f64::NAN, 0.0, 0.0);
        let err = map_mocap_to_landmarks(&m, &HipCenterModel::default()).unwrap_err();
        assert_eq!(err, MappingError::MissingMarker { marker: Marker::RankB, index: 1 });
        m.markers.remove(&Marker::C7);
        let err = map_mocap_to_landmarks(&m, &HipCenterModel::default()).unwrap_err();
        assert_eq!(err, MappingError::MissingMarker { marker: Marker::C7, index: 0 });
    }

    #[test]
    fn excluded_markers_may_be_absent() {
        let m = marker_set(Point::zeros());
        assert!(Marker::ALL.iter().filter(|mk| mk.is_excluded()).all(|mk| !m.markers.contains_key(mk)));
        assert!(map_mocap_to_landmarks(&m, &HipCenterModel::default()).is_ok());
    }

    fn two_sample(times: Vec<f64>) -> LandmarkRecording {
        LandmarkRecording {
            source: Source::Camera,
            nominal_rate: 30.0,
            participant_id: "p".into(),
            trial_id: "t".into(),
            poses: vec![[Point::zeros(); LANDMARK_COUNT]; times.len()],
            times,
        }
    }

    #[test]
    fn validation_reports() {
        assert!(two_sample(vec![0.0, 1.0 / 30.0]).validate().is_ok());
        let rep = two_sample(vec![0.0, 0.0]).validate();
        assert!(matches!(rep.issues[..], [ValidationIssue::NonMonotone { index: 1, .. }]));
        let mut r = two_sample(vec![0.0, 0.1]);
        r.poses[1][Landmark::LeftKnee.index()].y = f64::NAN;
        let rep = r.validate();
        assert_eq!(rep.issues, vec![ValidationIssue::NonFinite { landmark: Landmark::LeftKnee, index: 1 }]);
        assert_eq!(rep.landmark_count, 15);
        assert!((rep.duration - 0.1).abs() < 1e-15);
    }
}
