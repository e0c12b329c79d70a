//! Recording files, time alignment and resampling.

mod filter;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Landmark, LandmarkRecording, Marker, MocapRecording, Point, Pose, Source, LANDMARK_COUNT};

pub use filter::{lowpass, Biquad, FilterKind, FilterSpec, Sos};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("missing columns for {0}")]
    MissingColumns(String),
    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("timestamp does not increase at row {row}")]
    NonMonotone { row: usize },
    #[error("file contains no samples")]
    Empty,
    #[error("no heel strike detected in the {0} recording")]
    NoHeelStrike(&'static str),
    #[error("recordings do not overlap after alignment")]
    EmptyOverlap,
    #[error("no query time falls inside [{first}, {last}]")]
    NoQueryInRange { first: f64, last: f64 },
    #[error("series of length {len} too short for filtering (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },
    #[error("invalid filter: cutoff {cutoff} Hz, order {order} at {rate} Hz")]
    InvalidFilter { cutoff: f64, rate: f64, order: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Identifying metadata attached when a file is parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub source: Source,
    pub nominal_rate: f64,
    pub participant_id: String,
    pub trial_id: String,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

/// Reads a numeric CSV table. Lines starting with `#` are comments.
fn read_table<R: Read>(input: R) -> Result<Table, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).flexible(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(IngestError::MalformedHeader("first column must be `t`".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(IngestError::RaggedRow { row, found: rec.len(), expected: header.len() });
        }
        let values = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|_| IngestError::NonNumeric {
                    row,
                    column: c + 1,
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(prev) = rows.last().map(|r: &Vec<f64>| r[0]) {
            if !(values[0] > prev) {
                return Err(IngestError::NonMonotone { row });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(Table { header, rows })
}

fn column_index(header: &[String]) -> BTreeMap<&str, usize> {
    header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect()
}

fn xyz_columns(cols: &BTreeMap<&str, usize>, name: &str) -> Option<[usize; 3]> {
    Some([
        *cols.get(format!("{name}_x").as_str())?,
        *cols.get(format!("{name}_y").as_str())?,
        *cols.get(format!("{name}_z").as_str())?,
    ])
}

/// Parse a landmark CSV (`t,<landmark>_x,<landmark>_y,<landmark>_z`, 46 columns).
pub fn parse_landmark_csv<R: Read>(input: R, meta: &RecordingMeta) -> Result<LandmarkRecording, IngestError> {
    let table = read_table(input)?;
    let cols = column_index(&table.header);
    let mut idx = [[0usize; 3]; LANDMARK_COUNT];
    for lm in Landmark::ALL {
        idx[lm.index()] = xyz_columns(&cols, lm.name()).ok_or_else(|| IngestError::MissingColumns(lm.name().into()))?;
    }
    let times = table.rows.iter().map(|r| r[0]).collect();
    let poses = table
        .rows
        .iter()
        .map(|r| {
            let mut pose: Pose = [Point::zeros(); LANDMARK_COUNT];
            for (p, c) in pose.iter_mut().zip(&idx) {
                *p = Point::new(r[c[0]], r[c[1]], r[c[2]]);
            }
            pose
        })
        .collect();
    Ok(LandmarkRecording {
        source: meta.source,
        nominal_rate: meta.nominal_rate,
        participant_id: meta.participant_id.clone(),
        trial_id: meta.trial_id.clone(),
        times,
        poses,
    })
}

pub fn landmark_csv_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for lm in Landmark::ALL {
        for axis in ["x", "y", "z"] {
            h.push(format!("{}_{axis}", lm.name()));
        }
    }
    h
}

/// Write a landmark CSV. `comments` become leading `# ` lines.
pub fn write_landmark_csv<W: Write>(out: W, rec: &LandmarkRecording, comments: &[String]) -> Result<(), IngestError> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(landmark_csv_header())?;
    for (t, pose) in rec.times.iter().zip(&rec.poses) {
        let mut row = vec![t.to_string()];
        for p in pose {
            row.extend(p.iter().map(|c| c.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a marker CSV (`t,<MARKER>_x,...`). Unknown columns are ignored;
/// missing cells may be written as `NaN`.
pub fn parse_mocap_csv<R: Read>(input: R, meta: &RecordingMeta) -> Result<MocapRecording, IngestError> {
    let table = read_table(input)?;
    let cols = column_index(&table.header);
    let mut markers = BTreeMap::new();
    for mk in Marker::ALL {
        if let Some(c) = xyz_columns(&cols, mk.name()) {
            markers.insert(mk, table.rows.iter().map(|r| Point::new(r[c[0]], r[c[1]], r[c[2]])).collect());
        }
    }
    if markers.is_empty() {
        return Err(IngestError::MalformedHeader("no known marker columns".into()));
    }
    Ok(MocapRecording {
        nominal_rate: meta.nominal_rate,
        participant_id: meta.participant_id.clone(),
        trial_id: meta.trial_id.clone(),
        times: table.rows.iter().map(|r| r[0]).collect(),
        markers,
    })
}

pub fn write_mocap_csv<W: Write>(out: W, rec: &MocapRecording) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for mk in rec.markers.keys() {
        for axis in ["x", "y", "z"] {
            header.push(format!("{}_{axis}", mk.name()));
        }
    }
    w.write_record(&header)?;
    for (i, t) in rec.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for track in rec.markers.values() {
            row.extend(track[i].iter().map(|c| c.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MocapFormat {
    /// Already reduced to the 15-landmark skeleton.
    #[default]
    Landmarks,
    /// Raw Plug-in-Gait marker trajectories.
    Markers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub participant_id: String,
    pub trial_id: String,
    pub camera_file: PathBuf,
    pub mocap_file: PathBuf,
    #[serde(default)]
    pub mocap_format: MocapFormat,
}

/// List of paired recordings. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default = "default_camera_rate")]
    pub camera_rate: f64,
    #[serde(default = "default_mocap_rate")]
    pub mocap_rate: f64,
    /// Free-form provenance (config hash, seeds).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
    pub entries: Vec<ManifestEntry>,
}

fn default_camera_rate() -> f64 {
    30.0
}

fn default_mocap_rate() -> f64 {
    120.0
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Manifest, IngestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, IngestError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Piecewise-linear resampling of every coordinate at `query_times`.
/// Queries outside the source span are dropped; the count is returned.
pub fn interpolate_to(src: &LandmarkRecording, query_times: &[f64]) -> Result<(LandmarkRecording, usize), IngestError> {
    let (first, last) = match (src.times.first(), src.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(IngestError::Empty),
    };
    let mut times = Vec::with_capacity(query_times.len());
    let mut poses = Vec::with_capacity(query_times.len());
    let mut dropped = 0;
    for &q in query_times {
        if !(q >= first && q <= last) {
            dropped += 1;
            continue;
        }
        poses.push(pose_at(src, q));
        times.push(q);
    }
    if times.is_empty() {
        return Err(IngestError::NoQueryInRange { first, last });
    }
    Ok((
        LandmarkRecording {
            source: src.source,
            nominal_rate: src.nominal_rate,
            participant_id: src.participant_id.clone(),
            trial_id: src.trial_id.clone(),
            times,
            poses,
        },
        dropped,
    ))
}

/// Linear interpolation of the pose at `t`, clamped to the recording span.
pub fn pose_at(src: &LandmarkRecording, t: f64) -> Pose {
    let ts = &src.times;
    let j = ts.partition_point(|&x| x < t);
    if j < ts.len() && ts[j] == t {
        return src.poses[j];
    }
    if j == 0 {
        return src.poses[0];
    }
    if j >= ts.len() {
        return src.poses[ts.len() - 1];
    }
    let (t0, t1) = (ts[j - 1], ts[j]);
    let w = (t - t0) / (t1 - t0);
    let (a, b) = (&src.poses[j - 1], &src.poses[j]);
    let mut out = *a;
    for k in 0..LANDMARK_COUNT {
        out[k] = a[k] + (b[k] - a[k]) * w;
    }
    out
}

/// Camera and mocap recordings on one shared timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedPair {
    pub camera: LandmarkRecording,
    pub mocap: LandmarkRecording,
    /// First heel strike in the camera's original clock.
    pub sync_event_time: f64,
    /// Amount added to mocap timestamps (mocap_hs -> camera_hs) before shifting both to 0.
    pub mocap_shift: f64,
    pub dropped_queries: usize,
}

impl SyncedPair {
    pub fn times(&self) -> &[f64] {
        &self.camera.times
    }
}

fn shifted(rec: &LandmarkRecording, by: f64) -> LandmarkRecording {
    let mut out = rec.clone();
    for t in &mut out.times {
        *t -= by;
    }
    out
}

/// Align both recordings on their first heel strike (t = 0), cut to the
/// end of the mocap data, and resample mocap onto the camera timestamps.
///
/// `first_heel_strike` is applied to each source independently.
pub fn synchronize<F>(
    camera: &LandmarkRecording,
    mocap: &LandmarkRecording,
    first_heel_strike: F,
) -> Result<SyncedPair, IngestError>
where
    F: Fn(&LandmarkRecording) -> Option<f64>,
{
    let hs_c = first_heel_strike(camera).ok_or(IngestError::NoHeelStrike("camera"))?;
    let hs_m = first_heel_strike(mocap).ok_or(IngestError::NoHeelStrike("mocap"))?;
    let cam = shifted(camera, hs_c);
    let moc = shifted(mocap, hs_m);
    let end = *moc.times.last().ok_or(IngestError::Empty)?;
    let keep: Vec<usize> = (0..cam.len()).filter(|&i| cam.times[i] >= 0.0 && cam.times[i] <= end).collect();
    if keep.is_empty() {
        return Err(IngestError::EmptyOverlap);
    }
    let cam = LandmarkRecording {
        times: keep.iter().map(|&i| cam.times[i]).collect(),
        poses: keep.iter().map(|&i| cam.poses[i]).collect(),
        ..cam
    };
    let (mut moc_on_cam, dropped) = interpolate_to(&moc, &cam.times)?;
    if moc_on_cam.len() != cam.len() {
        return Err(IngestError::EmptyOverlap);
    }
    moc_on_cam.times = cam.times.clone();
    moc_on_cam.nominal_rate = cam.nominal_rate;
    Ok(SyncedPair {
        camera: cam,
        mocap: moc_on_cam,
        sync_event_time: hs_c,
        mocap_shift: hs_c - hs_m,
        dropped_queries: dropped,
    })
}

/// Filter every coordinate of every landmark.
pub fn lowpass_recording(rec: &LandmarkRecording, spec: &FilterSpec) -> Result<LandmarkRecording, IngestError> {
    let mut out = rec.clone();
    let mut series = vec![0.0; rec.len()];
    for k in 0..LANDMARK_COUNT {
        for axis in 0..3 {
            for (v, pose) in series.iter_mut().zip(&rec.poses) {
                *v = pose[k][axis];
            }
            let y = lowpass(&series, rec.nominal_rate, spec)?;
            for (pose, v) in out.poses.iter_mut().zip(y) {
                pose[k][axis] = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RecordingMeta {
        RecordingMeta { source: Source::Camera, nominal_rate: 30.0, participant_id: "P01".into(), trial_id: "T1".into() }
    }

    fn csv_text(times: &[f64], skip: Option<Landmark>) -> String {
        let mut header = vec!["t".to_string()];
        for lm in Landmark::ALL.into_iter().filter(|l| Some(*l) != skip) {
            for a in ["x", "y", "z"] {
                header.push(format!("{}_{a}", lm.name()));
            }
        }
        let mut s = header.join(",") + "\n";
        for (i, t) in times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for c in 1..header.len() {
                row.push(format!("{}", c as f64 * 0.01 + i as f64));
            }
            s += &(row.join(",") + "\n");
        }
        s
    }

    fn recording(times: Vec<f64>, f: impl Fn(f64) -> f64) -> LandmarkRecording {
        let poses = times
            .iter()
            .map(|&t| {
                let mut p = [Point::zeros(); LANDMARK_COUNT];
                for (k, q) in p.iter_mut().enumerate() {
                    *q = Point::new(f(t) + k as f64, 2.0 * f(t), -f(t));
                }
                p
            })
            .collect();
        LandmarkRecording { source: Source::Camera, nominal_rate: 30.0, participant_id: "p".into(), trial_id: "t".into(), times, poses }
    }

    #[test]
    fn parses_two_rows() {
        let text = csv_text(&[0.0, 1.0 / 30.0], None);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 46);
        let r = parse_landmark_csv(text.as_bytes(), &meta()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.position(Landmark::SpineBase, 0), Point::new(0.01, 0.02, 0.03));
        assert!(r.validate().is_ok());
    }

    #[test]
    fn missing_landmark_columns_named() {
        let text = csv_text(&[0.0, 0.1], Some(Landmark::LeftAnkle));
        let err = parse_landmark_csv(text.as_bytes(), &meta()).unwrap_err();
        assert!(matches!(&err, IngestError::MissingColumns(n) if n == "left_ankle"), "{err}");
    }

    #[test]
    fn non_monotone_time_reported_at_row_two() {
        let text = csv_text(&[0.2, 0.1], None);
        let err = parse_landmark_csv(text.as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotone { row: 2 }), "{err}");
    }

    #[test]
    fn non_numeric_cell_located() {
        let text = csv_text(&[0.0, 0.1], None).replacen("1.08", "abc", 1);
        let err = parse_landmark_csv(text.as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, IngestError::NonNumeric { row: 2, .. }), "{err}");
    }

    #[test]
    fn csv_write_parse_round_trip() {
        let rec = recording((0..20).map(|i| i as f64 / 30.0).collect(), |t| (3.0 * t).sin() * 0.123456789);
        let mut buf = Vec::new();
        write_landmark_csv(&mut buf, &rec, &["config_hash=abc".into()]).unwrap();
        let back = parse_landmark_csv(buf.as_slice(), &meta()).unwrap();
        assert_eq!(back.times, rec.times);
        assert_eq!(back.poses, rec.poses);
    }

    #[test]
    fn mocap_csv_round_trip() {
        let mut markers = BTreeMap::new();
        for mk in Marker::required() {
            markers.insert(mk, vec![Point::new(0.1, 0.2, 0.3), Point::new(0.4, f64::NAN, 0.6)]);
        }
        let m = MocapRecording { nominal_rate: 120.0, participant_id: "p".into(), trial_id: "t".into(), times: vec![0.0, 0.5], markers };
        let mut buf = Vec::new();
        write_mocap_csv(&mut buf, &m).unwrap();
        let back = parse_mocap_csv(buf.as_slice(), &meta()).unwrap();
        assert_eq!(back.markers.len(), 26);
        assert!(back.markers[&Marker::Lasi][1].y.is_nan());
        assert_eq!(back.markers[&Marker::Lasi][0], Point::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn interpolation_basics() {
        let src = recording(vec![0.0, 1.0], |t| 10.0 * t);
        let (out, dropped) = interpolate_to(&src, &[0.5, 1.0, 2.0, -1.0]).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(out.times, vec![0.5, 1.0]);
        assert_eq!(out.poses[0][0].x, 5.0);
        assert_eq!(out.poses[1], src.poses[1]);
        assert!(matches!(interpolate_to(&src, &[3.0]), Err(IngestError::NoQueryInRange { .. })));
    }

    #[test]
    fn sinusoid_resampling_within_linear_bound() {
        let f = 1.3;
        let w = 2.0 * std::f64::consts::PI * f;
        let src = recording((0..1200).map(|i| i as f64 / 120.0).collect(), |t| (w * t).sin());
        let q: Vec<f64> = (0..290).map(|i| i as f64 / 30.0 + 0.004).collect();
        let (out, _) = interpolate_to(&src, &q).unwrap();
        // |error| <= h^2 max|f''| / 8 with h = 1/120, max|f''| = w^2
        let bound = (1.0 / 120.0f64).powi(2) * w * w / 8.0;
        for (t, pose) in out.times.iter().zip(&out.poses) {
            assert!((pose[0].x - (w * t).sin()).abs() <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn synchronize_aligns_first_heel_strikes() {
        let cam = recording((0..90).map(|i| i as f64 / 30.0).collect(), |t| t);
        let moc = recording((0..600).map(|i| i as f64 / 120.0).collect(), |t| t + 1.5);
        let pair = synchronize(&cam, &moc, |r| Some(if r.nominal_rate == 30.0 && r.len() == 90 { 1.0 } else { 2.5 }))
            .unwrap();
        assert_eq!(pair.times()[0], 0.0);
        assert_eq!(pair.mocap_shift, -1.5);
        assert_eq!(pair.camera.times, pair.mocap.times);
        // camera at t (shifted) saw value t + 1; mocap at t (shifted) saw t + 2.5 + 1.5
        assert!((pair.mocap.poses[3][0].x - (pair.times()[3] + 4.0)).abs() < 1e-12);
        assert!(*pair.times().last().unwrap() <= 599.0 / 120.0 - 2.5 + 1e-12);
    }

    #[test]
    fn synchronize_identical_is_identity() {
        let rec = recording((0..90).map(|i| i as f64 / 30.0).collect(), |t| t.sin());
        let pair = synchronize(&rec, &rec, |_| Some(0.5)).unwrap();
        assert_eq!(pair.mocap_shift, 0.0);
        assert_eq!(pair.camera.poses, pair.mocap.poses);
    }

    #[test]
    fn synchronize_without_events_fails() {
        let rec = recording(vec![0.0, 0.1, 0.2], |t| t);
        let err = synchronize(&rec, &rec, |r| if r.nominal_rate > 0.0 { None } else { Some(0.0) }).unwrap_err();
        assert!(matches!(err, IngestError::NoHeelStrike("camera")));
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = Manifest {
            camera_rate: 30.0,
            mocap_rate: 120.0,
            provenance: BTreeMap::from([("seed".into(), "7".into())]),
            entries: vec![ManifestEntry {
                participant_id: "P01".into(),
                trial_id: "T1".into(),
                camera_file: "cam.csv".into(),
                mocap_file: "moc.csv".into(),
                mocap_format: MocapFormat::Markers,
            }],
        };
        assert_eq!(Manifest::from_json(&m.to_json().unwrap()).unwrap(), m);
        let minimal = r#"{"entries":[{"participant_id":"a","trial_id":"b","camera_file":"c","mocap_file":"d"}]}"#;
        let m = Manifest::from_json(minimal).unwrap();
        assert_eq!(m.entries[0].mocap_format, MocapFormat::Landmarks);
        assert_eq!(m.camera_rate, 30.0);
    }
}
