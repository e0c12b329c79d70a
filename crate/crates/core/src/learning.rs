//! Training and applying correction models.
//!
//! Two approaches share the same network trainer: one network per joint
//! signal fed with short windows of the camera signal, and one
//! single-input network per gait descriptor.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{CycleDescriptors, Descriptor, DescriptorVector, DESCRIPTOR_COUNT};
use crate::exec::Execution;
use crate::kinematics::{KinematicSignals, SignalName};
use crate::neuralnet::{train, Dataset, MlpSpec, ModelFile, NnError, TrainConfig};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("window width {width} exceeds signal length {len}")]
    WindowTooWide { width: usize, len: usize },
    #[error("window width must be at least 1")]
    ZeroWidth,
    #[error("{found} participants, need at least {min}")]
    TooFewParticipants { found: usize, min: usize },
    #[error("{found} paired cycles, need at least {min}")]
    TooFewCycles { found: usize, min: usize },
    #[error("signal of {len} samples is shorter than the window ({width})")]
    SignalTooShort { len: usize, width: usize },
    #[error("no model for '{0}'")]
    UnknownName(String),
    #[error("model set is for {found:?}, expected {expected:?}")]
    WrongMode { found: CorrectionMode, expected: CorrectionMode },
    #[error("camera and mocap signals differ in length ({camera} vs {mocap}) for {participant}/{trial}")]
    Misaligned { participant: String, trial: String, camera: usize, mocap: usize },
    #[error("training failed for {}", .0.iter().map(|(n, e)| format!("{n}: {e}")).collect::<Vec<_>>().join("; "))]
    Training(Vec<(String, NnError)>),
    #[error("participant '{0}' is both held out and part of the training data")]
    Leakage(String),
}

/// Which sample of a window the target is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Last,
    Center,
}

impl Alignment {
    /// Target offset inside a window of width `w`.
    pub fn offset(self, w: usize) -> usize {
        match self {
            Alignment::Last => w - 1,
            Alignment::Center => (w - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub window: usize,
    pub alignment: Alignment,
    pub holdout_fraction: f64,
    pub train: TrainConfig,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig { window: 3, alignment: Alignment::Last, holdout_fraction: 0.2, train: TrainConfig::default() }
    }
}

/// Rows `[s_i, ..., s_{i+W-1}]` for every admissible start `i`.
pub fn window(signal: &[f64], w: usize) -> Result<DMatrix<f64>, LearningError> {
    if w == 0 {
        return Err(LearningError::ZeroWidth);
    }
    if w > signal.len() {
        return Err(LearningError::WindowTooWide { width: w, len: signal.len() });
    }
    Ok(DMatrix::from_fn(signal.len() - w + 1, w, |i, j| signal[i + j]))
}

/// Where a training row came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowProvenance {
    pub participant_id: String,
    pub trial_id: String,
    pub side: crate::kinematics::Side,
    /// First sample of the input window.
    pub start: usize,
    /// Sample the target was taken from.
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub width: usize,
    pub data: Dataset,
    pub provenance: Vec<RowProvenance>,
}

/// Joint-angle signals of both systems for one recording, on one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPair {
    pub participant_id: String,
    pub trial_id: String,
    pub camera: KinematicSignals,
    pub mocap: KinematicSignals,
}

/// Windows of the camera signal with mocap targets, pooled over sides and
/// recordings. Windows never span two recordings.
pub fn signal_dataset(
    pairs: &[SignalPair],
    name: SignalName,
    width: usize,
    alignment: Alignment,
) -> Result<WindowedDataset, LearningError> {
    if width == 0 {
        return Err(LearningError::ZeroWidth);
    }
    let mut data = Dataset::new(width);
    let mut provenance = Vec::new();
    let off = alignment.offset(width);
    for p in pairs {
        if p.camera.len() != p.mocap.len() {
            return Err(LearningError::Misaligned {
                participant: p.participant_id.clone(),
                trial: p.trial_id.clone(),
                camera: p.camera.len(),
                mocap: p.mocap.len(),
            });
        }
        for &side in name.sides() {
            let cam = p.camera.get(name, side).ok_or_else(|| LearningError::UnknownName(name.name().into()))?;
            let moc = p.mocap.get(name, side).ok_or_else(|| LearningError::UnknownName(name.name().into()))?;
            if cam.len() < width {
                continue;
            }
            for start in 0..=cam.len() - width {
                data.push(&cam[start..start + width], moc[start + off]);
                provenance.push(RowProvenance {
                    participant_id: p.participant_id.clone(),
                    trial_id: p.trial_id.clone(),
                    side,
                    start,
                    target: start + off,
                });
            }
        }
    }
    Ok(WindowedDataset { width, data, provenance })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldOut {
    pub learning: Vec<String>,
    pub retest: Vec<String>,
}

pub const MIN_PARTICIPANTS: usize = 5;

/// Participant-level split. `round-half-up(fraction * n)` participants
/// (at least one) are held out; ids are deduplicated and sorted first so the
/// result depends only on the set of ids and the seed.
pub fn hold_out_participants<S: AsRef<str>>(ids: &[S], fraction: f64, seed: u64) -> Result<HoldOut, LearningError> {
    let mut uniq: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    if uniq.len() < MIN_PARTICIPANTS {
        return Err(LearningError::TooFewParticipants { found: uniq.len(), min: MIN_PARTICIPANTS });
    }
    let n_hold = ((fraction * uniq.len() as f64 + 0.5).floor() as usize).clamp(1, uniq.len() - 1);
    uniq.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut retest = uniq[..n_hold].to_vec();
    let mut learning = uniq[n_hold..].to_vec();
    retest.sort();
    learning.sort();
    Ok(HoldOut { learning, retest })
}

pub use crate::neuralnet::{split_rows, SplitAssignment, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    Signals,
    Descriptors,
}

/// Trained networks keyed by signal or descriptor name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionModelSet {
    pub version: u32,
    pub mode: CorrectionMode,
    /// Window width (1 for descriptors).
    pub window: usize,
    pub alignment: Alignment,
    pub models: BTreeMap<String, ModelFile>,
    /// Participants whose recordings fed training, validation or test rows.
    pub training_participants: Vec<String>,
    pub holdout_participants: Vec<String>,
    /// Free-form run metadata (config hash, seeds).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

pub const MODEL_SET_VERSION: u32 = 1;

impl CorrectionModelSet {
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<CorrectionModelSet, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn expect(&self, mode: CorrectionMode) -> Result<(), LearningError> {
        if self.mode != mode {
            return Err(LearningError::WrongMode { found: self.mode, expected: mode });
        }
        Ok(())
    }

    fn model(&self, name: &str) -> Result<&ModelFile, LearningError> {
        self.models.get(name).ok_or_else(|| LearningError::UnknownName(name.to_string()))
    }

    /// Fails if any of `retest` contributed to training.
    pub fn check_leakage<S: AsRef<str>>(&self, retest: &[S]) -> Result<(), LearningError> {
        for id in retest {
            if self.training_participants.iter().any(|p| p == id.as_ref()) {
                return Err(LearningError::Leakage(id.as_ref().to_string()));
            }
        }
        Ok(())
    }
}

fn participants_of<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    ids.map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect()
}

fn collect_models(
    results: Vec<(String, Result<ModelFile, NnError>)>,
) -> Result<BTreeMap<String, ModelFile>, LearningError> {
    let mut models = BTreeMap::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(m) => {
                models.insert(name, m);
            }
            Err(e) => failures.push((name, e)),
        }
    }
    if failures.is_empty() {
        Ok(models)
    } else {
        Err(LearningError::Training(failures))
    }
}

/// One network per signal name, trained on pooled left/right windows.
/// `pairs` must contain learning participants only.
pub fn train_signal_models(
    pairs: &[SignalPair],
    cfg: &LearningConfig,
    holdout: &[String],
    exec: Execution,
) -> Result<CorrectionModelSet, LearningError> {
    let datasets = SignalName::ALL
        .iter()
        .map(|&name| signal_dataset(pairs, name, cfg.window, cfg.alignment))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, &WindowedDataset)> = datasets.iter().enumerate().collect();
    let results = exec.map(&jobs, |&(k, ds)| {
        let tc = TrainConfig { seed: cfg.train.seed.wrapping_add(k as u64), ..cfg.train };
        let r = train(MlpSpec::standard(cfg.window), &ds.data, &tc).map(|(net, h)| ModelFile::new(net, tc.seed, &h));
        (SignalName::ALL[k].name().to_string(), r)
    });
    Ok(CorrectionModelSet {
        version: MODEL_SET_VERSION,
        mode: CorrectionMode::Signals,
        window: cfg.window,
        alignment: cfg.alignment,
        models: collect_models(results)?,
        training_participants: participants_of(pairs.iter().map(|p| p.participant_id.as_str())),
        holdout_participants: holdout.to_vec(),
        provenance: BTreeMap::new(),
    })
}

/// Run a window network along a signal. Output has the input's length;
/// samples without a full window see the first (and, for centred windows,
/// last) sample replicated outward.
pub fn correct_series(
    model: &ModelFile,
    width: usize,
    alignment: Alignment,
    values: &[f64],
) -> Result<Vec<f64>, LearningError> {
    if values.len() < width {
        return Err(LearningError::SignalTooShort { len: values.len(), width });
    }
    let before = alignment.offset(width);
    let after = width - 1 - before;
    let mut padded = Vec::with_capacity(values.len() + width - 1);
    padded.extend(std::iter::repeat_n(values[0], before));
    padded.extend_from_slice(values);
    padded.extend(std::iter::repeat_n(*values.last().unwrap(), after));
    Ok((0..values.len()).map(|i| model.net.forward(&padded[i..i + width])).collect())
}

/// Correct every channel of a recording's signals.
pub fn apply_signal_correction(
    set: &CorrectionModelSet,
    raw: &KinematicSignals,
) -> Result<KinematicSignals, LearningError> {
    set.expect(CorrectionMode::Signals)?;
    let mut out = raw.clone();
    for s in &mut out.signals {
        let m = set.model(s.name.name())?;
        s.values = correct_series(m, set.window, set.alignment, &s.values)?;
    }
    Ok(out)
}

/// Camera and mocap descriptors of the same gait cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorPair {
    pub participant_id: String,
    pub trial_id: String,
    pub cycle_start: f64,
    pub camera: DescriptorVector,
    pub mocap: DescriptorVector,
}

/// Match cycles of the two systems by start time (nearest within `tol` seconds).
pub fn match_cycles(
    camera: &[CycleDescriptors],
    mocap: &[CycleDescriptors],
    tol: f64,
) -> Vec<(CycleDescriptors, CycleDescriptors)> {
    let mut out = Vec::new();
    for c in camera {
        let best = mocap
            .iter()
            .map(|m| ((m.start - c.start).abs(), m))
            .filter(|(d, _)| *d <= tol)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, m)) = best {
            out.push((*c, *m));
        }
    }
    out
}

pub const MIN_CYCLES: usize = 10;

/// One single-input network per descriptor. All descriptors use the same
/// seed, so the 60/20/20 split assigns each cycle to the same subset for
/// every descriptor.
pub fn train_descriptor_models(
    rows: &[DescriptorPair],
    cfg: &LearningConfig,
    holdout: &[String],
    exec: Execution,
) -> Result<CorrectionModelSet, LearningError> {
    if rows.len() < MIN_CYCLES {
        return Err(LearningError::TooFewCycles { found: rows.len(), min: MIN_CYCLES });
    }
    let results = exec.map(&Descriptor::ALL, |&d| {
        let mut ds = Dataset::new(1);
        for r in rows {
            ds.push(&[r.camera.get(d)], r.mocap.get(d));
        }
        let r = train(MlpSpec::standard(1), &ds, &cfg.train).map(|(net, h)| ModelFile::new(net, cfg.train.seed, &h));
        (d.name().to_string(), r)
    });
    Ok(CorrectionModelSet {
        version: MODEL_SET_VERSION,
        mode: CorrectionMode::Descriptors,
        window: 1,
        alignment: Alignment::Last,
        models: collect_models(results)?,
        training_participants: participants_of(rows.iter().map(|r| r.participant_id.as_str())),
        holdout_participants: holdout.to_vec(),
        provenance: BTreeMap::new(),
    })
}

/// Corrected descriptors plus those whose input fell outside the training range.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedDescriptors {
    pub values: DescriptorVector,
    pub extrapolated: Vec<Descriptor>,
}

pub fn apply_descriptor_correction(
    set: &CorrectionModelSet,
    v: &DescriptorVector,
) -> Result<CorrectedDescriptors, LearningError> {
    set.expect(CorrectionMode::Descriptors)?;
    let mut out = DescriptorVector([0.0; DESCRIPTOR_COUNT]);
    let mut extrapolated = Vec::new();
    for d in Descriptor::ALL {
        let m = set.model(d.name())?;
        let x = v.get(d);
        let (lo, hi) = m.net.input_norm.range(0);
        if x < lo || x > hi {
            extrapolated.push(d);
        }
        out.set(d, m.net.forward(&[x]));
    }
    Ok(CorrectedDescriptors { values: out, extrapolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{channels, AngleSample, SIGNAL_COUNT};

    #[test]
    fn window_shapes() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = window(&s, 3).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 3));
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.row(2).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0, 5.0]);
        let m1 = window(&s, 1).unwrap();
        assert_eq!(m1.as_slice(), &s);
        let m5 = window(&s, 5).unwrap();
        assert_eq!(m5.nrows(), 1);
        assert!(matches!(window(&s, 6), Err(LearningError::WindowTooWide { .. })));
    }

    #[test]
    fn holdout_rounding() {
        let ids: Vec<String> = (0..37).map(|i| format!("P{i:02}")).collect();
        let h = hold_out_participants(&ids, 0.2, 4).unwrap();
        assert_eq!(h.retest.len(), 7);
        assert_eq!(h.learning.len() + h.retest.len(), 37);
        let five: Vec<String> = (0..5).map(|i| format!("P{i}")).collect();
        assert_eq!(hold_out_participants(&five, 0.2, 1).unwrap().retest.len(), 1);
        assert_eq!(hold_out_participants(&ids, 0.2, 4).unwrap(), h);
        assert!(hold_out_participants(&five[..4], 0.2, 1).is_err());
        // duplicates (one id per trial) collapse
        let trials: Vec<&String> = ids.iter().flat_map(|i| [i, i]).collect();
        let h2 = hold_out_participants(&trials.iter().map(|s| s.as_str()).collect::<Vec<_>>(), 0.2, 4).unwrap();
        assert_eq!(h2, h);
    }

    fn signals(n: usize, f: impl Fn(usize, usize) -> f64) -> KinematicSignals {
        let samples: Vec<AngleSample> =
            (0..n).map(|i| AngleSample { values: std::array::from_fn(|k| f(k, i)) }).collect();
        KinematicSignals::from_samples((0..n).map(|i| i as f64 / 30.0).collect(), &samples)
    }

    fn offset_pairs(offset: f64, n_rec: usize) -> Vec<SignalPair> {
        (0..n_rec)
            .map(|r| {
                let phase = r as f64 * 0.7;
                let truth = |k: usize, i: usize| 20.0 * (i as f64 / 30.0 * 6.0 + phase + k as f64).sin();
                SignalPair {
                    participant_id: format!("P{}", r % 4),
                    trial_id: format!("T{r}"),
                    camera: signals(120, |k, i| truth(k, i) + offset),
                    mocap: signals(120, truth),
                }
            })
            .collect()
    }

    #[test]
    fn provenance_alignment() {
        let pairs = offset_pairs(0.0, 2);
        for al in [Alignment::Last, Alignment::Center] {
            let ds = signal_dataset(&pairs, SignalName::KneeFlexExt, 3, al).unwrap();
            assert_eq!(ds.data.len(), 2 * 2 * 118);
            for (row, p) in ds.provenance.iter().enumerate() {
                assert_eq!(p.target, p.start + al.offset(3));
                let pair = pairs.iter().find(|q| q.trial_id == p.trial_id).unwrap();
                let moc = pair.mocap.get(SignalName::KneeFlexExt, p.side).unwrap();
                assert_eq!(ds.data.targets[row], moc[p.target]);
            }
        }
    }

    fn quick() -> LearningConfig {
        LearningConfig { train: TrainConfig { max_epochs: 60, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn constant_offset_is_learned() {
        let pairs = offset_pairs(5.0, 6);
        let set = train_signal_models(&pairs, &quick(), &[], Execution::Parallel).unwrap();
        assert_eq!(set.models.len(), 10);
        let test = offset_pairs(5.0, 8).pop().unwrap();
        let out = apply_signal_correction(&set, &test.camera).unwrap();
        for (k, (name, side)) in channels().into_iter().enumerate().take(SIGNAL_COUNT) {
            let c = &out.signals[k].values;
            let m = test.mocap.get(name, side).unwrap();
            let bias = c[2..].iter().zip(&m[2..]).map(|(a, b)| a - b).sum::<f64>() / (c.len() - 2) as f64;
            assert!(bias.abs() < 0.5, "{name} {side}: residual {bias}");
        }
    }

    #[test]
    fn padding_and_constant_signals() {
        let pairs = offset_pairs(1.0, 4);
        let set = train_signal_models(&pairs, &quick(), &[], Execution::Sequential).unwrap();
        let m = &set.models["knee_flex_ext"];
        let c = correct_series(m, 3, Alignment::Last, &[7.0; 20]).unwrap();
        assert!(c.iter().all(|&v| v == c[0]));
        let s = [1.0, 2.0, 3.0];
        let out = correct_series(m, 3, Alignment::Last, &s).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], m.net.forward(&[1.0, 1.0, 1.0]));
        assert_eq!(out[1], m.net.forward(&[1.0, 1.0, 2.0]));
        assert_eq!(out[2], m.net.forward(&[1.0, 2.0, 3.0]));
        assert!(matches!(correct_series(m, 3, Alignment::Last, &s[..2]), Err(LearningError::SignalTooShort { .. })));
    }

    #[test]
    fn descriptor_gain_is_learned_and_flags_extrapolation() {
        let rows: Vec<DescriptorPair> = (0..60)
            .map(|i| {
                let truth = DescriptorVector(std::array::from_fn(|k| 10.0 + k as f64 + (i as f64 * 0.37).sin() * 5.0));
                let cam = DescriptorVector(truth.0.map(|v| 1.2 * v + 3.0));
                DescriptorPair { participant_id: format!("P{}", i % 6), trial_id: "T".into(), cycle_start: i as f64, camera: cam, mocap: truth }
            })
            .collect();
        let set = train_descriptor_models(&rows, &quick(), &["P9".into()], Execution::Parallel).unwrap();
        assert_eq!(set.models.len(), DESCRIPTOR_COUNT);
        let r = apply_descriptor_correction(&set, &rows[3].camera).unwrap();
        for d in Descriptor::ALL {
            assert!((r.values.get(d) - rows[3].mocap.get(d)).abs() < 0.05, "{d}");
        }
        assert!(r.extrapolated.is_empty());
        let mut far = rows[3].camera;
        far.set(Descriptor::LeftCadence, 1e4);
        assert_eq!(apply_descriptor_correction(&set, &far).unwrap().extrapolated, vec![Descriptor::LeftCadence]);
        assert!(set.check_leakage(&["P9"]).is_ok());
        assert!(matches!(set.check_leakage(&["P2"]), Err(LearningError::Leakage(_))));
        assert!(matches!(apply_signal_correction(&set, &signals(5, |_, _| 0.0)), Err(LearningError::WrongMode { .. })));
        assert!(matches!(train_descriptor_models(&rows[..9], &quick(), &[], Execution::Parallel), Err(LearningError::TooFewCycles { .. })));
    }

    #[test]
    fn model_set_json_round_trip() {
        let set = train_signal_models(&offset_pairs(0.0, 2), &LearningConfig { train: TrainConfig { max_epochs: 2, ..Default::default() }, ..Default::default() }, &[], Execution::Parallel).unwrap();
        let back = CorrectionModelSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
    }
}
