//! End-to-end processing of paired camera/mocap trials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{cycle_descriptors, CycleDescriptors, DescriptorConfig, DescriptorError, DESCRIPTOR_COUNT};
use crate::evaluate::{convention_notes, descriptor_entries, signal_entry, DescriptorSamples, EvalError, EvalReport, SignalSeries};
use crate::events::{detect_events_with, inter_ankle_along, walking_direction, EventConfig, EventError, GaitEvents};
use crate::exec::Execution;
use crate::ingest::{lowpass_recording, synchronize, FilterSpec, IngestError, SyncedPair};
use crate::kinematics::{extract_signals_with, KinematicSignals, KinematicsError, SignalName};
use crate::learning::{
    apply_descriptor_correction, apply_signal_correction, hold_out_participants, match_cycles, train_descriptor_models,
    train_signal_models, CorrectionModelSet, DescriptorPair, HoldOut, LearningConfig, LearningError, SignalPair,
};
use crate::model::{LandmarkRecording, Point};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Events(#[from] EventError),
    #[error(transparent)]
    Descriptors(#[from] DescriptorError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{participant}/{trial}: {source}")]
    Trial { participant: String, trial: String, source: Box<PipelineError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Applied to the camera landmarks after synchronisation.
    pub filter: Option<FilterSpec>,
    pub events: EventConfig,
    pub descriptors: DescriptorConfig,
    pub learning: LearningConfig,
    /// Largest start-time difference for matching camera and mocap cycles, s.
    pub cycle_tolerance: f64,
    pub holdout_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            filter: Some(FilterSpec::default()),
            events: EventConfig::default(),
            descriptors: DescriptorConfig::default(),
            learning: LearningConfig::default(),
            cycle_tolerance: 0.25,
            holdout_seed: 1,
        }
    }
}

/// Landmarks, signals and events of one source on the shared timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceView {
    pub recording: LandmarkRecording,
    pub signals: KinematicSignals,
    pub events: GaitEvents,
    pub direction: Point,
}

impl SourceView {
    pub fn build(recording: LandmarkRecording, cfg: &PipelineConfig, exec: Execution) -> Result<SourceView, PipelineError> {
        let direction = walking_direction(&recording)?;
        let ia = inter_ankle_along(&recording, direction);
        let events = detect_events_with(&ia.times, &ia.values, &cfg.events)?;
        let signals = extract_signals_with(&recording, exec)?;
        Ok(SourceView { recording, signals, events, direction })
    }

    /// Per-cycle descriptors using `signals` in place of the view's own.
    pub fn cycles_with(&self, signals: &KinematicSignals, cfg: &PipelineConfig) -> Result<Vec<CycleDescriptors>, PipelineError> {
        Ok(cycle_descriptors(&self.recording, signals, &self.events, &self.direction, &cfg.descriptors)?)
    }

    pub fn cycles(&self, cfg: &PipelineConfig) -> Result<Vec<CycleDescriptors>, PipelineError> {
        self.cycles_with(&self.signals, cfg)
    }
}

/// One synchronised trial ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrial {
    pub participant_id: String,
    pub trial_id: String,
    /// Filtered camera data.
    pub camera: SourceView,
    /// Mocap at its own rate, shifted onto the shared timeline.
    pub mocap: SourceView,
    /// Mocap joint angles resampled at the camera timestamps.
    pub mocap_on_camera: KinematicSignals,
    pub sync_event_time: f64,
    pub mocap_shift: f64,
    pub dropped_queries: usize,
}

/// First left heel strike detected with `cfg`, used to align two recordings.
pub fn first_left_hs(rec: &LandmarkRecording, cfg: &EventConfig) -> Option<f64> {
    let dir = walking_direction(rec).ok()?;
    let ia = inter_ankle_along(rec, dir);
    detect_events_with(&ia.times, &ia.values, cfg).ok()?.left_heel_strikes.first().copied()
}

pub fn prepare_trial(
    camera: &LandmarkRecording,
    mocap: &LandmarkRecording,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<PreparedTrial, PipelineError> {
    let wrap = |e: PipelineError| PipelineError::Trial {
        participant: camera.participant_id.clone(),
        trial: camera.trial_id.clone(),
        source: Box::new(e),
    };
    let inner = || -> Result<PreparedTrial, PipelineError> {
        let synced: SyncedPair = synchronize(camera, mocap, |r| first_left_hs(r, &cfg.events))?;
        let cam = match &cfg.filter {
            Some(spec) => lowpass_recording(&synced.camera, spec)?,
            None => synced.camera.clone(),
        };
        let hs_m = synced.sync_event_time - synced.mocap_shift;
        let mut native = mocap.clone();
        for t in &mut native.times {
            *t -= hs_m;
        }
        let camera_view = SourceView::build(cam, cfg, exec)?;
        let mocap_view = SourceView::build(native, cfg, exec)?;
        let mocap_on_camera = extract_signals_with(&synced.mocap, exec)?;
        Ok(PreparedTrial {
            participant_id: camera.participant_id.clone(),
            trial_id: camera.trial_id.clone(),
            camera: camera_view,
            mocap: mocap_view,
            mocap_on_camera,
            sync_event_time: synced.sync_event_time,
            mocap_shift: synced.mocap_shift,
            dropped_queries: synced.dropped_queries,
        })
    };
    inner().map_err(wrap)
}

/// Prepare many trials; the first failure (in input order) is reported.
pub fn prepare_all(
    pairs: &[(LandmarkRecording, LandmarkRecording)],
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Vec<PreparedTrial>, PipelineError> {
    exec.try_map(pairs, |(c, m)| prepare_trial(c, m, cfg, Execution::Sequential))
}

pub fn signal_pairs<'a>(trials: impl IntoIterator<Item = &'a PreparedTrial>) -> Vec<SignalPair> {
    trials
        .into_iter()
        .map(|t| SignalPair {
            participant_id: t.participant_id.clone(),
            trial_id: t.trial_id.clone(),
            camera: t.camera.signals.clone(),
            mocap: t.mocap_on_camera.clone(),
        })
        .collect()
}

/// Camera and mocap descriptors of matching cycles.
pub fn descriptor_pairs<'a>(
    trials: impl IntoIterator<Item = &'a PreparedTrial>,
    cfg: &PipelineConfig,
) -> Result<Vec<DescriptorPair>, PipelineError> {
    let mut out = Vec::new();
    for t in trials {
        let c = t.camera.cycles(cfg)?;
        let v = t.mocap.cycles(cfg)?;
        for (cc, vc) in match_cycles(&c, &v, cfg.cycle_tolerance) {
            out.push(DescriptorPair {
                participant_id: t.participant_id.clone(),
                trial_id: t.trial_id.clone(),
                cycle_start: cc.start,
                camera: cc.values,
                mocap: vc.values,
            });
        }
    }
    Ok(out)
}

/// Per-trial contribution to the four-way report.
struct TrialEval {
    series: Vec<SignalSeries>,
    cycles: Vec<[[f64; DESCRIPTOR_COUNT]; 4]>,
    extrapolated: [usize; DESCRIPTOR_COUNT],
}

fn evaluate_trial(
    t: &PreparedTrial,
    signal_models: &CorrectionModelSet,
    descriptor_models: &CorrectionModelSet,
    cfg: &PipelineConfig,
) -> Result<TrialEval, PipelineError> {
    let corrected = apply_signal_correction(signal_models, &t.camera.signals)?;
    let series = SignalName::ALL
        .iter()
        .map(|&name| {
            let pick = |s: &KinematicSignals| name.sides().iter().map(|&side| s.get(name, side).unwrap().to_vec()).collect();
            SignalSeries { raw: pick(&t.camera.signals), corrected: pick(&corrected), reference: pick(&t.mocap_on_camera) }
        })
        .collect();
    let c = t.camera.cycles(cfg)?;
    let cts = t.camera.cycles_with(&corrected, cfg)?;
    let v = t.mocap.cycles(cfg)?;
    let mut cycles = Vec::new();
    let mut extrapolated = [0; DESCRIPTOR_COUNT];
    for (cc, vc) in match_cycles(&c, &v, cfg.cycle_tolerance) {
        let Some(ts) = cts.iter().find(|x| x.start == cc.start) else { continue };
        let td = apply_descriptor_correction(descriptor_models, &cc.values)?;
        for d in &td.extrapolated {
            extrapolated[d.index()] += 1;
        }
        cycles.push([vc.values.0, cc.values.0, ts.values.0, td.values.0]);
    }
    Ok(TrialEval { series, cycles, extrapolated })
}

/// Compare V, C, CTs and CTd on re-test trials. Fails if any trial's
/// participant contributed to either model set.
pub fn four_way_report(
    retest: &[&PreparedTrial],
    signal_models: &CorrectionModelSet,
    descriptor_models: &CorrectionModelSet,
    cfg: &PipelineConfig,
    mut header: BTreeMap<String, String>,
    exec: Execution,
) -> Result<EvalReport, PipelineError> {
    let ids: Vec<&str> = retest.iter().map(|t| t.participant_id.as_str()).collect();
    signal_models.check_leakage(&ids)?;
    descriptor_models.check_leakage(&ids)?;
    let per_trial = exec.try_map(retest, |t| {
        evaluate_trial(t, signal_models, descriptor_models, cfg).map_err(|e| PipelineError::Trial {
            participant: t.participant_id.clone(),
            trial: t.trial_id.clone(),
            source: Box::new(e),
        })
    })?;
    let mut samples = DescriptorSamples::default();
    for te in &per_trial {
        if te.cycles.is_empty() {
            continue;
        }
        let n = te.cycles.len() as f64;
        let mut mean = [[0.0; DESCRIPTOR_COUNT]; 4];
        for c in &te.cycles {
            for e in 0..4 {
                for k in 0..DESCRIPTOR_COUNT {
                    mean[e][k] += c[e][k] / n;
                }
            }
        }
        samples.recordings.push(mean);
        samples.cycles.extend_from_slice(&te.cycles);
        for k in 0..DESCRIPTOR_COUNT {
            samples.extrapolated[k] += te.extrapolated[k];
        }
    }
    let signals = SignalName::ALL
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let series: Vec<SignalSeries> = per_trial.iter().map(|te| te.series[k].clone()).collect();
            signal_entry(name, &series)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (k, v) in convention_notes() {
        header.entry(k).or_insert(v);
    }
    let mut participants: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    participants.sort();
    participants.dedup();
    Ok(EvalReport {
        header,
        retest_participants: participants,
        recordings: samples.recordings.len(),
        cycles: samples.cycles.len(),
        signals,
        descriptors: descriptor_entries(&samples)?,
    })
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub holdout: HoldOut,
    pub signal_models: CorrectionModelSet,
    pub descriptor_models: CorrectionModelSet,
    pub report: EvalReport,
}

/// Hold out participants, train both model sets on the rest and report on
/// the held-out trials.
pub fn run_experiment(
    trials: &[PreparedTrial],
    cfg: &PipelineConfig,
    header: BTreeMap<String, String>,
    exec: Execution,
) -> Result<ExperimentResult, PipelineError> {
    let ids: Vec<&str> = trials.iter().map(|t| t.participant_id.as_str()).collect();
    let holdout = hold_out_participants(&ids, cfg.learning.holdout_fraction, cfg.holdout_seed)?;
    let (learn, retest): (Vec<&PreparedTrial>, Vec<&PreparedTrial>) =
        trials.iter().partition(|t| holdout.learning.contains(&t.participant_id));
    let signal_models = train_signal_models(&signal_pairs(learn.iter().copied()), &cfg.learning, &holdout.retest, exec)?;
    let rows = descriptor_pairs(learn.iter().copied(), cfg)?;
    let descriptor_models = train_descriptor_models(&rows, &cfg.learning, &holdout.retest, exec)?;
    let report = four_way_report(&retest, &signal_models, &descriptor_models, cfg, header, exec)?;
    Ok(ExperimentResult { holdout, signal_models, descriptor_models, report })
}
