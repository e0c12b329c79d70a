//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gaitcorr::descriptors::{read_descriptor_csv, recording_descriptors, write_descriptor_csv, DescriptorRow};
use gaitcorr::events::{detect_events_with, inter_ankle_along, walking_direction};
use gaitcorr::ingest::{
    interpolate_to, lowpass_recording, parse_landmark_csv, parse_mocap_csv, synchronize, write_landmark_csv, IngestError,
    Manifest, ManifestEntry, MocapFormat, RecordingMeta,
};
use gaitcorr::kinematics::{extract_signals_with, write_frames_csv, write_signals_csv};
use gaitcorr::learning::{
    apply_descriptor_correction, apply_signal_correction, hold_out_participants, train_descriptor_models,
    train_signal_models, CorrectionMode, CorrectionModelSet,
};
use gaitcorr::model::{map_mocap_to_landmarks, LandmarkRecording, Source};
use gaitcorr::pipeline::{
    descriptor_pairs, first_left_hs, four_way_report, prepare_all, signal_pairs, PipelineConfig, PreparedTrial, SourceView,
};
use gaitcorr::synth::generate_dataset;
use gaitcorr::Execution;
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Resolved configuration shared by every subcommand.
pub struct Context {
    pub cfg: RunConfig,
    pub pipeline: PipelineConfig,
    pub exec: Execution,
    pub provenance: BTreeMap<String, String>,
}

impl Context {
    fn comments(&self) -> Vec<String> {
        self.provenance.iter().map(|(k, v)| format!("{k}={v}")).collect()
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("missing {what}: {}", path.display())))
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

/// Run a writer closure against a new file, mapping I/O failures to `path`.
fn write_with<E: std::fmt::Display>(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), E>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    f(&mut out).map_err(|e| CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) })?;
    out.flush().map_err(io_err(path))
}

fn ingest_err(path: &Path, e: IngestError) -> CliError {
    match e {
        IngestError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => invalid(format!("{}: {other}", path.display())),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// How an input recording file should be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputKind {
    /// Camera landmarks (filtered when filtering is on).
    Camera,
    /// Motion-capture landmarks.
    Mocap,
    /// Raw motion-capture markers, reduced to landmarks.
    Markers,
}

pub fn load_recording(
    ctx: &Context,
    path: &Path,
    kind: InputKind,
    participant: &str,
    trial: &str,
) -> Result<LandmarkRecording, CliError> {
    require_file(path, "input file")?;
    let (source, rate) = match kind {
        InputKind::Camera => (Source::Camera, ctx.cfg.camera_rate),
        _ => (Source::MocapMapped, ctx.cfg.mocap_rate),
    };
    let meta = RecordingMeta { source, nominal_rate: rate, participant_id: participant.into(), trial_id: trial.into() };
    let file = File::open(path).map_err(io_err(path))?;
    if kind == InputKind::Markers {
        let m = parse_mocap_csv(file, &meta).map_err(|e| ingest_err(path, e))?;
        return map_mocap_to_landmarks(&m, &ctx.cfg.hip_model()).map_err(|e| invalid(format!("{}: {e}", path.display())));
    }
    parse_landmark_csv(file, &meta).map_err(|e| ingest_err(path, e))
}

fn filtered(ctx: &Context, rec: LandmarkRecording, kind: InputKind, path: &Path) -> Result<LandmarkRecording, CliError> {
    match (&ctx.pipeline.filter, kind) {
        (Some(spec), InputKind::Camera) => lowpass_recording(&rec, spec).map_err(|e| ingest_err(path, e)),
        _ => Ok(rec),
    }
}

fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf), CliError> {
    require_file(path, "manifest")?;
    let m = Manifest::from_json(&read_text(path)?).map_err(|e| ingest_err(path, e))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, dir))
}

fn load_pair(ctx: &Context, dir: &Path, e: &ManifestEntry) -> Result<(LandmarkRecording, LandmarkRecording), CliError> {
    let camera = load_recording(ctx, &dir.join(&e.camera_file), InputKind::Camera, &e.participant_id, &e.trial_id)?;
    let kind = match e.mocap_format {
        MocapFormat::Landmarks => InputKind::Mocap,
        MocapFormat::Markers => InputKind::Markers,
    };
    let mocap = load_recording(ctx, &dir.join(&e.mocap_file), kind, &e.participant_id, &e.trial_id)?;
    Ok((camera, mocap))
}

fn prepared(ctx: &Context, manifest: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PreparedTrial>, CliError> {
    let (m, dir) = load_manifest(manifest)?;
    let pairs = m
        .entries
        .iter()
        .filter(|e| keep(&e.participant_id))
        .map(|e| load_pair(ctx, &dir, e))
        .collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Err(invalid(format!("{}: no recordings selected", manifest.display())));
    }
    prepare_all(&pairs, &ctx.pipeline, ctx.exec).map_err(|e| invalid(e.to_string()))
}

pub fn synth(ctx: &Context, out: &Path) -> Result<(), CliError> {
    let cfg = ctx.cfg.synth().map_err(invalid)?;
    let data = generate_dataset(&cfg, ctx.exec).map_err(|e| invalid(e.to_string()))?;
    let mut entries = Vec::new();
    for t in &data {
        let stem = format!("{}_{}", t.participant_id, t.trial_id);
        let camera_file = PathBuf::from(format!("{stem}_camera.csv"));
        let mocap_file = PathBuf::from(format!("{stem}_mocap.csv"));
        for (file, rec, what) in [(&camera_file, &t.camera, "corrupted camera"), (&mocap_file, &t.mocap, "exact mocap")] {
            let mut comments = ctx.comments();
            comments.push(format!("recording={stem} {what}"));
            let path = out.join(file);
            let mut w = create(&path)?;
            write_landmark_csv(&mut w, rec, &comments).map_err(|e| ingest_err(&path, e))?;
            w.flush().map_err(io_err(&path))?;
        }
        entries.push(ManifestEntry {
            participant_id: t.participant_id.clone(),
            trial_id: t.trial_id.clone(),
            camera_file,
            mocap_file,
            mocap_format: MocapFormat::Landmarks,
        });
    }
    let manifest = Manifest { camera_rate: cfg.camera_rate, mocap_rate: cfg.mocap_rate, provenance: ctx.provenance.clone(), entries };
    let path = out.join("manifest.json");
    write_text(&path, &manifest.to_json().map_err(|e| ingest_err(&path, e))?)?;
    println!("wrote {} recordings and {}", 2 * data.len(), path.display());
    Ok(())
}

pub fn preprocess(ctx: &Context, manifest: &Path, out: &Path) -> Result<(), CliError> {
    let (m, dir) = load_manifest(manifest)?;
    let mut entries = Vec::new();
    for e in &m.entries {
        let (camera, mocap) = load_pair(ctx, &dir, e)?;
        let what = format!("{}/{}", e.participant_id, e.trial_id);
        let synced = synchronize(&camera, &mocap, |r| first_left_hs(r, &ctx.pipeline.events))
            .map_err(|err| invalid(format!("{what}: {err}")))?;
        let cam = match &ctx.pipeline.filter {
            Some(spec) => lowpass_recording(&synced.camera, spec).map_err(|err| invalid(format!("{what}: {err}")))?,
            None => synced.camera.clone(),
        };
        let (moc, _) = interpolate_to(&synced.mocap, &cam.times).map_err(|err| invalid(format!("{what}: {err}")))?;
        let stem = format!("{}_{}", e.participant_id, e.trial_id);
        let mut comments = ctx.comments();
        comments.push(format!("sync_event_time={} mocap_shift={}", synced.sync_event_time, synced.mocap_shift));
        for (suffix, rec) in [("camera", &cam), ("mocap", &moc)] {
            let path = out.join(format!("{stem}_{suffix}.csv"));
            let mut w = create(&path)?;
            write_landmark_csv(&mut w, rec, &comments).map_err(|err| ingest_err(&path, err))?;
            w.flush().map_err(io_err(&path))?;
        }
        entries.push(ManifestEntry {
            participant_id: e.participant_id.clone(),
            trial_id: e.trial_id.clone(),
            camera_file: format!("{stem}_camera.csv").into(),
            mocap_file: format!("{stem}_mocap.csv").into(),
            mocap_format: MocapFormat::Landmarks,
        });
    }
    let rate = ctx.cfg.camera_rate;
    let manifest = Manifest { camera_rate: rate, mocap_rate: rate, provenance: ctx.provenance.clone(), entries };
    let path = out.join("manifest.json");
    write_text(&path, &manifest.to_json().map_err(|e| ingest_err(&path, e))?)?;
    println!("synchronised {} trials into {}", m.entries.len(), out.display());
    Ok(())
}

pub fn angles(ctx: &Context, input: &Path, kind: InputKind, out: &Path, frames: Option<&Path>) -> Result<(), CliError> {
    let stem = file_stem(input);
    let rec = load_recording(ctx, input, kind, &stem, &stem)?;
    let rec = filtered(ctx, rec, kind, input)?;
    let sig = extract_signals_with(&rec, ctx.exec).map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    if !sig.gaps.is_empty() {
        eprintln!("warning: {} samples interpolated over degenerate frames", sig.gaps.len());
    }
    write_with(out, |w| write_signals_csv(w, &sig, &ctx.comments()))?;
    if let Some(path) = frames {
        write_with(path, |w| write_frames_csv(w, &rec))?;
    }
    Ok(())
}

pub fn events(ctx: &Context, input: &Path, kind: InputKind, out: &Path) -> Result<(), CliError> {
    let stem = file_stem(input);
    let rec = filtered(ctx, load_recording(ctx, input, kind, &stem, &stem)?, kind, input)?;
    let fail = |e: gaitcorr::events::EventError| invalid(format!("{}: {e}", input.display()));
    let dir = walking_direction(&rec).map_err(fail)?;
    let ia = inter_ankle_along(&rec, dir);
    let ev = detect_events_with(&ia.times, &ia.values, &ctx.pipeline.events).map_err(fail)?;
    let comments = ctx.comments();
    write_with(out, |w| -> Result<(), Box<dyn std::error::Error>> {
        for c in &comments {
            writeln!(w, "# {c}")?;
        }
        ev.write_csv(w)?;
        Ok(())
    })
}

pub fn descriptors(
    ctx: &Context,
    input: &Path,
    kind: InputKind,
    out: &Path,
    participant: Option<&str>,
    trial: Option<&str>,
    per_cycle: bool,
) -> Result<(), CliError> {
    let stem = file_stem(input);
    let (pid, tid) = (participant.unwrap_or(&stem).to_string(), trial.unwrap_or(&stem).to_string());
    let rec = filtered(ctx, load_recording(ctx, input, kind, &pid, &tid)?, kind, input)?;
    let fail = |e: gaitcorr::pipeline::PipelineError| invalid(format!("{}: {e}", input.display()));
    let view = SourceView::build(rec, &ctx.pipeline, ctx.exec).map_err(fail)?;
    let cycles = view.cycles(&ctx.pipeline).map_err(fail)?;
    let rows: Vec<DescriptorRow> = if per_cycle {
        cycles
            .iter()
            .map(|c| DescriptorRow { participant_id: pid.clone(), trial_id: tid.clone(), cycle_start: Some(c.start), values: c.values })
            .collect()
    } else {
        let values = recording_descriptors(&cycles).ok_or_else(|| invalid(format!("{}: no complete gait cycle", input.display())))?;
        vec![DescriptorRow { participant_id: pid, trial_id: tid, cycle_start: None, values }]
    };
    write_with(out, |w| write_descriptor_csv(w, &rows, &ctx.comments()))
}

pub fn model_file(dir: &Path, mode: CorrectionMode) -> PathBuf {
    dir.join(match mode {
        CorrectionMode::Signals => "signal_models.json",
        CorrectionMode::Descriptors => "descriptor_models.json",
    })
}

pub fn train(ctx: &Context, manifest: &Path, models: &Path) -> Result<(), CliError> {
    let mode = ctx.cfg.mode().map_err(invalid)?;
    let trials = prepared(ctx, manifest, |_| true)?;
    let ids: Vec<&str> = trials.iter().map(|t| t.participant_id.as_str()).collect();
    let cfg = &ctx.pipeline;
    let holdout = hold_out_participants(&ids, cfg.learning.holdout_fraction, cfg.holdout_seed).map_err(|e| invalid(e.to_string()))?;
    let learn: Vec<&PreparedTrial> = trials.iter().filter(|t| holdout.learning.contains(&t.participant_id)).collect();
    let mut set = match mode {
        CorrectionMode::Signals => train_signal_models(&signal_pairs(learn), &cfg.learning, &holdout.retest, ctx.exec),
        CorrectionMode::Descriptors => {
            let rows = descriptor_pairs(learn, cfg).map_err(|e| invalid(e.to_string()))?;
            train_descriptor_models(&rows, &cfg.learning, &holdout.retest, ctx.exec)
        }
    }
    .map_err(|e| invalid(e.to_string()))?;
    set.provenance = ctx.provenance.clone();
    let path = model_file(models, mode);
    write_text(&path, &set.to_json().map_err(|e| invalid(e.to_string()))?)?;
    for (name, m) in &set.models {
        println!(
            "{name}: {} epochs (best {}), {:?}, test mse {:.3e}",
            m.epochs, m.best_epoch, m.stop_reason, m.final_test_mse
        );
    }
    println!("held out: {}", holdout.retest.join(" "));
    println!("wrote {}", path.display());
    Ok(())
}

fn load_models(path: &Path, mode: CorrectionMode) -> Result<CorrectionModelSet, CliError> {
    require_file(path, "model file")?;
    let set = CorrectionModelSet::from_json(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if set.mode != mode {
        return Err(invalid(format!("{}: expected {mode:?} models, found {:?}", path.display(), set.mode)));
    }
    Ok(set)
}

pub fn apply(ctx: &Context, models: &Path, input: &Path, kind: InputKind, out: &Path) -> Result<(), CliError> {
    require_file(models, "model file")?;
    let set = CorrectionModelSet::from_json(&read_text(models)?).map_err(|e| invalid(format!("{}: {e}", models.display())))?;
    let mut comments = ctx.comments();
    comments.push(format!("models={}", models.display()));
    match set.mode {
        CorrectionMode::Signals => {
            let stem = file_stem(input);
            let rec = filtered(ctx, load_recording(ctx, input, kind, &stem, &stem)?, kind, input)?;
            let raw = extract_signals_with(&rec, ctx.exec).map_err(|e| invalid(format!("{}: {e}", input.display())))?;
            let fixed = apply_signal_correction(&set, &raw).map_err(|e| invalid(e.to_string()))?;
            write_with(out, |w| write_signals_csv(w, &fixed, &comments))
        }
        CorrectionMode::Descriptors => {
            require_file(input, "input file")?;
            let rows = read_descriptor_csv(File::open(input).map_err(io_err(input))?)
                .map_err(|e| invalid(format!("{}: {e}", input.display())))?;
            let mut fixed = Vec::with_capacity(rows.len());
            for r in rows {
                let c = apply_descriptor_correction(&set, &r.values).map_err(|e| invalid(e.to_string()))?;
                for d in &c.extrapolated {
                    eprintln!("warning: {}/{} {} outside the training range", r.participant_id, r.trial_id, d.name());
                }
                fixed.push(DescriptorRow { values: c.values, ..r });
            }
            write_with(out, |w| write_descriptor_csv(w, &fixed, &comments))
        }
    }
}

pub fn evaluate(ctx: &Context, manifest: &Path, models: &Path, out: &Path) -> Result<(), CliError> {
    let sig = load_models(&model_file(models, CorrectionMode::Signals), CorrectionMode::Signals)?;
    let desc = load_models(&model_file(models, CorrectionMode::Descriptors), CorrectionMode::Descriptors)?;
    if sig.holdout_participants != desc.holdout_participants {
        return Err(invalid("signal and descriptor models were trained with different hold-out sets"));
    }
    if sig.window != ctx.pipeline.learning.window {
        eprintln!("note: models use window {}, config says {}", sig.window, ctx.pipeline.learning.window);
    }
    let retest = prepared(ctx, manifest, |p| sig.holdout_participants.iter().any(|h| h == p))?;
    let refs: Vec<&PreparedTrial> = retest.iter().collect();
    let report = four_way_report(&refs, &sig, &desc, &ctx.pipeline, ctx.provenance.clone(), ctx.exec)
        .map_err(|e| invalid(e.to_string()))?;
    write_text(&out.join("report.json"), &report.to_json().map_err(|e| invalid(e.to_string()))?)?;
    write_with(&out.join("signals.csv"), |w| report.write_signal_table(w))?;
    write_with(&out.join("descriptors.csv"), |w| report.write_descriptor_table(w))?;
    write_with(&out.join("boxstats.csv"), |w| report.write_boxstats(w))?;
    for s in &report.signals {
        println!(
            "{:<20} rmse {:.2} -> {:.2}   r {:.3} -> {:.3}",
            s.signal.name(),
            s.before.rmse.mean,
            s.after.rmse.mean,
            s.before.pearson.mean,
            s.after.pearson.mean
        );
    }
    println!("{} recordings, {} cycles; report in {}", report.recordings, report.cycles, out.display());
    Ok(())
}
