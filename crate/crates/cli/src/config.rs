//! Run configuration: defaults, flat `key = value` files and flag overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use gaitcorr::ingest::FilterSpec;
use gaitcorr::learning::{Alignment, CorrectionMode, LearningConfig};
use gaitcorr::model::HipCenterModel;
use gaitcorr::neuralnet::TrainConfig;
use gaitcorr::pipeline::PipelineConfig;
use gaitcorr::synth::{ErrorModel, SynthConfig};
use sha2::{Digest, Sha256};

fn parse_value<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.trim().parse::<T>().map_err(|e| format!("cannot parse {s:?}: {e}"))
}

macro_rules! run_config {
    ($($key:ident : $ty:ty = $default:expr, $help:literal;)*) => {
        /// Every option of a run. Defaults reproduce the reference setup.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(pub $key: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
                match key {
                    $(stringify!($key) => self.$key = parse_value(value).map_err(|e| format!("{key}: {e}"))?,)*
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            }

            /// `(key, value)` pairs in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($key), self.$key.to_string()),)*]
            }
        }

        /// Command-line overrides; each flag mirrors a config-file key.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct ConfigFlags {
            $(
                #[arg(long, global = true, help = $help)]
                pub $key: Option<$ty>,
            )*
        }

        impl ConfigFlags {
            pub fn apply(&self, cfg: &mut RunConfig) {
                $(if let Some(v) = &self.$key {
                    cfg.$key = v.clone();
                })*
            }
        }
    };
}

run_config! {
    camera_rate: f64 = 30.0, "Camera sampling rate, Hz";
    mocap_rate: f64 = 120.0, "Motion-capture sampling rate, Hz";
    filter: bool = true, "Low-pass filter camera landmarks (true/false)";
    filter_cutoff: f64 = 4.0, "Filter cutoff, Hz";
    filter_order: usize = 4, "Butterworth order (applied forward and backward)";
    window: usize = 3, "Input window width W of the signal networks";
    alignment: String = "last".into(), "Window target alignment: last or center";
    split_train: f64 = 0.6, "Training fraction of network rows";
    split_validation: f64 = 0.2, "Validation fraction of network rows";
    split_test: f64 = 0.2, "Test fraction of network rows";
    max_epochs: usize = 1000, "Training epoch cap";
    patience: usize = 6, "Validation failures tolerated before stopping";
    holdout_fraction: f64 = 0.2, "Fraction of participants held out for re-test";
    train_seed: u64 = 1, "Seed for weight initialisation and row splits";
    holdout_seed: u64 = 1, "Seed for choosing held-out participants";
    mode: String = "signals".into(), "Correction mode: signals or descriptors";
    cycle_tolerance: f64 = 0.25, "Largest start difference when matching cycles, s";
    leg_length: f64 = 0.90, "Leg length for the hip-centre regression, m";
    participants: usize = 20, "Synthetic participants";
    trials: usize = 6, "Synthetic trials per participant";
    seed: u64 = 7, "Synthetic data seed";
    duration: f64 = 8.0, "Synthetic trial length, s";
    offset_max: f64 = 0.02, "Largest per-axis landmark offset of the camera, m";
    offset_seed: u64 = 7, "Seed for the camera landmark offsets";
    noise_sigma: f64 = 0.003, "Camera landmark noise SD, m";
    drift_amplitude: f64 = 0.002, "Camera drift amplitude, m";
    drift_frequency: f64 = 0.2, "Camera drift frequency, Hz";
    jitter_sigma: f64 = 0.0, "Camera timestamp jitter SD, s";
    latency: f64 = 0.0, "Camera latency, s";
}

/// Parse a flat config file. Blank lines and `#` comments are skipped.
pub fn apply_config_text(cfg: &mut RunConfig, text: &str) -> Result<(), (usize, String)> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err((i + 1, format!("expected `key = value`, got {raw:?}")));
        };
        cfg.set(k.trim(), v).map_err(|e| (i + 1, e))?;
    }
    Ok(())
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn mode(&self) -> Result<CorrectionMode, String> {
        match self.mode.as_str() {
            "signals" => Ok(CorrectionMode::Signals),
            "descriptors" => Ok(CorrectionMode::Descriptors),
            m => Err(format!("mode must be signals or descriptors, got {m:?}")),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, String> {
        let alignment = match self.alignment.as_str() {
            "last" => Alignment::Last,
            "center" => Alignment::Center,
            a => return Err(format!("alignment must be last or center, got {a:?}")),
        };
        self.mode()?;
        let train = TrainConfig {
            max_epochs: self.max_epochs,
            split: (self.split_train, self.split_validation, self.split_test),
            patience: self.patience,
            seed: self.train_seed,
            ..TrainConfig::default()
        };
        train.check().map_err(|e| e.to_string())?;
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(format!("holdout_fraction {} outside (0, 1)", self.holdout_fraction));
        }
        if !(self.cycle_tolerance > 0.0) {
            return Err("cycle_tolerance must be positive".into());
        }
        let filter = if self.filter {
            let spec = FilterSpec { cutoff: self.filter_cutoff, order: self.filter_order, ..FilterSpec::default() };
            spec.check(self.camera_rate).map_err(|e| e.to_string())?;
            Some(spec)
        } else {
            None
        };
        Ok(PipelineConfig {
            filter,
            learning: LearningConfig { window: self.window, alignment, holdout_fraction: self.holdout_fraction, train },
            cycle_tolerance: self.cycle_tolerance,
            holdout_seed: self.holdout_seed,
            ..PipelineConfig::default()
        })
    }

    pub fn synth(&self) -> Result<SynthConfig, String> {
        if !(self.offset_max >= 0.0 && self.offset_max.is_finite()) {
            return Err(format!("offset_max {} must be a non-negative length", self.offset_max));
        }
        let error = ErrorModel {
            offsets: ErrorModel::mirrored_offsets(self.offset_max, self.offset_seed),
            drift_amplitude: self.drift_amplitude,
            drift_frequency: self.drift_frequency,
            noise_sigma: self.noise_sigma,
            jitter_sigma: self.jitter_sigma,
            latency: self.latency,
        };
        error.validate().map_err(|e| e.to_string())?;
        if self.participants == 0 || self.trials == 0 {
            return Err("participants and trials must be positive".into());
        }
        Ok(SynthConfig {
            participants: self.participants,
            trials: self.trials,
            seed: self.seed,
            duration: self.duration,
            camera_rate: self.camera_rate,
            mocap_rate: self.mocap_rate,
            error,
        })
    }

    pub fn hip_model(&self) -> HipCenterModel {
        HipCenterModel { leg_length: self.leg_length, ..HipCenterModel::default() }
    }

    /// Metadata embedded in every output file.
    pub fn provenance(&self, created_unix: u64) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("config_sha256".into(), self.hash());
        m.insert(
            "seeds".into(),
            format!(
                "seed={} offset_seed={} train_seed={} holdout_seed={}",
                self.seed, self.offset_seed, self.train_seed, self.holdout_seed
            ),
        );
        m.insert("created_unix".into(), created_unix.to_string());
        m.insert("tool".into(), format!("gaitcorr {}", env!("CARGO_PKG_VERSION")));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut c = RunConfig::default();
        apply_config_text(&mut c, "# comment\nwindow = 5\n\nseed=9 # trailing\n").unwrap();
        assert_eq!((c.window, c.seed), (5, 9));
        let flags = ConfigFlags { window: Some(7), ..ConfigFlags::default() };
        flags.apply(&mut c);
        assert_eq!((c.window, c.seed), (7, 9));
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let mut c = RunConfig::default();
        assert_eq!(apply_config_text(&mut c, "window = 3\nnope = 1").unwrap_err().0, 2);
        assert_eq!(apply_config_text(&mut c, "window 3").unwrap_err().0, 1);
        assert!(apply_config_text(&mut c, "window = -1").is_err());
    }

    #[test]
    fn hash_tracks_values() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.train_seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn defaults_match_reference_setup() {
        let p = RunConfig::default().pipeline().unwrap();
        assert_eq!(p.learning.window, 3);
        assert_eq!(p.learning.train.max_epochs, 1000);
        assert_eq!(p.learning.train.split, (0.6, 0.2, 0.2));
        assert_eq!(p.learning.holdout_fraction, 0.2);
        assert_eq!(p.filter.unwrap().cutoff, 4.0);
        let mut bad = RunConfig::default();
        bad.alignment = "middle".into();
        assert!(bad.pipeline().is_err());
    }
}
