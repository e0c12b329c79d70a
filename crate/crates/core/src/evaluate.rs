//! Agreement metrics and the four-way comparison report.
//!
//! Estimates: V (mocap reference), C (raw camera), CTs (camera signals
//! corrected, then descriptors extracted) and CTd (camera descriptors
//! corrected directly).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{Descriptor, DESCRIPTOR_COUNT};
use crate::kinematics::SignalName;

pub use crate::pipeline::four_way_report;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("no values")]
    Empty,
}

fn check(a: &[f64], b: &[f64]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooShort(a.len()));
    }
    Ok(())
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    check(a, b)?;
    Ok((a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    check(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Result<MeanSd, EvalError> {
        if values.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(MeanSd { mean, sd })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub rmse: MeanSd,
    pub pearson: MeanSd,
}

/// Percentile of sorted data by linear interpolation between order
/// statistics: position `q (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: s[0],
        p25: percentile_sorted(&s, 0.25),
        median: percentile_sorted(&s, 0.5),
        p75: percentile_sorted(&s, 0.75),
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimate {
    V,
    C,
    CTs,
    CTd,
}

impl Estimate {
    pub const ALL: [Estimate; 4] = [Estimate::V, Estimate::C, Estimate::CTs, Estimate::CTd];

    pub fn name(self) -> &'static str {
        match self {
            Estimate::V => "V",
            Estimate::C => "C",
            Estimate::CTs => "CTs",
            Estimate::CTd => "CTd",
        }
    }
}

/// The estimate among C, CTs and CTd whose mean is nearest to `v`;
/// ties go to the earlier of C, CTs, CTd.
pub fn closest_to_v(v: f64, c: f64, cts: f64, ctd: f64) -> Estimate {
    let mut best = (Estimate::C, (c - v).abs());
    for (e, m) in [(Estimate::CTs, cts), (Estimate::CTd, ctd)] {
        if (m - v).abs() < best.1 {
            best = (e, (m - v).abs());
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalEntry {
    pub signal: SignalName,
    pub before: MetricPair,
    pub after: MetricPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorEntry {
    pub descriptor: Descriptor,
    /// Per-cycle RMSE against V.
    pub rmse_c: f64,
    pub rmse_cts: f64,
    pub rmse_ctd: f64,
    /// Box statistics over per-recording means, in V, C, CTs, CTd order.
    pub boxes: [BoxStats; 4],
    pub closest: Estimate,
    /// Cycles whose camera value fell outside the descriptor model's training range.
    pub extrapolated: usize,
}

impl DescriptorEntry {
    pub fn mean(&self, e: Estimate) -> f64 {
        self.boxes[e as usize].mean
    }

    /// True when `e`'s mean is strictly closer to V than C's.
    pub fn improves_on_c(&self, e: Estimate) -> bool {
        let v = self.mean(Estimate::V);
        (self.mean(e) - v).abs() < (self.mean(Estimate::C) - v).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Run metadata: config hash, seeds, conventions.
    pub header: BTreeMap<String, String>,
    pub retest_participants: Vec<String>,
    pub recordings: usize,
    pub cycles: usize,
    pub signals: Vec<SignalEntry>,
    pub descriptors: Vec<DescriptorEntry>,
}

/// Conventions recorded in every report header.
pub fn convention_notes() -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    h.insert("signal_sd".into(), "sample SD across re-test recordings; sided signals averaged over sides per recording".into());
    h.insert("percentiles".into(), "linear interpolation at position q*(n-1) of the sorted values".into());
    h.insert("descriptor_rmse".into(), "over matched gait cycles".into());
    h.insert("descriptor_boxes".into(), "over per-recording mean descriptors".into());
    h.insert("closest_tie_break".into(), "smaller absolute mean difference, then C < CTs < CTd".into());
    h
}

/// Per-recording inputs for one signal name.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    /// One entry per side.
    pub raw: Vec<Vec<f64>>,
    pub corrected: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
}

/// Metrics of one signal name over recordings: each recording contributes
/// the side-averaged RMSE and r.
pub fn signal_entry(name: SignalName, per_recording: &[SignalSeries]) -> Result<SignalEntry, EvalError> {
    let mut rb = Vec::new();
    let mut pb = Vec::new();
    let mut ra = Vec::new();
    let mut pa = Vec::new();
    for rec in per_recording {
        let k = rec.raw.len() as f64;
        let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
        for s in 0..rec.raw.len() {
            a += rmse(&rec.raw[s], &rec.reference[s])? / k;
            b += pearson(&rec.raw[s], &rec.reference[s])? / k;
            c += rmse(&rec.corrected[s], &rec.reference[s])? / k;
            d += pearson(&rec.corrected[s], &rec.reference[s])? / k;
        }
        rb.push(a);
        pb.push(b);
        ra.push(c);
        pa.push(d);
    }
    Ok(SignalEntry {
        signal: name,
        before: MetricPair { rmse: MeanSd::of(&rb)?, pearson: MeanSd::of(&pb)? },
        after: MetricPair { rmse: MeanSd::of(&ra)?, pearson: MeanSd::of(&pa)? },
    })
}

/// Cycle-level and recording-level descriptor values of the four estimates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorSamples {
    /// Matched cycles: `[V, C, CTs, CTd]` per cycle.
    pub cycles: Vec<[[f64; DESCRIPTOR_COUNT]; 4]>,
    /// Per-recording means of the matched cycles.
    pub recordings: Vec<[[f64; DESCRIPTOR_COUNT]; 4]>,
    /// Per descriptor, number of extrapolated cycles.
    pub extrapolated: [usize; DESCRIPTOR_COUNT],
}

pub fn descriptor_entries(s: &DescriptorSamples) -> Result<Vec<DescriptorEntry>, EvalError> {
    if s.cycles.is_empty() || s.recordings.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut out = Vec::with_capacity(DESCRIPTOR_COUNT);
    for d in Descriptor::ALL {
        let k = d.index();
        let col = |rows: &[[[f64; DESCRIPTOR_COUNT]; 4]], e: Estimate| rows.iter().map(|r| r[e as usize][k]).collect::<Vec<f64>>();
        let v = col(&s.cycles, Estimate::V);
        let cycle_rmse = |e: Estimate| -> f64 {
            let x = col(&s.cycles, e);
            (x.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let boxes = [
            box_stats(&col(&s.recordings, Estimate::V))?,
            box_stats(&col(&s.recordings, Estimate::C))?,
            box_stats(&col(&s.recordings, Estimate::CTs))?,
            box_stats(&col(&s.recordings, Estimate::CTd))?,
        ];
        out.push(DescriptorEntry {
            descriptor: d,
            rmse_c: cycle_rmse(Estimate::C),
            rmse_cts: cycle_rmse(Estimate::CTs),
            rmse_ctd: cycle_rmse(Estimate::CTd),
            closest: closest_to_v(boxes[0].mean, boxes[1].mean, boxes[2].mean, boxes[3].mean),
            boxes,
            extrapolated: s.extrapolated[k],
        });
    }
    Ok(out)
}

fn comments<W: Write>(out: &mut W, header: &BTreeMap<String, String>) -> std::io::Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn signal(&self, name: SignalName) -> Option<&SignalEntry> {
        self.signals.iter().find(|s| s.signal == name)
    }

    pub fn descriptor(&self, d: Descriptor) -> Option<&DescriptorEntry> {
        self.descriptors.iter().find(|e| e.descriptor == d)
    }

    /// Signal metrics laid out like the per-signal results table.
    pub fn write_signal_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        comments(&mut out, &self.header)?;
        writeln!(out, "signal,label,rmse_before_mean,rmse_before_sd,r_before_mean,r_before_sd,rmse_after_mean,rmse_after_sd,r_after_mean,r_after_sd")?;
        for s in &self.signals {
            let (b, a) = (&s.before, &s.after);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.signal.name(),
                s.signal.label(),
                b.rmse.mean,
                b.rmse.sd,
                b.pearson.mean,
                b.pearson.sd,
                a.rmse.mean,
                a.rmse.sd,
                a.pearson.mean,
                a.pearson.sd
            )?;
        }
        Ok(())
    }

    /// Descriptor RMSE and means laid out like the per-descriptor table.
    pub fn write_descriptor_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        comments(&mut out, &self.header)?;
        writeln!(out, "descriptor,label,unit,rmse_c,rmse_cts,rmse_ctd,mean_v,mean_c,mean_cts,mean_ctd,closest,extrapolated")?;
        for e in &self.descriptors {
            let d = e.descriptor;
            writeln!(
                out,
                "{},\"{}\",{},{},{},{},{},{},{},{},{},{}",
                d.name(),
                d.label(),
                d.unit(),
                e.rmse_c,
                e.rmse_cts,
                e.rmse_ctd,
                e.mean(Estimate::V),
                e.mean(Estimate::C),
                e.mean(Estimate::CTs),
                e.mean(Estimate::CTd),
                e.closest.name(),
                e.extrapolated
            )?;
        }
        Ok(())
    }

    /// One box per descriptor and estimate.
    pub fn write_boxstats<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        comments(&mut out, &self.header)?;
        writeln!(out, "descriptor,estimate,min,p25,median,p75,max,mean")?;
        for e in &self.descriptors {
            for est in Estimate::ALL {
                let b = &e.boxes[est as usize];
                writeln!(out, "{},{},{},{},{},{},{},{}", e.descriptor.name(), est.name(), b.min, b.p25, b.median, b.p75, b.max, b.mean)?;
            }
        }
        Ok(())
    }
}
