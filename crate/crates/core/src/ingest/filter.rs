//! Butterworth low-pass design (bilinear transform, cascaded biquads) and
//! forward-backward application.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    LowPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Hz.
    pub cutoff: f64,
    pub order: usize,
    pub kind: FilterKind,
    pub zero_phase: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { cutoff: 4.0, order: 4, kind: FilterKind::LowPass, zero_phase: true }
    }
}

impl FilterSpec {
    pub fn check(&self, rate: f64) -> Result<(), IngestError> {
        if !(self.cutoff > 0.0 && self.cutoff < rate / 2.0) || self.order == 0 {
            return Err(IngestError::InvalidFilter { cutoff: self.cutoff, rate, order: self.order });
        }
        Ok(())
    }

    /// Samples of odd reflection added at each end before zero-phase filtering.
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }
}

/// One second-order section, `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    pub fn butterworth_lowpass(order: usize, cutoff: f64, rate: f64) -> Sos {
        let k = 2.0 * rate;
        let wa = k * (PI * cutoff / rate).tan();
        let mut sections = Vec::new();
        for i in 0..order / 2 {
            // analog pole pair at wa * exp(j*pi*(2i+n+1)/(2n))
            let angle = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
            let re = wa * angle.cos();
            let mag2 = wa * wa;
            let a0 = k * k - 2.0 * re * k + mag2;
            let a1 = 2.0 * mag2 - 2.0 * k * k;
            let a2 = k * k + 2.0 * re * k + mag2;
            let g = mag2 / a0;
            sections.push(Biquad { b: [g, 2.0 * g, g], a: [a1 / a0, a2 / a0] });
        }
        if order % 2 == 1 {
            // real pole at -wa
            let a0 = k + wa;
            let g = wa / a0;
            sections.push(Biquad { b: [g, g, 0.0], a: [(wa - k) / a0, 0.0] });
        }
        Sos { sections }
    }

    /// Causal filtering with steady-state initial conditions for `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let Some(&first) = x.first() else { return y };
        let mut level = first;
        for s in &self.sections {
            let out_level = level * s.dc_gain();
            // transposed direct form II steady state
            let mut z2 = s.b[2] * level - s.a[1] * out_level;
            let mut z1 = (s.b[1] + s.b[2]) * level - (s.a[0] + s.a[1]) * out_level;
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * out + z2;
                z2 = s.b[2] * xin - s.a[1] * out;
                *v = out;
            }
            level = out_level;
        }
        y
    }

    /// Forward-backward filtering with odd reflective padding of `pad` samples.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        let pad = pad.min(n.saturating_sub(1));
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Low-pass filter one scalar series sampled at `rate` Hz.
pub fn lowpass(signal: &[f64], rate: f64, spec: &FilterSpec) -> Result<Vec<f64>, IngestError> {
    spec.check(rate)?;
    if signal.len() <= 3 * spec.order {
        return Err(IngestError::SeriesTooShort { len: signal.len(), min: 3 * spec.order + 1 });
    }
    let sos = Sos::butterworth_lowpass(spec.order, spec.cutoff, rate);
    Ok(if spec.zero_phase { sos.filtfilt(signal, spec.pad_len()) } else { sos.filter(signal) })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analog Butterworth magnitude at the prewarped frequency, i.e. the exact
    /// digital response of the bilinear design at `f`.
    fn analytic_gain(f: f64, fc: f64, rate: f64, order: i32) -> f64 {
        let ratio = (PI * f / rate).tan() / (PI * fc / rate).tan();
        1.0 / (1.0 + ratio.powi(2 * order)).sqrt()
    }

    fn steady_amplitude(y: &[f64], f: f64, rate: f64) -> f64 {
        // least-squares sin/cos fit over the middle half
        let (lo, hi) = (y.len() / 4, 3 * y.len() / 4);
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, v) in y.iter().enumerate().take(hi).skip(lo) {
            let w = 2.0 * PI * f * i as f64 / rate;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        a.hypot(b)
    }

    #[test]
    fn constant_series_passes_unchanged() {
        let x = vec![2.5; 40];
        let y = lowpass(&x, 30.0, &FilterSpec::default()).unwrap();
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12), "{y:?}");
    }

    #[test]
    fn frequency_response_matches_design() {
        let spec = FilterSpec::default();
        let sos = Sos::butterworth_lowpass(4, 4.0, 30.0);
        for f in [0.5, 2.0, 4.0, 7.0, 10.0] {
            // evaluate H(e^jw) of the cascade directly
            let w = 2.0 * PI * f / 30.0;
            let (mut re, mut im) = (1.0, 0.0);
            for s in &sos.sections {
                let num = (s.b[0] + s.b[1] * w.cos() + s.b[2] * (2.0 * w).cos(), -s.b[1] * w.sin() - s.b[2] * (2.0 * w).sin());
                let den = (1.0 + s.a[0] * w.cos() + s.a[1] * (2.0 * w).cos(), -s.a[0] * w.sin() - s.a[1] * (2.0 * w).sin());
                let d2 = den.0 * den.0 + den.1 * den.1;
                let h = ((num.0 * den.0 + num.1 * den.1) / d2, (num.1 * den.0 - num.0 * den.1) / d2);
                (re, im) = (re * h.0 - im * h.1, re * h.1 + im * h.0);
            }
            let g = (re * re + im * im).sqrt();
            assert!((g - analytic_gain(f, spec.cutoff, 30.0, 4)).abs() < 1e-12, "f={f}: {g}");
        }
    }

    #[test]
    fn passband_and_stopband_amplitudes() {
        let spec = FilterSpec::default();
        for (f, bound_ok) in [(0.5, true), (10.0, false)] {
            let x: Vec<f64> = (0..900).map(|i| (2.0 * PI * f * i as f64 / 30.0).sin()).collect();
            let y = lowpass(&x, 30.0, &spec).unwrap();
            let amp = steady_amplitude(&y, f, 30.0);
            let expected = analytic_gain(f, 4.0, 30.0, 4).powi(2);
            assert!((amp - expected).abs() < 1e-3, "f={f}: {amp} vs {expected}");
            if bound_ok {
                assert!(amp >= 0.99);
            } else {
                assert!(amp <= 0.01);
            }
        }
    }

    #[test]
    fn zero_phase_has_no_lag() {
        // band-limited: 0.7 Hz + 1.3 Hz, both below cutoff / 2
        let x: Vec<f64> = (0..600)
            .map(|i| {
                let t = i as f64 / 30.0;
                (2.0 * PI * 0.7 * t).sin() + 0.5 * (2.0 * PI * 1.3 * t + 0.4).cos()
            })
            .collect();
        let y = lowpass(&x, 30.0, &FilterSpec::default()).unwrap();
        let xc = |lag: i64| -> f64 {
            (100..500).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum()
        };
        let best = (-10..=10).max_by(|a, b| xc(*a).total_cmp(&xc(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn short_series_and_bad_cutoff_rejected() {
        let spec = FilterSpec::default();
        assert!(matches!(lowpass(&[1.0; 12], 30.0, &spec), Err(IngestError::SeriesTooShort { .. })));
        let bad = FilterSpec { cutoff: 20.0, ..spec };
        assert!(matches!(lowpass(&[1.0; 40], 30.0, &bad), Err(IngestError::InvalidFilter { .. })));
    }

    #[test]
    fn odd_order_design_is_stable() {
        let sos = Sos::butterworth_lowpass(3, 4.0, 30.0);
        assert_eq!(sos.sections.len(), 2);
        let y = sos.filtfilt(&[1.0; 50], 9);
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
