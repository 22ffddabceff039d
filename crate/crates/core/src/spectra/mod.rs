//! Power spectra and the peak statistics built on them.

mod fit;

pub use fit::{
    damped_sinusoid, fit_decaying_sinusoid, fit_lorentzian, fit_lorentzian_with, lorentzian, FitResult,
    LorentzianFitOptions, LorentzianParams, LorentzianVariant, SinusoidGuess, SinusoidParams,
};

use alloc::string::String;
use alloc::vec::Vec;

use libm::{fabs, sqrt};

use crate::fft::fft;
use crate::stats::chi2_sf;
use crate::{Error, Result, C64};

/// Default detection threshold in baseline standard deviations.
pub const PEAK_THRESHOLD: f64 = 4.0;

/// Uniformly sampled real record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub samples: Vec<f64>,
    /// Sampling interval (s).
    pub t_s: f64,
}

impl TimeTrace {
    pub fn new(samples: Vec<f64>, t_s: f64) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::DegenerateInput(String::from("a trace needs at least 4 samples")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(String::from("trace holds non-finite samples")));
        }
        if !(t_s > 0.0 && t_s.is_finite()) {
            return Err(Error::domain("t_s must be positive"));
        }
        Ok(Self { samples, t_s })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One-sided power spectrum on `[0, f_s/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Frequencies (Hz), strictly increasing from 0.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub pad_factor: usize,
    /// Power is in units of the baseline standard deviation.
    pub normalized: bool,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Grid spacing (Hz).
    pub fn bin_width(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    /// Sum of all bins; equals the energy of the mean-subtracted trace.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Index range of the bins within `[lo, hi]`.
    pub fn band(&self, lo: f64, hi: f64) -> core::ops::Range<usize> {
        let start = self.freqs.partition_point(|&f| f < lo);
        let end = self.freqs.partition_point(|&f| f <= hi);
        start..end.max(start)
    }

    /// Sub-spectrum on `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Spectrum {
        let r = self.band(lo, hi);
        Spectrum {
            freqs: self.freqs[r.clone()].to_vec(),
            power: self.power[r].to_vec(),
            pad_factor: self.pad_factor,
            normalized: self.normalized,
        }
    }

    /// Index of the largest bin.
    pub fn argmax(&self) -> usize {
        argmax(&self.power)
    }

    /// Largest bin within `[lo, hi]` as `(index, power)`.
    pub fn max_in(&self, lo: f64, hi: f64) -> Option<(usize, f64)> {
        let r = self.band(lo, hi);
        if r.is_empty() {
            return None;
        }
        let i = r.start + argmax(&self.power[r]);
        Some((i, self.power[i]))
    }

    /// Peak frequency refined by a parabola through the three top bins.
    pub fn refine(&self, i: usize) -> f64 {
        if i == 0 || i + 1 >= self.len() {
            return self.freqs[i];
        }
        let (a, b, c) = (self.power[i - 1], self.power[i], self.power[i + 1]);
        let den = a - 2.0 * b + c;
        if den >= 0.0 {
            return self.freqs[i];
        }
        let d = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        self.freqs[i] + d * self.bin_width()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Periodogram of the mean-subtracted trace after zero padding to
/// `pad_factor` times its length.
///
/// Bins are weighted so that their sum equals the energy of the
/// mean-subtracted samples for any padding.
pub fn power_spectrum(trace: &TimeTrace, pad_factor: usize) -> Spectrum {
    let pad = pad_factor.max(1);
    let n = trace.len();
    let m = n * pad;
    let mean = trace.samples.iter().sum::<f64>() / n as f64;
    let mut buf = alloc::vec![C64::new(0.0, 0.0); m];
    for (b, &x) in buf.iter_mut().zip(&trace.samples) {
        *b = C64::new(x - mean, 0.0);
    }
    let spec = fft(&buf);
    let half = m / 2;
    let df = 1.0 / (m as f64 * trace.t_s);
    let mut freqs = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (k, v) in spec.iter().enumerate().take(half + 1) {
        let edge = k == 0 || (m % 2 == 0 && k == half);
        let w = if edge { 1.0 } else { 2.0 };
        freqs.push(k as f64 * df);
        power.push(w * v.norm_sqr() / m as f64);
    }
    Spectrum {
        freqs,
        power,
        pad_factor: pad,
        normalized: false,
    }
}

/// Mean and sample standard deviation of the bins in `[lo, hi]`.
pub fn baseline_stats(spec: &Spectrum, band: (f64, f64)) -> Result<(f64, f64)> {
    let r = spec.band(band.0, band.1);
    if r.len() < 2 {
        return Err(Error::EmptyBand { lo: band.0, hi: band.1 });
    }
    let v = &spec.power[r];
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
    Ok((mean, sqrt(var)))
}

/// Divides the spectrum by the standard deviation of its bins in `noise_band`.
pub fn normalize_baseline(spec: &Spectrum, noise_band: (f64, f64)) -> Result<Spectrum> {
    let (_, std) = baseline_stats(spec, noise_band)?;
    if !(std > 0.0) {
        return Err(Error::EmptyBand {
            lo: noise_band.0,
            hi: noise_band.1,
        });
    }
    Ok(Spectrum {
        freqs: spec.freqs.clone(),
        power: spec.power.iter().map(|p| p / std).collect(),
        pad_factor: spec.pad_factor,
        normalized: true,
    })
}

/// Median and MAD-based standard deviation of all bins.
pub fn robust_baseline(power: &[f64]) -> (f64, f64) {
    let med = median(power);
    let dev: Vec<f64> = power.iter().map(|p| fabs(p - med)).collect();
    (med, 1.482_602_218_505_602 * median(&dev))
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Detected spectral peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    /// Parabola-refined frequency (Hz).
    pub freq: f64,
    pub power: f64,
}

/// Local maxima rising more than `threshold` robust standard deviations above
/// the median, strongest first, at least `min_separation` bins apart.
pub fn find_peaks(spec: &Spectrum, threshold: f64, min_separation: usize) -> Vec<Peak> {
    let (med, sigma) = robust_baseline(&spec.power);
    let p = &spec.power;
    let mut cands: Vec<usize> = (0..p.len())
        .filter(|&i| {
            let left = i == 0 || p[i] >= p[i - 1];
            let right = i + 1 == p.len() || p[i] > p[i + 1];
            left && right && p[i] - med > threshold * sigma && p[i] > med
        })
        .collect();
    cands.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let mut out: Vec<Peak> = Vec::new();
    for i in cands {
        if out.iter().all(|q| q.index.abs_diff(i) >= min_separation) {
            out.push(Peak {
                index: i,
                freq: spec.refine(i),
                power: p[i],
            });
        }
    }
    out
}

/// Measured value with its uncertainty, for the linearity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Weighted straight-line fit with its chi-square statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub intercept_err: f64,
    pub chi2: f64,
    /// Survival probability of `chi2` with as many degrees of freedom as points.
    pub p_value: f64,
    pub n: usize,
}

/// Weighted least-squares line through `points`.
pub fn peak_linearity(points: &[LinearityPoint]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(String::from("need at least 3 points")));
    }
    if points
        .iter()
        .any(|p| !(p.sigma > 0.0) || !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(Error::DegenerateInput(String::from(
            "every point needs finite values and a positive uncertainty",
        )));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let w = 1.0 / (p.sigma * p.sigma);
        s += w;
        sx += w * p.x;
        sy += w * p.y;
        sxx += w * p.x * p.x;
        sxy += w * p.x * p.y;
    }
    let det = s * sxx - sx * sx;
    if !(det > 1e-300) || det <= 1e-12 * s * sxx {
        return Err(Error::DegenerateInput(String::from("all x values coincide")));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = points
        .iter()
        .map(|p| {
            let r = (p.y - slope * p.x - intercept) / p.sigma;
            r * r
        })
        .sum::<f64>();
    Ok(LinearFit {
        slope,
        slope_err: sqrt(s / det),
        intercept,
        intercept_err: sqrt(sxx / det),
        chi2,
        p_value: chi2_sf(chi2, points.len() as f64),
        n: points.len(),
    })
}
