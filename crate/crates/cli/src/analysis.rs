//! Damped-sinusoid fit, spectrum, peaks and alias unfolding of one trace.

use serde::Serialize;
use spintrack_core::protocol::{unfold_alias, FilterSpec};
use spintrack_core::spectra::{
    baseline_stats, find_peaks, fit_decaying_sinusoid, fit_lorentzian_with, power_spectrum, robust_baseline,
    LorentzianFitOptions, Spectrum, TimeTrace,
};

use crate::config::AnalysisSection;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinusoidFit {
    pub status: FitStatus,
    pub a0: f64,
    pub a0_err: f64,
    pub gamma_per_s: f64,
    pub gamma_err: f64,
    pub f0_hz: f64,
    pub f0_err: f64,
    pub phi0_rad: f64,
    pub phi0_err: f64,
    /// Row-major 4x4 covariance in the order a0, gamma, f0, phi0.
    pub covariance: Vec<f64>,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    NotConverged,
    /// The trace carries no signal.
    Degenerate,
    Failed,
}

impl FitStatus {
    pub fn name(self) -> &'static str {
        match self {
            FitStatus::Ok => "ok",
            FitStatus::NotConverged => "not_converged",
            FitStatus::Degenerate => "degenerate",
            FitStatus::Failed => "failed",
        }
    }
}

impl SinusoidFit {
    fn failed() -> Self {
        Self {
            status: FitStatus::Failed,
            a0: f64::NAN,
            a0_err: f64::NAN,
            gamma_per_s: f64::NAN,
            gamma_err: f64::NAN,
            f0_hz: f64::NAN,
            f0_err: f64::NAN,
            phi0_rad: f64::NAN,
            phi0_err: f64::NAN,
            covariance: Vec::new(),
            residual_norm: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorentzianFit {
    pub converged: bool,
    pub s0: f64,
    /// Half width at half maximum (Hz).
    pub gamma_hz: f64,
    pub f0_hz: f64,
    pub s1: f64,
    pub std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakOut {
    pub freq_hz: f64,
    /// Baseline-normalised height.
    pub height: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unfolded_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterInfo {
    pub f_c_hz: f64,
    pub f_s_hz: f64,
    pub nyquist_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub n_samples: usize,
    pub t_s: f64,
    pub column: String,
    pub sinusoid: SinusoidFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sinusoid_error: Option<String>,
    pub lorentzian: Option<LorentzianFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lorentzian_error: Option<String>,
    /// Baseline level and spread used to normalise the spectrum.
    pub baseline: [f64; 2],
    pub peaks: Vec<PeakOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterInfo>,
    #[serde(skip)]
    pub spectrum: Spectrum,
    /// `(power - baseline) / spread` per bin.
    #[serde(skip)]
    pub power_norm: Vec<f64>,
}

pub fn fit_sinusoid(trace: &TimeTrace) -> (SinusoidFit, Option<String>) {
    match fit_decaying_sinusoid(trace, None) {
        Ok(f) => {
            let e = f.std_errors();
            let p = f.params;
            let status = if f.degenerate {
                FitStatus::Degenerate
            } else if f.converged {
                FitStatus::Ok
            } else {
                FitStatus::NotConverged
            };
            (
                SinusoidFit {
                    status,
                    a0: p.a0,
                    a0_err: e[0],
                    gamma_per_s: p.gamma,
                    gamma_err: e[1],
                    f0_hz: p.f0,
                    f0_err: e[2],
                    phi0_rad: p.phi0,
                    phi0_err: e[3],
                    covariance: f.covariance.transpose().iter().copied().collect(),
                    residual_norm: f.residual_norm,
                },
                None,
            )
        }
        Err(e) => (SinusoidFit::failed(), Some(e.to_string())),
    }
}

/// Full analysis of `trace`; `filter` enables alias unfolding of the peaks.
pub fn analyze(trace: &TimeTrace, column: &str, filter: Option<FilterSpec>, opts: &AnalysisSection) -> CliResult<Analysis> {
    let (sinusoid, sinusoid_error) = fit_sinusoid(trace);
    let spectrum = power_spectrum(trace, opts.pad);
    let (level, spread) = match opts.noise_band_hz {
        Some([lo, hi]) => baseline_stats(&spectrum, (lo, hi))?,
        None => robust_baseline(&spectrum.power),
    };
    let norm = |p: f64| if spread > 0.0 { (p - level) / spread } else { 0.0 };
    let power_norm: Vec<f64> = spectrum.power.iter().map(|&p| norm(p)).collect();
    let peaks = find_peaks(&spectrum, opts.peak_threshold, opts.pad.max(2))
        .into_iter()
        .map(|pk| PeakOut {
            freq_hz: pk.freq,
            height: norm(pk.power),
            unfolded_hz: match filter {
                Some(f) if opts.unfold => Some(unfold_alias(pk.freq, &f)),
                _ => None,
            },
        })
        .collect();
    let (lorentzian, lorentzian_error) = match fit_lorentzian_with(
        &spectrum,
        &LorentzianFitOptions {
            variant: opts.lorentzian.into(),
            threshold: opts.peak_threshold,
            ..Default::default()
        },
    ) {
        Ok(f) => (
            Some(LorentzianFit {
                converged: f.converged,
                s0: f.params.s0,
                gamma_hz: f.params.gamma,
                f0_hz: f.params.f0,
                s1: f.params.s1,
                std_errors: f.std_errors(),
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Analysis {
        n_samples: trace.len(),
        t_s: trace.t_s,
        column: column.to_string(),
        sinusoid,
        sinusoid_error,
        lorentzian,
        lorentzian_error,
        baseline: [level, spread],
        peaks,
        filter: filter.map(|f| FilterInfo {
            f_c_hz: f.f_c(),
            f_s_hz: f.f_s(),
            nyquist_hz: f.nyquist(),
            bandwidth_hz: f.bandwidth(),
        }),
        spectrum,
        power_norm,
    })
}
