//! Levenberg-Marquardt fits of the damped sinusoid and Lorentzian line shapes.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use libm::{atan2, cos, exp, fabs, sin, sqrt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

use super::{power_spectrum, robust_baseline, Spectrum, TimeTrace, PEAK_THRESHOLD};
use crate::{Error, Result, C64};

/// Best-fit parameters with their covariance (in the order of the parameter
/// struct's fields).
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<P> {
    pub params: P,
    pub covariance: DMatrix<f64>,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub converged: bool,
    /// Input carried no signal; parameters are zero.
    pub degenerate: bool,
}

impl<P> FitResult<P> {
    /// One-sigma uncertainties.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.covariance.nrows())
            .map(|i| sqrt(self.covariance[(i, i)].max(0.0)))
            .collect()
    }
}

/// `A0 exp(-Gamma t) sin(2 pi f0 t + phi0)` sampled at `t = n t_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidParams {
    pub a0: f64,
    /// Decay rate (1/s).
    pub gamma: f64,
    /// Frequency (Hz), within `[0, 1/(2 t_s)]`.
    pub f0: f64,
    pub phi0: f64,
}

/// Starting point for [`fit_decaying_sinusoid`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SinusoidGuess {
    pub a0: Option<f64>,
    pub gamma: Option<f64>,
    pub f0: Option<f64>,
    pub phi0: Option<f64>,
}

/// Evaluates the damped sinusoid at sample `n`.
pub fn damped_sinusoid(n: f64, t_s: f64, p: &SinusoidParams) -> f64 {
    let t = n * t_s;
    p.a0 * exp(-p.gamma * t) * sin(2.0 * PI * p.f0 * t + p.phi0)
}

/// Lorentzian line-shape variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LorentzianVariant {
    /// `S0 G^2 / ((f - f0)^2 + G^2) + S1`.
    #[default]
    Standard,
    /// `S0 G^2 / ((f^2 - f0^2) + G^2) + S1`, quadratic in frequency; it has a
    /// pole at `f^2 = f0^2 - G^2`.
    Quadratic,
}

/// Lorentzian parameters; `gamma` is the half width at half maximum (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianParams {
    pub s0: f64,
    pub gamma: f64,
    pub f0: f64,
    pub s1: f64,
}

impl LorentzianParams {
    /// Amplitude decay rate (1/s) of the time signal with this line width.
    pub fn decay_rate(&self) -> f64 {
        2.0 * PI * self.gamma
    }

    pub fn fwhm(&self) -> f64 {
        2.0 * self.gamma
    }
}

/// Evaluates the Lorentzian variant at `f`.
pub fn lorentzian(f: f64, p: &LorentzianParams, variant: LorentzianVariant) -> f64 {
    let g2 = p.gamma * p.gamma;
    let d = match variant {
        LorentzianVariant::Standard => (f - p.f0) * (f - p.f0),
        LorentzianVariant::Quadratic => f * f - p.f0 * p.f0,
    };
    p.s0 * g2 / (d + g2) + p.s1
}

trait Model {
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64;
}

struct Curve<'a, M> {
    model: M,
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
}

impl<M: Model> LeastSquaresProblem<f64, Dyn, Dyn> for Curve<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let mut g = alloc::vec![0.0; self.p.len()];
        Some(DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .map(|(&x, &y)| self.model.eval(x, self.p.as_slice(), &mut g) - y),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let np = self.p.len();
        let mut j = DMatrix::zeros(self.x.len(), np);
        let mut g = alloc::vec![0.0; np];
        for (r, &x) in self.x.iter().enumerate() {
            self.model.eval(x, self.p.as_slice(), &mut g);
            for c in 0..np {
                j[(r, c)] = g[c];
            }
        }
        Some(j)
    }
}

struct Raw {
    p: Vec<f64>,
    cov: DMatrix<f64>,
    rss: f64,
    converged: bool,
}

fn least_squares<M: Model>(model: M, x: &[f64], y: &[f64], init: &[f64]) -> Raw {
    let problem = Curve {
        model,
        x,
        y,
        p: DVector::from_column_slice(init),
    };
    let (problem, report) = LevenbergMarquardt::new()
        .with_patience(400)
        .minimize(problem);
    let r = problem.residuals().unwrap_or_else(|| DVector::zeros(x.len()));
    let rss = r.norm_squared();
    let p: Vec<f64> = problem.p.iter().copied().collect();
    let finite = p.iter().all(|v| v.is_finite()) && rss.is_finite();
    let cov = covariance(&problem, rss, x.len());
    Raw {
        p,
        cov,
        rss,
        converged: finite && report.termination.was_successful(),
    }
}

// s^2 (J^T J)^-1, with a pseudo-inverse when the model is locally degenerate
fn covariance<M: Model>(problem: &Curve<'_, M>, rss: f64, m: usize) -> DMatrix<f64> {
    let np = problem.p.len();
    let Some(j) = problem.jacobian() else {
        return DMatrix::zeros(np, np);
    };
    let jtj = j.transpose() * &j;
    let inv = jtj
        .clone()
        .try_inverse()
        .filter(|i| i.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| {
            jtj.clone()
                .pseudo_inverse(1e-12 * jtj.norm())
                .unwrap_or_else(|_| DMatrix::zeros(np, np))
        });
    let dof = if m > np { (m - np) as f64 } else { 1.0 };
    let mut c = inv * (rss / dof);
    // symmetrise against rounding
    let ct = c.transpose();
    c = (c + ct) * 0.5;
    c
}

// parameters in sample units: [A, gamma per sample, cycles per sample, phase]
struct Sinusoid;

impl Model for Sinusoid {
    fn eval(&self, n: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let e = exp(-p[1] * n);
        let ph = 2.0 * PI * p[2] * n + p[3];
        let (s, c) = (sin(ph), cos(ph));
        g[0] = e * s;
        g[1] = -n * p[0] * e * s;
        g[2] = 2.0 * PI * n * p[0] * e * c;
        g[3] = p[0] * e * c;
        p[0] * e * s
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let mut r = phi % (2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    } else if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

fn initial_sinusoid(y: &[f64], guess: &SinusoidGuess) -> [f64; 4] {
    let n = y.len();
    let f = guess.f0.unwrap_or_else(|| {
        let t = TimeTrace {
            samples: y.to_vec(),
            t_s: 1.0,
        };
        let s = power_spectrum(&t, 4);
        let i = s.argmax().max(1);
        s.refine(i)
    });
    let gamma = guess.gamma.unwrap_or_else(|| envelope_slope(y, f));
    // single-bin DFT at f for amplitude and phase
    let mut x = C64::new(0.0, 0.0);
    let mut weight = 0.0;
    for (k, &v) in y.iter().enumerate() {
        let a = -2.0 * PI * f * k as f64;
        x += C64::new(cos(a), sin(a)) * v;
        weight += exp(-gamma * k as f64);
    }
    let scale = if (1e-3..=0.5 - 1e-3).contains(&f) { 2.0 } else { 1.0 };
    let a0 = guess.a0.unwrap_or(scale * x.norm() / weight.max(1.0));
    let phi = guess
        .phi0
        .unwrap_or_else(|| atan2(x.im, x.re) + 0.5 * PI);
    let _ = n;
    [a0, gamma, f, phi]
}

// decay per sample from a log-linear fit of block RMS values
fn envelope_slope(y: &[f64], f: f64) -> f64 {
    let n = y.len();
    let period = if f > 1e-6 { 1.0 / f } else { n as f64 };
    let len = ((2.0 * period) as usize).clamp(4, (n / 4).max(4));
    let blocks = n / len;
    if blocks < 2 {
        return 1.0 / n as f64;
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for b in 0..blocks {
        let chunk = &y[b * len..(b + 1) * len];
        let rms = sqrt(chunk.iter().map(|v| v * v).sum::<f64>() / len as f64);
        if rms <= 0.0 {
            continue;
        }
        let w = rms * rms;
        let x = (b as f64 + 0.5) * len as f64;
        let l = libm::log(rms);
        sw += w;
        sx += w * x;
        sy += w * l;
        sxx += w * x * x;
        sxy += w * x * l;
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return 1.0 / n as f64;
    }
    let slope = (sw * sxy - sx * sy) / det;
    (-slope).max(1e-3 / n as f64)
}

/// Least-squares fit of `A0 exp(-Gamma t) sin(2 pi f0 t + phi0)`.
///
/// Defaults for the start point come from the padded spectrum peak and a
/// log-linear fit of the block-wise envelope. Several decay rates around the
/// envelope estimate are tried and the best fit is kept.
pub fn fit_decaying_sinusoid(trace: &TimeTrace, init: Option<SinusoidGuess>) -> Result<FitResult<SinusoidParams>> {
    let y = &trace.samples;
    if y.len() < 8 {
        return Err(Error::DegenerateInput(format!("fit needs at least 8 samples, got {}", y.len())));
    }
    let t_s = trace.t_s;
    if y.iter().all(|&v| v == 0.0) {
        return Ok(FitResult {
            params: SinusoidParams {
                a0: 0.0,
                gamma: 0.0,
                f0: 0.0,
                phi0: 0.0,
            },
            covariance: DMatrix::zeros(4, 4),
            residual_norm: 0.0,
            converged: true,
            degenerate: true,
        });
    }
    let guess = init.unwrap_or_default();
    let guess = SinusoidGuess {
        gamma: guess.gamma.map(|g| g * t_s),
        f0: guess.f0.map(|f| f * t_s),
        ..guess
    };
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    let start = initial_sinusoid(y, &guess);
    let factors: &[f64] = if guess.gamma.is_some() { &[1.0] } else { &[1.0, 3.0, 0.3] };
    let mut best: Option<Raw> = None;
    for &k in factors {
        let mut p0 = start;
        p0[1] *= k;
        if k != 1.0 {
            p0 = initial_sinusoid(
                y,
                &SinusoidGuess {
                    gamma: Some(p0[1]),
                    f0: Some(p0[2]),
                    ..guess
                },
            );
        }
        let raw = least_squares(Sinusoid, &x, y, &p0);
        let better = match &best {
            None => true,
            Some(b) => (raw.converged && !b.converged) || (raw.converged == b.converged && raw.rss < b.rss),
        };
        if better {
            best = Some(raw);
        }
    }
    let raw = best.expect("at least one start");
    let mut p = raw.p.clone();
    let mut sign = [1.0; 4];
    // canonical form: f in [0, 1/2], A >= 0, phase in (-pi, pi]
    let mut f = p[2] - libm::floor(p[2]);
    if f > 0.5 {
        f -= 1.0;
    }
    p[2] = f;
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = PI - p[3];
        sign[2] = -sign[2];
        sign[3] = -sign[3];
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
        sign[0] = -sign[0];
    }
    p[3] = wrap_phase(p[3]);
    let gamma = p[1].max(0.0);
    let d = [sign[0], sign[1] / t_s, sign[2] / t_s, sign[3]];
    let mut cov = raw.cov.clone();
    for i in 0..4 {
        for j in 0..4 {
            cov[(i, j)] *= d[i] * d[j];
        }
    }
    Ok(FitResult {
        params: SinusoidParams {
            a0: p[0],
            gamma: gamma / t_s,
            f0: p[2] / t_s,
            phi0: p[3],
        },
        covariance: cov,
        residual_norm: sqrt(raw.rss),
        converged: raw.converged,
        degenerate: false,
    })
}

// frequencies in bins relative to the window start, powers scaled to unit peak
struct Lorentz {
    variant: LorentzianVariant,
    offset: f64,
}

impl Model for Lorentz {
    fn eval(&self, u: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (s0, gam, f0, _) = (p[0], p[1], p[2], p[3]);
        let g2 = gam * gam;
        let (d, dd_df0) = match self.variant {
            LorentzianVariant::Standard => ((u - f0) * (u - f0), -2.0 * (u - f0)),
            LorentzianVariant::Quadratic => {
                let (fa, f0a) = (u + self.offset, f0 + self.offset);
                (fa * fa - f0a * f0a, -2.0 * f0a)
            }
        };
        let den = d + g2;
        let l = g2 / den;
        g[0] = l;
        g[1] = s0 * 2.0 * gam * d / (den * den);
        g[2] = -s0 * g2 * dd_df0 / (den * den);
        g[3] = 1.0;
        s0 * l + p[3]
    }
}

/// Options for [`fit_lorentzian_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFitOptions {
    pub variant: LorentzianVariant,
    /// Detection threshold in robust baseline standard deviations.
    pub threshold: f64,
    /// Half width of the fit window in estimated line half-widths.
    pub window: f64,
}

impl Default for LorentzianFitOptions {
    fn default() -> Self {
        Self {
            variant: LorentzianVariant::Standard,
            threshold: PEAK_THRESHOLD,
            window: 8.0,
        }
    }
}

/// Fits a Lorentzian to the strongest peak of `spec`.
pub fn fit_lorentzian(spec: &Spectrum, variant: LorentzianVariant) -> Result<FitResult<LorentzianParams>> {
    fit_lorentzian_with(
        spec,
        &LorentzianFitOptions {
            variant,
            ..Default::default()
        },
    )
}

/// Fits a Lorentzian to the strongest peak of `spec` with explicit options.
pub fn fit_lorentzian_with(spec: &Spectrum, opts: &LorentzianFitOptions) -> Result<FitResult<LorentzianParams>> {
    if spec.len() < 8 {
        return Err(Error::DegenerateInput(format!("spectrum has {} bins", spec.len())));
    }
    let p = &spec.power;
    let (med, sigma) = robust_baseline(p);
    let ip = super::argmax(p);
    let height = p[ip] - med;
    if !(height > 0.0) || height <= opts.threshold * sigma {
        return Err(Error::PeakNotFound {
            threshold: opts.threshold,
        });
    }
    // half-height crossing on each side
    let half = med + 0.5 * height;
    let mut lo = ip;
    while lo > 0 && p[lo] > half {
        lo -= 1;
    }
    let mut hi = ip;
    while hi + 1 < p.len() && p[hi] > half {
        hi += 1;
    }
    let hw = (0.5 * (hi - lo) as f64).max(1.0);
    let reach = ((opts.window * hw) as usize).max(8);
    let a = ip.saturating_sub(reach);
    let b = (ip + reach + 1).min(p.len());
    if b - a < 8 {
        return Err(Error::DegenerateInput(format!("only {} bins around the peak", b - a)));
    }
    let df = spec.bin_width();
    let f_start = spec.freqs[a];
    let scale = p[ip].abs().max(f64::MIN_POSITIVE);
    let x: Vec<f64> = (a..b).map(|i| (spec.freqs[i] - f_start) / df).collect();
    let y: Vec<f64> = (a..b).map(|i| p[i] / scale).collect();
    let model = Lorentz {
        variant: opts.variant,
        offset: f_start / df,
    };
    let u0 = (spec.refine(ip) - f_start) / df;
    let s1 = med / scale;
    let init = match opts.variant {
        LorentzianVariant::Standard => [1.0 - s1, hw, u0, s1],
        LorentzianVariant::Quadratic => {
            // matching curvature at the peak: G_quadratic^2 = 2 f0 G_standard
            let f0a = u0 + f_start / df;
            [1.0 - s1, sqrt(2.0 * f0a.abs() * hw), u0, s1]
        }
    };
    let raw = least_squares(model, &x, &y, &init);
    let d = [scale, df, df, scale];
    let mut cov = raw.cov.clone();
    for i in 0..4 {
        for j in 0..4 {
            cov[(i, j)] *= d[i] * d[j];
        }
    }
    let params = LorentzianParams {
        s0: raw.p[0] * scale,
        gamma: fabs(raw.p[1]) * df,
        f0: raw.p[2] * df + f_start,
        s1: raw.p[3] * scale,
    };
    let in_band = params.f0 >= spec.freqs[0] && params.f0 <= *spec.freqs.last().unwrap_or(&0.0);
    Ok(FitResult {
        params,
        covariance: cov,
        residual_norm: sqrt(raw.rss) * scale,
        converged: raw.converged && in_band,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::spectra::power_spectrum;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synth(p: &SinusoidParams, n: usize, t_s: f64) -> TimeTrace {
        TimeTrace::new((0..n).map(|i| damped_sinusoid(i as f64, t_s, p)).collect(), t_s).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        fabs(a - b) / fabs(b)
    }

    #[test]
    fn noiseless_round_trip() {
        let t_s = 4e-6;
        let truth = SinusoidParams {
            a0: 1.0,
            gamma: 5000.0,
            f0: 0.23 / t_s,
            phi0: 0.4,
        };
        let fit = fit_decaying_sinusoid(&synth(&truth, 400, t_s), None).unwrap();
        assert!(fit.converged);
        let p = fit.params;
        assert!(rel(p.a0, 1.0) < 1e-6);
        assert!(rel(p.gamma, 5000.0) < 1e-6);
        assert!(rel(p.f0, truth.f0) < 1e-6);
        assert!(rel(p.phi0, 0.4) < 1e-6);
    }

    #[test]
    fn zeros_are_degenerate() {
        let t = TimeTrace::new(alloc::vec![0.0; 32], 1e-6).unwrap();
        let fit = fit_decaying_sinusoid(&t, None).unwrap();
        assert!(fit.degenerate && fit.converged);
        assert_eq!(fit.params.a0, 0.0);
    }

    #[test]
    fn refit_is_stable() {
        let t_s = 3e-6;
        let truth = SinusoidParams {
            a0: 0.3,
            gamma: 2000.0,
            f0: 0.41 / t_s,
            phi0: -1.2,
        };
        let mut rng = stream(3, 0);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut t = synth(&truth, 300, t_s);
        t.samples.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let a = fit_decaying_sinusoid(&t, None).unwrap();
        let p = a.params;
        let b = fit_decaying_sinusoid(
            &t,
            Some(SinusoidGuess {
                a0: Some(p.a0),
                gamma: Some(p.gamma),
                f0: Some(p.f0),
                phi0: Some(p.phi0),
            }),
        )
        .unwrap();
        let q = b.params;
        assert!(rel(q.a0, p.a0) < 1e-10);
        assert!(rel(q.gamma, p.gamma) < 1e-10);
        assert!(rel(q.f0, p.f0) < 1e-10);
        assert!(fabs(q.phi0 - p.phi0) < 1e-10);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let t_s = 1e-6;
        let truth = SinusoidParams {
            a0: 1.0,
            gamma: 3000.0,
            f0: 0.1 / t_s,
            phi0: 0.0,
        };
        let mut rng = stream(4, 0);
        let mut t = synth(&truth, 200, t_s);
        t.samples.iter_mut().for_each(|v| *v += 0.05 * (rng.random::<f64>() - 0.5));
        let fit = fit_decaying_sinusoid(&t, None).unwrap();
        let c = &fit.covariance;
        assert!((c - c.transpose()).norm() <= 1e-12 * c.norm());
        let eig = c.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-12 * c.norm()));
    }

    #[test]
    fn lorentzian_standard_round_trip() {
        let truth = LorentzianParams {
            s0: 3.0,
            gamma: 2.5e3,
            f0: 101.3e3,
            s1: 0.2,
        };
        let freqs: Vec<f64> = (0..400).map(|i| i as f64 * 500.0).collect();
        let power = freqs.iter().map(|&f| lorentzian(f, &truth, LorentzianVariant::Standard)).collect();
        let s = Spectrum {
            freqs,
            power,
            pad_factor: 1,
            normalized: false,
        };
        let fit = fit_lorentzian(&s, LorentzianVariant::Standard).unwrap();
        let p = fit.params;
        assert!(fit.converged);
        assert!(rel(p.s0, 3.0) < 1e-6 && rel(p.gamma, 2.5e3) < 1e-6);
        assert!(rel(p.f0, 101.3e3) < 1e-6 && rel(p.s1, 0.2) < 1e-6);
    }

    #[test]
    fn lorentzian_quadratic_round_trip_above_pole() {
        let truth = LorentzianParams {
            s0: 1.0,
            gamma: 2.0e4,
            f0: 100e3,
            s1: 0.05,
        };
        // the pole sits at sqrt(f0^2 - G^2), just below f0
        let freqs: Vec<f64> = (0..200).map(|i| 100e3 + i as f64 * 100.0).collect();
        let power = freqs.iter().map(|&f| lorentzian(f, &truth, LorentzianVariant::Quadratic)).collect();
        let s = Spectrum {
            freqs,
            power,
            pad_factor: 1,
            normalized: false,
        };
        let opts = LorentzianFitOptions {
            variant: LorentzianVariant::Quadratic,
            threshold: 0.0,
            window: 1e6,
        };
        let fit = fit_lorentzian_with(&s, &opts).unwrap();
        let p = fit.params;
        // above the pole only s0 G^2 and f0^2 - G^2 are identifiable
        let g2 = |q: &LorentzianParams| q.gamma * q.gamma;
        assert!(rel(p.s0 * g2(&p), truth.s0 * g2(&truth)) < 1e-6, "{p:?}");
        assert!(rel(p.f0 * p.f0 - g2(&p), truth.f0 * truth.f0 - g2(&truth)) < 1e-6, "{p:?}");
        assert!(rel(p.s1, truth.s1) < 1e-6);
    }

    #[test]
    fn flat_spectrum_has_no_peak() {
        let s = Spectrum {
            freqs: (0..64).map(|i| i as f64).collect(),
            power: alloc::vec![1.0; 64],
            pad_factor: 1,
            normalized: false,
        };
        assert!(matches!(
            fit_lorentzian(&s, LorentzianVariant::Standard),
            Err(Error::PeakNotFound { .. })
        ));
    }

    #[test]
    fn spectral_fit_recovers_damped_sinusoid() {
        let t_s = 5e-6;
        let truth = SinusoidParams {
            a0: 1.0,
            gamma: 2000.0,
            f0: 0.23 / t_s,
            phi0: 0.3,
        };
        let t = synth(&truth, 4000, t_s);
        let s = power_spectrum(&t, 4);
        let fit = fit_lorentzian(&s, LorentzianVariant::Standard).unwrap();
        assert!(fabs(fit.params.f0 - truth.f0) < s.bin_width());
        assert!(rel(fit.params.decay_rate(), truth.gamma) < 0.05, "{:?}", fit.params);
    }

    #[test]
    fn time_and_frequency_fits_agree() {
        let mut rng = stream(5, 0);
        for _ in 0..5 {
            let t_s = 4e-6;
            let truth = SinusoidParams {
                a0: 1.0,
                gamma: rng.random_range(1000.0..4000.0),
                f0: rng.random_range(0.1..0.4) / t_s,
                phi0: rng.random_range(-3.0..3.0),
            };
            let noise = Normal::new(0.0, 0.1 / 10.0).unwrap();
            let mut t = synth(&truth, 3000, t_s);
            t.samples.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            let a = fit_decaying_sinusoid(&t, None).unwrap();
            let s = power_spectrum(&t, 4);
            let b = fit_lorentzian(&s, LorentzianVariant::Standard).unwrap();
            assert!(fabs(a.params.f0 - b.params.f0) < s.bin_width());
            assert!(rel(b.params.decay_rate(), a.params.gamma) < 0.1);
        }
    }
}
