//! Photon-count readout, optical re-initialisation kicks, bias-field drift,
//! composite intrinsic dephasing and the sensitivity model.

use alloc::vec::Vec;

use libm::{exp, expm1, sqrt};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::{Error, Result};

/// Optical readout of the meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutModel {
    /// Optical contrast between the two meter levels.
    pub epsilon: f64,
    /// Mean photons per readout from the bright level.
    pub c0: f64,
    /// Mean time the meter spends outside its reference level while being
    /// re-initialised (s).
    pub t_readout: f64,
}

impl ReadoutModel {
    pub fn new(epsilon: f64, c0: f64, t_readout: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::domain("epsilon must lie in [0, 1]"));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::domain("c0 must be positive"));
        }
        if !(t_readout >= 0.0 && t_readout.is_finite()) {
            return Err(Error::domain("t_readout must be non-negative"));
        }
        Ok(Self { epsilon, c0, t_readout })
    }
}

/// Mean photon count for meter expectation `sz`; `+1/2` is the bright level.
pub fn photon_mean(sz: f64, model: &ReadoutModel) -> f64 {
    model.c0 * (1.0 - model.epsilon * (0.5 - sz))
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let k: f64 = d.sample(rng);
    k as u64
}

/// One Poisson photon count.
pub fn photon_readout<R: Rng + ?Sized>(sz: f64, model: &ReadoutModel, rng: &mut R) -> u64 {
    poisson(photon_mean(sz, model), rng)
}

/// Total count of `reps` independent repetitions of the same readout.
pub fn photon_readout_summed<R: Rng + ?Sized>(sz: f64, model: &ReadoutModel, reps: f64, rng: &mut R) -> u64 {
    poisson(reps * photon_mean(sz, model), rng)
}

/// Summed counts for a whole record of meter expectations.
pub fn photon_counts<R: Rng + ?Sized>(samples: &[f64], model: &ReadoutModel, reps: f64, rng: &mut R) -> Vec<u64> {
    samples
        .iter()
        .map(|&s| photon_readout_summed(s, model, reps, rng))
        .collect()
}

/// Dephasing rate from random re-initialisation phases, `a_par^2 t_readout^2 / (2 t_s)`.
pub fn reinit_kick_rate(a_par: f64, t_readout: f64, t_s: f64) -> f64 {
    let g = a_par * t_readout;
    g * g / (2.0 * t_s)
}

/// Gaussian Z angle with variance `(a_par t_readout)^2`.
pub fn sample_reinit_kick<R: Rng + ?Sized>(a_par: f64, t_readout: f64, rng: &mut R) -> f64 {
    let s = (a_par * t_readout).abs();
    if s == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    s * z
}

/// Ornstein-Uhlenbeck wander of the bias field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    /// Stationary standard deviation (T).
    pub amplitude: f64,
    /// Correlation time (s).
    pub corr_time: f64,
}

impl DriftModel {
    pub const NONE: Self = Self { amplitude: 0.0, corr_time: 1.0 };

    pub fn new(amplitude: f64, corr_time: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::domain("drift amplitude must be non-negative"));
        }
        if !(corr_time > 0.0) {
            return Err(Error::domain("drift correlation time must be positive"));
        }
        Ok(Self { amplitude, corr_time })
    }

    /// Drift whose stationary scatter is `ppm` parts per million of `b0`.
    pub fn from_ppm(ppm: f64, b0: f64, corr_time: f64) -> Result<Self> {
        Self::new(ppm * 1e-6 * b0.abs(), corr_time)
    }

    /// Draw from the stationary distribution.
    pub fn stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> DriftState {
        if self.amplitude == 0.0 {
            return DriftState { db: 0.0 };
        }
        let z: f64 = StandardNormal.sample(rng);
        DriftState { db: self.amplitude * z }
    }
}

/// Current field offset (T).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftState {
    pub db: f64,
}

/// Exact OU update over `dt`; returns the new state and its field offset.
pub fn drift_step<R: Rng + ?Sized>(model: &DriftModel, state: DriftState, dt: f64, rng: &mut R) -> (DriftState, f64) {
    if model.amplitude == 0.0 {
        return (DriftState { db: 0.0 }, 0.0);
    }
    let a = exp(-dt / model.corr_time);
    let s = model.amplitude * sqrt(-expm1(-2.0 * dt / model.corr_time));
    let z: f64 = StandardNormal.sample(rng);
    let db = a * state.db + s * z;
    (DriftState { db }, db)
}

/// Inverse 1/e time of the free-precession decay caused by OU field noise on
/// a nucleus with gyromagnetic ratio `gamma` (rad/s/T).
pub fn drift_dephasing_rate(model: &DriftModel, gamma: f64) -> f64 {
    let sigma = (gamma * model.amplitude).abs();
    if sigma == 0.0 {
        return 0.0;
    }
    let tc = model.corr_time;
    if !tc.is_finite() {
        return sigma / core::f64::consts::SQRT_2;
    }
    // solve (sigma tc)^2 (x - 1 + e^-x) = 1 for x = t / tc
    let c = sigma * sigma * tc * tc;
    let h = |x: f64| c * (x + expm1(-x)) - 1.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while h(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    1.0 / (0.5 * (lo + hi) * tc)
}

/// Intrinsic dephasing sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Phenomenological nuclear-bath linewidth (1/s).
    pub dipolar: f64,
    pub drift: DriftModel,
    /// Nuclear gyromagnetic ratio used to convert drift to frequency (rad/s/T).
    pub gamma_n: f64,
    /// Re-initialisation kick rate (1/s), see [`reinit_kick_rate`].
    pub gamma_gamma: f64,
}

impl NoiseModel {
    pub fn quiet(gamma_n: f64) -> Self {
        Self {
            dipolar: 0.0,
            drift: DriftModel::NONE,
            gamma_n,
            gamma_gamma: 0.0,
        }
    }
}

/// Total intrinsic dephasing rate; the contributions add.
pub fn intrinsic_dephasing(noise: &NoiseModel) -> f64 {
    noise.dipolar + drift_dephasing_rate(&noise.drift, noise.gamma_n) + noise.gamma_gamma
}

/// Coupling at which the two sensitivity regimes meet, `(t2n t2dd)^(-1/2)`.
pub fn snr_crossover(t2dd: f64, t2n: f64) -> f64 {
    1.0 / sqrt(t2n * t2dd)
}

/// Signal-to-noise ratio per square-root second for coupling `g` (rad/s).
///
/// Strong couplings are limited by the nuclear coherence, `eps sqrt(c0 / t2n)`;
/// weak ones by the meter coherence, `eps sqrt(c0 g^2 t2dd)`.
pub fn snr_estimate(g: f64, ro: &ReadoutModel, t2dd: f64, t2n: f64) -> f64 {
    if g > snr_crossover(t2dd, t2n) {
        ro.epsilon * sqrt(ro.c0 / t2n)
    } else {
        ro.epsilon * sqrt(ro.c0 * g * g * t2dd)
    }
}

/// Settings of the photon-counting sensitivity simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrMonteCarlo {
    /// Repetitions summed into each readout.
    pub reps_per_readout: f64,
    /// Independent traces used to estimate the spread of the amplitude.
    pub trials: usize,
    /// Precession angle per readout (rad).
    pub alpha: f64,
}

impl Default for SnrMonteCarlo {
    fn default() -> Self {
        Self {
            reps_per_readout: 1e6,
            trials: 300,
            alpha: 2.0,
        }
    }
}

/// Photon-count simulation of the amplitude sensitivity at coupling `g`.
///
/// The interaction time is chosen so measurement decay matches the nuclear
/// decay `1/t2n`, capped by the meter coherence `t2dd`; each readout lasts one
/// interaction time and the record spans `t2n`. The amplitude is estimated by
/// projecting the counts onto the known decaying template. Returns the ratio of
/// the mean estimate to its spread, divided by the square root of the record
/// duration.
pub fn snr_monte_carlo<R: Rng + ?Sized>(
    g: f64,
    ro: &ReadoutModel,
    t2dd: f64,
    t2n: f64,
    mc: &SnrMonteCarlo,
    rng: &mut R,
) -> f64 {
    let gamma_n = 1.0 / t2n;
    let t_beta = (4.0 * gamma_n / (g * g)).min(t2dd);
    let t_s = t_beta;
    let beta = (g * t_beta).min(core::f64::consts::FRAC_PI_2);
    let decay = gamma_n + beta * beta / (4.0 * t_s);
    let n = libm::ceil(t2n / t_s).max(8.0) as usize;
    let template: Vec<f64> = (0..n)
        .map(|i| exp(-decay * i as f64 * t_s) * libm::cos(mc.alpha * i as f64))
        .collect();
    let norm: f64 = template.iter().map(|x| x * x).sum();
    let amp = 0.5 * libm::sin(beta);
    let base = mc.reps_per_readout * photon_mean(0.0, ro);
    let mut est = Vec::with_capacity(mc.trials);
    for _ in 0..mc.trials {
        let mut acc = 0.0;
        for &x in &template {
            let c = photon_readout_summed(amp * x, ro, mc.reps_per_readout, rng) as f64;
            acc += (c - base) * x;
        }
        est.push(acc / norm);
    }
    let m = est.iter().sum::<f64>() / est.len() as f64;
    let v = est.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (est.len() - 1) as f64;
    m / sqrt(v) / sqrt(n as f64 * t_s)
}

/// Zero-mean Gaussian with the given standard deviation; helper for callers
/// that want the same distribution as the engine.
pub fn gaussian(std: f64) -> Normal<f64> {
    Normal::new(0.0, std.abs()).expect("finite standard deviation")
}
