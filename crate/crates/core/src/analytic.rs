//! Geometric model of one weakly measured, freely precessing spin.
//!
//! Each readout rotates the meter by an angle proportional to the nuclear
//! x-projection. Averaged over meter outcomes, the nuclear Bloch vector keeps
//! its x-component and loses a factor `cos(beta)` on y and z. In polar form
//! that is a shrink of the in-plane radius ([`amplitude_factor`]) plus a
//! rotation towards the measured axis ([`phase_kick`]). Between readouts the
//! spin precesses by `alpha = omega0 * t_s`.
//!
//! The exact expressions are the defaults; `*_small_beta` variants give the
//! leading-order forms.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use libm::{asin, atan, atan2, cos, exp, hypot, log, sin, sqrt, tan};

use crate::{Error, Result};

/// Parameters of a periodically weakly measured spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakMeasParams {
    /// Meter rotation angle per readout (rad), in `[0, pi/2]`.
    pub beta: f64,
    /// Sampling interval (s).
    pub t_s: f64,
    /// Free precession frequency (rad/s).
    pub omega0: f64,
    /// Intrinsic dephasing rate (1/s).
    pub gamma_n: f64,
}

impl WeakMeasParams {
    pub fn new(beta: f64, t_s: f64, omega0: f64, gamma_n: f64) -> Result<Self> {
        let p = Self { beta, t_s, omega0, gamma_n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=FRAC_PI_2).contains(&self.beta) {
            return Err(Error::domain("beta must lie in [0, pi/2]"));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(Error::domain("t_s must be positive"));
        }
        if !(self.gamma_n >= 0.0 && self.gamma_n.is_finite()) {
            return Err(Error::domain("gamma_n must be non-negative"));
        }
        if !self.omega0.is_finite() {
            return Err(Error::domain("omega0 must be finite"));
        }
        Ok(())
    }

    /// Precession angle per sampling interval.
    pub fn alpha(&self) -> f64 {
        self.omega0 * self.t_s
    }
}

/// Nuclear spin vector in the rotating-free lab frame (unit length when pure).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Fully polarised along +x, the state after the initial pi/2 pulse.
    pub fn along_x() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    pub fn from_polar(r: f64, phi: f64, z: f64) -> Self {
        Self::new(r * cos(phi), r * sin(phi), z)
    }

    /// In-plane amplitude.
    pub fn r(&self) -> f64 {
        hypot(self.x, self.y)
    }

    /// In-plane angle.
    pub fn phi(&self) -> f64 {
        atan2(self.y, self.x)
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
    }
}

/// Outcome of the averaged-frequency analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    pub locked: bool,
    /// Average apparent precession rate (rad/s), on the alias branch of omega0.
    pub avg_omega: f64,
    /// Locking half-range (rad).
    pub delta_max: f64,
    /// Steady-state angle (rad) when locked.
    pub phi_ss: Option<f64>,
}

/// Reduces an angle to `(-pi/2, pi/2]`.
pub fn normalize_half_turn(phi: f64) -> f64 {
    let mut r = phi - PI * libm::round(phi / PI);
    if r <= -FRAC_PI_2 {
        r += PI;
    } else if r > FRAC_PI_2 {
        r -= PI;
    }
    r
}

/// Phase shift of the in-plane angle caused by one readout.
///
/// Exact form `atan(tan(phi) cos(beta)) - phi`, evaluated with `atan2` so it
/// stays continuous through `phi = pi/2`.
pub fn phase_kick(phi: f64, beta: f64) -> f64 {
    let p = normalize_half_turn(phi);
    atan2(sin(p) * cos(beta), cos(p)) - p
}

/// Leading-order phase kick `-(beta^2/4) sin(2 phi)`.
pub fn phase_kick_small_beta(phi: f64, beta: f64) -> f64 {
    -0.25 * beta * beta * sin(2.0 * phi)
}

/// In-plane shrink factor of one readout, in `[cos(beta), 1]`.
pub fn amplitude_factor(phi: f64, beta: f64) -> f64 {
    let s = sin(phi) * sin(beta);
    sqrt(1.0 - s * s)
}

/// Leading-order shrink factor `cos(beta sin(phi))`.
pub fn amplitude_factor_small_beta(phi: f64, beta: f64) -> f64 {
    cos(beta * sin(phi))
}

/// Ensemble decay rate `beta^2 / (4 t_s)` for uniformly distributed angles.
pub fn measurement_decay_rate(params: &WeakMeasParams) -> f64 {
    params.beta * params.beta / (4.0 * params.t_s)
}

/// Exact uniform-angle average of the log shrink, `-ln((1 + cos beta)/2) / t_s`.
pub fn measurement_decay_rate_exact(params: &WeakMeasParams) -> f64 {
    -log(0.5 * (1.0 + cos(params.beta))) / params.t_s
}

/// Locking half-range `beta^2 / 4`.
pub fn locking_range(beta: f64) -> f64 {
    0.25 * beta * beta
}

/// Largest magnitude of the exact [`phase_kick`], `pi/2 - 2 atan(sqrt(cos beta))`.
pub fn locking_range_exact(beta: f64) -> f64 {
    FRAC_PI_2 - 2.0 * atan(sqrt(cos(beta)))
}

/// Angle at which the kick cancels the per-step detuning, `asin(4 tan(alpha)/beta^2)/2`.
pub fn steady_state_angle(alpha: f64, beta: f64) -> Result<f64> {
    let t = tan(normalize_half_turn(alpha));
    let b2 = beta * beta;
    if b2 == 0.0 {
        return if t == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::OutsideLockingRange { ratio: f64::INFINITY })
        };
    }
    let ratio = 4.0 * t / b2;
    if ratio.abs() > 1.0 + 1e-12 {
        return Err(Error::OutsideLockingRange { ratio: ratio.abs() });
    }
    Ok(0.5 * asin(ratio.clamp(-1.0, 1.0)))
}

/// Small-angle steady state `2 alpha / beta^2`.
pub fn steady_state_angle_small(alpha: f64, beta: f64) -> f64 {
    2.0 * normalize_half_turn(alpha) / (beta * beta)
}

/// Decay rate of a locked spin, `2 Gamma_beta sin^2(phi_ss)`.
pub fn sync_decay_rate(alpha: f64, params: &WeakMeasParams) -> Result<f64> {
    let phi = steady_state_angle(alpha, params.beta)?;
    let s = sin(phi);
    Ok(2.0 * measurement_decay_rate(params) * s * s)
}

/// Small-angle locked decay rate `Gamma_beta alpha^2 / (2 delta_max^2)`.
pub fn sync_decay_rate_small(alpha: f64, params: &WeakMeasParams) -> Result<f64> {
    let d = locking_range(params.beta);
    let a = normalize_half_turn(alpha);
    if a.abs() > d {
        return Err(Error::OutsideLockingRange { ratio: a.abs() / d });
    }
    Ok(measurement_decay_rate(params) * a * a / (2.0 * d * d))
}

/// Nearest multiple of pi to `alpha` (ties to the lower one) and the signed remainder.
pub fn alias_branch(alpha: f64) -> (f64, f64) {
    let k = libm::ceil(alpha / PI - 0.5);
    (k, alpha - k * PI)
}

/// Average apparent precession rate under repeated readout.
///
/// Within `delta_max` of a multiple `k pi` of the per-step angle the spin
/// locks to `k pi / t_s`. Outside, the detuning from the branch is reduced
/// from `w'` to `sign(w') sqrt(w'^2 - Gamma_beta^2)`.
pub fn average_frequency(params: &WeakMeasParams) -> SyncResult {
    let delta_max = locking_range(params.beta);
    if delta_max == 0.0 {
        return SyncResult {
            locked: false,
            avg_omega: params.omega0,
            delta_max,
            phi_ss: None,
        };
    }
    let (k, rem) = alias_branch(params.alpha());
    let base = k * PI / params.t_s;
    if rem.abs() <= delta_max {
        SyncResult {
            locked: true,
            avg_omega: base,
            delta_max,
            phi_ss: steady_state_angle(rem, params.beta).ok(),
        }
    } else {
        let w = rem / params.t_s;
        let g = measurement_decay_rate(params);
        SyncResult {
            locked: false,
            avg_omega: base + w.signum() * sqrt(w * w - g * g),
            delta_max,
            phi_ss: None,
        }
    }
}

/// Applies one averaged readout to the spin vector.
pub fn measure(state: BlochState, beta: f64) -> BlochState {
    let (r, phi) = (state.r(), state.phi());
    if r == 0.0 {
        return BlochState::new(0.0, 0.0, state.z * cos(beta));
    }
    BlochState::from_polar(
        r * amplitude_factor(phi, beta),
        phi + phase_kick(phi, beta),
        state.z * cos(beta),
    )
}

/// States just before each of `n` readouts, starting from `initial`.
pub fn simulate_bloch_states(params: &WeakMeasParams, n: usize, initial: BlochState) -> Vec<BlochState> {
    let alpha = params.alpha();
    let damp = exp(-params.gamma_n * params.t_s);
    let (ca, sa) = (cos(alpha), sin(alpha));
    let mut out = Vec::with_capacity(n);
    let mut s = initial;
    for _ in 0..n {
        out.push(s);
        s = measure(s, params.beta);
        let (x, y) = (damp * s.x, damp * s.y);
        s = BlochState::new(ca * x - sa * y, sa * x + ca * y, s.z);
    }
    out
}

/// Meter signal `sin(beta) <I_x>` for `n` readouts.
///
/// The Bloch vector has unit length, so `<I_x> = x / 2`; the output is in the
/// same units as the meter expectation `<S_z>` of the density-matrix engine.
pub fn simulate_bloch_trace(params: &WeakMeasParams, n: usize, initial: BlochState) -> Vec<f64> {
    let sb = sin(params.beta);
    simulate_bloch_states(params, n, initial)
        .into_iter()
        .map(|s| 0.5 * sb * s.x)
        .collect()
}
