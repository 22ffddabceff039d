//! Pulse timing, resonance conditions, the dynamical-decoupling filter
//! function and alias bookkeeping for undersampled spectra.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, fabs, floor, round, sin, sqrt};

use crate::{Error, Result};

/// Default readout overhead per weak measurement (s).
pub const DEFAULT_OVERHEAD: f64 = 2.8e-6;

/// Delay `tau` at which the decoupling train is resonant with a nucleus,
/// `pi / (2 (gamma_n b0 + a_par / 2))`.
pub fn resonance_delay(gamma_n: f64, b0: f64, a_par: f64) -> Result<f64> {
    let w = gamma_n * b0 + 0.5 * a_par;
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::domain("resonance requires gamma_n b0 + a_par/2 > 0"));
    }
    Ok(PI / (2.0 * w))
}

/// Interaction time at which measurement decay equals intrinsic dephasing,
/// `sqrt(4 gamma_n t_s) / g`.
pub fn optimal_interaction_time(gamma_n: f64, t_s: f64, g: f64) -> f64 {
    sqrt(4.0 * gamma_n * t_s) / g
}

/// Coupling at which measurement decay equals intrinsic dephasing for a given `t_beta`.
pub fn optimal_coupling(gamma_n: f64, t_s: f64, t_beta: f64) -> f64 {
    sqrt(4.0 * gamma_n * t_s) / t_beta
}

/// Inputs of the decoupling filter function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Interaction time (s).
    pub t_beta: f64,
    /// Half inter-pulse delay (s).
    pub tau: f64,
    /// Sampling interval (s).
    pub t_s: f64,
}

impl FilterSpec {
    pub fn new(t_beta: f64, tau: f64, t_s: f64) -> Result<Self> {
        for (name, v) in [("t_beta", t_beta), ("tau", tau), ("t_s", t_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive")));
            }
        }
        Ok(Self { t_beta, tau, t_s })
    }

    /// Centre frequency `1 / (4 tau)` (Hz).
    pub fn f_c(&self) -> f64 {
        0.25 / self.tau
    }

    /// Sampling rate (Hz).
    pub fn f_s(&self) -> f64 {
        1.0 / self.t_s
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.t_s
    }

    /// Nominal bandwidth `1 / t_beta` (Hz).
    pub fn bandwidth(&self) -> f64 {
        1.0 / self.t_beta
    }
}

/// Decoupling filter function `sinc(pi f t_beta) (1 - sec(2 pi f tau))`.
///
/// Close to the secant poles `2 pi f tau = (2k+1) pi/2`, and when `t_beta` is
/// an even multiple of `2 tau`, the zero of the sinc numerator is cancelled
/// analytically instead of dividing two small numbers.
pub fn filter_function(f: f64, spec: &FilterSpec) -> f64 {
    let f = fabs(f);
    if f == 0.0 {
        return 0.0;
    }
    let x = PI * f * spec.t_beta;
    let y = 2.0 * PI * f * spec.tau;
    let sinc = sin(x) / x;
    let k = floor(y / PI);
    let u = y - (k + 0.5) * PI;
    let m = spec.t_beta / (2.0 * spec.tau);
    let n = round(m);
    let even = fabs(m - n) < 1e-9 * m.max(1.0) && (n as i64) % 2 == 0;
    if fabs(u) < 1e-4 && even {
        // sin(x) / cos(y) = (-1)^(n/2 + k + 1) sin(n u) / sin(u)
        let sign = if ((n as i64 / 2) + k as i64 + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let ratio = if u == 0.0 { n } else { sin(n * u) / sin(u) };
        return sinc - sign * ratio / x;
    }
    sinc - sin(x) / (x * cos(y))
}

/// Full width at half maximum of the `|W|` lobe around `f_c` (Hz).
///
/// The secant factor skews the lobe, so its maximum sits slightly above `f_c`;
/// the half level refers to that maximum.
pub fn filter_fwhm(spec: &FilterSpec) -> f64 {
    let fc = spec.f_c();
    let step = 0.005 / spec.t_beta;
    let w = |f: f64| fabs(filter_function(f, spec));
    // coarse scan over the central lobe, then golden-section refinement
    let mut peak = fc;
    let mut k = -100.0;
    while k <= 100.0 {
        let f = fc + k * step;
        if f > 0.0 && w(f) > w(peak) {
            peak = f;
        }
        k += 1.0;
    }
    let g = 0.5 * (sqrt(5.0) - 1.0);
    let (mut a, mut b) = ((peak - step).max(0.0), peak + step);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if w(c) > w(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let peak = 0.5 * (a + b);
    let half = 0.5 * w(peak);
    let edge = |dir: f64| {
        let mut inner = peak;
        let mut outer = peak + dir * step;
        while w(outer) > half {
            inner = outer;
            outer += dir * step;
            if outer <= 0.0 {
                return 0.0;
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (inner + outer);
            if w(mid) > half {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        0.5 * (inner + outer)
    };
    edge(1.0) - edge(-1.0)
}

/// Apparent frequency of a real tone `f` sampled at `f_s`, in `[0, f_s/2]`.
pub fn fold(f: f64, f_s: f64) -> f64 {
    let r = f - f_s * floor(f / f_s);
    if r > 0.5 * f_s {
        f_s - r
    } else {
        r
    }
}

/// Nyquist zone containing `f_c`; every frequency in it survives
/// [`fold`] followed by [`unfold_alias`].
pub fn admissible_band(spec: &FilterSpec) -> (f64, f64) {
    let half = 0.5 * spec.f_s();
    let m = floor(spec.f_c() / half);
    (m * half, (m + 1.0) * half)
}

/// Alias `k f_s +- f_peak` closest to the filter centre, ties to the lower one.
pub fn unfold_alias(f_peak: f64, spec: &FilterSpec) -> f64 {
    let fs = spec.f_s();
    let fc = spec.f_c();
    let k0 = floor(fc / fs);
    let mut best = f_peak;
    let mut best_d = f64::INFINITY;
    for dk in -1..=2 {
        let k = k0 + dk as f64;
        if k < 0.0 {
            continue;
        }
        for cand in [k * fs - f_peak, k * fs + f_peak] {
            if cand < 0.0 {
                continue;
            }
            let d = fabs(cand - fc);
            if d < best_d || (d == best_d && cand < best) {
                best = cand;
                best_d = d;
            }
        }
    }
    best
}

/// Meter pulse phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    MinusX,
    MinusY,
}

impl Axis {
    /// Unit vector of the rotation axis in the transverse plane.
    pub fn vector(self) -> (f64, f64) {
        match self {
            Axis::X => (1.0, 0.0),
            Axis::Y => (0.0, 1.0),
            Axis::MinusX => (-1.0, 0.0),
            Axis::MinusY => (0.0, -1.0),
        }
    }
}

/// How the nucleus is prepared before the pi/2 pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Polarization {
    /// Thermal (fully mixed) nuclei.
    None,
    /// Ideal polarisation `p` in `[0, 1]`, giving `<I_z> = p / 2`.
    Ideal { p: f64 },
    /// Measurement-based polarisation repeated `reps` times with the given
    /// conditional rotation angle.
    Repetitive { reps: usize, partial_angle: f64 },
}

/// Settings of one weak measurement block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakMeasurement {
    pub tau: f64,
    pub n_pulses: usize,
    /// Meter pi/2 phases before and after the pulse train.
    pub phases: (Axis, Axis),
}

impl WeakMeasurement {
    /// Interaction time `2 tau N`.
    pub fn t_beta(&self) -> f64 {
        2.0 * self.tau * self.n_pulses as f64
    }
}

/// Readout scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Repeated weak readouts of one precessing spin.
    Weak,
    /// Fresh preparation, free evolution for `k t_s`, then one readout, for each k.
    Ramsey,
}

/// Named protocol families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    WeakTrace,
    AlphaSweep,
    BathSpectrum,
    Ramsey,
    DdSweep,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::WeakTrace => "weak-trace",
            Preset::AlphaSweep => "alpha-sweep",
            Preset::BathSpectrum => "bath-spectrum",
            Preset::Ramsey => "ramsey",
            Preset::DdSweep => "dd-sweep",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Preset::WeakTrace,
            Preset::AlphaSweep,
            Preset::BathSpectrum,
            Preset::Ramsey,
            Preset::DdSweep,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

/// A validated measurement protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub preset: Preset,
    pub polarization: Polarization,
    /// Apply a nuclear pi/2 about Y after polarisation.
    pub init_rotation: bool,
    pub weak: WeakMeasurement,
    pub t_s: f64,
    pub overhead: f64,
    /// Free delay padding each period to `t_s`.
    pub t_d: f64,
    /// Meter pi pulse in the middle of the free part of each period.
    pub mid_pi: bool,
    pub n_samples: usize,
    pub readout: Readout,
}

impl Protocol {
    pub fn t_beta(&self) -> f64 {
        self.weak.t_beta()
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            t_beta: self.t_beta(),
            tau: self.weak.tau,
            t_s: self.t_s,
        }
    }
}

/// Raw protocol request before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub preset: Preset,
    pub tau: f64,
    pub n_pulses: usize,
    pub t_s: f64,
    pub overhead: f64,
    pub n_samples: usize,
    pub polarization: Polarization,
    pub mid_pi: bool,
    /// Overrides the preset's enclosing phases.
    pub phases: Option<(Axis, Axis)>,
}

impl ProtocolConfig {
    /// Representative defaults for each preset. The weak-trace and ramsey
    /// defaults match a 2.1549 MHz nucleus; bath-spectrum is the 1520-sample
    /// record at `t_s = 5.68 us`, `t_beta = 1.86 us`.
    pub fn preset(preset: Preset) -> Self {
        let tau = 116.0e-9;
        let base = Self {
            preset,
            tau,
            n_pulses: 8,
            t_s: 7.1e-6,
            overhead: DEFAULT_OVERHEAD,
            n_samples: 400,
            polarization: Polarization::Ideal { p: 1.0 },
            mid_pi: false,
            phases: None,
        };
        match preset {
            Preset::WeakTrace | Preset::Ramsey => base,
            Preset::AlphaSweep => Self {
                tau: 1.0 / (4.0 * 7.25 / 3.56e-6),
                n_pulses: 2,
                t_s: 3.56e-6,
                n_samples: 300,
                ..base
            },
            Preset::BathSpectrum => Self {
                t_s: 5.68e-6,
                n_samples: 1520,
                mid_pi: true,
                ..base
            },
            Preset::DdSweep => Self {
                t_s: 2.0 * tau * 8.0 + DEFAULT_OVERHEAD,
                n_samples: 1,
                polarization: Polarization::None,
                ..base
            },
        }
    }
}

fn check_positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{name} must be positive and finite (got {v})"));
    }
}

/// Validates a request and fills in the derived timing.
pub fn build_protocol(cfg: &ProtocolConfig) -> Result<Protocol> {
    let mut errs = Vec::new();
    check_positive(&mut errs, "tau", cfg.tau);
    check_positive(&mut errs, "t_s", cfg.t_s);
    if !(cfg.overhead >= 0.0 && cfg.overhead.is_finite()) {
        errs.push(format!("overhead must be non-negative (got {})", cfg.overhead));
    }
    if cfg.n_pulses == 0 || cfg.n_pulses % 2 != 0 {
        errs.push(format!("n_pulses must be even and non-zero (got {})", cfg.n_pulses));
    }
    if cfg.n_samples == 0 {
        errs.push(String::from("n_samples must be at least 1"));
    }
    match cfg.polarization {
        Polarization::None => {}
        Polarization::Ideal { p } => {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("polarization p must lie in [0, 1] (got {p})"));
            }
        }
        Polarization::Repetitive { reps, partial_angle } => {
            if reps == 0 {
                errs.push(String::from("polarization reps must be at least 1"));
            }
            if !(0.0..=PI).contains(&partial_angle) {
                errs.push(format!("partial_angle must lie in [0, pi] (got {partial_angle})"));
            }
        }
    }
    let weak = WeakMeasurement {
        tau: cfg.tau,
        n_pulses: cfg.n_pulses,
        phases: cfg.phases.unwrap_or(match cfg.preset {
            Preset::DdSweep => (Axis::X, Axis::X),
            _ => (Axis::X, Axis::Y),
        }),
    };
    let t_beta = weak.t_beta();
    let mut t_d = cfg.t_s - t_beta - cfg.overhead;
    if t_beta.is_finite() && cfg.t_s.is_finite() && cfg.overhead.is_finite() {
        if t_d < -1e-12 * cfg.t_s.max(t_beta) {
            errs.push(format!(
                "t_s = {} s is shorter than t_beta + overhead = {} s",
                cfg.t_s,
                t_beta + cfg.overhead
            ));
        }
        t_d = t_d.max(0.0);
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let (init_rotation, readout) = match cfg.preset {
        Preset::DdSweep => (false, Readout::Weak),
        Preset::Ramsey => (true, Readout::Ramsey),
        _ => (true, Readout::Weak),
    };
    Ok(Protocol {
        preset: cfg.preset,
        polarization: cfg.polarization,
        init_rotation,
        weak,
        t_s: cfg.t_s,
        overhead: cfg.overhead,
        t_d,
        mid_pi: cfg.mid_pi,
        n_samples: cfg.n_samples,
        readout,
    })
}

/// One protocol per sampling interval from `start` to `stop` inclusive.
pub fn t_s_sweep(cfg: &ProtocolConfig, start: f64, stop: f64, step: f64) -> Result<Vec<Protocol>> {
    if !(step > 0.0) || stop < start {
        return Err(Error::Config(alloc::vec![String::from(
            "sweep needs step > 0 and stop >= start"
        )]));
    }
    let n = floor((stop - start) / step + 1e-9) as usize + 1;
    (0..n)
        .map(|i| {
            build_protocol(&ProtocolConfig {
                t_s: start + i as f64 * step,
                ..cfg.clone()
            })
        })
        .collect()
}

/// One single-shot protocol per delay in `taus`, keeping `t_s` at the minimum allowed.
pub fn dd_sweep(cfg: &ProtocolConfig, taus: &[f64]) -> Result<Vec<Protocol>> {
    taus.iter()
        .map(|&tau| {
            let t_beta = 2.0 * tau * cfg.n_pulses as f64;
            build_protocol(&ProtocolConfig {
                preset: Preset::DdSweep,
                tau,
                t_s: cfg.t_s.max(t_beta + cfg.overhead),
                ..cfg.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::GAMMA_13C;
    use proptest::prelude::*;

    fn ed6() -> FilterSpec {
        let tau = 116.0e-9;
        FilterSpec::new(16.0 * tau, tau, 1.968e-6).unwrap()
    }

    #[test]
    fn resonance_examples() {
        let b0 = 2.1549e6 * 2.0 * PI / GAMMA_13C;
        let tau = resonance_delay(GAMMA_13C, b0, 0.0).unwrap();
        assert!((tau - 1.0 / (4.0 * 2.1549e6)).abs() < 1e-18);
        assert!((tau * 1e9 - 116.0).abs() < 0.05);
        let half = resonance_delay(GAMMA_13C, 2.0 * b0, 0.0).unwrap();
        assert!((half / tau - 0.5).abs() < 1e-15);
        let shifted = resonance_delay(GAMMA_13C, b0, 2.0 * PI * 200e3).unwrap();
        assert!((shifted / tau - 2.1549e6 / (2.1549e6 + 100e3)).abs() < 1e-12);
        assert!(resonance_delay(GAMMA_13C, 0.0, 0.0).is_err());
        assert!(resonance_delay(GAMMA_13C, b0, -2.0 * 2.0 * PI * 2.1549e6).is_err());
    }

    #[test]
    fn optimal_time_examples() {
        let g = optimal_coupling(100.0, 5.68e-6, 1.86e-6);
        assert!((g / (2.0 * PI) - 4.1e3).abs() < 50.0);
        let t1 = optimal_interaction_time(100.0, 5.68e-6, g);
        assert!((t1 - 1.86e-6).abs() < 1e-18);
        let t4 = optimal_interaction_time(400.0, 5.68e-6, g);
        assert!((t4 / t1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn filter_zero_at_dc() {
        assert_eq!(filter_function(0.0, &ed6()), 0.0);
    }

    #[test]
    fn filter_finite_at_centre() {
        let s = ed6();
        let fc = s.f_c();
        let at = filter_function(fc, &s);
        assert!((at - 2.0 / PI).abs() < 1e-12);
        for eps in [1e-3, 1e-5, 1e-7] {
            let lo = filter_function(fc * (1.0 - eps), &s);
            let hi = filter_function(fc * (1.0 + eps), &s);
            // the slope at the centre is about 0.36 per unit relative detuning
            assert!((lo - at).abs() < eps);
            assert!((hi - at).abs() < eps);
        }
        let lo = filter_function(fc * (1.0 - 1e-8), &s);
        let hi = filter_function(fc * (1.0 + 1e-8), &s);
        assert!((lo - hi).abs() < 1e-6);
        // twice as long a train gives the same finite limit structure
        let s4 = FilterSpec::new(4.0 * 8.0 * s.tau, s.tau, s.t_s).unwrap();
        let a = filter_function(fc * (1.0 - 2e-5), &s4);
        let b = filter_function(fc * (1.0 + 2e-5), &s4);
        assert!(a.is_finite() && (a - b).abs() < 1e-4);
    }

    #[test]
    fn series_branch_matches_direct_formula_just_outside() {
        let s = ed6();
        for k in [0.0, 1.0, 2.0] {
            let pole = (2.0 * k + 1.0) * s.f_c();
            let f_in = pole * (1.0 + 0.99e-4 / ((k + 0.5) * PI));
            let f_out = pole * (1.0 + 1.01e-4 / ((k + 0.5) * PI));
            let a = filter_function(f_in, &s);
            let b = filter_function(f_out, &s);
            assert!((a - b).abs() < 1e-4 * a.abs().max(1e-3), "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn fwhm_near_inverse_interaction_time() {
        let s = ed6();
        let w = filter_fwhm(&s);
        let ratio = w * s.t_beta;
        assert!(ratio > 1.15 && ratio < 1.25, "{ratio}");
    }

    #[test]
    fn fwhm_matches_dense_scan() {
        let s = ed6();
        let fc = s.f_c();
        let df = 1.0 / (s.t_beta * 20_000.0);
        let grid: Vec<(f64, f64)> = (-20_000..=20_000)
            .map(|k| fc + k as f64 * df)
            .map(|f| (f, filter_function(f, &s).abs()))
            .collect();
        let peak = grid.iter().map(|g| g.1).fold(0.0, f64::max);
        let above: Vec<f64> = grid.iter().filter(|g| g.1 >= 0.5 * peak).map(|g| g.0).collect();
        let scanned = above[above.len() - 1] - above[0];
        assert!((filter_fwhm(&s) - scanned).abs() < 2.0 * df);
    }

    #[test]
    fn fwhm_tends_to_sinc_width() {
        // main-lobe width of sinc(pi f t_beta) is 1.2067 / t_beta
        for t_beta in [1e-6, 3e-6, 10e-6, 50e-6, 250e-6] {
            let mut prev = 0.0;
            for n in [2.0, 4.0, 8.0, 16.0, 32.0] {
                let tau = t_beta / (2.0 * n);
                let s = FilterSpec::new(t_beta, tau, 1e-3).unwrap();
                let r = filter_fwhm(&s) * t_beta;
                assert!((1.10..=1.2068).contains(&r), "N={n} t_beta={t_beta}: {r}");
                assert!(r > prev);
                prev = r;
            }
        }
    }

    #[test]
    fn fold_examples() {
        assert_eq!(fold(100.0, 1000.0), 100.0);
        assert_eq!(fold(900.0, 1000.0), 100.0);
        assert_eq!(fold(1100.0, 1000.0), 100.0);
        assert_eq!(fold(1500.0, 1000.0), 500.0);
    }

    #[test]
    fn unfold_identity_for_in_band_centre() {
        let s = FilterSpec::new(1e-6, 1e-6, 1e-6).unwrap();
        assert!(s.f_c() < s.nyquist());
        assert_eq!(unfold_alias(s.f_c(), &s), s.f_c());
    }

    #[test]
    fn admissible_band_contains_centre_and_spans_half_rate() {
        let s = ed6();
        let (lo, hi) = admissible_band(&s);
        assert!(lo <= s.f_c() && s.f_c() <= hi);
        assert!((hi - lo - s.nyquist()).abs() < 1e-6);
    }

    #[test]
    fn ed6_offsets() {
        let s = ed6();
        let fc = s.f_c();
        for off in [-10e3, 100e3] {
            let f = fc + off;
            let back = unfold_alias(fold(f, s.f_s()), &s);
            assert!((back - f).abs() < 1e-6);
        }
        let f3 = fc - 300e3;
        assert!(f3 < admissible_band(&s).0);
    }

    #[test]
    fn build_rejects_short_period() {
        let mut cfg = ProtocolConfig::preset(Preset::WeakTrace);
        cfg.t_s = 1e-6;
        let err = build_protocol(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(ref v) if v.len() == 1));
        cfg.n_pulses = 3;
        cfg.n_samples = 0;
        match build_protocol(&cfg).unwrap_err() {
            Error::Config(v) => assert_eq!(v.len(), 3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn bath_preset_timing() {
        let p = build_protocol(&ProtocolConfig::preset(Preset::BathSpectrum)).unwrap();
        assert_eq!(p.n_samples, 1520);
        assert!((p.t_s - 5.68e-6).abs() < 1e-15);
        assert!((p.t_beta() - 1.86e-6).abs() < 0.01e-6);
        assert!(p.mid_pi);
        assert!((p.t_d - (p.t_s - p.t_beta() - p.overhead)).abs() < 1e-18);
    }

    #[test]
    fn alpha_sweep_has_fifty_points() {
        let cfg = ProtocolConfig::preset(Preset::AlphaSweep);
        let ps = t_s_sweep(&cfg, 3.56e-6, 4.05e-6, 10e-9).unwrap();
        assert_eq!(ps.len(), 50);
        assert!((ps[49].t_s - 4.05e-6).abs() < 1e-15);
    }

    #[test]
    fn dd_sweep_uses_equal_phases() {
        let cfg = ProtocolConfig::preset(Preset::DdSweep);
        let ps = dd_sweep(&cfg, &[100e-9, 116e-9, 130e-9]).unwrap();
        assert!(ps.iter().all(|p| p.weak.phases.0 == p.weak.phases.1 && !p.init_rotation));
    }

    proptest! {
        #[test]
        fn filter_even_and_secant_periodic(f in 1.0..5e6f64) {
            let s = ed6();
            prop_assert_eq!(filter_function(-f, &s), filter_function(f, &s));
        }

        #[test]
        fn unfold_inverts_fold_on_band(u in 0.0..1.0f64) {
            let s = ed6();
            let (lo, hi) = admissible_band(&s);
            let f = lo + u * (hi - lo);
            let back = unfold_alias(fold(f, s.f_s()), &s);
            prop_assert!((back - f).abs() < 1e-6 * f);
        }

        #[test]
        fn fold_of_unfold_is_identity(u in 0.0..1.0f64, tau in 50e-9..500e-9f64, t_s in 1e-6..20e-6f64) {
            let s = FilterSpec::new(16.0 * tau, tau, t_s).unwrap();
            let f = u * s.nyquist();
            let up = unfold_alias(f, &s);
            prop_assert!((fold(up, s.f_s()) - f).abs() < 1e-6 * s.f_s());
        }

        #[test]
        fn optimal_round_trip(gn in 1.0..1e4f64, t_s in 1e-6..1e-4f64, g in 1e2..1e6f64) {
            let t = optimal_interaction_time(gn, t_s, g);
            let back = optimal_coupling(gn, t_s, t);
            prop_assert!((back / g - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100_000))]
        #[test]
        fn built_protocols_satisfy_invariants(
            tau in -1e-7..1e-6f64,
            n_pulses in 0usize..40,
            t_s in -1e-6..4e-5f64,
            overhead in -1e-6..5e-6f64,
            n_samples in 0usize..5,
            p in -0.5..1.5f64,
            preset in 0usize..5,
        ) {
            let presets = [Preset::WeakTrace, Preset::AlphaSweep, Preset::BathSpectrum, Preset::Ramsey, Preset::DdSweep];
            let cfg = ProtocolConfig {
                preset: presets[preset],
                tau, n_pulses, t_s, overhead, n_samples,
                polarization: Polarization::Ideal { p },
                mid_pi: false,
                phases: None,
            };
            if let Ok(pr) = build_protocol(&cfg) {
                prop_assert!(pr.weak.n_pulses % 2 == 0 && pr.weak.n_pulses > 0);
                prop_assert!(pr.t_d >= 0.0);
                prop_assert!(pr.t_s + 1e-12 * pr.t_s >= pr.t_beta() + pr.overhead);
                prop_assert!((pr.t_d - (pr.t_s - pr.t_beta() - pr.overhead)).abs() <= 1e-12 * pr.t_s);
                prop_assert!(pr.n_samples >= 1);
                prop_assert!(pr.weak.tau > 0.0);
            }
        }
    }
}
