//! Run configuration: one versioned JSON document. Keys carry their unit as a
//! suffix (`_hz` for cyclic frequencies, `_s`, `_per_s`, `_t`, `_rad`, `_deg`);
//! unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spintrack_core::dm::{Coupling, EngineConfig, KickMode, Nucleus, PulseCycle, ReadoutMode, ReinitKicks, SpinSystem};
use spintrack_core::noise::{DriftModel, ReadoutModel};
use spintrack_core::protocol::{build_protocol, Axis, Polarization, Preset, Protocol, ProtocolConfig, Readout};
use spintrack_core::spectra::{LorentzianVariant, PEAK_THRESHOLD};
use spintrack_core::units::{hz_to_rad, rad_to_hz, GAMMA_13C};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Used when neither `--out` nor the environment names a directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub system: SystemConfig,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub noise: NoiseSection,
    /// Photon-count readout; adds a `counts` column when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSection>,
    /// Independent runs averaged into each trace.
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Bare nuclear Larmor frequency.
    pub larmor_hz: f64,
    #[serde(default = "default_gyro")]
    pub gyromagnetic_hz_per_t: f64,
    pub nuclei: Vec<NucleusConfig>,
}

fn default_gyro() -> f64 {
    rad_to_hz(GAMMA_13C)
}

/// Hyperfine couplings divided by 2 pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    pub a_par_hz: f64,
    pub a_perp_hz: f64,
}

/// Preset name plus optional overrides; every field is filled in once resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mid_pi: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<PolarizationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<[PhaseName; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolarizationConfig {
    None,
    Ideal { p: f64 },
    Repetitive { reps: usize, partial_angle_rad: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseName {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "-x")]
    MinusX,
    #[serde(rename = "-y")]
    MinusY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    /// Density-matrix engine.
    #[default]
    Dm,
    /// Closed-form Bloch model (single nucleus, ensemble readout).
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingName {
    Ideal,
    #[default]
    Cpmg,
    Xy8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutName {
    #[default]
    Ensemble,
    Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    #[serde(default)]
    pub kind: EngineKind,
    #[serde(default)]
    pub coupling: CouplingName,
    #[serde(default)]
    pub readout: ReadoutName,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub gamma_n_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reinit: Option<ReinitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinitConfig {
    pub t_readout_s: f64,
    #[serde(default)]
    pub mode: KickModeName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KickModeName {
    #[default]
    Averaged,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub amplitude_t: f64,
    pub corr_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub epsilon: f64,
    pub c0: f64,
    /// Shots summed into each recorded count.
    #[serde(default = "default_reps")]
    pub reps: f64,
}

fn default_reps() -> f64 {
    1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Conditional rotation of nucleus 0, set through its `a_perp`.
    BetaDeg,
    /// Sampling interval.
    TS,
    /// Interaction time.
    TBetaS,
    /// Half inter-pulse delay, which moves the filter centre.
    TauS,
    /// Bare precession per period `omega_L t_s`, set through the Larmor frequency.
    AlphaRad,
    /// Repetitions of the measurement-based polarisation.
    PolarizationReps,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::BetaDeg => "beta_deg",
            SweepAxis::TS => "t_s",
            SweepAxis::TBetaS => "t_beta_s",
            SweepAxis::TauS => "tau_s",
            SweepAxis::AlphaRad => "alpha_rad",
            SweepAxis::PolarizationReps => "polarization_reps",
        }
    }
}

/// Sweep grid, given as exactly one of `values`, `linear` or `geometric`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric: Option<GeometricGrid>,
}

/// `start, start + step, ...` up to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// `points` values spaced evenly in log from `start` to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LorentzianName {
    #[default]
    Standard,
    Quadratic,
}

impl From<LorentzianName> for LorentzianVariant {
    fn from(v: LorentzianName) -> Self {
        match v {
            LorentzianName::Standard => LorentzianVariant::Standard,
            LorentzianName::Quadratic => LorentzianVariant::Quadratic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_pad")]
    pub pad: usize,
    /// Band used for baseline normalisation; robust whole-spectrum statistics otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_band_hz: Option<[f64; 2]>,
    #[serde(default = "yes")]
    pub unfold: bool,
    #[serde(default)]
    pub lorentzian: LorentzianName,
    #[serde(default = "default_threshold")]
    pub peak_threshold: f64,
}

fn default_pad() -> usize {
    4
}

fn yes() -> bool {
    true
}

fn default_threshold() -> f64 {
    PEAK_THRESHOLD
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            pad: default_pad(),
            noise_band_hz: None,
            unfold: true,
            lorentzian: LorentzianName::default(),
            peak_threshold: PEAK_THRESHOLD,
        }
    }
}

/// Everything a single simulation needs, converted to core types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: SpinSystem,
    pub protocol: Protocol,
    pub engine: EngineConfig,
    pub readout: Option<(ReadoutModel, f64)>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported config version {} (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Reads a JSON config, or the config embedded in a file this tool wrote.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        match crate::io::embedded(&text, "config") {
            Some(json) => Self::from_json(json),
            None => Self::from_json(&text),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Copy with every protocol default and the sweep grid written out.
    /// The output directory is dropped so the result depends only on the physics.
    pub fn resolved(&self) -> CliResult<Self> {
        let mut out = self.clone();
        out.output_dir = None;
        let base = self.protocol_config()?;
        let p = &mut out.protocol;
        p.tau_s = Some(base.tau);
        p.n_pulses = Some(base.n_pulses);
        p.t_s = Some(base.t_s);
        p.overhead_s = Some(base.overhead);
        p.n_samples = Some(base.n_samples);
        p.mid_pi = Some(base.mid_pi);
        p.polarization = Some(match base.polarization {
            Polarization::None => PolarizationConfig::None,
            Polarization::Ideal { p } => PolarizationConfig::Ideal { p },
            Polarization::Repetitive { reps, partial_angle } => PolarizationConfig::Repetitive {
                reps,
                partial_angle_rad: partial_angle,
            },
        });
        if let Some(s) = &self.sweep {
            out.sweep = Some(SweepSection {
                axis: s.axis,
                values: Some(s.grid()?),
                linear: None,
                geometric: None,
            });
        }
        out.resolve()?;
        Ok(out)
    }

    fn preset(&self) -> CliResult<Preset> {
        Preset::from_name(&self.protocol.preset).ok_or_else(|| {
            CliError::config(format!(
                "unknown preset '{}' (expected weak-trace, alpha-sweep, bath-spectrum, ramsey or dd-sweep)",
                self.protocol.preset
            ))
        })
    }

    fn protocol_config(&self) -> CliResult<ProtocolConfig> {
        let mut c = ProtocolConfig::preset(self.preset()?);
        let p = &self.protocol;
        if let Some(v) = p.tau_s {
            c.tau = v;
        }
        if let Some(v) = p.n_pulses {
            c.n_pulses = v;
        }
        if let Some(v) = p.t_s {
            c.t_s = v;
        }
        if let Some(v) = p.overhead_s {
            c.overhead = v;
        }
        if let Some(v) = p.n_samples {
            c.n_samples = v;
        }
        if let Some(v) = p.mid_pi {
            c.mid_pi = v;
        }
        if let Some(v) = p.polarization {
            c.polarization = match v {
                PolarizationConfig::None => Polarization::None,
                PolarizationConfig::Ideal { p } => Polarization::Ideal { p },
                PolarizationConfig::Repetitive { reps, partial_angle_rad } => Polarization::Repetitive {
                    reps,
                    partial_angle: partial_angle_rad,
                },
            };
        }
        if let Some([a, b]) = p.phases {
            c.phases = Some((axis(a), axis(b)));
        }
        Ok(c)
    }

    pub fn spin_system(&self) -> CliResult<SpinSystem> {
        let s = &self.system;
        let mut errs = Vec::new();
        if !(s.larmor_hz > 0.0 && s.larmor_hz.is_finite()) {
            errs.push(format!("system.larmor_hz must be positive (got {})", s.larmor_hz));
        }
        if !(s.gyromagnetic_hz_per_t > 0.0 && s.gyromagnetic_hz_per_t.is_finite()) {
            errs.push(String::from("system.gyromagnetic_hz_per_t must be positive"));
        }
        if s.nuclei.iter().any(|n| !n.a_par_hz.is_finite() || !n.a_perp_hz.is_finite()) {
            errs.push(String::from("hyperfine couplings must be finite"));
        }
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        let nuclei = s
            .nuclei
            .iter()
            .map(|n| Nucleus {
                a_par: hz_to_rad(n.a_par_hz),
                a_perp: hz_to_rad(n.a_perp_hz),
            })
            .collect();
        SpinSystem::new(s.larmor_hz / s.gyromagnetic_hz_per_t, hz_to_rad(s.gyromagnetic_hz_per_t), nuclei)
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn engine_config(&self) -> CliResult<EngineConfig> {
        let n = &self.noise;
        let mut errs = Vec::new();
        if !(n.gamma_n_per_s >= 0.0 && n.gamma_n_per_s.is_finite()) {
            errs.push(format!("noise.gamma_n_per_s must be non-negative (got {})", n.gamma_n_per_s));
        }
        let drift = match n.drift {
            Some(d) => match DriftModel::new(d.amplitude_t, d.corr_time_s) {
                Ok(m) => Some(m),
                Err(e) => {
                    errs.push(format!("noise.drift: {e}"));
                    None
                }
            },
            None => None,
        };
        if let Some(r) = n.reinit {
            if !(r.t_readout_s >= 0.0 && r.t_readout_s.is_finite()) {
                errs.push(String::from("noise.reinit.t_readout_s must be non-negative"));
            }
        }
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        let engine = EngineConfig {
            coupling: match self.engine.coupling {
                CouplingName::Ideal => Coupling::Ideal,
                CouplingName::Cpmg => Coupling::Cpmg { cycle: PulseCycle::Cpmg },
                CouplingName::Xy8 => Coupling::Cpmg { cycle: PulseCycle::Xy8 },
            },
            dephasing_rate: n.gamma_n_per_s,
            kicks: n.reinit.map(|r| ReinitKicks {
                t_readout: r.t_readout_s,
                mode: match r.mode {
                    KickModeName::Averaged => KickMode::Averaged,
                    KickModeName::Sampled => KickMode::Sampled,
                },
            }),
            drift,
            readout: match self.engine.readout {
                ReadoutName::Ensemble => ReadoutMode::Ensemble,
                ReadoutName::Trajectory => ReadoutMode::Trajectory,
            },
        };
        engine.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(engine)
    }

    /// Validates the whole document and converts it for one simulation.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let mut errs = Vec::new();
        if self.repetitions == 0 {
            errs.push(String::from("repetitions must be at least 1"));
        }
        if self.analysis.pad == 0 {
            errs.push(String::from("analysis.pad must be at least 1"));
        }
        if let Some([lo, hi]) = self.analysis.noise_band_hz {
            if !(lo >= 0.0 && hi > lo) {
                errs.push(format!("analysis.noise_band_hz must satisfy 0 <= lo < hi (got [{lo}, {hi}])"));
            }
        }
        let readout = match self.readout {
            Some(r) => match ReadoutModel::new(r.epsilon, r.c0, 0.0) {
                Ok(m) if r.reps >= 1.0 && r.reps.is_finite() => Some((m, r.reps)),
                Ok(_) => {
                    errs.push(String::from("readout.reps must be at least 1"));
                    None
                }
                Err(e) => {
                    errs.push(format!("readout: {e}"));
                    None
                }
            },
            None => None,
        };
        if let Some(s) = &self.sweep {
            if let Err(CliError::Config(v)) = s.grid() {
                errs.extend(v);
            }
        }
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        let system = self.spin_system()?;
        let protocol = build_protocol(&self.protocol_config()?).map_err(|e| match e {
            spintrack_core::Error::Config(v) => CliError::Config(v.into_iter().map(|m| format!("protocol: {m}")).collect()),
            other => CliError::config(other.to_string()),
        })?;
        let engine = self.engine_config()?;
        if self.engine.kind == EngineKind::Analytic {
            let mut errs = Vec::new();
            if system.n_nuclei() != 1 {
                errs.push(String::from("the analytic engine models exactly one nucleus"));
            }
            if self.engine.readout == ReadoutName::Trajectory {
                errs.push(String::from("the analytic engine only supports ensemble readout"));
            }
            if protocol.readout != Readout::Weak || !protocol.init_rotation {
                errs.push(format!("the analytic engine does not model the {} preset", protocol.preset.name()));
            }
            if matches!(protocol.polarization, Polarization::Repetitive { .. }) {
                errs.push(String::from("the analytic engine does not model repetitive polarisation"));
            }
            if !errs.is_empty() {
                return Err(CliError::Config(errs));
            }
        }
        Ok(Resolved {
            system,
            protocol,
            engine,
            readout,
        })
    }

    /// Copy with the sweep axis set to `value` and the sweep removed.
    pub fn at_point(&self, axis: SweepAxis, value: f64) -> CliResult<Self> {
        let mut c = self.clone();
        c.sweep = None;
        let base = self.protocol_config()?;
        match axis {
            SweepAxis::BetaDeg => {
                let t_beta = 2.0 * base.tau * base.n_pulses as f64;
                let n0 = c
                    .system
                    .nuclei
                    .first_mut()
                    .ok_or_else(|| CliError::config("a beta sweep needs at least one nucleus"))?;
                n0.a_perp_hz = rad_to_hz(PI * value.to_radians() / t_beta);
            }
            SweepAxis::TS => c.protocol.t_s = Some(value),
            SweepAxis::TBetaS => match self.engine.coupling {
                CouplingName::Ideal => c.protocol.tau_s = Some(value / (2.0 * base.n_pulses as f64)),
                CouplingName::Cpmg | CouplingName::Xy8 => {
                    let unit = if self.engine.coupling == CouplingName::Xy8 { 4.0 } else { 2.0 };
                    let n = (value / (2.0 * base.tau) / unit).round().max(1.0) * unit;
                    c.protocol.n_pulses = Some(n as usize);
                }
            },
            SweepAxis::TauS => c.protocol.tau_s = Some(value),
            SweepAxis::AlphaRad => c.system.larmor_hz = value / (2.0 * PI * base.t_s),
            SweepAxis::PolarizationReps => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(CliError::config(format!(
                        "polarization_reps values must be positive integers (got {value})"
                    )));
                }
                let partial = match base.polarization {
                    Polarization::Repetitive { partial_angle, .. } => partial_angle,
                    _ => PI / 2.0,
                };
                c.protocol.polarization = Some(PolarizationConfig::Repetitive {
                    reps: value as usize,
                    partial_angle_rad: partial,
                });
            }
        }
        if base.preset == Preset::DdSweep && matches!(axis, SweepAxis::TauS | SweepAxis::TBetaS) {
            // single-shot scan: the period stretches to fit the pulse train
            let p = c.protocol_config()?;
            c.protocol.t_s = Some(base.t_s.max(2.0 * p.tau * p.n_pulses as f64 + p.overhead));
        }
        Ok(c)
    }
}

fn axis(p: PhaseName) -> Axis {
    match p {
        PhaseName::X => Axis::X,
        PhaseName::Y => Axis::Y,
        PhaseName::MinusX => Axis::MinusX,
        PhaseName::MinusY => Axis::MinusY,
    }
}

impl SweepSection {
    /// Axis values of the sweep.
    pub fn grid(&self) -> CliResult<Vec<f64>> {
        let given = [self.values.is_some(), self.linear.is_some(), self.geometric.is_some()];
        if given.iter().filter(|&&b| b).count() != 1 {
            return Err(CliError::config(
                "sweep needs exactly one of 'values', 'linear' or 'geometric'",
            ));
        }
        let v = if let Some(v) = &self.values {
            v.clone()
        } else if let Some(g) = self.linear {
            if !(g.step > 0.0) || g.stop < g.start || !g.start.is_finite() || !g.stop.is_finite() {
                return Err(CliError::config("sweep.linear needs step > 0 and stop >= start"));
            }
            let n = ((g.stop - g.start) / g.step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| g.start + i as f64 * g.step).collect()
        } else {
            let g = self.geometric.expect("checked above");
            if !(g.start > 0.0 && g.stop > 0.0) || g.points < 2 {
                return Err(CliError::config(
                    "sweep.geometric needs positive start and stop and at least 2 points",
                ));
            }
            let r = (g.stop / g.start).ln() / (g.points - 1) as f64;
            (0..g.points).map(|i| g.start * (r * i as f64).exp()).collect()
        };
        if v.is_empty() {
            return Err(CliError::config("sweep grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::config("sweep values must be finite"));
        }
        Ok(v)
    }
}
