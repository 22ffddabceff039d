//! Protocol runner: preparation, repeated weak measurements, noise channels.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use libm::{atan2, exp};
use nalgebra::DMatrix;
use rand::Rng as _;

use super::ops::{conditional_rotation, embed, kron_all, magnetic_numbers, rotate_z, rotation, rotation_xy, PulseAxis};
use super::{
    build_hamiltonian, check_state, conjugate, dephase, DensityMatrix, Hamiltonian, MeterLevel, SpinSystem,
};
use crate::noise::{drift_step, sample_reinit_kick, DriftModel, DriftState};
use crate::protocol::{Axis, Polarization, Preset, Protocol, Readout, WeakMeasurement};
use crate::rng::{stream, Rng};
use crate::{Error, Result, C64};

/// Phase pattern of the decoupling pi pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseCycle {
    /// Alternating `X, -X`.
    #[default]
    Cpmg,
    /// `X Y X Y Y X Y X`, repeated; pulse counts must be multiples of 4.
    Xy8,
}

/// How the weak measurement is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Instantaneous conditional rotation by `beta_j = (a_perp^j / pi) t_beta`
    /// between the meter pi/2 pulses; free precession fills the whole `t_s`.
    Ideal,
    /// Explicit pulse train under the full Hamiltonian.
    Cpmg { cycle: PulseCycle },
}

/// Treatment of the random nuclear phase picked up during optical readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KickMode {
    /// Ensemble average (Gaussian dephasing channel).
    Averaged,
    /// One Gaussian draw per readout, shared by all nuclei.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinitKicks {
    /// Time the meter spends in `m_S = -1` during a readout, on average (s).
    pub t_readout: f64,
    pub mode: KickMode,
}

/// What happens to the meter after each weak measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutMode {
    /// Trace out the meter; samples are expectation values.
    #[default]
    Ensemble,
    /// Projective readout with a random outcome; the nuclei are conditioned on it.
    Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub coupling: Coupling,
    /// Nuclear dephasing rate `Gamma_n` (1/s).
    pub dephasing_rate: f64,
    pub kicks: Option<ReinitKicks>,
    pub drift: Option<DriftModel>,
    pub readout: ReadoutMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            coupling: Coupling::Cpmg { cycle: PulseCycle::Cpmg },
            dephasing_rate: 0.0,
            kicks: None,
            drift: None,
            readout: ReadoutMode::Ensemble,
        }
    }
}

impl EngineConfig {
    /// Ideal coupling, no noise.
    pub fn ideal() -> Self {
        Self {
            coupling: Coupling::Ideal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dephasing_rate >= 0.0 && self.dephasing_rate.is_finite()) {
            errs.push(alloc::format!("dephasing_rate must be >= 0 (got {})", self.dephasing_rate));
        }
        if let Some(k) = self.kicks {
            if !(k.t_readout >= 0.0 && k.t_readout.is_finite()) {
                errs.push(alloc::format!("t_readout must be >= 0 (got {})", k.t_readout));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn meter_pulse(axis: Axis, angle: f64, n_qubits: usize) -> DMatrix<C64> {
    let (x, y) = axis.vector();
    embed(&rotation_xy(atan2(y, x), angle), 0, n_qubits)
}

/// Joint unitary of the decoupling train including the enclosing pi/2 pulses.
pub(crate) fn cpmg_unitary(
    h: &Hamiltonian,
    tau: f64,
    n_pulses: usize,
    phases: (Axis, Axis),
    cycle: PulseCycle,
) -> DMatrix<C64> {
    let nq = h.n_nuclei() + 1;
    let edge = h.propagator(tau);
    let inner = h.propagator(2.0 * tau);
    let pis: Vec<DMatrix<C64>> = match cycle {
        PulseCycle::Cpmg => [Axis::X, Axis::MinusX].iter().map(|&a| meter_pulse(a, PI, nq)).collect(),
        PulseCycle::Xy8 => [Axis::X, Axis::Y, Axis::X, Axis::Y, Axis::Y, Axis::X, Axis::Y, Axis::X]
            .iter()
            .map(|&a| meter_pulse(a, PI, nq))
            .collect(),
    };
    let mut u = &edge * meter_pulse(phases.0, FRAC_PI_2, nq);
    for k in 0..n_pulses {
        u = &pis[k % pis.len()] * u;
        u = if k + 1 == n_pulses { &edge * u } else { &inner * u };
    }
    meter_pulse(phases.1, FRAC_PI_2, nq) * u
}

/// Joint unitary of one weak measurement block, meter pi/2 pulses included.
pub fn block_unitary(system: &SpinSystem, h: &Hamiltonian, weak: &WeakMeasurement, coupling: Coupling) -> DMatrix<C64> {
    match coupling {
        Coupling::Ideal => {
            let nq = system.n_nuclei() + 1;
            let t_beta = weak.t_beta();
            let betas: Vec<f64> = system.nuclei.iter().map(|n| n.coupling() * t_beta).collect();
            meter_pulse(weak.phases.1, FRAC_PI_2, nq)
                * conditional_rotation(&betas)
                * meter_pulse(weak.phases.0, FRAC_PI_2, nq)
        }
        Coupling::Cpmg { cycle } => cpmg_unitary(h, weak.tau, weak.n_pulses, weak.phases, cycle),
    }
}

/// Measurement-based polarisation: for each nucleus in turn, `reps` times,
/// meter pi/2 (X), conditional rotation by `partial_angle`, meter pi/2 (-Y),
/// nuclear Z rotation by pi/2, conditional rotation again, meter reset.
pub fn polarize_repetitive(
    rho: &DensityMatrix,
    system: &SpinSystem,
    reps: usize,
    partial_angle: f64,
) -> Result<DensityMatrix> {
    system.validate()?;
    let n = system.n_nuclei();
    if rho.n_nuclei() != n {
        return Err(Error::domain("state and system disagree on the number of nuclei"));
    }
    if reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    let nq = n + 1;
    let first = meter_pulse(Axis::X, FRAC_PI_2, nq);
    let second = meter_pulse(Axis::MinusY, FRAC_PI_2, nq);
    let mut seqs = Vec::with_capacity(n);
    for j in 0..n {
        let mut betas = alloc::vec![0.0; n];
        betas[j] = partial_angle;
        let uc = conditional_rotation(&betas);
        let rz = embed(&rotation(PulseAxis::Z, FRAC_PI_2), j + 1, nq);
        seqs.push(&uc * rz * second.clone() * &uc * first.clone());
    }
    let mut m = rho.matrix().clone();
    for _ in 0..reps {
        for u in &seqs {
            m = conjugate(u, &m);
            let d = m.nrows() / 2;
            let rho_n = m.view((0, 0), (d, d)) + m.view((d, d), (d, d));
            m = DensityMatrix::with_meter_reset(&rho_n).into_matrix();
        }
    }
    DensityMatrix::new(n, m)
}

/// Nuclear state after polarisation and the optional pi/2 (Y) tip.
fn prepare(system: &SpinSystem, protocol: &Protocol) -> Result<DMatrix<C64>> {
    let n = system.n_nuclei();
    let rho = match protocol.polarization {
        Polarization::None => DensityMatrix::thermal(n),
        Polarization::Ideal { p } => DensityMatrix::polarized(&alloc::vec![0.5 * p; n]),
        Polarization::Repetitive { reps, partial_angle } => {
            polarize_repetitive(&DensityMatrix::thermal(n), system, reps, partial_angle)?
        }
    };
    let mut rho_n = rho.nuclear();
    if protocol.init_rotation {
        let u = kron_all(&alloc::vec![rotation(PulseAxis::Y, FRAC_PI_2); n]);
        rho_n = conjugate(&u, &rho_n);
    }
    Ok(rho_n)
}

/// One readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Meter `<S_z>` before the readout.
    pub signal: f64,
    /// `+1` for `m_S = 0`, `-1` for `m_S = -1`, in trajectory mode.
    pub outcome: Option<i8>,
}

/// Parameters echoed with a record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub preset: Preset,
    pub n_nuclei: usize,
    pub tau: f64,
    pub n_pulses: usize,
    pub t_beta: f64,
    /// Nominal measurement strength `(a_perp / pi) t_beta` per nucleus.
    pub betas: Vec<f64>,
    pub coupling: Coupling,
    pub readout: ReadoutMode,
    pub seed: u64,
}

/// Output of a protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    /// Meter `<S_z>` per readout, in `[-1/2, 1/2]`.
    pub samples: Vec<f64>,
    /// Single-shot outcomes in trajectory mode.
    pub outcomes: Option<Vec<i8>>,
    /// Sampling interval (s).
    pub t_s: f64,
    pub meta: RecordMeta,
}

/// Stepwise simulator holding the reduced nuclear state between readouts
/// (the meter is always back in `m_S = 0` there).
#[derive(Debug, Clone)]
pub struct Simulator {
    system: SpinSystem,
    protocol: Protocol,
    engine: EngineConfig,
    ham: Hamiltonian,
    kraus: [DMatrix<C64>; 2],
    free: DMatrix<C64>,
    mags: Vec<Vec<f64>>,
    kick_factor: Option<DMatrix<f64>>,
    prepared: DMatrix<C64>,
    rho: DMatrix<C64>,
    rng: Rng,
    drift: DriftState,
    steps: usize,
    seed: u64,
}

impl Simulator {
    pub fn new(system: &SpinSystem, protocol: &Protocol, engine: &EngineConfig, seed: u64) -> Result<Self> {
        system.validate()?;
        engine.validate()?;
        let ham = build_hamiltonian(system)?;
        let t_free = match engine.coupling {
            Coupling::Ideal => protocol.t_s,
            Coupling::Cpmg { .. } => protocol.t_s - protocol.t_beta(),
        };
        if t_free < -1e-12 * protocol.t_s {
            return Err(Error::Config(alloc::vec![alloc::format!(
                "t_beta = {} s exceeds t_s = {} s",
                protocol.t_beta(),
                protocol.t_s
            )]));
        }
        if let Coupling::Cpmg { cycle: PulseCycle::Xy8 } = engine.coupling {
            if protocol.weak.n_pulses % 4 != 0 {
                return Err(Error::Config(alloc::vec![alloc::format!(
                    "XY8 trains need a multiple of 4 pulses (got {})",
                    protocol.weak.n_pulses
                )]));
            }
        }
        let t_free = t_free.max(0.0);
        let free = if protocol.mid_pi {
            ham.branch_propagator(MeterLevel::MinusOne, 0.5 * t_free)
                * ham.branch_propagator(MeterLevel::Zero, 0.5 * t_free)
        } else {
            ham.branch_propagator(MeterLevel::Zero, t_free)
        };
        let block = block_unitary(system, &ham, &protocol.weak, engine.coupling);
        let d = system.nuclear_dim();
        let kraus = [
            block.view((0, 0), (d, d)).into_owned(),
            block.view((d, 0), (d, d)).into_owned(),
        ];
        let mags = magnetic_numbers(system.n_nuclei());
        let kick_factor = match engine.kicks {
            Some(ReinitKicks {
                t_readout,
                mode: KickMode::Averaged,
            }) => Some(DMatrix::from_fn(d, d, |i, k| {
                let s: f64 = system
                    .nuclei
                    .iter()
                    .enumerate()
                    .map(|(j, nuc)| nuc.a_par * (mags[i][j] - mags[k][j]))
                    .sum();
                let x = t_readout * s;
                exp(-0.5 * x * x)
            })),
            _ => None,
        };
        let prepared = prepare(system, protocol)?;
        let mut rng = stream(seed, 0);
        let drift = match engine.drift {
            Some(m) => m.stationary(&mut rng),
            None => DriftState::default(),
        };
        Ok(Self {
            system: system.clone(),
            protocol: protocol.clone(),
            engine: *engine,
            ham,
            kraus,
            free,
            mags,
            kick_factor,
            rho: prepared.clone(),
            prepared,
            rng,
            drift,
            steps: 0,
            seed,
        })
    }

    /// Reduced nuclear state just before the next readout.
    pub fn nuclear_state(&self) -> &DMatrix<C64> {
        &self.rho
    }

    /// Replaces the nuclear state (must be a valid density matrix of the right size).
    pub fn set_nuclear_state(&mut self, rho: DMatrix<C64>) -> Result<()> {
        let d = self.system.nuclear_dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::domain(alloc::format!("expected a {d}x{d} nuclear state")));
        }
        check_state(&rho, 1e-9, true)?;
        self.rho = rho;
        Ok(())
    }

    /// Joint state just before the next readout.
    pub fn state(&self) -> DensityMatrix {
        DensityMatrix::with_meter_reset(&self.rho)
    }

    /// `<I_axis^j>` just before the next readout.
    pub fn nuclear_expect(&self, j: usize, axis: PulseAxis) -> f64 {
        super::expect(&self.rho, &super::nuclear_spin(self.system.n_nuclei(), j, axis))
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.ham
    }

    /// Meter-conditioned nuclear maps of the weak measurement, `<a| U |0>` for `a = 0, 1`.
    pub fn kraus(&self) -> &[DMatrix<C64>; 2] {
        &self.kraus
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn readout(&mut self, rho: &DMatrix<C64>) -> (Sample, DMatrix<C64>) {
        let a0 = conjugate(&self.kraus[0], rho);
        let a1 = conjugate(&self.kraus[1], rho);
        let (p0, p1) = (a0.trace().re, a1.trace().re);
        let signal = 0.5 * (p0 - p1);
        match self.engine.readout {
            ReadoutMode::Ensemble => (Sample { signal, outcome: None }, a0 + a1),
            ReadoutMode::Trajectory => {
                let u: f64 = self.rng.random();
                if u * (p0 + p1) < p0 {
                    (Sample { signal, outcome: Some(1) }, a0 / C64::from(p0))
                } else {
                    (Sample { signal, outcome: Some(-1) }, a1 / C64::from(p1))
                }
            }
        }
    }

    /// One weak measurement followed by re-initialisation noise and free
    /// evolution up to the next readout.
    pub fn step(&mut self) -> Sample {
        let rho = core::mem::replace(&mut self.rho, DMatrix::zeros(0, 0));
        let (sample, mut rho) = self.readout(&rho);
        if let Some(k) = self.engine.kicks {
            match k.mode {
                KickMode::Averaged => {
                    if let Some(f) = &self.kick_factor {
                        rho.zip_apply(f, |z, w| *z *= w);
                    }
                }
                KickMode::Sampled => {
                    let xi = sample_reinit_kick(1.0, k.t_readout, &mut self.rng);
                    let th: Vec<f64> = self.system.nuclei.iter().map(|n| n.a_par * xi).collect();
                    rotate_z(&mut rho, &self.mags, &th);
                }
            }
        }
        rho = conjugate(&self.free, &rho);
        dephase(&mut rho, self.engine.dephasing_rate * self.protocol.t_s);
        if let Some(model) = self.engine.drift {
            let (state, db) = drift_step(&model, self.drift, self.protocol.t_s, &mut self.rng);
            self.drift = state;
            let th = self.system.gamma_n * db * self.protocol.t_s;
            rotate_z(&mut rho, &self.mags, &alloc::vec![th; self.system.n_nuclei()]);
        }
        if cfg!(debug_assertions) {
            if let Err(e) = check_state(&rho, 1e-9, self.steps % 64 == 0) {
                panic!("state invariant violated after step {}: {e}", self.steps);
            }
        }
        self.rho = rho;
        self.steps += 1;
        sample
    }

    /// Ramsey point `k`: fresh preparation, free precession for `k t_s`, one readout.
    pub fn ramsey_point(&mut self, k: usize) -> Sample {
        let t = k as f64 * self.protocol.t_s;
        let u = self.ham.branch_propagator(MeterLevel::Zero, t);
        let mut rho = conjugate(&u, &self.prepared);
        dephase(&mut rho, self.engine.dephasing_rate * t);
        let (sample, _) = self.readout(&rho);
        self.steps += 1;
        sample
    }

    /// Runs the protocol's `n_samples` readouts.
    pub fn run(mut self) -> MeasurementRecord {
        let n = self.protocol.n_samples;
        let mut samples = Vec::with_capacity(n);
        let mut outcomes = Vec::new();
        for k in 0..n {
            let s = match self.protocol.readout {
                Readout::Weak => self.step(),
                Readout::Ramsey => self.ramsey_point(k),
            };
            samples.push(s.signal);
            if let Some(o) = s.outcome {
                outcomes.push(o);
            }
        }
        let t_beta = self.protocol.t_beta();
        MeasurementRecord {
            samples,
            outcomes: match self.engine.readout {
                ReadoutMode::Trajectory => Some(outcomes),
                ReadoutMode::Ensemble => None,
            },
            t_s: self.protocol.t_s,
            meta: RecordMeta {
                preset: self.protocol.preset,
                n_nuclei: self.system.n_nuclei(),
                tau: self.protocol.weak.tau,
                n_pulses: self.protocol.weak.n_pulses,
                t_beta,
                betas: self.system.nuclei.iter().map(|n| n.coupling() * t_beta).collect(),
                coupling: self.engine.coupling,
                readout: self.engine.readout,
                seed: self.seed,
            },
        }
    }
}

/// Prepares the nuclei and runs `protocol.n_samples` readouts.
pub fn run_protocol(
    system: &SpinSystem,
    protocol: &Protocol,
    engine: &EngineConfig,
    seed: u64,
) -> Result<MeasurementRecord> {
    Ok(Simulator::new(system, protocol, engine, seed)?.run())
}
