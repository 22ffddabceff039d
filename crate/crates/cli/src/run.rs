//! One simulated trace per configuration.

use rayon::prelude::*;
use spintrack_core::analytic::{simulate_bloch_trace, BlochState, WeakMeasParams};
use spintrack_core::dm::run_protocol;
use spintrack_core::noise::{drift_dephasing_rate, photon_counts, photon_readout, reinit_kick_rate};
use spintrack_core::protocol::Polarization;
use spintrack_core::rng::stream;

use crate::config::{EngineKind, Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{config_hash, TraceMeta};

/// Simulated record, averaged over repetitions.
#[derive(Debug, Clone)]
pub struct Trace {
    pub signal: Vec<f64>,
    pub counts: Option<Vec<u64>>,
    pub meta: TraceMeta,
    /// Fully resolved config that reproduces this trace.
    pub config_json: String,
}

/// splitmix64 finaliser, used to give every repetition its own seed.
fn mix(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `cfg` (its sweep section is ignored).
pub fn simulate(cfg: &RunConfig) -> CliResult<Trace> {
    let mut cfg = cfg.clone();
    cfg.sweep = None;
    let cfg = cfg.resolved()?;
    let r = cfg.resolve()?;
    let n = r.protocol.n_samples;
    let (signal, counts) = match cfg.engine.kind {
        EngineKind::Dm => dm_trace(&cfg, &r)?,
        EngineKind::Analytic => (analytic_trace(&r)?, None),
    };
    let counts = match (counts, r.readout) {
        (Some(c), _) => Some(c),
        (None, Some((model, reps))) => {
            let mut rng = stream(cfg.seed, 1);
            Some(photon_counts(&signal, &model, reps, &mut rng))
        }
        (None, None) => None,
    };
    debug_assert_eq!(signal.len(), n);
    let config_json = cfg.to_json();
    let t_beta = r.protocol.t_beta();
    let meta = TraceMeta {
        t_s: r.protocol.t_s,
        n_samples: n,
        preset: r.protocol.preset.name().to_string(),
        engine: match cfg.engine.kind {
            EngineKind::Dm => "dm",
            EngineKind::Analytic => "analytic",
        }
        .to_string(),
        tau_s: r.protocol.weak.tau,
        n_pulses: r.protocol.weak.n_pulses,
        t_beta_s: t_beta,
        betas: r.system.nuclei.iter().map(|nu| nu.coupling() * t_beta).collect(),
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        config_hash: config_hash(&config_json),
        sweep_axis: None,
        sweep_value: None,
    };
    Ok(Trace {
        signal,
        counts,
        meta,
        config_json,
    })
}

/// Trajectory runs record the measured `+-1/2` per shot; photon counts are then
/// drawn per shot and summed over repetitions.
fn dm_trace(cfg: &RunConfig, r: &Resolved) -> CliResult<(Vec<f64>, Option<Vec<u64>>)> {
    let reps = cfg.repetitions;
    let runs: Vec<(Vec<f64>, Option<Vec<u64>>)> = (0..reps as u64)
        .into_par_iter()
        .map(|k| {
            let seed = mix(cfg.seed, k);
            let rec = run_protocol(&r.system, &r.protocol, &r.engine, seed)?;
            Ok(match rec.outcomes {
                Some(o) => {
                    let shots: Vec<f64> = o.iter().map(|&v| 0.5 * v as f64).collect();
                    let counts = r.readout.map(|(model, _)| {
                        let mut rng = stream(seed, 1);
                        shots.iter().map(|&s| photon_readout(s, &model, &mut rng)).collect()
                    });
                    (shots, counts)
                }
                None => (rec.samples, None),
            })
        })
        .collect::<spintrack_core::Result<_>>()?;
    let n = r.protocol.n_samples;
    let mut signal = vec![0.0; n];
    for (s, _) in &runs {
        signal.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    signal.iter_mut().for_each(|a| *a /= reps as f64);
    let counts = if runs[0].1.is_some() {
        let mut c = vec![0u64; n];
        for (_, rc) in &runs {
            c.iter_mut().zip(rc.as_ref().expect("all runs count")).for_each(|(a, b)| *a += b);
        }
        Some(c)
    } else {
        None
    };
    Ok((signal, counts))
}

/// Closed-form model with the noise folded into one dephasing rate.
fn analytic_trace(r: &Resolved) -> CliResult<Vec<f64>> {
    let nuc = r.system.nuclei[0];
    let p = &r.protocol;
    let beta = nuc.coupling() * p.t_beta();
    let mut omega0 = r.system.omega_l();
    if p.mid_pi {
        omega0 += 0.5 * nuc.a_par;
    }
    let mut gamma = r.engine.dephasing_rate;
    if let Some(k) = r.engine.kicks {
        gamma += reinit_kick_rate(nuc.a_par, k.t_readout, p.t_s);
    }
    if let Some(d) = r.engine.drift {
        gamma += drift_dephasing_rate(&d, r.system.gamma_n);
    }
    let params = WeakMeasParams::new(beta, p.t_s, omega0, gamma).map_err(|e| {
        CliError::config(format!("analytic engine: {e} (beta = {beta} rad)"))
    })?;
    let scale = match p.polarization {
        Polarization::None => 0.0,
        Polarization::Ideal { p } => p,
        Polarization::Repetitive { .. } => unreachable!("rejected when resolving"),
    };
    Ok(simulate_bloch_trace(&params, p.n_samples, BlochState::along_x())
        .into_iter()
        .map(|v| scale * v)
        .collect())
}
