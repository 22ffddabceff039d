//! Engine output pushed through the analysis chain, checked against the
//! closed-form model.

use std::f64::consts::PI;

use proptest::prelude::*;
use spintrack_core::analytic::{average_frequency, simulate_bloch_trace, BlochState, WeakMeasParams};
use spintrack_core::dm::{run_protocol, EngineConfig, SpinSystem};
use spintrack_core::noise::{photon_counts, ReadoutModel};
use spintrack_core::protocol::{build_protocol, fold, unfold_alias, Polarization, Preset, Protocol, ProtocolConfig};
use spintrack_core::rng::stream;
use spintrack_core::spectra::{fit_decaying_sinusoid, find_peaks, power_spectrum, TimeTrace};
use spintrack_core::units::{hz_to_rad, rad_to_hz};

fn protocol(preset: Preset, t_s: f64, n: usize) -> Protocol {
    build_protocol(&ProtocolConfig {
        t_s,
        n_samples: n,
        overhead: 0.0,
        ..ProtocolConfig::preset(preset)
    })
    .unwrap()
}

/// Nucleus with ideal conditional rotation `beta` under `p`.
fn spin(f_l: f64, beta: f64, p: &Protocol) -> SpinSystem {
    SpinSystem::single(hz_to_rad(f_l), 0.0, PI * beta / p.t_beta()).unwrap()
}

fn engine(gamma_n: f64) -> EngineConfig {
    EngineConfig {
        dephasing_rate: gamma_n,
        ..EngineConfig::ideal()
    }
}

#[test]
fn fitted_trace_matches_weak_measurement_laws() {
    let (f_l, t_s, beta, gamma_n) = (2.1549e6, 7.1e-6, 0.15, 1.0 / 134e-6);
    let p = protocol(Preset::WeakTrace, t_s, 300);
    let rec = run_protocol(&spin(f_l, beta, &p), &p, &engine(gamma_n), 0).unwrap();
    let fit = fit_decaying_sinusoid(&TimeTrace::new(rec.samples, t_s).unwrap(), None).unwrap();
    let q = fit.params;
    assert!((q.a0.abs() - 0.5 * beta.sin()).abs() < 0.02 * 0.5 * beta.sin(), "{q:?}");
    let predicted = beta * beta / (4.0 * t_s) + gamma_n;
    assert!((q.gamma / predicted - 1.0).abs() < 0.05, "{} vs {predicted}", q.gamma);
    assert!((q.f0 - fold(f_l, 1.0 / t_s)).abs() < 50.0, "{}", q.f0);
    assert!((unfold_alias(q.f0, &p.filter_spec()) - f_l).abs() < 50.0);
}

#[test]
fn photon_counts_keep_the_spectral_line() {
    let (f_l, t_s) = (2.1549e6, 5.68e-6);
    let p = protocol(Preset::BathSpectrum, t_s, 1520);
    let rec = run_protocol(&spin(f_l, 0.3, &p), &p, &engine(300.0), 0).unwrap();
    let ro = ReadoutModel::new(0.35, 0.1, 0.0).unwrap();
    let counts: Vec<f64> = photon_counts(&rec.samples, &ro, 1e6, &mut stream(9, 1))
        .into_iter()
        .map(|c| c as f64)
        .collect();
    let clean = TimeTrace::new(rec.samples, t_s).unwrap();
    let line = fit_decaying_sinusoid(&clean, None).unwrap().params;
    let half_width = line.gamma / (2.0 * PI);
    let spec = power_spectrum(&TimeTrace::new(counts, t_s).unwrap(), 4);
    let peaks = find_peaks(&spec, 4.0, 4);
    assert!(!peaks.is_empty());
    assert!((peaks[0].freq - line.f0).abs() < half_width, "{:?} vs {line:?}", peaks[0]);
    let unfolded = unfold_alias(peaks[0].freq, &p.filter_spec());
    assert!((unfolded - f_l).abs() < (line.f0 - fold(f_l, 1.0 / t_s)).abs() + half_width, "{unfolded}");
}

#[test]
fn unlocked_frequency_follows_average_frequency() {
    let t_s = 4.0e-6;
    let beta = 0.3;
    let p = protocol(Preset::WeakTrace, t_s, 400);
    for alpha in [0.6, 1.4, 2.5] {
        let f_l = rad_to_hz(alpha / t_s);
        let rec = run_protocol(&spin(f_l, beta, &p), &p, &engine(0.0), 0).unwrap();
        let fit = fit_decaying_sinusoid(&TimeTrace::new(rec.samples, t_s).unwrap(), None).unwrap();
        let params = WeakMeasParams::new(beta, t_s, alpha / t_s, 0.0).unwrap();
        let sync = average_frequency(&params);
        assert!(!sync.locked);
        let expected = fold(rad_to_hz(sync.avg_omega).abs(), 1.0 / t_s);
        assert!((fit.params.f0 - expected).abs() < 0.01 * expected, "alpha {alpha}: {} vs {expected}", fit.params.f0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_equals_bloch_model(beta in 0.01f64..0.6, alpha in 0.05f64..6.2, gamma_n in 0.0f64..2000.0) {
        let t_s = 5.0e-6;
        let p = protocol(Preset::WeakTrace, t_s, 60);
        let w = alpha / t_s;
        let sys = SpinSystem::single(w, 0.0, PI * beta / p.t_beta()).unwrap();
        let rec = run_protocol(&sys, &p, &engine(gamma_n), 0).unwrap();
        let params = WeakMeasParams::new(beta, t_s, w, gamma_n).unwrap();
        let model = simulate_bloch_trace(&params, 60, BlochState::along_x());
        for (a, b) in rec.samples.iter().zip(&model) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn unpolarised_spin_gives_flat_ensemble_signal(beta in 0.01f64..1.0, alpha in 0.05f64..6.2) {
        let t_s = 5.0e-6;
        let p = build_protocol(&ProtocolConfig {
            polarization: Polarization::None,
            ..ProtocolConfig { t_s, n_samples: 20, overhead: 0.0, ..ProtocolConfig::preset(Preset::WeakTrace) }
        })
        .unwrap();
        let sys = SpinSystem::single(alpha / t_s, 0.0, PI * beta / p.t_beta()).unwrap();
        let rec = run_protocol(&sys, &p, &engine(0.0), 0).unwrap();
        prop_assert!(rec.samples.iter().all(|s| s.abs() < 1e-12));
    }
}
