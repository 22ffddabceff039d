use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use spintrack_core::protocol::{build_protocol, filter_fwhm, filter_function, FilterSpec, Preset, ProtocolConfig};
use spintrack_core::spectra::TimeTrace;

use crate::analysis::{analyze, Analysis, FitStatus};
use crate::config::{AnalysisSection, EngineKind, LorentzianName, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, num, read_trace, sibling, write_json, write_table, write_trace};
use crate::run::{simulate, Trace};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub engine: Option<EngineKind>,
    pub out: Option<PathBuf>,
}

impl Globals {
    fn load(&self) -> CliResult<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs --config <file>"))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.engine {
            cfg.engine.kind = e;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: Option<&RunConfig>, fallback: &Path) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.output_dir.as_ref().map(PathBuf::from)))
            .unwrap_or_else(|| fallback.to_path_buf())
    }
}

const MIN_FIT_SAMPLES: usize = 4;

fn print(v: serde_json::Value) {
    println!("{v}");
}

fn filter_of(meta: &io::TraceMeta) -> Option<FilterSpec> {
    FilterSpec::new(meta.t_beta_s, meta.tau_s, meta.t_s).ok()
}

fn save_trace(path: &Path, t: &Trace) -> CliResult<()> {
    write_trace(path, &t.config_json, &t.meta, &t.signal, t.counts.as_deref())
}

pub fn cmd_simulate(g: &Globals) -> CliResult<()> {
    let cfg = g.load()?;
    let dir = g.out_dir(Some(&cfg), Path::new("."));
    let t = simulate(&cfg)?;
    let path = dir.join("trace.csv");
    save_trace(&path, &t)?;
    print(json!({
        "trace": path,
        "n_samples": t.meta.n_samples,
        "config_hash": t.meta.config_hash,
    }));
    Ok(())
}

#[derive(Serialize)]
struct PointFit<'a> {
    index: usize,
    axis_value: f64,
    trace: String,
    mean_signal: f64,
    analysis: Option<&'a Analysis>,
}

/// Point `i` of a sweep runs with seed `seed + i`.
pub fn cmd_sweep(g: &Globals) -> CliResult<()> {
    let cfg = g.load()?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::config("sweep needs a 'sweep' section in the config"))?;
    cfg.resolve()?;
    let grid = sweep.grid()?;
    let dir = g.out_dir(Some(&cfg), Path::new("."));
    let points: Vec<RunConfig> = grid
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = cfg.at_point(sweep.axis, v)?;
            c.seed = cfg.seed.wrapping_add(i as u64);
            Ok(c)
        })
        .collect::<CliResult<_>>()?;
    let results: Vec<(Trace, Option<Analysis>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut t = simulate(c)?;
            t.meta.sweep_axis = Some(sweep.axis.name().to_string());
            t.meta.sweep_value = Some(grid[i]);
            // single-readout presets such as dd-sweep only report the mean signal
            let a = if t.signal.len() >= MIN_FIT_SAMPLES {
                Some(analyze_trace(&t.signal, "signal", t.meta.t_s, filter_of(&t.meta), &cfg.analysis)?)
            } else {
                None
            };
            Ok((t, a))
        })
        .collect::<CliResult<_>>()?;

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &i in &order {
        let (t, a) = &results[i];
        let name = format!("traces/point_{i:03}.csv");
        save_trace(&dir.join(&name), t)?;
        let mean = t.signal.iter().sum::<f64>() / t.signal.len() as f64;
        let mut row = vec![num(grid[i])];
        match a {
            Some(a) => {
                let s = &a.sinusoid;
                row.extend([s.a0, s.a0_err, s.gamma_per_s, s.gamma_err, s.f0_hz, s.f0_err, mean].map(num));
                row.push(s.status.name().to_string());
            }
            None => {
                row.extend([f64::NAN; 6].map(num));
                row.push(num(mean));
                row.push(String::from("no_fit"));
            }
        }
        row.push(name.clone());
        rows.push(row);
        fits.push(PointFit {
            index: i,
            axis_value: grid[i],
            trace: name,
            mean_signal: mean,
            analysis: a.as_ref(),
        });
    }
    let axis = sweep.axis.name();
    write_table(
        &dir.join("summary.csv"),
        &[],
        &["axis", "A0", "A0_err", "gamma_s", "gamma_err", "f0_hz", "f0_err", "mean_signal", "status", "trace"],
        &rows,
    )?;
    write_json(&dir.join("fits.json"), &json!({ "axis": axis, "points": fits }))?;

    let mut outputs = vec![dir.join("summary.csv"), dir.join("fits.json")];
    if Preset::from_name(&cfg.protocol.preset) == Some(Preset::AlphaSweep) {
        let mut m = Vec::new();
        for &i in &order {
            let Some(a) = &results[i].1 else { continue };
            for (k, (&f, &p)) in a.spectrum.freqs.iter().zip(&a.spectrum.power).enumerate() {
                m.push(vec![num(grid[i]), num(f), num(p), num(a.power_norm[k])]);
            }
        }
        let path = dir.join("spectra_matrix.csv");
        write_table(&path, &[], &["axis", "freq_hz", "power", "power_norm"], &m)?;
        outputs.push(path);
    }
    let failed = results
        .iter()
        .filter(|(_, a)| a.as_ref().is_some_and(|a| a.sinusoid.status != FitStatus::Ok))
        .count();
    print(json!({ "points": grid.len(), "fit_failures": failed, "outputs": outputs }));
    Ok(())
}

fn analyze_trace(
    samples: &[f64],
    column: &str,
    t_s: f64,
    filter: Option<FilterSpec>,
    opts: &AnalysisSection,
) -> CliResult<Analysis> {
    let trace = TimeTrace::new(samples.to_vec(), t_s).map_err(|e| CliError::Format(e.to_string()))?;
    analyze(&trace, column, filter, opts)
}

/// Command-line overrides of the analysis settings.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeArgs {
    pub trace: PathBuf,
    pub column: String,
    pub pad: Option<usize>,
    pub noise_band: Option<[f64; 2]>,
    pub no_unfold: bool,
    pub lorentzian: Option<LorentzianName>,
}

pub fn cmd_analyze(g: &Globals, args: &AnalyzeArgs) -> CliResult<()> {
    let tf = read_trace(&args.trace)?;
    let cfg = match (&g.config, &tf.config_json) {
        (Some(_), _) => Some(g.load()?),
        (None, Some(j)) => Some(RunConfig::from_json(j).map_err(|e| CliError::Format(format!("embedded config: {e}")))?),
        (None, None) => None,
    };
    let mut opts = cfg.as_ref().map(|c| c.analysis).unwrap_or_default();
    if let Some(p) = args.pad {
        opts.pad = p;
    }
    if let Some(b) = args.noise_band {
        opts.noise_band_hz = Some(b);
    }
    if args.no_unfold {
        opts.unfold = false;
    }
    if let Some(l) = args.lorentzian {
        opts.lorentzian = l;
    }
    if opts.pad == 0 {
        return Err(CliError::config("--pad must be at least 1"));
    }
    let samples = match args.column.as_str() {
        "signal" => tf.signal.clone(),
        "counts" => tf
            .counts
            .clone()
            .ok_or_else(|| CliError::Format(String::from("trace has no counts column")))?,
        other => return Err(CliError::config(format!("unknown column '{other}' (signal or counts)"))),
    };
    let filter = tf.meta.as_ref().and_then(filter_of);
    let a = analyze_trace(&samples, &args.column, tf.t_s, filter, &opts)?;
    let fallback = args.trace.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = g.out.clone().unwrap_or(fallback);
    let spec_path = sibling(&dir, &args.trace, "spectrum.csv");
    let rows: Vec<Vec<String>> = a
        .spectrum
        .freqs
        .iter()
        .zip(&a.spectrum.power)
        .zip(&a.power_norm)
        .map(|((&f, &p), &pn)| vec![num(f), num(p), num(pn)])
        .collect();
    write_table(&spec_path, &[], &["freq_hz", "power", "power_norm"], &rows)?;
    let json_path = sibling(&dir, &args.trace, "analysis.json");
    write_json(&json_path, &a)?;
    print(json!({
        "spectrum": spec_path,
        "analysis": json_path,
        "fit_status": a.sinusoid.status.name(),
        "f0_hz": a.sinusoid.f0_hz,
        "peaks": a.peaks.iter().map(|p| p.unfolded_hz.unwrap_or(p.freq_hz)).collect::<Vec<_>>(),
    }));
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct FilterArgs {
    pub tau: Option<f64>,
    pub n_pulses: Option<usize>,
    pub t_s: Option<f64>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterAnnotations {
    pub tau_s: f64,
    pub n_pulses: usize,
    pub t_beta_s: f64,
    pub t_s: f64,
    pub f_c_hz: f64,
    pub inv_t_beta_hz: f64,
    pub nyquist_hz: f64,
    pub fwhm_hz: f64,
}

/// Tabulates the decoupling filter; defaults to `[0, 2 f_c]`.
pub fn cmd_filter(g: &Globals, args: &FilterArgs) -> CliResult<()> {
    let cfg = match &g.config {
        Some(_) => Some(g.load()?),
        None => None,
    };
    let mut pc = match &cfg {
        Some(c) => {
            let r = c.resolved()?;
            let p = &r.protocol;
            ProtocolConfig {
                tau: p.tau_s.expect("resolved"),
                n_pulses: p.n_pulses.expect("resolved"),
                t_s: p.t_s.expect("resolved"),
                ..ProtocolConfig::preset(Preset::WeakTrace)
            }
        }
        None => ProtocolConfig::preset(Preset::WeakTrace),
    };
    if let Some(v) = args.tau {
        pc.tau = v;
    }
    if let Some(v) = args.n_pulses {
        pc.n_pulses = v;
    }
    if let Some(v) = args.t_s {
        pc.t_s = v;
    }
    pc.overhead = 0.0;
    let p = build_protocol(&pc)?;
    let spec = p.filter_spec();
    let lo = args.f_min.unwrap_or(0.0);
    let hi = args.f_max.unwrap_or(2.0 * spec.f_c());
    let mut errs = Vec::new();
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        errs.push(format!("frequency range must satisfy 0 <= min < max (got {lo}..{hi})"));
    }
    if args.points < 2 {
        errs.push(String::from("--points must be at least 2"));
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let ann = FilterAnnotations {
        tau_s: spec.tau,
        n_pulses: p.weak.n_pulses,
        t_beta_s: spec.t_beta,
        t_s: spec.t_s,
        f_c_hz: spec.f_c(),
        inv_t_beta_hz: spec.bandwidth(),
        nyquist_hz: spec.nyquist(),
        fwhm_hz: filter_fwhm(&spec),
    };
    let rows: Vec<Vec<String>> = (0..args.points)
        .map(|i| {
            let f = lo + (hi - lo) * i as f64 / (args.points - 1) as f64;
            let w = filter_function(f, &spec);
            vec![num(f), num(w), num(w.abs())]
        })
        .collect();
    let dir = g.out_dir(cfg.as_ref(), Path::new("."));
    let path = dir.join("filter.csv");
    let annotations = serde_json::to_string(&ann).expect("serializes");
    write_table(&path, &[format!("# filter {annotations}")], &["freq_hz", "w", "abs_w"], &rows)?;
    print(json!({ "filter": path, "annotations": ann }));
    Ok(())
}
