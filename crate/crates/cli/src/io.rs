//! CSV files with `# key {json}` header lines.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TRACE_MAGIC: &str = "# spintrack trace v1";

/// Run parameters written next to every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub t_s: f64,
    pub n_samples: usize,
    pub preset: String,
    pub engine: String,
    pub tau_s: f64,
    pub n_pulses: usize,
    pub t_beta_s: f64,
    /// Nominal conditional rotation per nucleus (rad).
    pub betas: Vec<f64>,
    pub seed: u64,
    pub repetitions: usize,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_axis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
}

/// A trace as read back from disk.
#[derive(Debug, Clone)]
pub struct TraceFile {
    pub t_s: f64,
    pub signal: Vec<f64>,
    pub counts: Option<Vec<f64>>,
    pub meta: Option<TraceMeta>,
    pub config_json: Option<String>,
}

/// Content hash of a serialized config, `sha256:` plus hex.
pub fn config_hash(json: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", json.len()).as_bytes());
    h.update(json.as_bytes());
    format!("sha256:{}", hex::encode(h.finalize()))
}

/// JSON payload of the first `# key {...}` line of `text`.
pub fn embedded<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let prefix = format!("# {key} ");
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(prefix.as_str()))
}

/// Writes header comment lines followed by a CSV table.
pub fn write_table(path: &Path, comments: &[String], header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut buf = Vec::new();
    for c in comments {
        buf.extend_from_slice(c.as_bytes());
        buf.push(b'\n');
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    write_file(path, &buf)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Shortest text that parses back to the same value.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn write_trace(
    path: &Path,
    config_json: &str,
    meta: &TraceMeta,
    signal: &[f64],
    counts: Option<&[u64]>,
) -> CliResult<()> {
    let comments = vec![
        TRACE_MAGIC.to_string(),
        format!("# config {config_json}"),
        format!("# meta {}", serde_json::to_string(meta).expect("meta serializes")),
    ];
    let mut header = vec!["index", "time_s", "signal"];
    if counts.is_some() {
        header.push("counts");
    }
    let rows: Vec<Vec<String>> = signal
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut r = vec![i.to_string(), num(i as f64 * meta.t_s), num(s)];
            if let Some(c) = counts {
                r.push(c[i].to_string());
            }
            r
        })
        .collect();
    write_table(path, &comments, &header, &rows)
}

pub fn read_trace(path: &Path) -> CliResult<TraceFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| match e {
        CliError::Format(m) => CliError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_trace(text: &str) -> CliResult<TraceFile> {
    let fmt = |m: String| CliError::Format(m);
    let meta: Option<TraceMeta> = match embedded(text, "meta") {
        Some(j) => Some(serde_json::from_str(j).map_err(|e| fmt(format!("bad meta line: {e}")))?),
        None => None,
    };
    let config_json = embedded(text, "config").map(str::to_string);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let i_sig = col("signal").ok_or_else(|| fmt(String::from("no 'signal' column")))?;
    let i_time = col("time_s");
    let i_counts = col("counts");
    let (mut signal, mut times, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        let get = |i: usize, name: &str| -> CliResult<f64> {
            let s = rec.get(i).ok_or_else(|| fmt(format!("row {row}: missing {name}")))?;
            let v: f64 = s.parse().map_err(|_| fmt(format!("row {row}: bad {name} '{s}'")))?;
            if !v.is_finite() {
                return Err(fmt(format!("row {row}: non-finite {name}")));
            }
            Ok(v)
        };
        signal.push(get(i_sig, "signal")?);
        if let Some(i) = i_time {
            times.push(get(i, "time_s")?);
        }
        if let Some(i) = i_counts {
            counts.push(get(i, "counts")?);
        }
    }
    if signal.len() < 4 {
        return Err(fmt(format!("a trace needs at least 4 rows (got {})", signal.len())));
    }
    let t_s = match (&meta, times.len()) {
        (Some(m), _) => m.t_s,
        (None, n) if n >= 2 => times[1] - times[0],
        _ => return Err(fmt(String::from("no sampling interval: need a meta line or a time_s column"))),
    };
    if !(t_s > 0.0 && t_s.is_finite()) {
        return Err(fmt(format!("sampling interval must be positive (got {t_s})")));
    }
    Ok(TraceFile {
        t_s,
        signal,
        counts: i_counts.map(|_| counts),
        meta,
        config_json,
    })
}

/// `dir/<stem>.<suffix>` for an input file.
pub fn sibling(dir: &Path, input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    dir.join(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TraceMeta {
        TraceMeta {
            t_s: 7.1e-6,
            n_samples: 5,
            preset: "weak-trace".into(),
            engine: "dm".into(),
            tau_s: 1.16e-7,
            n_pulses: 8,
            t_beta_s: 1.856e-6,
            betas: vec![0.3],
            seed: 7,
            repetitions: 1,
            config_hash: config_hash("{}"),
            sweep_axis: None,
            sweep_value: None,
        }
    }

    #[test]
    fn trace_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let sig = [0.1, -1.0 / 3.0, 2.5e-17, 0.0, std::f64::consts::PI];
        write_trace(&p, "{\"a\":1}", &meta(), &sig, Some(&[1, 2, 3, 4, 5])).unwrap();
        let t = read_trace(&p).unwrap();
        assert_eq!(t.signal, sig);
        assert_eq!(t.counts.unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(t.meta.unwrap(), meta());
        assert_eq!(t.config_json.as_deref(), Some("{\"a\":1}"));
    }

    #[test]
    fn bare_csv_uses_time_column() {
        let t = parse_trace("time_s,signal\n0,1\n2e-6,0\n4e-6,-1\n6e-6,0\n").unwrap();
        assert_eq!(t.t_s, 2e-6);
        assert!(t.meta.is_none());
    }

    #[test]
    fn malformed_traces_rejected() {
        for bad in [
            "time_s,value\n0,1\n1,2\n2,3\n3,4\n",
            "time_s,signal\n0,1\n1,x\n2,3\n3,4\n",
            "time_s,signal\n0,1\n1,2\n",
            "signal\n1\n2\n3\n4\n",
            "time_s,signal\n0,1\n1,NaN\n2,3\n3,4\n",
        ] {
            assert!(matches!(parse_trace(bad), Err(CliError::Format(_))), "{bad}");
        }
    }

    #[test]
    fn hash_is_git_style_blob() {
        // git hash-object with sha256 of the empty blob
        assert_eq!(
            config_hash(""),
            "sha256:473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
