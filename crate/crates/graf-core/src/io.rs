//! File formats: waveform CSV, surface CSV with JSON sidecar, trace CSV,
//! and JSON records. Floats are printed with 17 significant digits so
//! every emitted value round-trips to the identical f64.

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::ambiguity::{AmbiguitySurface, Layout, Waveform};
use crate::error::{Error, Result};
use crate::mat::RMat;
use crate::optim::TraceRow;

/// 17 significant digits: lossless for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{context}: bad float `{s}`")))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Waveform CSV: one sample per line, `re,im`, optional header line.
// ---------------------------------------------------------------------------

pub fn write_waveform_csv(path: &Path, w: &Waveform) -> Result<()> {
    let mut out = String::from("re,im\n");
    for z in w.samples() {
        out.push_str(&fmt_f64(z.re));
        out.push(',');
        out.push_str(&fmt_f64(z.im));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_waveform_csv(path: &Path) -> Result<Waveform> {
    let text = read_file(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 && line.eq_ignore_ascii_case("re,im") {
            continue;
        }
        let mut parts = line.split(',');
        let (re, im) = match (parts.next(), parts.next(), parts.next()) {
            (Some(re), Some(im), None) => (re, im),
            _ => {
                return Err(Error::Parse(format!(
                    "{}:{}: expected `re,im`",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        let re = parse_f64(re, &format!("{}:{}", path.display(), lineno + 1))?;
        let im = parse_f64(im, &format!("{}:{}", path.display(), lineno + 1))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::Parse(format!(
                "{}:{}: non-finite sample",
                path.display(),
                lineno + 1
            )));
        }
        samples.push(Complex64::new(re, im));
    }
    if samples.is_empty() {
        return Err(Error::Parse(format!(
            "{}: no samples found",
            path.display()
        )));
    }
    Ok(Waveform::FreeComplex(samples))
}

// ---------------------------------------------------------------------------
// Surface CSV + JSON sidecar
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SurfaceMeta {
    n: usize,
    layout: Layout,
}

/// Sidecar path for a surface CSV: `chi.csv` -> `chi.meta.json`.
pub fn surface_sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn write_surface_csv(path: &Path, surface: &AmbiguitySurface) -> Result<()> {
    let n = surface.n();
    let mut out = String::new();
    for r in 0..n {
        let row: Vec<String> = surface.chi.row(r).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)?;
    let meta = SurfaceMeta {
        n,
        layout: surface.layout,
    };
    write_json(&surface_sidecar_path(path), &meta)
}

pub fn read_surface_csv(path: &Path) -> Result<AmbiguitySurface> {
    let text = read_file(path)?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| parse_f64(v, &format!("{}:{}", path.display(), lineno + 1)))
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c == vals.len() => {}
            Some(c) => {
                return Err(Error::Parse(format!(
                    "{}:{}: row has {} columns, expected {c}",
                    path.display(),
                    lineno + 1,
                    vals.len()
                )))
            }
        }
        data.extend(vals);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse(format!("{}: empty surface", path.display())))?;
    if rows != cols {
        return Err(Error::Parse(format!(
            "{}: surface must be square, got {rows}x{cols}",
            path.display()
        )));
    }

    let sidecar = surface_sidecar_path(path);
    let layout = if sidecar.exists() {
        let meta: SurfaceMeta = read_json(&sidecar)?;
        if meta.n != rows {
            return Err(Error::Parse(format!(
                "{}: sidecar says n = {}, surface is {rows}x{rows}",
                sidecar.display(),
                meta.n
            )));
        }
        meta.layout
    } else {
        Layout::Raw
    };

    Ok(AmbiguitySurface {
        chi: RMat::from_vec(rows, cols, data)?,
        layout,
        normalized: false,
    })
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

pub const TRACE_HEADER: &str = "iter,time_s,loss,psl_db,spectral_variance";

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.iter,
            fmt_f64(row.time_s),
            fmt_f64(row.loss),
            fmt_f64(row.psl_db),
            fmt_f64(row.spectral_variance)
        ));
    }
    write_file(path, &out)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == TRACE_HEADER) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Parse(format!(
                "{}:{}: expected 5 columns",
                path.display(),
                lineno + 1
            )));
        }
        let ctx = format!("{}:{}", path.display(), lineno + 1);
        rows.push(TraceRow {
            iter: parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{ctx}: bad iteration index")))?,
            time_s: parse_f64(parts[1], &ctx)?,
            loss: parse_f64(parts[2], &ctx)?,
            psl_db: parse_f64(parts[3], &ctx)?,
            spectral_variance: parse_f64(parts[4], &ctx)?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Spectrum CSV (`bin,power` of the normalized power spectrum)
// ---------------------------------------------------------------------------

pub fn write_spectrum_csv(path: &Path, w: &Waveform) -> Result<()> {
    let spectrum = crate::fft::fft(&w.samples())?;
    let power: Vec<f64> = spectrum.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("cannot emit spectrum of an all-zero signal"));
    }
    let mut out = String::from("bin,power\n");
    for (bin, p) in power.iter().enumerate() {
        out.push_str(&format!("{bin},{}\n", fmt_f64(p / total)));
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    Ok(serde_json::from_str(&text)?)
}
