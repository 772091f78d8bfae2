//! CSV and JSON persistence for trajectories, sweeps and bifurcation data.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-identically.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::LimitSetKind;
use crate::error::{Error, Result};
use crate::normalized::NormalizedSample;
use crate::optimizers::Sample;
use crate::sweeps::{BifurcationPoint, CellResult};

pub const TRAJECTORY_HEADER: &str = "t,x,loss,grad,m,v,log_abs_x";
pub const NORMALIZED_HEADER: &str = "t,omega,lambda,log_abs_x,sign_x";
pub const SWEEP_HEADER: &str = "i,j,beta1,beta2,min_loss,final_loss,max_R,final_R,empirical,theoretical,termination";
pub const BIFURCATION_HEADER: &str = "gamma,u_value";

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::InvalidConfig(format!("bad number {s:?}: {e}")))
}

pub fn write_trajectory<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t,
            fmt_f64(s.x),
            fmt_f64(s.loss),
            fmt_f64(s.grad),
            fmt_f64(s.m),
            fmt_f64(s.v),
            fmt_f64(s.log_abs_x)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRAJECTORY_HEADER {
        return Err(Error::InvalidConfig(format!("unexpected trajectory header {:?}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| parse_f64(&rec[i]);
        let t = rec[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::InvalidConfig(format!("bad step {:?}: {e}", &rec[0])))?;
        out.push(Sample {
            t,
            x: f(1)?,
            loss: f(2)?,
            grad: f(3)?,
            m: f(4)?,
            v: f(5)?,
            log_abs_x: f(6)?,
        });
    }
    Ok(out)
}

pub fn write_normalized<W: Write>(mut w: W, samples: &[NormalizedSample]) -> Result<()> {
    writeln!(w, "{NORMALIZED_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.t,
            fmt_f64(s.omega),
            fmt_f64(s.lambda),
            fmt_f64(s.log_abs_x),
            fmt_f64(s.sign_x)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_normalized<R: Read>(r: R) -> Result<Vec<NormalizedSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != NORMALIZED_HEADER {
        return Err(Error::InvalidConfig(format!("unexpected normalized header {:?}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t = rec[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::InvalidConfig(format!("bad step {:?}: {e}", &rec[0])))?;
        out.push(NormalizedSample {
            t,
            omega: parse_f64(&rec[1])?,
            lambda: parse_f64(&rec[2])?,
            log_abs_x: parse_f64(&rec[3])?,
            sign_x: parse_f64(&rec[4])?,
        });
    }
    Ok(out)
}

/// First line of a CSV file, without the line terminator.
pub fn read_header(path: &Path) -> Result<String> {
    use std::io::BufRead;
    let mut line = String::new();
    std::io::BufReader::new(File::open(path)?).read_line(&mut line)?;
    Ok(line.trim_end().to_owned())
}

pub fn write_sweep<W: Write>(mut w: W, cells: &[CellResult]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for c in cells {
        let termination = if c.error.is_some() { "error" } else { c.termination.name() };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.i,
            c.j,
            fmt_f64(c.beta1),
            fmt_f64(c.beta2),
            fmt_f64(c.min_loss),
            fmt_f64(c.final_loss),
            fmt_f64(c.max_r),
            fmt_f64(c.final_r),
            c.empirical,
            c.theoretical,
            termination
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One row per limit-set point; escaped cells produce no rows.
pub fn write_bifurcation<W: Write>(mut w: W, points: &[BifurcationPoint]) -> Result<()> {
    writeln!(w, "{BIFURCATION_HEADER}")?;
    for p in points {
        if p.limit_set.classification == LimitSetKind::Escaped {
            continue;
        }
        for u in &p.limit_set.points {
            writeln!(w, "{},{}", fmt_f64(p.parameter), fmt_f64(*u))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `<output>.meta.json`
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
