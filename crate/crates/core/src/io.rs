//! File formats. Every float is written with 17 significant digits so that
//! reading a file back reproduces the doubles exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sde::PathEnsemble;
use crate::spectral::{grid_node, FourierState, GridFunction};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` to `path` via a temporary sibling and a rename, so a
/// partially written file is never visible under the final name.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `t,k,re,im`, one row per (state, mode).
pub fn coeff_csv(states: &[FourierState]) -> String {
    let mut out = String::from("t,k,re,im\n");
    for s in states {
        for k in s.modes() {
            let c = s.get(k);
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(s.t),
                k,
                fmt_f64(c.re),
                fmt_f64(c.im)
            );
        }
    }
    out
}

pub fn parse_coeff_csv(text: &str, source_name: &str) -> Result<Vec<FourierState>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "t,k,re,im")) => {}
        _ => return Err(parse_err(1, "expected header `t,k,re,im`".into())),
    }
    let mut rows: Vec<(f64, isize, Complex64)> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                i + 1,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(i + 1, format!("`{s}`: {e}")))
        };
        let k = fields[1]
            .trim()
            .parse::<isize>()
            .map_err(|e| parse_err(i + 1, format!("`{}`: {e}", fields[1])))?;
        rows.push((
            num(fields[0])?,
            k,
            Complex64::new(num(fields[2])?, num(fields[3])?),
        ));
    }
    let mut states = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let t = rows[start].0;
        let end = rows[start..]
            .iter()
            .position(|r| r.0.to_bits() != t.to_bits())
            .map_or(rows.len(), |p| start + p);
        let block = &rows[start..end];
        let order = block.len() / 2;
        let expected: Vec<isize> = (-(order as isize)..=order as isize).collect();
        let got: Vec<isize> = block.iter().map(|r| r.1).collect();
        if block.len().is_multiple_of(2) || got != expected {
            return Err(parse_err(
                start + 2,
                format!("modes at t = {t} are not -N..=N"),
            ));
        }
        states.push(FourierState::from_coeffs(
            order,
            block.iter().map(|r| r.2).collect(),
            t,
        )?);
        start = end;
    }
    Ok(states)
}

/// `x,alpha`, one row per node.
pub fn grid_csv(grid: &GridFunction) -> String {
    let mut out = String::from("x,alpha\n");
    for (x, v) in grid.nodes().zip(grid.values()) {
        let _ = writeln!(out, "{},{}", fmt_f64(x), fmt_f64(*v));
    }
    out
}

/// Reads a grid file, checking that the nodes are the uniform grid on
/// `[-π, π)` implied by the row count.
pub fn parse_grid_csv(text: &str, source_name: &str) -> Result<GridFunction> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "x,alpha")) => {}
        _ => return Err(parse_err(1, "expected header `x,alpha`".into())),
    }
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (x, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err(i + 1, "expected 2 fields".into()))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(i + 1, format!("`{s}`: {e}")))
        };
        xs.push((i + 1, num(x)?));
        values.push(num(v)?);
    }
    let m = values.len();
    if m == 0 {
        return Err(parse_err(2, "no samples".into()));
    }
    for (idx, (line, x)) in xs.iter().enumerate() {
        if (x - grid_node(idx, m)).abs() > 1e-12 {
            return Err(parse_err(
                *line,
                format!("node {x} is not -π + 2π·{idx}/{m}"),
            ));
        }
    }
    GridFunction::new(values)
}

/// `path,step,t,R,X,dB,logdens`. `X` and `logdens` are empty where they are
/// not available, `dB` is empty on the last step.
pub fn paths_csv(
    ensemble: &PathEnsemble,
    xs: Option<&[Vec<f64>]>,
    log_density: Option<&[Vec<f64>]>,
) -> String {
    let params = &ensemble.params;
    let mut out = String::from("path,step,t,R,X,dB,logdens\n");
    let cell = |v: Option<&f64>| v.map(|v| fmt_f64(*v)).unwrap_or_default();
    for (p, path) in ensemble.paths.iter().enumerate() {
        for j in 0..=params.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p,
                j,
                fmt_f64(params.time(j)),
                fmt_f64(path.r[j]),
                cell(xs.and_then(|x| x[p].get(j))),
                cell(path.increments.get(j)),
                cell(log_density.and_then(|l| l[p].get(j))),
            );
        }
    }
    out
}
