//! Artifact I/O: value-field and policy CSVs with JSON sidecars, path
//! dumps, and estimate/report serialization.
//!
//! Floats are written with 17 significant digits, which round-trips f64
//! exactly, so re-importing an exported field reproduces it bit for bit.

use crate::error::{Error, Result};
use crate::policy::PolicyField;
use crate::sim::{MCEstimate, PathRecord};
use crate::solver::{Grid, NodeClass, ValueField};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// 17-significant-digit rendering; parses back to the identical f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn open_writer(path: &Path) -> Result<BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

/// Writes the field as CSV rows `(s, x, w, v)` over all grid nodes.
pub fn write_field_csv(path: &Path, field: &ValueField) -> Result<()> {
    let mut out = open_writer(path)?;
    writeln!(out, "s,x,w,v")?;
    let g = &field.grid;
    for i in 0..=g.n_s {
        for j in 0..=g.n_x {
            for k in 0..=g.n_w {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(g.s(i)),
                    fmt_f64(g.x(j)),
                    fmt_f64(g.w(k)),
                    fmt_f64(field.values[g.idx(i, j, k)])
                )?;
            }
        }
    }
    Ok(())
}

/// Grid metadata sidecar carried next to a field or policy CSV.
#[derive(Debug, serde::Deserialize)]
pub struct FieldSidecar {
    pub schema: String,
    pub grid: Grid,
    pub eps_n: f64,
    pub delta: f64,
    pub scheme_hash: String,
}

fn grid_json(g: &Grid) -> String {
    format!(
        concat!(
            "{{\"horizon\":{},\"delta\":{},\"eps_n\":{},\"x_max\":{},",
            "\"n_s\":{},\"n_x\":{},\"n_w\":{},\"ds\":{},\"dx\":{},\"dw\":{}}}"
        ),
        fmt_f64(g.horizon),
        fmt_f64(g.delta),
        fmt_f64(g.eps_n),
        fmt_f64(g.x_max),
        g.n_s,
        g.n_x,
        g.n_w,
        fmt_f64(g.ds),
        fmt_f64(g.dx),
        fmt_f64(g.dw),
    )
}

pub fn write_field_sidecar(path: &Path, field: &ValueField) -> Result<()> {
    let mut out = open_writer(path)?;
    writeln!(
        out,
        "{{\"schema\":\"v1\",\"grid\":{},\"eps_n\":{},\"delta\":{},\"scheme_hash\":\"{:016x}\"}}",
        grid_json(&field.grid),
        fmt_f64(field.eps_n),
        fmt_f64(field.delta),
        field.content_hash(),
    )?;
    Ok(())
}

/// Re-imports a field from its CSV + sidecar pair; bit-exact.
pub fn read_field(csv_path: &Path, sidecar_path: &Path) -> Result<ValueField> {
    let sidecar: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", sidecar_path.display())))?;
    if sidecar.schema != "v1" {
        return Err(Error::Config(format!("unsupported sidecar schema {}", sidecar.schema)));
    }
    let g = sidecar.grid;
    let mut values = vec![0.0; g.n_nodes()];
    let reader = BufReader::new(std::fs::File::open(csv_path)?);
    let mut rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != "s,x,w,v" {
                return Err(Error::Config(format!("{}: bad header", csv_path.display())));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::Config(format!("{}:{}: missing {name}", csv_path.display(), lineno + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{}:{}: {e}", csv_path.display(), lineno + 1)))
        };
        let (s, x, w, v) = (next("s")?, next("x")?, next("w")?, next("v")?);
        let i = (s / g.ds).round() as usize;
        let j = ((x + g.delta) / g.dx).round() as usize;
        let k = ((w + g.delta) / g.dw).round() as usize;
        if i > g.n_s || j > g.n_x || k > g.n_w {
            return Err(Error::Config(format!(
                "{}:{}: node ({s}, {x}, {w}) outside the sidecar grid",
                csv_path.display(),
                lineno + 1
            )));
        }
        values[g.idx(i, j, k)] = v;
        rows += 1;
    }
    if rows != g.n_nodes() {
        return Err(Error::Config(format!(
            "{}: {rows} rows for a {}-node grid",
            csv_path.display(),
            g.n_nodes()
        )));
    }
    let mut mask = vec![NodeClass::Interior; g.n_nodes()];
    for i in 0..=g.n_s {
        let kt = g.k_top(g.s(i));
        for j in 0..=g.n_x {
            for k in 0..=g.n_w {
                mask[g.idx(i, j, k)] = if i == g.n_s || j == 0 || k > kt {
                    NodeClass::Pinned
                } else if j == g.n_x {
                    NodeClass::EdgeXMax
                } else {
                    NodeClass::Interior
                };
            }
        }
    }
    let eps_n = sidecar.eps_n;
    let delta = sidecar.delta;
    Ok(ValueField { grid: g, values, mask, eps_n, delta })
}

/// Writes the policy as CSV rows `(s, x, w, gamma, a)`.
pub fn write_policy_csv(path: &Path, pf: &PolicyField) -> Result<()> {
    let mut out = open_writer(path)?;
    writeln!(out, "s,x,w,gamma,a")?;
    let g = &pf.grid;
    for i in 0..=g.n_s {
        for j in 0..=g.n_x {
            for k in 0..=g.n_w {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_f64(g.s(i)),
                    fmt_f64(g.x(j)),
                    fmt_f64(g.w(k)),
                    fmt_f64(pf.gamma[g.idx(i, j, k)]),
                    fmt_f64(pf.a[g.idx(i, j, k)])
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
pub struct PolicySidecar {
    pub schema: String,
    pub grid: Grid,
    pub provenance: String,
    pub warnings: usize,
}

pub fn write_policy_sidecar(path: &Path, pf: &PolicyField) -> Result<()> {
    let mut out = open_writer(path)?;
    writeln!(
        out,
        "{{\"schema\":\"v1\",\"grid\":{},\"provenance\":\"{:016x}\",\"warnings\":{}}}",
        grid_json(&pf.grid),
        pf.provenance,
        pf.warnings,
    )?;
    Ok(())
}

/// Re-imports a policy from its CSV + sidecar pair.
pub fn read_policy(csv_path: &Path, sidecar_path: &Path) -> Result<PolicyField> {
    let sidecar: PolicySidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", sidecar_path.display())))?;
    if sidecar.schema != "v1" {
        return Err(Error::Config(format!("unsupported sidecar schema {}", sidecar.schema)));
    }
    let g = sidecar.grid;
    let mut gamma = vec![0.0; g.n_nodes()];
    let mut a = vec![0.0; g.n_nodes()];
    let reader = BufReader::new(std::fs::File::open(csv_path)?);
    let mut rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != "s,x,w,gamma,a" {
                return Err(Error::Config(format!("{}: bad header", csv_path.display())));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", csv_path.display(), lineno + 1)))?;
        if vals.len() != 5 {
            return Err(Error::Config(format!("{}:{}: expected 5 columns", csv_path.display(), lineno + 1)));
        }
        let i = (vals[0] / g.ds).round() as usize;
        let j = ((vals[1] + g.delta) / g.dx).round() as usize;
        let k = ((vals[2] + g.delta) / g.dw).round() as usize;
        let id = g.idx(i.min(g.n_s), j.min(g.n_x), k.min(g.n_w));
        gamma[id] = vals[3];
        a[id] = vals[4];
        rows += 1;
    }
    if rows != g.n_nodes() {
        return Err(Error::Config(format!(
            "{}: {rows} rows for a {}-node grid",
            csv_path.display(),
            g.n_nodes()
        )));
    }
    let provenance = u64::from_str_radix(&sidecar.provenance, 16)
        .map_err(|e| Error::Config(format!("bad provenance hash: {e}")))?;
    Ok(PolicyField { grid: g, gamma, a, provenance, warnings: sidecar.warnings })
}

pub fn write_estimate_json(path: &Path, est: &MCEstimate) -> Result<()> {
    let mut out = open_writer(path)?;
    writeln!(
        out,
        concat!(
            "{{\"schema\":\"v1\",\"mean\":{},\"std_error\":{},\"n_paths\":{},",
            "\"n_aborted\":{},\"valid\":{},\"config_hash\":\"{:016x}\"}}"
        ),
        fmt_f64(est.mean),
        fmt_f64(est.std_error),
        est.n_paths,
        est.n_aborted,
        est.valid,
        est.config_hash,
    )?;
    Ok(())
}

/// Per-path trajectory dump: `(path, t, x, w, gamma, a, cum_dividends)`.
pub fn write_paths_csv(path: &Path, records: &[PathRecord]) -> Result<()> {
    let mut out = open_writer(path)?;
    writeln!(out, "path,t,x,w,gamma,a,cum_dividends")?;
    for (p, rec) in records.iter().enumerate() {
        if let Some(tr) = &rec.trajectory {
            for pt in tr {
                writeln!(
                    out,
                    "{p},{},{},{},{},{},{}",
                    fmt_f64(pt.t),
                    fmt_f64(pt.x),
                    fmt_f64(pt.w),
                    fmt_f64(pt.gamma),
                    fmt_f64(pt.a),
                    fmt_f64(pt.cum_dividends)
                )?;
            }
        }
    }
    Ok(())
}

/// Two-column CSV loader for tabulated laws: `node,value` per row with a
/// header line allowed; nodes must be strictly increasing.
pub fn read_two_column_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let reader = BufReader::new(
        std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?,
    );
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let mut parts = t.split(',');
        let a = parts.next().unwrap_or_default().trim();
        let b = parts.next().unwrap_or_default().trim();
        if lineno == 0 && a.parse::<f64>().is_err() {
            continue; // header
        }
        let node: f64 = a
            .parse()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let value: f64 = b
            .parse()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if let Some(last) = nodes.last() {
            if node <= *last {
                return Err(Error::Config(format!(
                    "{}:{}: nodes must be strictly increasing",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        nodes.push(node);
        values.push(value);
    }
    Ok((nodes, values))
}
