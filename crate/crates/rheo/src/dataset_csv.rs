//! Dataset CSV: `state_id,family,lambda,forcing,y,u,gamma_dot,tau`.

use std::path::Path;

use rheo_core::experiments::{Dataset, DatasetRow, Family};

use crate::atomic;
use crate::error::{CliError, Result};

pub const HEADER: [&str; 8] = [
    "state_id",
    "family",
    "lambda",
    "forcing",
    "y",
    "u",
    "gamma_dot",
    "tau",
];

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(ds: &Dataset) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in ds.rows() {
        let fields = [
            r.state_id.to_string(),
            r.family.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.forcing),
            fmt_f64(r.y),
            fmt_f64(r.u),
            fmt_f64(r.gamma_dot),
            fmt_f64(r.tau),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, ds: &Dataset) -> Result<()> {
    atomic::write_file(path, to_csv(ds).as_bytes())
}

/// Parses and validates a dataset. Errors name the file line.
pub fn parse(path: &Path, text: &str) -> Result<Dataset> {
    let err = |msg: String| CliError::format(path, msg);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| err(format!("line 1: {e}")))?
        .clone();
    for h in headers.iter() {
        if !HEADER.contains(&h) {
            return Err(err(format!("line 1: unknown column `{h}`")));
        }
    }
    let mut col = [0usize; 8];
    for (k, name) in HEADER.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| err(format!("missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(col[k]).unwrap_or("");
        let real = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| {
                err(format!(
                    "line {line}: column `{}`: invalid number `{}`",
                    HEADER[k],
                    field(k)
                ))
            })
        };
        let state_id = field(0).parse::<usize>().map_err(|_| {
            err(format!(
                "line {line}: column `state_id`: invalid id `{}`",
                field(0)
            ))
        })?;
        let family: Family = field(1).parse().map_err(|_| {
            err(format!(
                "line {line}: column `family`: unknown family `{}`",
                field(1)
            ))
        })?;
        rows.push(DatasetRow {
            state_id,
            family,
            lambda: real(2)?,
            forcing: real(3)?,
            y: real(4)?,
            u: real(5)?,
            gamma_dot: real(6)?,
            tau: real(7)?,
        });
        lines.push(line);
    }
    Dataset::from_rows(&rows).map_err(|e| match e {
        rheo_core::Error::InvalidSample { index, reason } => {
            err(format!("line {}: {reason}", lines[index]))
        }
        other => err(other.to_string()),
    })
}

pub fn read(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            CliError::Usage(format!("dataset not found: {}", path.display()))
        }
        _ => CliError::io(path)(e),
    })?;
    parse(path, &text)
}

/// Reads a DEM-style dataset: same schema, any family label, used as
/// external data.
pub fn ingest_external(path: &Path) -> Result<Dataset> {
    let mut ds = read(path)?;
    ds.family = Family::External;
    Ok(ds)
}
