//! Optimizer trace as CSV: `eval,loss,grad_inf,seconds`.

use std::path::Path;

use rheo_core::optim::{TraceRecord, TrainTrace};

use crate::atomic;
use crate::dataset_csv::fmt_f64;
use crate::error::{CliError, Result};

pub fn to_csv(trace: &TrainTrace) -> String {
    let mut out = String::from("eval,loss,grad_inf,seconds\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.eval,
            fmt_f64(r.loss),
            fmt_f64(r.grad_inf),
            fmt_f64(r.seconds)
        ));
    }
    out
}

pub fn write(path: &Path, trace: &TrainTrace) -> Result<()> {
    atomic::write_file(path, to_csv(trace).as_bytes())
}

pub fn parse(path: &Path, text: &str) -> Result<TrainTrace> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::format(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["eval", "loss", "grad_inf", "seconds"] {
        return Err(CliError::format(
            path,
            "line 1: expected header `eval,loss,grad_inf,seconds`",
        ));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || CliError::format(path, format!("line {line}: malformed trace record"));
        let real = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(bad)
        };
        records.push(TraceRecord {
            eval: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            loss: real(1)?,
            grad_inf: real(2)?,
            seconds: real(3)?,
        });
    }
    Ok(TrainTrace { records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = TrainTrace {
            records: vec![
                TraceRecord {
                    eval: 1,
                    loss: 2.5,
                    grad_inf: 0.1,
                    seconds: 0.0,
                },
                TraceRecord {
                    eval: 3,
                    loss: 1.0 / 7.0,
                    grad_inf: 1e-9,
                    seconds: 0.25,
                },
            ],
        };
        let text = to_csv(&t);
        assert!(text.starts_with("eval,loss,grad_inf,seconds\n1,"));
        assert_eq!(parse(Path::new("t"), &text).unwrap(), t);
    }
}
