//! Plain-text model file. Header lines are `key = value`; the last header,
//! `theta = <count>`, is followed by one parameter per line.

use std::path::Path;

use rheo_core::nn::{Architecture, NetworkParams, Normalization};

use crate::atomic;
use crate::dataset_csv::fmt_f64;
use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn to_text(p: &NetworkParams) -> String {
    let mut out = String::new();
    out.push_str(&format!("format_version = {FORMAT_VERSION}\n"));
    out.push_str(&format!("arch_xi = {}\n", join(&p.arch.xi)));
    out.push_str(&format!("arch_chi = {}\n", join(&p.arch.chi)));
    out.push_str(&format!(
        "normalization = {}\n",
        join(p.normalization.to_array().map(fmt_f64))
    ));
    out.push_str(&format!("gamma_floor = {}\n", fmt_f64(p.gamma_floor)));
    match p.seed {
        Some(s) => out.push_str(&format!("seed = {s}\n")),
        None => out.push_str("seed = none\n"),
    }
    out.push_str(&format!("theta = {}\n", p.theta.len()));
    for t in &p.theta {
        out.push_str(&fmt_f64(*t));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, p: &NetworkParams) -> Result<()> {
    atomic::write_file(path, to_text(p).as_bytes())
}

const KEYS: [&str; 7] = [
    "format_version",
    "arch_xi",
    "arch_chi",
    "normalization",
    "gamma_floor",
    "seed",
    "theta",
];

pub fn parse(path: &Path, text: &str) -> Result<NetworkParams> {
    let err = |line: usize, msg: String| CliError::format(path, format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut values: Vec<(usize, &str)> = Vec::with_capacity(KEYS.len());
    for key in KEYS {
        let (n, line) = lines
            .next()
            .ok_or_else(|| CliError::format(path, format!("missing field `{key}`")))?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(n, format!("expected `{key} = ...`")))?;
        if k.trim() != key {
            return Err(err(
                n,
                format!("expected field `{key}`, found `{}`", k.trim()),
            ));
        }
        values.push((n, v.trim()));
    }
    let ints = |(n, v): (usize, &str)| -> Result<Vec<usize>> {
        v.split_whitespace()
            .map(|x| {
                x.parse()
                    .map_err(|_| err(n, format!("invalid integer `{x}`")))
            })
            .collect()
    };
    let real = |n: usize, x: &str| -> Result<f64> {
        x.parse()
            .map_err(|_| err(n, format!("invalid number `{x}`")))
    };

    let (n, v) = values[0];
    if v != FORMAT_VERSION.to_string() {
        return Err(err(n, format!("unsupported format_version `{v}`")));
    }
    let arch = Architecture::new(ints(values[1])?, ints(values[2])?)
        .map_err(|e| err(values[1].0, e.to_string()))?;
    let (n, v) = values[3];
    let nrm: Vec<f64> = v
        .split_whitespace()
        .map(|x| real(n, x))
        .collect::<Result<_>>()?;
    let nrm: [f64; 4] = nrm
        .try_into()
        .map_err(|_| err(n, "normalization needs 4 values".into()))?;
    let normalization = Normalization::from_array(nrm).map_err(|e| err(n, e.to_string()))?;
    let (n, v) = values[4];
    let gamma_floor = real(n, v)?;
    if !(gamma_floor > 0.0) {
        return Err(err(n, format!("gamma_floor must be positive, got {v}")));
    }
    let (n, v) = values[5];
    let seed = match v {
        "none" => None,
        s => Some(
            s.parse::<u64>()
                .map_err(|_| err(n, format!("invalid seed `{s}`")))?,
        ),
    };
    let (n, v) = values[6];
    let count: usize = v
        .parse()
        .map_err(|_| err(n, format!("invalid count `{v}`")))?;
    if count != arch.param_count() {
        return Err(err(
            n,
            format!(
                "theta has {count} entries but the architecture needs {}",
                arch.param_count()
            ),
        ));
    }
    let mut theta = Vec::with_capacity(count);
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let t = real(n, line)?;
        if !t.is_finite() {
            return Err(err(n, format!("non-finite parameter `{line}`")));
        }
        theta.push(t);
    }
    if theta.len() != count {
        return Err(CliError::format(
            path,
            format!("expected {count} parameters, found {}", theta.len()),
        ));
    }
    let mut p = NetworkParams::new(arch, theta)?.with_normalization(normalization);
    p.gamma_floor = gamma_floor;
    p.seed = seed;
    Ok(p)
}

pub fn read(path: &Path) -> Result<NetworkParams> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            CliError::Usage(format!("model not found: {}", path.display()))
        }
        _ => CliError::io(path)(e),
    })?;
    parse(path, &text)
}
