//! Plot-ready CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use super::MseRow;
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "snr_db,mse_eta,mse_eps,bias_eta,bias_eps,var_eta_pred,var_eps_pred,trials,mode";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.14e}")
    } else {
        format!("{v}")
    }
}

/// Render rows; a sweep appends its parameter as a trailing column.
pub fn to_csv_string(rows: &[MseRow]) -> Result<String> {
    let first = rows.first().ok_or_else(|| Error::Scenario("no rows to write".into()))?;
    let key_name = first.key.as_ref().map(|(k, _)| k.clone());
    if rows.iter().any(|r| r.key.as_ref().map(|(k, _)| k) != key_name.as_ref()) {
        return Err(Error::Scenario("rows mix different sweep keys".into()));
    }
    let mut out = String::from(CSV_HEADER);
    if let Some(k) = &key_name {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            num(r.snr_db),
            num(r.mse_eta),
            num(r.mse_eps),
            num(r.bias_eta),
            num(r.bias_eps),
            num(r.var_eta_pred),
            num(r.var_eps_pred),
            r.trials,
            r.mode.as_str()
        );
        if let Some((_, v)) = &r.key {
            let _ = write!(out, ",{}", num(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(rows: &[MseRow], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(rows)?)?;
    Ok(())
}

/// Parse a file written by [`emit_csv`]. `rejected` is not stored and reads
/// back as zero.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MseRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Scenario("empty CSV".into()))?;
    let key_name = match header.strip_prefix(CSV_HEADER) {
        Some("") => None,
        Some(rest) => Some(rest.trim_start_matches(',').to_string()),
        None => return Err(Error::Scenario(format!("unexpected CSV header `{header}`"))),
    };
    let bad = |line: &str| Error::Scenario(format!("malformed CSV line `{line}`"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let expected = 9 + usize::from(key_name.is_some());
            if f.len() != expected {
                return Err(bad(line));
            }
            let p = |i: usize| f[i].parse::<f64>().map_err(|_| bad(line));
            Ok(MseRow {
                snr_db: p(0)?,
                mse_eta: p(1)?,
                mse_eps: p(2)?,
                bias_eta: p(3)?,
                bias_eps: p(4)?,
                var_eta_pred: p(5)?,
                var_eps_pred: p(6)?,
                trials: f[7].parse().map_err(|_| bad(line))?,
                rejected: 0,
                mode: f[8].parse()?,
                key: match &key_name {
                    Some(k) => Some((k.clone(), p(9)?)),
                    None => None,
                },
            })
        })
        .collect()
}
