//! Trajectory CSV: `t, x_1..x_n, xhat_1..xhat_n, u_1..u_m, y_1..y_p, V_eps, err_norm, alpha`.
//!
//! States are written in physical coordinates. Values use Rust's shortest round-trip
//! formatting, so parsing reproduces every number exactly.

use std::fmt::Write as _;

#[cfg(test)]
use anyhow::{bail, Context, Result};

use dissiped_core::Trajectory;

pub fn header(n: usize, m: usize, p: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=n).map(|i| format!("xhat_{i}")));
    h.extend((1..=m).map(|i| format!("u_{i}")));
    h.extend((1..=p).map(|i| format!("y_{i}")));
    h.extend(["V_eps", "err_norm", "alpha"].map(String::from));
    h
}

pub fn rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    let err = traj.error_norms();
    (0..traj.len())
        .map(|i| {
            let mut r = vec![traj.times[i]];
            r.extend(traj.plant_state(i));
            r.extend(traj.observer_state(i));
            r.extend_from_slice(traj.inputs[i].as_slice());
            r.extend_from_slice(traj.outputs[i].as_slice());
            r.extend([traj.v_series[i], err[i], traj.gain_series[i]]);
            r
        })
        .collect()
}

fn push_row(out: &mut String, prefix: Option<usize>, row: &[f64]) {
    if let Some(run) = prefix {
        let _ = write!(out, "{run},");
    }
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

pub fn to_csv(traj: &Trajectory) -> String {
    let mut out = header(traj.n, traj.m, traj.p).join(",");
    out.push('\n');
    for r in rows(traj) {
        push_row(&mut out, None, &r);
    }
    out
}

/// Several runs in one table, with a leading `run` column (0-based, in input order).
pub fn to_combined_csv(runs: &[&Trajectory]) -> String {
    let Some(first) = runs.first() else {
        return String::new();
    };
    let mut out = format!("run,{}\n", header(first.n, first.m, first.p).join(","));
    for (k, traj) in runs.iter().enumerate() {
        for r in rows(traj) {
            push_row(&mut out, Some(k), &r);
        }
    }
    out
}

/// Splits CSV text into its header and numeric rows.
#[cfg(test)]
pub fn parse(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().context("empty CSV")?.split(',').map(str::to_string).collect();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>().with_context(|| format!("line {}: bad number '{f}'", i + 2)))
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            bail!("line {} has {} fields, header has {}", i + 2, row.len(), header.len());
        }
        data.push(row);
    }
    Ok((header, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dissiped_core::{GainPolicy, ScenarioName, SimConfig};

    #[test]
    fn round_trip_is_exact() {
        let b = ScenarioName::Cuk.build().unwrap();
        let cfg = SimConfig::new(2e-3, 1e-6, 50).unwrap();
        let traj = b.simulate(GainPolicy::constant(10.0).unwrap(), &cfg).unwrap();
        let (h, parsed) = parse(&to_csv(&traj)).unwrap();
        assert_eq!(h, header(4, 1, 1));
        assert_eq!(h.len(), 1 + 4 + 4 + 1 + 1 + 3);
        let original = rows(&traj);
        assert_eq!(parsed.len(), original.len());
        for (a, b) in parsed.iter().zip(&original) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{x} vs {y}");
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // physical states convert back to the recorded deviation states
        for (i, row) in parsed.iter().enumerate() {
            for j in 0..4 {
                let recorded = traj.states[i][j] + traj.x_star[j];
                assert_eq!(row[1 + j], recorded);
            }
        }
    }

    #[test]
    fn parse_rejects_ragged_rows() {
        assert!(parse("a,b\n1,2\n3\n").is_err());
        assert!(parse("a\nx\n").is_err());
        assert!(parse("").is_err());
    }
}
