//! Consolidated reporting: read every per-run CSV under an output directory,
//! take each run's final-round row, and aggregate mean ± stddev per arm.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
struct RunRow {
    label: String,
    seed: u64,
    values: Vec<f64>, // acc_d0.., acc_avg, f1_d0.., f1_avg
}

#[derive(Debug, Clone)]
pub struct ReportTable {
    pub columns: Vec<String>,
    /// label → (run count, per-column mean, per-column stddev)
    pub rows: BTreeMap<String, (usize, Vec<f64>, Vec<f64>)>,
    pub missing: Vec<String>,
}

impl ReportTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        write!(out, "{:<18} {:>5}", "arm", "runs").unwrap();
        for c in &self.columns {
            write!(out, " {:>15}", c).unwrap();
        }
        out.push('\n');
        for (label, (n, mean, std)) in &self.rows {
            write!(out, "{label:<18} {n:>5}").unwrap();
            for (m, s) in mean.iter().zip(std) {
                write!(out, " {:>8.2}±{:<6.2}", 100.0 * m, 100.0 * s).unwrap();
            }
            out.push('\n');
        }
        if !self.missing.is_empty() {
            writeln!(out, "missing runs: {}", self.missing.join(", ")).unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,runs");
        for c in &self.columns {
            write!(out, ",{c}_mean,{c}_std").unwrap();
        }
        out.push('\n');
        for (label, (n, mean, std)) in &self.rows {
            write!(out, "{label},{n}").unwrap();
            for (m, s) in mean.iter().zip(std) {
                write!(out, ",{m},{s}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn parse_final_row(path: &Path) -> Result<Option<(Vec<String>, RunRow)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return Ok(None) };
    let columns: Vec<String> = header.split(',').skip(3).map(|s| s.to_string()).collect();
    let Some(last) = lines.last() else { return Ok(None) };
    let fields: Vec<&str> = last.split(',').collect();
    if fields.len() != columns.len() + 3 {
        bail!("{}: malformed row", path.display());
    }
    let row = RunRow {
        label: fields[1].to_string(),
        seed: fields[2].parse().context("seed column")?,
        values: fields[3..]
            .iter()
            .map(|v| v.parse::<f64>().context("metric column"))
            .collect::<Result<_>>()?,
    };
    Ok(Some((columns, row)))
}

/// Build the consolidated table. Expected runs come from the manifest when
/// present; anything expected but absent is listed as missing.
pub fn build_report(output_dir: &Path) -> Result<Option<ReportTable>> {
    let runs_dir = output_dir.join("runs");
    let mut rows: Vec<RunRow> = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    if runs_dir.is_dir() {
        let mut paths: Vec<_> = fs::read_dir(&runs_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            if let Some((cols, row)) = parse_final_row(&path)? {
                match &columns {
                    None => columns = Some(cols),
                    Some(existing) if *existing != cols => {
                        bail!("{}: column mismatch across runs", path.display())
                    }
                    _ => {}
                }
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let columns = columns.expect("columns set when rows exist");

    let mut missing = Vec::new();
    let manifest_path = output_dir.join("manifest.json");
    if let Ok(text) = fs::read_to_string(&manifest_path) {
        if let Ok(manifest) = serde_json::from_str::<serde_json::Value>(&text) {
            let arms = manifest["config"]["arms"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v["label"].as_str().map(str::to_string))
                        .collect::<Vec<_>>()
                })
                .unwrap_or_default();
            let seeds = manifest["config"]["seeds"]
                .as_array()
                .map(|s| s.iter().filter_map(|v| v.as_u64()).collect::<Vec<_>>())
                .unwrap_or_default();
            for arm in &arms {
                for &seed in &seeds {
                    if !rows.iter().any(|r| &r.label == arm && r.seed == seed) {
                        missing.push(format!("{arm}-seed{seed}"));
                    }
                }
            }
        }
    }

    let mut grouped: BTreeMap<String, Vec<&RunRow>> = BTreeMap::new();
    for r in &rows {
        grouped.entry(r.label.clone()).or_default().push(r);
    }
    let mut out_rows = BTreeMap::new();
    for (label, group) in grouped {
        let n = group.len();
        let width = columns.len();
        let mut mean = vec![0.0; width];
        for r in &group {
            for (m, v) in mean.iter_mut().zip(&r.values) {
                *m += v / n as f64;
            }
        }
        let mut std = vec![0.0; width];
        if n > 1 {
            for r in &group {
                for ((s, v), m) in std.iter_mut().zip(&r.values).zip(&mean) {
                    *s += (v - m) * (v - m) / (n - 1) as f64;
                }
            }
            for s in std.iter_mut() {
                *s = s.sqrt();
            }
        }
        out_rows.insert(label, (n, mean, std));
    }
    Ok(Some(ReportTable { columns, rows: out_rows, missing }))
}
