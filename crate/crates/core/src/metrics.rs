//! Per-step metrics and CSV export.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    Prune,
    Evolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub mean_reward: f64,
    pub mean_tool_calls: f64,
    pub active_instruction_chars: f64,
    pub mean_response_items: f64,
    pub population_size: usize,
    pub best_weight: f64,
    pub event: Option<StepEvent>,
}

pub const SERIES: [&str; 6] = [
    "mean_reward",
    "mean_tool_calls",
    "active_instruction_chars",
    "mean_response_items",
    "population_size",
    "best_weight",
];

impl MetricsRecord {
    pub fn series(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "mean_reward" => self.mean_reward,
            "mean_tool_calls" => self.mean_tool_calls,
            "active_instruction_chars" => self.active_instruction_chars,
            "mean_response_items" => self.mean_response_items,
            "population_size" => self.population_size as f64,
            "best_weight" => self.best_weight,
            _ => return Err(unknown_series(name)),
        })
    }
}

fn unknown_series(name: &str) -> Error {
    Error::Config {
        path: "series".into(),
        message: format!("unknown series `{name}`; valid names: {}", SERIES.join(", ")),
    }
}

pub fn write_metrics_line<W: Write>(mut w: W, record: &MetricsRecord) -> Result<()> {
    serde_json::to_writer(&mut w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Mean of the rewards over the last quarter of the steps (at least one).
pub fn final_quartile_mean(records: &[MetricsRecord], series: &str) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let k = records.len().div_ceil(4);
    let tail = &records[records.len() - k..];
    let mut total = 0.0;
    for r in tail {
        total += r.series(series)?;
    }
    Ok(total / k as f64)
}

/// Mean and Student-t 95% interval; degenerate for fewer than two values or zero spread.
pub fn ci95(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if let Some(&first) = values.first() {
        if values.iter().all(|v| *v == first) {
            return (first, first, first);
        }
    }
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    if n < 2 {
        return (mean, mean, mean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return (mean, mean, mean);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    (mean, mean - half, mean + half)
}

/// `metrics.jsonl` files under `dir`: the directory itself, or one per
/// immediate subdirectory for a multi-seed layout.
pub fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let direct = dir.join("metrics.jsonl");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let candidate = entry?.path().join("metrics.jsonl");
        if candidate.is_file() {
            found.push(candidate);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Checkpoint(format!("no metrics.jsonl in {} or its subdirectories", dir.display())));
    }
    Ok(found)
}

/// Write one CSV for `series`: `step,value` for a single run, or
/// `step,mean,ci95_low,ci95_high` across runs, over steps present in every run.
pub fn export_series<W: Write>(runs: &[Vec<MetricsRecord>], series: &str, mut out: W) -> Result<usize> {
    if !SERIES.contains(&series) {
        return Err(unknown_series(series));
    }
    if runs.len() == 1 {
        writeln!(out, "step,value")?;
        for r in &runs[0] {
            writeln!(out, "{},{}", r.step, r.series(series)?)?;
        }
        return Ok(runs[0].len());
    }
    writeln!(out, "step,mean,ci95_low,ci95_high")?;
    let Some(first) = runs.first() else { return Ok(0) };
    let mut rows = 0;
    for rec in first {
        let mut values = Vec::with_capacity(runs.len());
        for run in runs {
            match run.iter().find(|r| r.step == rec.step) {
                Some(r) => values.push(r.series(series)?),
                None => break,
            }
        }
        if values.len() != runs.len() {
            continue;
        }
        let (mean, lo, hi) = ci95(&values);
        writeln!(out, "{},{mean},{lo},{hi}", rec.step)?;
        rows += 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, reward: f64) -> MetricsRecord {
        MetricsRecord {
            step,
            mean_reward: reward,
            mean_tool_calls: 1.0,
            active_instruction_chars: 10.0,
            mean_response_items: 3.0,
            population_size: 7,
            best_weight: reward,
            event: None,
        }
    }

    #[test]
    fn ci95_matches_t_table() {
        // scipy.stats.t.ppf(0.975, 2)
        let (m, lo, hi) = ci95(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        let half = 4.302652729696142 * (1.0f64 / 3.0).sqrt();
        assert!((hi - m - half).abs() < 1e-9);
        assert!((m - lo - half).abs() < 1e-9);
        assert_eq!(ci95(&[0.4, 0.4, 0.4]), (0.4, 0.4, 0.4));
    }

    #[test]
    fn single_run_csv_has_one_row_per_step() {
        let run: Vec<_> = (0..5).map(|s| rec(s, 0.1 * s as f64)).collect();
        let mut out = Vec::new();
        assert_eq!(export_series(&[run], "mean_reward", &mut out).unwrap(), 5);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("step,value\n0,0\n"));
    }

    #[test]
    fn multi_run_csv_orders_interval() {
        let runs: Vec<Vec<_>> = (0..3).map(|k| (0..4).map(|s| rec(s, 0.1 * (s + k) as f64)).collect()).collect();
        let mut out = Vec::new();
        export_series(&runs, "mean_reward", &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("step,mean,ci95_low,ci95_high\n"));
        for line in text.lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert!(v[2] <= v[1] && v[1] <= v[3]);
        }
    }

    #[test]
    fn unknown_series_lists_valid_names() {
        let err = export_series(&[vec![rec(0, 0.0)]], "loss", Vec::new()).unwrap_err();
        assert!(err.to_string().contains("mean_tool_calls"));
    }

    #[test]
    fn final_quartile() {
        let run: Vec<_> = (0..8).map(|s| rec(s, s as f64)).collect();
        assert_eq!(final_quartile_mean(&run, "mean_reward").unwrap(), 6.5);
    }
}
