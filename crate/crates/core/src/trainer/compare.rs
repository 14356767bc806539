use thiserror::Error;

use crate::report::fmt_f64;

use super::train::TrainSummary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("need at least two reports, got {0}")]
    TooFewReports(usize),
    #[error("baseline index {index} is out of range for {count} reports")]
    BaselineOutOfRange { index: usize, count: usize },
    #[error("report {index} has thresholds {found:?}, the baseline has {expected:?}")]
    ThresholdMismatch { index: usize, expected: Vec<f64>, found: Vec<f64> },
}

/// Iterations-to-threshold of every report and its speedup over the
/// baseline, one row per report.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable {
    pub labels: Vec<String>,
    pub thresholds: Vec<f64>,
    pub baseline: usize,
    pub iterations: Vec<Vec<Option<usize>>>,
    pub speedups: Vec<Vec<Option<f64>>>,
}

/// `baseline / variant`, undefined when either run missed the threshold.
pub fn speedup(baseline: Option<usize>, variant: Option<usize>) -> Option<f64> {
    match (baseline, variant) {
        (Some(b), Some(v)) if v > 0 => Some(b as f64 / v as f64),
        _ => None,
    }
}

pub fn format_speedup(s: Option<f64>) -> String {
    match s {
        Some(v) => format!("{v:.2}×"),
        None => "undefined".to_string(),
    }
}

pub fn compare(reports: &[TrainSummary], baseline: usize) -> Result<SpeedupTable, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFewReports(reports.len()));
    }
    if baseline >= reports.len() {
        return Err(CompareError::BaselineOutOfRange { index: baseline, count: reports.len() });
    }
    let thresholds = reports[baseline].thresholds();
    for (index, r) in reports.iter().enumerate() {
        let found = r.thresholds();
        if found != thresholds {
            return Err(CompareError::ThresholdMismatch { index, expected: thresholds, found });
        }
    }
    let iterations: Vec<Vec<Option<usize>>> =
        reports.iter().map(|r| r.iterations_to_threshold.iter().map(|h| h.iteration).collect()).collect();
    let speedups = iterations
        .iter()
        .map(|row| row.iter().zip(&iterations[baseline]).map(|(&v, &b)| speedup(b, v)).collect())
        .collect();
    Ok(SpeedupTable {
        labels: (0..reports.len()).map(|i| format!("report{i}")).collect(),
        thresholds,
        baseline,
        iterations,
        speedups,
    })
}

impl SpeedupTable {
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.labels.len(), "one label per report");
        self.labels = labels;
        self
    }

    /// Plain-text grid: models down, thresholds across, each cell the
    /// iteration count and the speedup.
    pub fn to_text(&self) -> String {
        let mut rows = vec![std::iter::once("model".to_string())
            .chain(self.thresholds.iter().map(|t| format!("acc >= {t}")))
            .collect::<Vec<_>>()];
        for (i, label) in self.labels.iter().enumerate() {
            let mut row = vec![if i == self.baseline { format!("{label} (baseline)") } else { label.clone() }];
            for (it, s) in self.iterations[i].iter().zip(&self.speedups[i]) {
                row.push(match it {
                    Some(n) => format!("{n} ({})", format_speedup(*s)),
                    None => "not reached".to_string(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> =
                r.iter().zip(&widths).map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count()))).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// `report,threshold,iterations,speedup`; missing values are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("report,threshold,iterations,speedup\n");
        for (i, label) in self.labels.iter().enumerate() {
            for (j, t) in self.thresholds.iter().enumerate() {
                let it = self.iterations[i][j].map_or(String::new(), |n| n.to_string());
                let s = self.speedups[i][j].map_or(String::new(), fmt_f64);
                out.push_str(&format!("{label},{},{it},{s}\n", fmt_f64(*t)));
            }
        }
        out
    }
}
