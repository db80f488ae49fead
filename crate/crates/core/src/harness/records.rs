//! Per-trial result records and their on-disk forms.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub index: usize,
    pub n_samples: u64,
    pub empirical_risk: Option<f64>,
    /// Penalty at `n_samples`, when defined there.
    pub penalty: Option<f64>,
    pub score: Option<f64>,
    /// Excess penalized risk, for the bandit.
    pub gap: Option<f64>,
}

/// One trial. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub selector: String,
    #[serde(rename = "T")]
    pub budget: f64,
    pub trial: u64,
    pub seed: u64,
    pub chosen_index: usize,
    /// Monte Carlo population risk of the returned model.
    pub risk: f64,
    pub risk_std_error: f64,
    pub bound_rhs: f64,
    pub violated: bool,
    /// `risk - min_i R_i*`.
    pub excess_risk: f64,
    pub empirical_risk: Option<f64>,
    pub score: Option<f64>,
    pub grid_size: Option<usize>,
    pub grid: Vec<usize>,
    pub classes: Vec<ClassRecord>,
    pub budget_used: f64,
    pub last_round_budget: Option<f64>,
    pub counts: Option<Vec<u64>>,
    pub regret: Option<f64>,
}

impl TrialRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::InvalidArgument(format!("bad record: {e}")))
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "selector",
    "T",
    "trial",
    "chosen_index",
    "risk",
    "bound_rhs",
    "violated",
];

pub fn write_jsonl<W: Write>(mut w: W, records: &[TrialRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.selector.clone(),
            r.budget.to_string(),
            r.trial.to_string(),
            r.chosen_index.to_string(),
            r.risk.to_string(),
            r.bound_rhs.to_string(),
            r.violated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Aggregate over the trials of one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub selector: String,
    #[serde(rename = "T")]
    pub budget: f64,
    pub trials: u64,
    pub violations: u64,
    pub violation_rate: f64,
    pub median_excess_risk: f64,
    pub mean_risk: f64,
    pub chosen: BTreeMap<usize, u64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One summary per distinct budget, in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<BudgetSummary> {
    let mut budgets: Vec<f64> = Vec::new();
    for r in records {
        if !budgets.contains(&r.budget) {
            budgets.push(r.budget);
        }
    }
    budgets
        .into_iter()
        .map(|t| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.budget == t).collect();
            let n = rows.len() as u64;
            let violations = rows.iter().filter(|r| r.violated).count() as u64;
            let mut excess: Vec<f64> = rows.iter().map(|r| r.excess_risk).collect();
            let mut chosen = BTreeMap::new();
            for r in &rows {
                *chosen.entry(r.chosen_index).or_insert(0) += 1;
            }
            BudgetSummary {
                selector: rows[0].selector.clone(),
                budget: t,
                trials: n,
                violations,
                violation_rate: violations as f64 / n as f64,
                median_excess_risk: median(&mut excess),
                mean_risk: rows.iter().map(|r| r.risk).sum::<f64>() / n as f64,
                chosen,
            }
        })
        .collect()
}

/// Writes `records.jsonl`, `summary.csv` and `aggregate.json` into `dir`.
pub fn write_outputs(dir: &Path, records: &[TrialRecord]) -> Result<Vec<BudgetSummary>> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(BufWriter::new(File::create(dir.join("records.jsonl"))?), records)?;
    write_csv(File::create(dir.join("summary.csv"))?, records)?;
    let summary = summarize(records);
    let mut agg = BufWriter::new(File::create(dir.join("aggregate.json"))?);
    serde_json::to_writer_pretty(&mut agg, &summary).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(agg)?;
    agg.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, trial: u64, violated: bool, excess: f64) -> TrialRecord {
        TrialRecord {
            selector: "nested".into(),
            budget: t,
            trial,
            seed: 0,
            chosen_index: 2,
            risk: 0.5,
            risk_std_error: 0.0,
            bound_rhs: 1.0,
            violated,
            excess_risk: excess,
            empirical_risk: Some(0.4),
            score: Some(0.6),
            grid_size: Some(3),
            grid: vec![1, 2],
            classes: vec![],
            budget_used: t,
            last_round_budget: None,
            counts: None,
            regret: None,
        }
    }

    #[test]
    fn key_order_is_stable() {
        let line = record(8.0, 1, false, 0.1).to_json_line();
        assert!(line.starts_with(r#"{"selector":"nested","T":8.0,"trial":1,"seed":0,"chosen_index":2,"#));
        assert_eq!(TrialRecord::from_json_line(&line).unwrap(), record(8.0, 1, false, 0.1));
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[record(8.0, 0, true, 0.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("selector,T,trial,chosen_index,risk,bound_rhs,violated"));
        assert_eq!(lines.next(), Some("nested,8,0,2,0.5,1,true"));
    }

    #[test]
    fn summary_per_budget() {
        let recs = [
            record(8.0, 0, true, 0.3),
            record(8.0, 1, false, 0.1),
            record(8.0, 2, false, 0.2),
            record(16.0, 0, false, 0.05),
        ];
        let s = summarize(&recs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].violations, 1);
        assert!((s[0].violation_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[0].median_excess_risk, 0.2);
        assert_eq!(s[1].trials, 1);
    }

    #[test]
    fn median_even() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
