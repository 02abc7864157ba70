//! Replay evaluation over full-sweep logs, fixed-action baselines and report
//! emission (metrics table plus plot-ready CSVs).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{Action, NUM_ACTIONS};
use crate::logstore::{LogDataset, QuestionLog};
use crate::policy::{label_best_action, PolicyError, PolicyModel};
use crate::slo::{compute_reward, SloProfile};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    Empty,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub avg_cost_tokens: f64,
    pub avg_reward: f64,
    pub refusal_rate: f64,
    pub hallucination_rate: f64,
    pub retrieval_hit_rate: f64,
    /// False when no answerable question had a retrieving action chosen; the
    /// hit rate is then reported as 0.
    pub hit_rate_defined: bool,
    pub action_distribution: [f64; NUM_ACTIONS],
    pub n_questions: usize,
}

/// Replays `choose` over every question, looking up the logged outcome of the
/// chosen action.
pub fn evaluate_with<F>(eval: &LogDataset, profile: &SloProfile, mut choose: F) -> Result<MetricsReport, EvalError>
where
    F: FnMut(&QuestionLog) -> Result<Action, EvalError>,
{
    let n = eval.len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let (mut acc, mut cost, mut reward, mut refusals, mut halls) = (0usize, 0u64, 0.0, 0usize, 0usize);
    let (mut hits, mut hit_den) = (0usize, 0usize);
    let mut counts = [0usize; NUM_ACTIONS];
    for q in &eval.questions {
        let action = choose(q)?;
        let flags = q.flags(action);
        counts[action.id() as usize] += 1;
        acc += flags.acc as usize;
        cost += flags.cost_tokens;
        reward += compute_reward(flags, profile);
        refusals += flags.refusal as usize;
        halls += flags.hall as usize;
        if let Some(hit) = flags.hit {
            hit_den += 1;
            hits += hit as usize;
        }
    }
    let nf = n as f64;
    Ok(MetricsReport {
        accuracy: acc as f64 / nf,
        avg_cost_tokens: cost as f64 / nf,
        avg_reward: reward / nf,
        refusal_rate: refusals as f64 / nf,
        hallucination_rate: halls as f64 / nf,
        retrieval_hit_rate: if hit_den > 0 { hits as f64 / hit_den as f64 } else { 0.0 },
        hit_rate_defined: hit_den > 0,
        action_distribution: counts.map(|c| c as f64 / nf),
        n_questions: n,
    })
}

pub fn evaluate_policy_replay(model: &PolicyModel, eval: &LogDataset, profile: &SloProfile) -> Result<MetricsReport, EvalError> {
    evaluate_with(eval, profile, |q| Ok(model.predict_action(&q.features)?))
}

pub fn evaluate_fixed(action: Action, eval: &LogDataset, profile: &SloProfile) -> Result<MetricsReport, EvalError> {
    evaluate_with(eval, profile, |_| Ok(action))
}

/// The per-question best action under `profile` (the training label).
pub fn evaluate_oracle(eval: &LogDataset, profile: &SloProfile) -> Result<MetricsReport, EvalError> {
    evaluate_with(eval, profile, |q| Ok(label_best_action(&q.rewards(profile)).0))
}

/// Constant action with the highest average reward; ties to the lowest id.
pub fn best_fixed_action(eval: &LogDataset, profile: &SloProfile) -> Result<(Action, MetricsReport), EvalError> {
    let mut best: Option<(Action, MetricsReport)> = None;
    for a in Action::ALL {
        let r = evaluate_fixed(a, eval, profile)?;
        if best.as_ref().is_none_or(|(_, b)| r.avg_reward > b.avg_reward) {
            best = Some((a, r));
        }
    }
    Ok(best.expect("five candidates evaluated"))
}

/// One table row: a method under one SLO, with that SLO's best fixed action on
/// the same evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub slo: String,
    pub method: String,
    pub metrics: MetricsReport,
    pub best_fixed_action: Action,
    pub best_fixed: MetricsReport,
}

pub const TABLE_HEADER: [&str; 10] = [
    "SLO",
    "Method",
    "Acc",
    "Cost",
    "Reward",
    "Refuse",
    "Hit",
    "BestFixed Acc",
    "BestFixed Cost",
    "BestFixed Reward",
];

fn table_cells(row: &ReportRow) -> Vec<String> {
    let m = &row.metrics;
    let b = &row.best_fixed;
    vec![
        row.slo.clone(),
        row.method.clone(),
        format!("{:.3}", m.accuracy),
        format!("{:.4}", m.avg_cost_tokens),
        format!("{:.4}", m.avg_reward),
        format!("{:.3}", m.refusal_rate),
        format!("{:.3}", m.retrieval_hit_rate),
        format!("{:.3}", b.accuracy),
        format!("{:.4}", b.avg_cost_tokens),
        format!("{:.4}", b.avg_reward),
    ]
}

/// Parsed numeric content of one `metrics.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub slo: String,
    pub method: String,
    pub values: [f64; 8],
}

impl TableRow {
    /// The row values a report would print, re-parsed from their printed form.
    pub fn from_report(row: &ReportRow) -> Self {
        let cells = table_cells(row);
        let mut values = [0.0; 8];
        for (v, c) in values.iter_mut().zip(&cells[2..]) {
            *v = c.parse().expect("formatted float parses");
        }
        Self { slo: row.slo.clone(), method: row.method.clone(), values }
    }
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<TableRow>, EvalError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut values = [0.0; 8];
        for (i, v) in values.iter_mut().enumerate() {
            *v = rec
                .get(i + 2)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| csv::Error::from(std::io::Error::other(format!("bad numeric cell in column {}", i + 2))))?;
        }
        rows.push(TableRow { slo: rec[0].to_string(), method: rec[1].to_string(), values });
    }
    Ok(rows)
}

fn aligned_table(rows: &[ReportRow]) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(table_cells).collect();
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i < 2 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&TABLE_HEADER.map(String::from), &mut out);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in &body {
        line(r, &mut out);
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), EvalError> {
    std::fs::write(path, contents).map_err(|source| EvalError::Io { path: path.display().to_string(), source })
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `metrics.csv`, `metrics.txt`, `metrics.json` and the three figure
/// data files into `dir`.
pub fn emit_report(rows: &[ReportRow], dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(|source| EvalError::Io { path: dir.display().to_string(), source })?;

    let table: Vec<Vec<String>> = rows.iter().map(table_cells).collect();
    write_file(&dir.join("metrics.csv"), &csv_string(&TABLE_HEADER, &table)?)?;
    write_file(&dir.join("metrics.txt"), &aligned_table(rows))?;
    write_file(
        &dir.join("metrics.json"),
        &serde_json::to_string_pretty(rows).expect("rows serialize"),
    )?;

    let condition = |r: &ReportRow| format!("{}/{}", r.slo, r.method);
    let dist: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.slo.clone(), r.method.clone()];
            cells.extend(r.metrics.action_distribution.iter().map(|v| format!("{v:.3}")));
            cells
        })
        .collect();
    write_file(
        &dir.join("fig1_action_dist.csv"),
        &csv_string(&["SLO", "Method", "a0", "a1", "a2", "a3", "a4"], &dist)?,
    )?;

    let mut points = Vec::new();
    for r in rows {
        points.push(vec![
            condition(r),
            "policy".into(),
            format!("{:.4}", r.metrics.avg_cost_tokens),
            format!("{:.3}", r.metrics.accuracy),
        ]);
        points.push(vec![
            condition(r),
            format!("best_fixed_a{}", r.best_fixed_action.id()),
            format!("{:.4}", r.best_fixed.avg_cost_tokens),
            format!("{:.3}", r.best_fixed.accuracy),
        ]);
    }
    write_file(
        &dir.join("fig2_cost_accuracy.csv"),
        &csv_string(&["Condition", "Series", "Cost", "Accuracy"], &points)?,
    )?;

    let rewards: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.slo.clone(),
                r.method.clone(),
                format!("{:.4}", r.best_fixed.avg_reward),
                format!("{:.4}", r.metrics.avg_reward),
            ]
        })
        .collect();
    write_file(
        &dir.join("fig3_reward.csv"),
        &csv_string(&["SLO", "Method", "BestFixed Reward", "Reward"], &rewards)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc: f64) -> MetricsReport {
        MetricsReport {
            accuracy: acc,
            avg_cost_tokens: 244.25,
            avg_reward: -0.04191,
            refusal_rate: 0.285,
            hallucination_rate: 0.0,
            retrieval_hit_rate: 0.758,
            hit_rate_defined: true,
            action_distribution: [0.0, 1.0, 0.0, 0.0, 0.0],
            n_questions: 200,
        }
    }

    #[test]
    fn aligned_table_has_header_and_rows() {
        let row = ReportRow {
            slo: "quality_first".into(),
            method: "Baseline (a1)".into(),
            metrics: report(0.3),
            best_fixed_action: Action::Guarded2,
            best_fixed: report(0.25),
        };
        let t = aligned_table(&[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("SLO"));
        assert!(lines[2].contains("0.300") && lines[2].contains("244.2500") && lines[2].contains("-0.0419"));
    }
}
