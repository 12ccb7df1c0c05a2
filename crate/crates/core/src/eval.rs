//! Accuracy and macro-F1, free-text label matching, and before/after tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ablation::round2;
use crate::error::{Error, Result};
use crate::learner::tokenize;

/// Which labels the macro-F1 mean runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroAverage {
    /// Every label in the label set; labels never seen score 0.
    #[default]
    AllLabels,
    /// Only labels that occur in the gold or predicted lists.
    PresentOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub labels: Vec<String>,
    pub total: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Recall per gold label, for labels with at least one gold sample.
    pub per_label_accuracy: IndexMap<String, f64>,
    pub per_label_f1: IndexMap<String, f64>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            line: e.line(),
            source: e,
        })
    }
}

pub fn compute_metrics(gold: &[usize], pred: &[usize], labels: &[String]) -> Result<Metrics> {
    compute_metrics_with(gold, pred, labels, MacroAverage::AllLabels)
}

/// F1 is 0 for a label whose precision and recall are both 0. An empty input
/// has accuracy 0.
pub fn compute_metrics_with(
    gold: &[usize],
    pred: &[usize],
    labels: &[String],
    average: MacroAverage,
) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let n = labels.len();
    if let Some(&bad) = gold.iter().chain(pred).find(|&&l| l >= n) {
        return Err(Error::InvalidConfig(format!(
            "label index {bad} outside a set of {n}"
        )));
    }
    let mut tp = vec![0usize; n];
    let mut gold_count = vec![0usize; n];
    let mut pred_count = vec![0usize; n];
    for (&g, &p) in gold.iter().zip(pred) {
        gold_count[g] += 1;
        pred_count[p] += 1;
        if g == p {
            tp[g] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = if gold.is_empty() {
        0.0
    } else {
        correct as f64 / gold.len() as f64
    };
    let f1: Vec<f64> = (0..n)
        .map(|l| {
            let denom = gold_count[l] + pred_count[l];
            if tp[l] == 0 || denom == 0 {
                0.0
            } else {
                2.0 * tp[l] as f64 / denom as f64
            }
        })
        .collect();
    let averaged: Vec<usize> = match average {
        MacroAverage::AllLabels => (0..n).collect(),
        MacroAverage::PresentOnly => (0..n)
            .filter(|&l| gold_count[l] + pred_count[l] > 0)
            .collect(),
    };
    let macro_f1 = if averaged.is_empty() {
        0.0
    } else {
        averaged.iter().map(|&l| f1[l]).sum::<f64>() / averaged.len() as f64
    };
    let per_label_accuracy = (0..n)
        .filter(|&l| gold_count[l] > 0)
        .map(|l| (labels[l].clone(), tp[l] as f64 / gold_count[l] as f64))
        .collect();
    let per_label_f1 = labels.iter().cloned().zip(f1).collect();
    Ok(Metrics {
        labels: labels.to_vec(),
        total: gold.len(),
        accuracy,
        macro_f1,
        per_label_accuracy,
        per_label_f1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatch {
    pub output: String,
    pub label: usize,
    pub score: f64,
    pub exact: bool,
}

fn token_f1(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in b {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

/// Maps free text to a label: an exact match after normalization if there is
/// one, otherwise the label with the highest token-level F1 (lowest index on
/// ties).
pub fn match_label(output: &str, labels: &[String]) -> Result<LabelMatch> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let out_tokens = tokenize(output);
    let label_tokens: Vec<Vec<String>> = labels.iter().map(|l| tokenize(l)).collect();
    if let Some(label) = label_tokens.iter().position(|t| *t == out_tokens) {
        return Ok(LabelMatch {
            output: output.to_string(),
            label,
            score: 1.0,
            exact: true,
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, t) in label_tokens.iter().enumerate() {
        let s = token_f1(&out_tokens, t);
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(LabelMatch {
        output: output.to_string(),
        label: best.0,
        score: best.1,
        exact: false,
    })
}

/// One line of a before/after table. Values are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub before: Option<f64>,
    pub after: Option<f64>,
    /// The label no longer exists after debiasing.
    pub removed: bool,
    pub delta: Option<f64>,
}

fn row(name: &str, before: Option<f64>, after: Option<f64>, removed: bool) -> ComparisonRow {
    let before = before.map(|v| round2(100.0 * v));
    let after = after.map(|v| round2(100.0 * v));
    ComparisonRow {
        name: name.to_string(),
        before,
        after,
        removed,
        delta: before.zip(after).map(|(b, a)| round2(a - b)),
    }
}

/// Per-label accuracy rows for every label of `before`, then any label only
/// `after` knows, then overall accuracy and macro-F1.
pub fn compare_runs(before: &Metrics, after: &Metrics) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = before
        .labels
        .iter()
        .map(|l| {
            let removed = !after.labels.contains(l);
            row(
                l,
                before.per_label_accuracy.get(l).copied(),
                after.per_label_accuracy.get(l).copied(),
                removed,
            )
        })
        .collect();
    rows.extend(
        after
            .labels
            .iter()
            .filter(|l| !before.labels.contains(l))
            .map(|l| row(l, None, after.per_label_accuracy.get(l).copied(), false)),
    );
    rows.push(row(
        "Accuracy",
        Some(before.accuracy),
        Some(after.accuracy),
        false,
    ));
    rows.push(row(
        "Macro-F1",
        Some(before.macro_f1),
        Some(after.macro_f1),
        false,
    ));
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Tsv,
    Markdown,
}

fn cells(r: &ComparisonRow) -> [String; 4] {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    let after = if r.removed {
        "Removed".to_string()
    } else {
        fmt(r.after)
    };
    [r.name.clone(), fmt(r.before), after, fmt(r.delta)]
}

pub fn render_comparison(rows: &[ComparisonRow], format: TableFormat) -> String {
    let header = ["label", "before", "after", "delta"];
    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            let _ = writeln!(out, "{}", header.join("\t"));
            for r in rows {
                let _ = writeln!(out, "{}", cells(r).join("\t"));
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|---|---:|---:|---:|");
            for r in rows {
                let _ = writeln!(out, "| {} |", cells(r).join(" | "));
            }
        }
    }
    out
}
