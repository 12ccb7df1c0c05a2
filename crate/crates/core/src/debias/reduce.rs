use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::ablation::round2;
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};

use super::VoteRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DebiasOptions {
    /// Labels with fewer unbiased samples than this are dropped entirely.
    pub min_per_label: usize,
    /// Also drop labels left without a sample in one of the splits. Only
    /// applies when every sample carries a split.
    pub require_all_splits: bool,
}

impl Default for DebiasOptions {
    fn default() -> Self {
        DebiasOptions {
            min_per_label: 10,
            require_all_splits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionRow {
    pub label: String,
    pub before: usize,
    /// Count left once biased samples are gone, before category filtering.
    pub after: usize,
    pub pct_reduction: f64,
    pub biased_removed: usize,
    pub category_removed: usize,
    /// Count in the final dataset.
    pub kept: usize,
}

impl ReductionRow {
    fn new(label: String, before: usize, after: usize, kept: usize) -> Self {
        let pct_reduction = if before == 0 {
            0.0
        } else {
            round2(100.0 * (before - after) as f64 / before as f64)
        };
        ReductionRow {
            label,
            before,
            after,
            pct_reduction,
            biased_removed: before - after,
            category_removed: after - kept,
            kept,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    /// One row per original label, in label order.
    pub rows: Vec<ReductionRow>,
    pub removed_labels: Vec<String>,
    pub total: ReductionRow,
}

impl ReductionReport {
    /// Builds rows from per-label `(before, after, kept)` counts.
    pub fn from_counts(
        labels: &[String],
        counts: &[(usize, usize, usize)],
        removed_labels: Vec<String>,
    ) -> Self {
        let rows: Vec<ReductionRow> = labels
            .iter()
            .zip(counts)
            .map(|(l, &(b, a, k))| ReductionRow::new(l.clone(), b, a, k))
            .collect();
        let sum = |f: fn(&ReductionRow) -> usize| rows.iter().map(f).sum::<usize>();
        let total = ReductionRow::new(
            "TOTAL".into(),
            sum(|r| r.before),
            sum(|r| r.after),
            sum(|r| r.kept),
        );
        ReductionReport {
            rows,
            removed_labels,
            total,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label\tbefore\tafter\tpct_reduction\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.2}",
                r.label, r.before, r.after, r.pct_reduction
            );
        }
        let _ = writeln!(out, "# removed_labels: {}", self.removed_labels.join(","));
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// [`build_debiased_with`] using the per-split presence check.
pub fn build_debiased(
    dataset: &Dataset,
    votes: &[VoteRecord],
    min_per_label: usize,
) -> Result<(Dataset, ReductionReport)> {
    build_debiased_with(
        dataset,
        votes,
        &DebiasOptions {
            min_per_label,
            require_all_splits: true,
        },
    )
}

/// Drops every biased sample, then every label left too small, and relabels
/// the survivors against the reduced label list (names are kept).
pub fn build_debiased_with(
    dataset: &Dataset,
    votes: &[VoteRecord],
    opts: &DebiasOptions,
) -> Result<(Dataset, ReductionReport)> {
    let mut biased: HashMap<&str, bool> = HashMap::with_capacity(votes.len());
    for v in votes {
        if biased.insert(v.id.as_str(), v.biased).is_some() {
            return Err(Error::DuplicateId(v.id.clone()));
        }
    }
    let mut unbiased: Vec<&Sample> = Vec::new();
    for s in &dataset.samples {
        match biased.get(s.id.as_str()) {
            None => return Err(Error::MissingSample(s.id.clone())),
            Some(false) => unbiased.push(s),
            Some(true) => {}
        }
    }
    if biased.len() != dataset.len() {
        let known: std::collections::HashSet<&str> =
            dataset.samples.iter().map(|s| s.id.as_str()).collect();
        let stray = votes
            .iter()
            .find(|v| !known.contains(v.id.as_str()))
            .expect("extra vote");
        return Err(Error::MissingSample(stray.id.clone()));
    }

    let n = dataset.labels.len();
    let before = dataset.label_counts();
    let mut after = vec![0usize; n];
    let mut per_split = vec![[0usize; 3]; n];
    for s in &unbiased {
        after[s.label] += 1;
        if let Some(sp) = s.split {
            per_split[s.label][sp.index()] += 1;
        }
    }
    let check_splits = opts.require_all_splits && dataset.samples.iter().all(|s| s.split.is_some());
    let keep: Vec<bool> = (0..n)
        .map(|l| {
            after[l] > 0
                && after[l] >= opts.min_per_label
                && (!check_splits || per_split[l].iter().all(|&c| c > 0))
        })
        .collect();

    let mut new_index = vec![usize::MAX; n];
    let mut labels = Vec::new();
    let mut removed = Vec::new();
    for (l, name) in dataset.labels.iter().enumerate() {
        if keep[l] {
            new_index[l] = labels.len();
            labels.push(name.clone());
        } else {
            removed.push(name.clone());
        }
    }
    let samples: Vec<Sample> = unbiased
        .into_iter()
        .filter(|s| keep[s.label])
        .map(|s| Sample {
            label: new_index[s.label],
            ..s.clone()
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::AllSamplesRemoved);
    }
    let counts: Vec<(usize, usize, usize)> = (0..n)
        .map(|l| (before[l], after[l], if keep[l] { after[l] } else { 0 }))
        .collect();
    let report = ReductionReport::from_counts(&dataset.labels, &counts, removed);
    let out = Dataset {
        name: format!("{}-debiased", dataset.name),
        labels,
        audio_dim: dataset.audio_dim,
        video_dim: dataset.video_dim,
        samples,
    };
    Ok((out, report))
}
