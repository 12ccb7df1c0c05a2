//! Modality ablation: one model per modality combination, per-sample outcomes,
//! minimal-combination annotation and the combination distribution.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Modality, ModalityCombo, Sample, Split, SplitSpec};
use crate::debias::RoundRobinFolds;
use crate::error::{Error, Result};
use crate::learner::{argmax, softmax, Classifier, TextOptions, TrainConfig};

/// Outcome of one combo's model on one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComboOutcome {
    /// Probability assigned to the gold label.
    pub p_gold: f64,
    pub predicted: usize,
    pub correct: bool,
}

/// All seven outcomes for one sample, indexed by canonical combo order.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRecord {
    pub id: String,
    pub outcomes: [ComboOutcome; 7],
}

impl AblationRecord {
    pub fn outcome(&self, combo: ModalityCombo) -> &ComboOutcome {
        &self.outcomes[combo.canonical_index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResolvedBy {
    Correctness,
    MaxProbability,
}

impl fmt::Display for ResolvedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResolvedBy::Correctness => "correctness",
            ResolvedBy::MaxProbability => "max_probability",
        })
    }
}

impl FromStr for ResolvedBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correctness" => Ok(ResolvedBy::Correctness),
            "max_probability" => Ok(ResolvedBy::MaxProbability),
            other => Err(Error::InvalidConfig(format!(
                "unknown resolution {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComboAnnotation {
    pub id: String,
    pub combo: ModalityCombo,
    pub resolved_by: ResolvedBy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct AblationConfig {
    pub train: TrainConfig,
    pub text: TextOptions,
}


fn outcome_for(classifier: &Classifier, sample: &Sample) -> Result<ComboOutcome> {
    let x = classifier.space.encode(sample)?;
    let z = classifier.model.logits_sparse(&x);
    let p = softmax(&z);
    let predicted = argmax(&z);
    Ok(ComboOutcome {
        p_gold: p[sample.label],
        predicted,
        correct: predicted == sample.label,
    })
}

/// Trains the seven combo models on `train`, early-stopping on `dev`, and
/// scores every sample of `eval`.
fn ablate_part(
    dataset: &Dataset,
    train: &[&Sample],
    dev: &[&Sample],
    eval: &[&Sample],
    config: &AblationConfig,
) -> Result<Vec<AblationRecord>> {
    let models: Vec<Classifier> = ModalityCombo::ALL
        .par_iter()
        .map(|&combo| {
            Classifier::fit(
                train.iter().copied(),
                dev.iter().copied(),
                dataset.audio_dim,
                dataset.video_dim,
                combo,
                dataset.labels.len(),
                &config.text,
                &config.train,
            )
        })
        .collect::<Result<_>>()?;
    eval.iter()
        .map(|s| {
            let mut outcomes = [ComboOutcome {
                p_gold: 0.0,
                predicted: 0,
                correct: false,
            }; 7];
            for (slot, model) in outcomes.iter_mut().zip(&models) {
                *slot = outcome_for(model, s)?;
            }
            Ok(AblationRecord {
                id: s.id.clone(),
                outcomes,
            })
        })
        .collect()
}

/// Ablation over the test part of `split`, with models trained on its train
/// part and early-stopped on its dev part.
pub fn run_ablation(
    dataset: &Dataset,
    split: &SplitSpec,
    config: &AblationConfig,
) -> Result<Vec<AblationRecord>> {
    split.validate_against(dataset)?;
    let eval: Vec<&Sample> = dataset.part(split, Split::Test).collect();
    if eval.is_empty() {
        return Ok(Vec::new());
    }
    let train: Vec<&Sample> = dataset.part(split, Split::Train).collect();
    let dev: Vec<&Sample> = dataset.part(split, Split::Dev).collect();
    if train.is_empty() {
        return Err(Error::EmptyPart("train".into()));
    }
    if dev.is_empty() {
        return Err(Error::EmptyPart("dev".into()));
    }
    ablate_part(dataset, &train, &dev, &eval, config)
}

/// Ablation over every sample: each fold's test part is scored by models
/// trained on that fold's train parts. Records come back in dataset order.
pub fn run_ablation_rotated(
    dataset: &Dataset,
    folds: &RoundRobinFolds,
    config: &AblationConfig,
) -> Result<Vec<AblationRecord>> {
    let by_id: HashMap<&str, &Sample> =
        dataset.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let per_fold: Vec<Vec<AblationRecord>> = (0..folds.folds.len())
        .into_par_iter()
        .map(|k| {
            let (train, dev, test) = folds.fold_samples(k, &by_id)?;
            ablate_part(dataset, &train, &dev, &test, config).map_err(|e| Error::Fold {
                fold: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut by_sample: HashMap<String, AblationRecord> = per_fold
        .into_iter()
        .flatten()
        .map(|r| (r.id.clone(), r))
        .collect();
    dataset
        .samples
        .iter()
        .map(|s| {
            by_sample
                .remove(&s.id)
                .ok_or_else(|| Error::MissingSample(s.id.clone()))
        })
        .collect()
}

/// Smallest correct combination, or failing that the combination with the
/// highest gold-label probability.
///
/// Among correct combos the minimum cardinality wins, ties broken by canonical
/// order `T, V, A, T+V, T+A, V+A, T+V+A`. Without any correct combo the
/// maximum `p_gold` wins, ties broken by smaller cardinality, then canonical
/// order.
pub fn annotate_minimal(record: &AblationRecord) -> ComboAnnotation {
    let correct = ModalityCombo::ALL
        .into_iter()
        .filter(|&c| record.outcome(c).correct)
        .min_by_key(|c| (c.len(), c.canonical_index()));
    let (combo, resolved_by) = match correct {
        Some(c) => (c, ResolvedBy::Correctness),
        None => {
            let mut best = ModalityCombo::ALL[0];
            for c in ModalityCombo::ALL.into_iter().skip(1) {
                let (pc, pb) = (record.outcome(c).p_gold, record.outcome(best).p_gold);
                if pc > pb
                    || (pc == pb
                        && (c.len(), c.canonical_index()) < (best.len(), best.canonical_index()))
                {
                    best = c;
                }
            }
            (best, ResolvedBy::MaxProbability)
        }
    };
    ComboAnnotation {
        id: record.id.clone(),
        combo,
        resolved_by,
    }
}

pub(crate) fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Distribution of minimal combinations, in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComboStats {
    pub counts: [usize; 7],
    pub total: usize,
    /// Per-combo share rounded to 2 decimals, canonical order.
    pub percentages: [f64; 7],
    pub sigma_t: f64,
    pub sigma_v: f64,
    pub sigma_a: f64,
}

impl ComboStats {
    /// Percentages and Σ aggregates from raw per-combo counts (canonical
    /// order). Σ values are computed from the unrounded counts.
    pub fn from_counts(counts: [usize; 7]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput("annotations"));
        }
        let pct = |n: usize| round2(100.0 * n as f64 / total as f64);
        let sigma = |m: Modality| {
            pct(ModalityCombo::ALL
                .iter()
                .zip(&counts)
                .filter(|(c, _)| c.contains(m))
                .map(|(_, &n)| n)
                .sum())
        };
        Ok(ComboStats {
            counts,
            total,
            percentages: counts.map(pct),
            sigma_t: sigma(Modality::Text),
            sigma_v: sigma(Modality::Video),
            sigma_a: sigma(Modality::Audio),
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("combo\tcount\tpercent\n");
        for (i, c) in ModalityCombo::ALL.iter().enumerate() {
            let _ = writeln!(out, "{c}\t{}\t{:.2}", self.counts[i], self.percentages[i]);
        }
        let _ = writeln!(out, "sigma_T\t\t{:.2}", self.sigma_t);
        let _ = writeln!(out, "sigma_V\t\t{:.2}", self.sigma_v);
        let _ = writeln!(out, "sigma_A\t\t{:.2}", self.sigma_a);
        out
    }
}

pub fn aggregate_stats(annotations: &[ComboAnnotation]) -> Result<ComboStats> {
    let mut counts = [0usize; 7];
    for a in annotations {
        counts[a.combo.canonical_index()] += 1;
    }
    ComboStats::from_counts(counts)
}

pub fn records_to_tsv(records: &[AblationRecord], labels: &[String]) -> String {
    let mut out = String::from("id\tcombo\tp_gold\tpred\tcorrect\n");
    for r in records {
        for (c, o) in ModalityCombo::ALL.iter().zip(&r.outcomes) {
            let _ = writeln!(
                out,
                "{}\t{c}\t{}\t{}\t{}",
                r.id, o.p_gold, labels[o.predicted], o.correct
            );
        }
    }
    out
}

/// Parses an ablation record file. Predicted label names are resolved against
/// `labels`; unknown names get fresh indices past the end of the list.
pub fn read_records(path: impl AsRef<Path>, labels: &[String]) -> Result<Vec<AblationRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut names: Vec<String> = labels.to_vec();
    let mut records: Vec<AblationRecord> = Vec::new();
    let mut filled: Vec<[bool; 7]> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = |m: &str| Error::parse(path, i + 1, m);
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, combo, p, pred, correct] = cols[..] else {
            return Err(bad("expected 5 columns"));
        };
        let combo: ModalityCombo = combo.parse().map_err(|e: Error| bad(&e.to_string()))?;
        let p_gold: f64 = p.parse().map_err(|_| bad("p_gold is not a number"))?;
        let correct: bool = correct
            .parse()
            .map_err(|_| bad("correct must be true/false"))?;
        let predicted = match names.iter().position(|n| n == pred) {
            Some(k) => k,
            None => {
                names.push(pred.to_string());
                names.len() - 1
            }
        };
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            records.push(AblationRecord {
                id: id.to_string(),
                outcomes: [ComboOutcome {
                    p_gold: f64::NAN,
                    predicted: 0,
                    correct: false,
                }; 7],
            });
            filled.push([false; 7]);
            records.len() - 1
        });
        let k = combo.canonical_index();
        if filled[slot][k] {
            return Err(bad("duplicate (id, combo) row"));
        }
        filled[slot][k] = true;
        records[slot].outcomes[k] = ComboOutcome {
            p_gold,
            predicted,
            correct,
        };
    }
    if let Some(pos) = filled.iter().position(|f| f.iter().any(|x| !x)) {
        return Err(Error::parse(
            path,
            0,
            format!("sample {} lacks some of the 7 combos", records[pos].id),
        ));
    }
    Ok(records)
}

pub fn annotations_to_tsv(annotations: &[ComboAnnotation]) -> String {
    let mut out = String::from("id\tminimal_combo\tresolved_by\n");
    for a in annotations {
        let _ = writeln!(out, "{}\t{}\t{}", a.id, a.combo, a.resolved_by);
    }
    out
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<ComboAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| Error::parse(path, i + 1, m);
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, combo, by] = cols[..] else {
            return Err(bad("expected 3 columns".into()));
        };
        out.push(ComboAnnotation {
            id: id.to_string(),
            combo: combo.parse().map_err(|e: Error| bad(e.to_string()))?,
            resolved_by: by.parse().map_err(|e: Error| bad(e.to_string()))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(correct: &[ModalityCombo], p: [f64; 7]) -> AblationRecord {
        let mut outcomes = [ComboOutcome {
            p_gold: 0.0,
            predicted: 1,
            correct: false,
        }; 7];
        for (i, c) in ModalityCombo::ALL.iter().enumerate() {
            let ok = correct.contains(c);
            outcomes[i] = ComboOutcome {
                p_gold: p[i],
                predicted: if ok { 0 } else { 1 },
                correct: ok,
            };
        }
        AblationRecord {
            id: "s".into(),
            outcomes,
        }
    }

    #[test]
    fn only_full_combo_correct() {
        let a = annotate_minimal(&record(&[ModalityCombo::TVA], [0.1; 7]));
        assert_eq!(
            (a.combo, a.resolved_by),
            (ModalityCombo::TVA, ResolvedBy::Correctness)
        );
    }

    #[test]
    fn smaller_correct_combo_wins() {
        let a = annotate_minimal(&record(&[ModalityCombo::TA, ModalityCombo::T], [0.1; 7]));
        assert_eq!(a.combo, ModalityCombo::T);
        let a = annotate_minimal(&record(&[ModalityCombo::VA, ModalityCombo::TV], [0.1; 7]));
        assert_eq!(a.combo, ModalityCombo::TV);
    }

    #[test]
    fn none_correct_uses_max_probability_with_canonical_tiebreak() {
        let a = annotate_minimal(&record(&[], [0.10, 0.10, 0.05, 0.30, 0.30, 0.02, 0.25]));
        assert_eq!(
            (a.combo, a.resolved_by),
            (ModalityCombo::TV, ResolvedBy::MaxProbability)
        );
        // Cardinality beats canonical position on equal probability.
        let a = annotate_minimal(&record(&[], [0.1, 0.1, 0.1, 0.4, 0.1, 0.1, 0.4]));
        assert_eq!(a.combo, ModalityCombo::TV);
        let a = annotate_minimal(&record(&[], [0.1, 0.1, 0.1, 0.1, 0.1, 0.4, 0.1]));
        assert_eq!(a.combo, ModalityCombo::VA);
    }

    #[test]
    fn stats_examples() {
        let ann = |c| ComboAnnotation {
            id: "x".into(),
            combo: c,
            resolved_by: ResolvedBy::Correctness,
        };
        let s = aggregate_stats(&[ann(ModalityCombo::T), ann(ModalityCombo::T)]).unwrap();
        assert_eq!(s.percentages[0], 100.0);
        assert_eq!((s.sigma_t, s.sigma_v, s.sigma_a), (100.0, 0.0, 0.0));

        let s = aggregate_stats(&[
            ann(ModalityCombo::T),
            ann(ModalityCombo::V),
            ann(ModalityCombo::A),
            ann(ModalityCombo::TVA),
        ])
        .unwrap();
        assert_eq!(s.percentages, [25.0, 25.0, 25.0, 0.0, 0.0, 0.0, 25.0]);
        assert_eq!((s.sigma_t, s.sigma_v, s.sigma_a), (50.0, 50.0, 50.0));

        assert!(matches!(aggregate_stats(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn record_and_annotation_files_roundtrip() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let mut r = record(
            &[ModalityCombo::V],
            [0.125, 0.9, 0.3, 0.4, 0.5, 0.6, 1.0 / 3.0],
        );
        r.id = "x1".into();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ablation.tsv");
        std::fs::write(&p, records_to_tsv(std::slice::from_ref(&r), &labels)).unwrap();
        assert_eq!(read_records(&p, &labels).unwrap(), vec![r.clone()]);

        let a = vec![annotate_minimal(&r)];
        let q = dir.path().join("ann.tsv");
        std::fs::write(&q, annotations_to_tsv(&a)).unwrap();
        assert_eq!(read_annotations(&q).unwrap(), a);
    }

    #[test]
    fn incomplete_record_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ablation.tsv");
        std::fs::write(&p, "id\tcombo\tp_gold\tpred\tcorrect\nx\tT\t0.5\ta\ttrue\n").unwrap();
        assert!(read_records(&p, &[]).is_err());
    }
}
