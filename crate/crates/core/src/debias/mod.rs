//! Round-robin bias detection and debiased-dataset construction.
//!
//! The training split is cut into thirds; together with dev and test that
//! gives five parts. Each of five folds holds one part out as test, one as
//! dev, and trains three text-driven detectors on the rest. A sample whose
//! label at least two detectors recover from text alone is flagged biased.

mod control;
mod reduce;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModalityCombo, Sample, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::learner::{Classifier, NgramOrder, TextOptions, TrainConfig, Weighting};
use crate::rng::{shuffled, Purpose};

pub use control::random_control;
pub use reduce::{
    build_debiased, build_debiased_with, DebiasOptions, ReductionReport, ReductionRow,
};

/// Which part serves as dev in each fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DevRotation {
    /// Fold `k` uses part `(k + 1) mod 5` as dev.
    #[default]
    Cyclic,
    /// The original dev part is dev in every fold, except the fold that tests
    /// on it, which uses the original test part.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fold {
    pub train: [usize; 3],
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRobinFolds {
    /// Parts 0 to 2 are thirds of the train split, 3 is dev, 4 is test.
    pub parts: [Vec<String>; 5],
    pub folds: [Fold; 5],
    pub seed: u64,
}

impl RoundRobinFolds {
    pub(crate) fn fold_samples<'a>(
        &self,
        k: usize,
        by_id: &HashMap<&str, &'a Sample>,
    ) -> Result<(Vec<&'a Sample>, Vec<&'a Sample>, Vec<&'a Sample>)> {
        let fetch = |part: usize| -> Result<Vec<&'a Sample>> {
            self.parts[part]
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::MissingSample(id.clone()))
                })
                .collect()
        };
        let f = &self.folds[k];
        let mut train = Vec::new();
        for &p in &f.train {
            train.extend(fetch(p)?);
        }
        Ok((train, fetch(f.dev)?, fetch(f.test)?))
    }
}

/// Cyclic-dev folds; see [`build_folds_with`].
pub fn build_folds(dataset: &Dataset, split: &SplitSpec, seed: u64) -> Result<RoundRobinFolds> {
    build_folds_with(dataset, split, seed, DevRotation::Cyclic)
}

/// Shuffles the train ids by `seed` and cuts them into thirds whose sizes
/// differ by at most one. Fold `k` tests on part `k`.
pub fn build_folds_with(
    dataset: &Dataset,
    split: &SplitSpec,
    seed: u64,
    rotation: DevRotation,
) -> Result<RoundRobinFolds> {
    split.validate_against(dataset)?;
    let ids =
        |sp: Split| -> Vec<String> { dataset.part(split, sp).map(|s| s.id.clone()).collect() };
    let mut train_ids = ids(Split::Train);
    train_ids.sort();
    let train_ids = shuffled(&train_ids, seed, Purpose::Folds, 0);
    let n = train_ids.len();
    let mut thirds: Vec<Vec<String>> = Vec::with_capacity(3);
    let mut start = 0;
    for k in 0..3 {
        let len = n / 3 + usize::from(k < n % 3);
        thirds.push(train_ids[start..start + len].to_vec());
        start += len;
    }
    let [a, b, c]: [Vec<String>; 3] = thirds.try_into().expect("three parts");
    let parts = [a, b, c, ids(Split::Dev), ids(Split::Test)];
    if let Some(k) = parts.iter().position(Vec::is_empty) {
        return Err(Error::EmptyPart(format!("fold part {k}")));
    }
    let folds = std::array::from_fn(|test| {
        let dev = match rotation {
            DevRotation::Cyclic => (test + 1) % 5,
            DevRotation::Fixed if test == 3 => 4,
            DevRotation::Fixed => 3,
        };
        let rest: Vec<usize> = (0..5).filter(|&p| p != test && p != dev).collect();
        Fold {
            train: [rest[0], rest[1], rest[2]],
            dev,
            test,
        }
    });
    Ok(RoundRobinFolds { parts, folds, seed })
}

/// The three detectors: two text-only models with different featurizations
/// and a fusion model whose audio and video inputs are masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub text_a: TextOptions,
    pub text_b: TextOptions,
    pub fusion_text: TextOptions,
    pub train: TrainConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            text_a: TextOptions {
                weighting: Weighting::TfIdf,
                ..TextOptions::default()
            },
            text_b: TextOptions {
                ngram: NgramOrder::Bigram,
                ..TextOptions::default()
            },
            fusion_text: TextOptions::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRecord {
    pub id: String,
    pub fold: usize,
    /// Text model A, text model B, text-masked fusion model.
    pub votes: [bool; 3],
    pub biased: bool,
}

/// At least two of three.
pub fn majority(votes: [bool; 3]) -> bool {
    votes.iter().filter(|&&v| v).count() >= 2
}

fn detect_fold(
    dataset: &Dataset,
    folds: &RoundRobinFolds,
    k: usize,
    cfg: &DetectorConfig,
    by_id: &HashMap<&str, &Sample>,
) -> Result<Vec<VoteRecord>> {
    let (train, dev, test) = folds.fold_samples(k, by_id)?;
    let n_labels = dataset.labels.len();
    let specs = [
        (&cfg.text_a, 0, 0),
        (&cfg.text_b, 0, 0),
        (&cfg.fusion_text, dataset.audio_dim, dataset.video_dim),
    ];
    let models: Vec<Classifier> = specs
        .par_iter()
        .map(|&(text, audio_dim, video_dim)| {
            Classifier::fit(
                train.iter().copied(),
                dev.iter().copied(),
                audio_dim,
                video_dim,
                ModalityCombo::T,
                n_labels,
                text,
                &cfg.train,
            )
        })
        .collect::<Result<_>>()?;
    test.iter()
        .map(|s| {
            let mut votes = [false; 3];
            for (v, m) in votes.iter_mut().zip(&models) {
                *v = m.predict(s)? == s.label;
            }
            Ok(VoteRecord {
                id: s.id.clone(),
                fold: k,
                votes,
                biased: majority(votes),
            })
        })
        .collect()
}

/// One vote record per sample, in dataset order. Each sample is judged by the
/// detectors of the single fold that tests on it.
pub fn detect_bias(
    dataset: &Dataset,
    folds: &RoundRobinFolds,
    config: &DetectorConfig,
) -> Result<Vec<VoteRecord>> {
    let by_id: HashMap<&str, &Sample> =
        dataset.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let per_fold: Vec<Vec<VoteRecord>> = (0..folds.folds.len())
        .into_par_iter()
        .map(|k| {
            detect_fold(dataset, folds, k, config, &by_id).map_err(|e| Error::Fold {
                fold: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut by_sample: HashMap<String, VoteRecord> = per_fold
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

/// Vote file rows sorted by id.
pub fn votes_to_tsv(votes: &[VoteRecord]) -> String {
    let mut sorted: Vec<&VoteRecord> = votes.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::from("id\tfold\tvote_a\tvote_b\tvote_fusion\tbiased\n");
    for r in sorted {
        let [a, b, f] = r.votes;
        let _ = writeln!(out, "{}\t{}\t{a}\t{b}\t{f}\t{}", r.id, r.fold, r.biased);
    }
    out
}

pub fn read_votes(path: impl AsRef<Path>) -> Result<Vec<VoteRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = |m: &str| Error::parse(path, i + 1, m);
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, fold, a, b, f, biased] = cols[..] else {
            return Err(bad("expected 6 columns"));
        };
        let flag = |s: &str| s.parse::<bool>().map_err(|_| bad("expected true/false"));
        let votes = [flag(a)?, flag(b)?, flag(f)?];
        let biased = flag(biased)?;
        if biased != majority(votes) {
            return Err(bad("biased flag disagrees with the votes"));
        }
        out.push(VoteRecord {
            id: id.to_string(),
            fold: fold.parse().map_err(|_| bad("fold is not an integer"))?,
            votes,
            biased,
        });
    }
    Ok(out)
}
