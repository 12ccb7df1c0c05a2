use std::collections::{HashMap, HashSet};

use crate::dataset::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::rng::{shuffled, Purpose};

/// A uniformly drawn subset of `dataset` with the same per-split sizes as
/// `debiased`, restricted to the labels that survived debiasing. Samples keep
/// their original order.
pub fn random_control(dataset: &Dataset, debiased: &Dataset, seed: u64) -> Result<Dataset> {
    let original: HashSet<&str> = dataset.samples.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = debiased
        .samples
        .iter()
        .find(|s| !original.contains(s.id.as_str()))
    {
        return Err(Error::MissingSample(s.id.clone()));
    }
    let new_label: HashMap<&str, usize> = debiased
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let groups: [Option<Split>; 4] = [
        Some(Split::Train),
        Some(Split::Dev),
        Some(Split::Test),
        None,
    ];
    let mut chosen: HashSet<&str> = HashSet::new();
    for (g, &key) in groups.iter().enumerate() {
        let needed = debiased.samples.iter().filter(|s| s.split == key).count();
        if needed == 0 {
            continue;
        }
        let candidates: Vec<&str> = dataset
            .samples
            .iter()
            .filter(|s| s.split == key && new_label.contains_key(dataset.labels[s.label].as_str()))
            .map(|s| s.id.as_str())
            .collect();
        if candidates.len() < needed {
            return Err(Error::InsufficientCandidates {
                split: key.map_or("unassigned", Split::as_str).to_string(),
                needed,
                available: candidates.len(),
            });
        }
        chosen.extend(
            shuffled(&candidates, seed, Purpose::Control, g as u64)
                .into_iter()
                .take(needed),
        );
    }
    let samples: Vec<Sample> = dataset
        .samples
        .iter()
        .filter(|s| chosen.contains(s.id.as_str()))
        .map(|s| Sample {
            label: new_label[dataset.labels[s.label].as_str()],
            ..s.clone()
        })
        .collect();
    Ok(Dataset {
        name: format!("{}-control", dataset.name),
        labels: debiased.labels.clone(),
        audio_dim: dataset.audio_dim,
        video_dim: dataset.video_dim,
        samples,
    })
}
