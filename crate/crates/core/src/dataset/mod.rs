//! Samples, datasets, on-disk formats, splitting and synthetic generation.

mod io;
mod modality;
mod split;
pub mod synth;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, save_dataset};
pub use modality::{Modality, ModalityCombo};
pub use split::{kshot_subset, stratified_split, SplitSpec};
pub use synth::{synth_generate, JointEncoding, SynthConfig, SynthPlant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

/// One utterance with its precomputed audio and video features.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
    /// Index into [`Dataset::labels`].
    pub label: usize,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub labels: Vec<String>,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Validates and builds a dataset.
    pub fn new(
        name: impl Into<String>,
        labels: Vec<String>,
        audio_dim: usize,
        video_dim: usize,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            labels,
            audio_dim,
            video_dim,
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for l in &self.labels {
            if !names.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        let mut ids = HashSet::new();
        for s in &self.samples {
            self.check_sample(s)?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(())
    }

    pub(crate) fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.label >= self.labels.len() {
            return Err(Error::UnknownLabel {
                id: s.id.clone(),
                label: format!("#{}", s.label),
            });
        }
        if s.audio.len() != self.audio_dim {
            return Err(Error::DimensionMismatch {
                id: s.id.clone(),
                modality: "audio",
                expected: self.audio_dim,
                found: s.audio.len(),
            });
        }
        if s.video.len() != self.video_dim {
            return Err(Error::DimensionMismatch {
                id: s.id.clone(),
                modality: "video",
                expected: self.video_dim,
                found: s.video.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Same header, no samples.
    pub fn empty_like(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            labels: self.labels.clone(),
            audio_dim: self.audio_dim,
            video_dim: self.video_dim,
            samples: Vec::new(),
        }
    }

    /// Same header with the given samples (cloned, in the given order).
    pub fn subset<'a>(&self, samples: impl IntoIterator<Item = &'a Sample>) -> Dataset {
        Dataset {
            samples: samples.into_iter().cloned().collect(),
            ..self.empty_like()
        }
    }

    /// Copy with every sample's `split` field set from `spec`.
    pub fn with_split(&self, spec: &SplitSpec) -> Result<Dataset> {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.split = Some(
                spec.get(&s.id)
                    .ok_or_else(|| Error::MissingSample(s.id.clone()))?,
            );
        }
        Ok(out)
    }

    /// Samples assigned to `part` under `spec`, in dataset order.
    pub fn part<'a>(
        &'a self,
        spec: &'a SplitSpec,
        part: Split,
    ) -> impl Iterator<Item = &'a Sample> + 'a {
        self.samples
            .iter()
            .filter(move |s| spec.get(&s.id) == Some(part))
    }

    /// Per-split sample counts in Train/Dev/Test order, read from the samples'
    /// own `split` fields.
    pub fn split_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for s in &self.samples {
            if let Some(sp) = s.split {
                sizes[sp.index()] += 1;
            }
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: usize, audio: Vec<f64>) -> Sample {
        Sample {
            id: id.into(),
            text: String::new(),
            audio,
            video: vec![0.0; 2],
            label,
            split: None,
        }
    }

    #[test]
    fn rejects_bad_dimension_and_label() {
        let labels = vec!["Thank".to_string(), "Taunt".to_string()];
        let err = Dataset::new(
            "d",
            labels.clone(),
            2,
            2,
            vec![sample("x", 0, vec![1.0; 3])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { ref id, .. } if id == "x"));
        let err = Dataset::new(
            "d",
            labels.clone(),
            2,
            2,
            vec![sample("x", 2, vec![1.0; 2])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { .. }));
        let err = Dataset::new(
            "d",
            labels,
            2,
            2,
            vec![sample("x", 0, vec![0.0; 2]), sample("x", 1, vec![0.0; 2])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
    }

    #[test]
    fn duplicate_label_names_rejected() {
        let err = Dataset::new("d", vec!["a".into(), "a".into()], 0, 0, vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateLabel(_)));
    }
}
