use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{Modality, ModalityCombo};
use crate::error::{Error, Result};

/// Block sizes of the concatenated feature vector `[text | audio | video]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlockLayout {
    pub text_dim: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
}

impl FeatureBlockLayout {
    pub fn new(text_dim: usize, audio_dim: usize, video_dim: usize) -> Self {
        FeatureBlockLayout {
            text_dim,
            audio_dim,
            video_dim,
        }
    }

    pub fn audio_offset(&self) -> usize {
        self.text_dim
    }

    pub fn video_offset(&self) -> usize {
        self.text_dim + self.audio_dim
    }

    pub fn total(&self) -> usize {
        self.text_dim + self.audio_dim + self.video_dim
    }

    pub fn block(&self, m: Modality) -> Range<usize> {
        match m {
            Modality::Text => 0..self.text_dim,
            Modality::Audio => self.audio_offset()..self.video_offset(),
            Modality::Video => self.video_offset()..self.total(),
        }
    }

    pub fn modality_of(&self, index: usize) -> Modality {
        if index < self.text_dim {
            Modality::Text
        } else if index < self.video_offset() {
            Modality::Audio
        } else {
            Modality::Video
        }
    }

    /// Index ranges kept by `combo`, in ascending order.
    pub(crate) fn active_ranges(&self, combo: ModalityCombo) -> Vec<Range<usize>> {
        let mut r: Vec<Range<usize>> = combo
            .members()
            .map(|m| self.block(m))
            .filter(|r| !r.is_empty())
            .collect();
        r.sort_by_key(|r| r.start);
        r
    }
}

/// Sets every block outside `combo` to exactly zero.
pub fn mask_features(
    vector: &[f64],
    layout: &FeatureBlockLayout,
    combo: ModalityCombo,
) -> Vec<f64> {
    let mut out = vector.to_vec();
    for m in Modality::ALL {
        if !combo.contains(m) {
            for x in &mut out[layout.block(m)] {
                *x = 0.0;
            }
        }
    }
    out
}

/// Sparse feature row with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub(crate) fn push(&mut self, i: usize, x: f64) {
        debug_assert!(self.idx.last().is_none_or(|&last| last < i));
        self.idx.push(i);
        self.val.push(x);
    }

    pub fn from_dense(x: &[f64]) -> Self {
        let mut v = SparseVec::default();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                v.push(i, xi);
            }
        }
        v
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &x) in self.idx.iter().zip(&self.val) {
            out[i] = x;
        }
        out
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    /// Entries belonging to a modality in `combo`.
    pub(crate) fn masked(&self, layout: &FeatureBlockLayout, combo: ModalityCombo) -> SparseVec {
        let mut v = SparseVec::default();
        for (i, x) in self.iter() {
            if combo.contains(layout.modality_of(i)) {
                v.push(i, x);
            }
        }
        v
    }
}

/// Softmax classifier over the concatenated feature blocks. Inputs are masked
/// to `combo` before the linear map, in training and at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub layout: FeatureBlockLayout,
    pub combo: ModalityCombo,
    pub labels: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl FusionModel {
    pub fn zeros(layout: FeatureBlockLayout, combo: ModalityCombo, labels: usize) -> Self {
        FusionModel {
            layout,
            combo,
            labels,
            weights: vec![vec![0.0; layout.total()]; labels],
            bias: vec![0.0; labels],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.layout.total();
        let shape_ok = self.weights.len() == self.labels
            && self.bias.len() == self.labels
            && self.weights.iter().all(|row| row.len() == d);
        if !shape_ok {
            return Err(Error::InvalidConfig(
                "model parameter shapes disagree with layout".into(),
            ));
        }
        let finite = self
            .bias
            .iter()
            .chain(self.weights.iter().flatten())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidConfig(
                "model has non-finite parameters".into(),
            ));
        }
        Ok(())
    }

    /// Logits over the unmasked blocks only; masked entries are never read.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.layout.total() {
            return Err(Error::FeatureLength {
                expected: self.layout.total(),
                found: x.len(),
            });
        }
        let ranges = self.layout.active_ranges(self.combo);
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                let mut z = *b;
                for r in &ranges {
                    for i in r.clone() {
                        z += w[i] * x[i];
                    }
                }
                z
            })
            .collect())
    }

    pub(crate) fn logits_sparse(&self, x: &SparseVec) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, xi) in x.iter() {
            if !self.combo.contains(self.layout.modality_of(i)) {
                continue;
            }
            for (zk, w) in z.iter_mut().zip(&self.weights) {
                *zk += w[i] * xi;
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}
