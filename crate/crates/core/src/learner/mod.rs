//! Bag-of-n-grams featurization and gradient-trained softmax classifiers.
//!
//! A [`FusionModel`] is a linear softmax classifier over the concatenation of
//! a text block (n-gram counts), the raw audio block and the raw video block.
//! Modalities outside the model's combo are zeroed before the linear map, so
//! one model class serves as text-only, audio-only, ... and full-fusion
//! surrogate alike.

mod model;
mod text;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ModalityCombo, Sample};
use crate::error::{Error, Result};

pub use model::{argmax, mask_features, softmax, FeatureBlockLayout, FusionModel, SparseVec};
pub use text::{
    build_vocab, build_vocab_with, featurize, terms, tokenize, NgramOrder, Vocabulary, Weighting,
};
pub use train::{
    accuracy, loss_and_gradient, train, train_with_history, EpochStats, Examples, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextOptions {
    pub ngram: NgramOrder,
    pub min_df: usize,
    pub weighting: Weighting,
}

impl Default for TextOptions {
    fn default() -> Self {
        TextOptions {
            ngram: NgramOrder::Unigram,
            min_df: 1,
            weighting: Weighting::Counts,
        }
    }
}

/// Vocabulary plus block layout: everything needed to turn a sample into a row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub vocab: Vocabulary,
    pub layout: FeatureBlockLayout,
}

impl FeatureSpace {
    /// Builds the vocabulary from `train`. With `audio_dim = video_dim = 0`
    /// the space is text-only and sample audio/video are ignored.
    pub fn fit<'a>(
        train: impl IntoIterator<Item = &'a Sample>,
        audio_dim: usize,
        video_dim: usize,
        opts: &TextOptions,
    ) -> Result<Self> {
        let texts: Vec<&str> = train.into_iter().map(|s| s.text.as_str()).collect();
        let vocab = build_vocab_with(&texts, opts.min_df, opts.ngram, opts.weighting)?;
        let layout = FeatureBlockLayout::new(vocab.len(), audio_dim, video_dim);
        Ok(FeatureSpace { vocab, layout })
    }

    pub fn encode(&self, sample: &Sample) -> Result<SparseVec> {
        text::featurize_sparse(sample, &self.vocab, &self.layout)
    }

    pub fn examples<'a>(&self, samples: impl IntoIterator<Item = &'a Sample>) -> Result<Examples> {
        let mut ex = Examples::new(self.layout.total());
        for s in samples {
            ex.push(self.encode(s)?, s.label);
        }
        Ok(ex)
    }
}

/// A trained model together with its feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub space: FeatureSpace,
    pub model: FusionModel,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    #[serde(flatten)]
    model: FusionModel,
    vocab: Vocabulary,
}

impl Classifier {
    /// Fits vocabulary and weights on `train`, early-stopping on `dev`.
    #[allow(clippy::too_many_arguments)]
    pub fn fit<'a>(
        train_samples: impl IntoIterator<Item = &'a Sample> + Clone,
        dev_samples: impl IntoIterator<Item = &'a Sample>,
        audio_dim: usize,
        video_dim: usize,
        combo: ModalityCombo,
        labels: usize,
        text: &TextOptions,
        config: &TrainConfig,
    ) -> Result<Self> {
        let space = FeatureSpace::fit(train_samples.clone(), audio_dim, video_dim, text)?;
        let tr = space.examples(train_samples)?;
        let dv = space.examples(dev_samples)?;
        let model = train(&tr, &dv, space.layout, combo, labels, config)?;
        Ok(Classifier { space, model })
    }

    pub fn predict_proba(&self, sample: &Sample) -> Result<Vec<f64>> {
        let x = self.space.encode(sample)?;
        Ok(softmax(&self.model.logits_sparse(&x)))
    }

    pub fn predict(&self, sample: &Sample) -> Result<usize> {
        let x = self.space.encode(sample)?;
        Ok(argmax(&self.model.logits_sparse(&x)))
    }

    pub fn to_json(&self) -> String {
        let file = ClassifierFile {
            model: self.model.clone(),
            vocab: self.space.vocab.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ClassifierFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("model file: {e}")))?;
        file.model.validate()?;
        if file.model.layout.text_dim != file.vocab.len() {
            return Err(Error::InvalidConfig(
                "model text block does not match its vocabulary".into(),
            ));
        }
        Ok(Classifier {
            space: FeatureSpace {
                vocab: file.vocab,
                layout: file.model.layout,
            },
            model: file.model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_json_roundtrip() {
        let samples: Vec<Sample> = ["thank you", "oh sure", "thanks a lot", "yeah right"]
            .iter()
            .enumerate()
            .map(|(i, t)| Sample {
                id: format!("s{i}"),
                text: t.to_string(),
                audio: vec![i as f64],
                video: vec![],
                label: i % 2,
                split: None,
            })
            .collect();
        let c = Classifier::fit(
            &samples,
            &samples,
            1,
            0,
            ModalityCombo::TA,
            2,
            &TextOptions::default(),
            &TrainConfig::default(),
        )
        .unwrap();
        let back = Classifier::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        for key in ["layout", "combo", "labels", "weights", "bias", "vocab"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
