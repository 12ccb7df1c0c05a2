//! Synthetic corpora with a planted modality requirement per sample.
//!
//! Each sample draws a planted combo `C`. Every modality in `C` encodes a
//! *value* in `0..num_labels`; modalities outside `C` carry label-independent
//! noise.
//!
//! * Text encodes value `r` with tokens from a value-specific vocabulary mixed
//!   with shared filler tokens; unplanted text is filler only.
//! * Audio and video encode `r` as a Gaussian around a value-specific mean;
//!   unplanted blocks are zero-mean noise at the same scale.
//!
//! With [`JointEncoding::Redundant`] every member of `C` encodes the label
//! itself, so any single member suffices and the true minimal combo is the
//! first member in canonical order. With [`JointEncoding::Parity`] the members
//! encode random shares that sum to the label modulo `num_labels` (XOR for two
//! labels), so no proper subset of `C` carries any information about the label.

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Modality, ModalityCombo, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum JointEncoding {
    #[default]
    Redundant,
    Parity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub name: String,
    pub num_labels: usize,
    pub samples_per_label: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    /// Tokens per utterance.
    pub text_len: usize,
    /// Distinct tokens per encoded value.
    pub value_vocab: usize,
    pub filler_vocab: usize,
    /// Probability that a text slot carries a value token (at least one slot
    /// always does when text is planted).
    pub signal_rate: f64,
    /// Scale of the Gaussian value means.
    pub separation: f64,
    /// Gaussian feature noise (std). Text tokens are swapped to another value's
    /// vocabulary with probability `min(noise, 1) / 2`.
    pub noise: f64,
    /// Planted combo distribution; probabilities sum to 1.
    pub plant: IndexMap<ModalityCombo, f64>,
    pub joint: JointEncoding,
    /// Log-posterior margin (nats) a sample must exceed to count as
    /// margin-clearing.
    pub margin_threshold: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "synth".into(),
            num_labels: 10,
            samples_per_label: 200,
            audio_dim: 16,
            video_dim: 16,
            text_len: 8,
            value_vocab: 6,
            filler_vocab: 40,
            signal_rate: 0.5,
            separation: 3.0,
            noise: 0.0,
            plant: IndexMap::from([(ModalityCombo::T, 1.0)]),
            joint: JointEncoding::Redundant,
            margin_threshold: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_labels == 0 || self.samples_per_label == 0 {
            return bad("num_labels and samples_per_label must be positive");
        }
        if self.text_len == 0 || self.value_vocab == 0 || self.filler_vocab == 0 {
            return bad("text_len, value_vocab and filler_vocab must be positive");
        }
        if !(self.signal_rate > 0.0 && self.signal_rate <= 1.0) {
            return bad("signal_rate must lie in (0, 1]");
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad("separation must be positive");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be non-negative");
        }
        if self.plant.is_empty() || self.plant.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("plant probabilities must be non-negative");
        }
        if (self.plant.values().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("plant probabilities must sum to 1");
        }
        for (combo, &p) in &self.plant {
            if p == 0.0 {
                continue;
            }
            if combo.contains(Modality::Audio) && self.audio_dim == 0 {
                return bad("plant uses audio but audio_dim is 0");
            }
            if combo.contains(Modality::Video) && self.video_dim == 0 {
                return bad("plant uses video but video_dim is 0");
            }
        }
        Ok(())
    }

    fn text_swap(&self) -> f64 {
        self.noise.min(1.0) / 2.0
    }
}

/// Generator parameters shared by all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    /// `value_tokens[r]` is the vocabulary encoding value `r`.
    pub value_tokens: Vec<Vec<String>>,
    pub filler_tokens: Vec<String>,
    pub video_means: Vec<Vec<f64>>,
    pub audio_means: Vec<Vec<f64>>,
}

/// Ground truth for a generated corpus, aligned with the dataset's sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPlant {
    pub config: SynthConfig,
    pub seed: u64,
    pub planted: Vec<ModalityCombo>,
    /// True minimal sufficient combo.
    pub minimal: Vec<ModalityCombo>,
    /// Generative log-posterior margin of the gold label given the planted
    /// modalities (nats; `inf` when unambiguous).
    pub margin: Vec<f64>,
    pub prototypes: Prototypes,
}

impl SynthPlant {
    pub fn clears_margin(&self, index: usize) -> bool {
        self.margin[index] > self.config.margin_threshold
    }

    pub fn to_tsv(&self, dataset: &Dataset) -> String {
        let mut out = String::from("id\tplanted\tminimal\tmargin\n");
        for (i, s) in dataset.samples.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.id, self.planted[i], self.minimal[i], self.margin[i]
            ));
        }
        out
    }
}

/// Largest-remainder allocation of `n` items over weights summing to 1.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let left = n.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(left) {
        out[i] += 1;
    }
    out
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Generates a corpus and its plant. Labels are interleaved (`i % L`) and the
/// planted combos are allocated per label by largest remainder, then shuffled.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<(Dataset, SynthPlant)> {
    config.validate()?;
    let l = config.num_labels;
    let mut proto_rng = rng::stream(seed, Purpose::Synth, 0);
    let value_tokens: Vec<Vec<String>> = (0..l)
        .map(|r| {
            (0..config.value_vocab)
                .map(|j| format!("w{r}x{j}"))
                .collect()
        })
        .collect();
    let filler_tokens: Vec<String> = (0..config.filler_vocab)
        .map(|j| format!("fill{j}"))
        .collect();
    let video_scale = config.separation / (config.video_dim.max(1) as f64).sqrt();
    let audio_scale = config.separation / (config.audio_dim.max(1) as f64).sqrt();
    let video_means: Vec<Vec<f64>> = (0..l)
        .map(|_| gaussian_vec(&mut proto_rng, config.video_dim, video_scale))
        .collect();
    let audio_means: Vec<Vec<f64>> = (0..l)
        .map(|_| gaussian_vec(&mut proto_rng, config.audio_dim, audio_scale))
        .collect();
    let prototypes = Prototypes {
        value_tokens,
        filler_tokens,
        video_means,
        audio_means,
    };

    // Planted combos: exact per-label quotas, shuffled within each label.
    let combos: Vec<ModalityCombo> = config.plant.keys().copied().collect();
    let weights: Vec<f64> = config.plant.values().copied().collect();
    let quota = apportion(config.samples_per_label, &weights);
    let mut per_label: Vec<Vec<ModalityCombo>> = Vec::with_capacity(l);
    for label in 0..l {
        let mut v: Vec<ModalityCombo> = combos
            .iter()
            .zip(&quota)
            .flat_map(|(&c, &q)| std::iter::repeat_n(c, q))
            .collect();
        v = rng::shuffled(&v, seed, Purpose::Synth, (1 << 31) | label as u64);
        per_label.push(v);
    }

    let n = l * config.samples_per_label;
    let width = n.to_string().len().max(4);
    let mut samples = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    let mut minimal = Vec::with_capacity(n);
    let mut margin = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % l;
        let combo = per_label[label][i / l];
        let mut rng = rng::stream(seed, Purpose::Synth, 1 + i as u64);

        let members: Vec<Modality> = combo.members().collect();
        let mut values = [None::<usize>; 3];
        match config.joint {
            JointEncoding::Redundant => {
                for m in &members {
                    values[*m as usize] = Some(label);
                }
            }
            JointEncoding::Parity => {
                let mut acc = 0usize;
                for m in &members[..members.len() - 1] {
                    let v = rng.random_range(0..l);
                    acc = (acc + v) % l;
                    values[*m as usize] = Some(v);
                }
                let last = members[members.len() - 1];
                values[last as usize] = Some((label + l - acc) % l);
            }
        }

        let text = gen_text(
            config,
            &prototypes,
            values[Modality::Text as usize],
            &mut rng,
        );
        let video = gen_block(
            config.video_dim,
            &prototypes.video_means,
            values[Modality::Video as usize],
            config.noise,
            video_scale,
            &mut rng,
        );
        let audio = gen_block(
            config.audio_dim,
            &prototypes.audio_means,
            values[Modality::Audio as usize],
            config.noise,
            audio_scale,
            &mut rng,
        );

        let sample = Sample {
            id: format!("syn{i:0width$}"),
            text,
            audio,
            video,
            label,
            split: None,
        };
        margin.push(sample_margin(config, &prototypes, &sample, combo));
        minimal.push(match config.joint {
            JointEncoding::Redundant => {
                ModalityCombo::from_modalities([members[0]]).expect("non-empty")
            }
            JointEncoding::Parity => combo,
        });
        planted.push(combo);
        samples.push(sample);
    }

    let labels = (0..l).map(|i| format!("intent{i}")).collect();
    let dataset = Dataset::new(
        config.name.clone(),
        labels,
        config.audio_dim,
        config.video_dim,
        samples,
    )?;
    let plant = SynthPlant {
        config: config.clone(),
        seed,
        planted,
        minimal,
        margin,
        prototypes,
    };
    Ok((dataset, plant))
}

fn gen_text(
    config: &SynthConfig,
    proto: &Prototypes,
    value: Option<usize>,
    rng: &mut impl Rng,
) -> String {
    let l = config.num_labels;
    let forced = rng.random_range(0..config.text_len);
    let mut words = Vec::with_capacity(config.text_len);
    for slot in 0..config.text_len {
        let signal = value.is_some() && (slot == forced || rng.random_bool(config.signal_rate));
        let word = match value {
            Some(r) if signal => {
                let v = if l > 1 && rng.random_bool(config.text_swap()) {
                    // Uniform over the other values.
                    let k = rng.random_range(0..l - 1);
                    if k >= r {
                        k + 1
                    } else {
                        k
                    }
                } else {
                    r
                };
                &proto.value_tokens[v][rng.random_range(0..config.value_vocab)]
            }
            _ => &proto.filler_tokens[rng.random_range(0..config.filler_vocab)],
        };
        words.push(word.as_str());
    }
    words.join(" ")
}

fn gen_block(
    dim: usize,
    means: &[Vec<f64>],
    value: Option<usize>,
    noise: f64,
    scale: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    match value {
        Some(r) => means[r]
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(rng);
                mu + noise * z
            })
            .collect(),
        None => gaussian_vec(rng, dim, scale),
    }
}

/// Per-value log-likelihoods of one modality under the generative model.
fn value_loglik(
    config: &SynthConfig,
    proto: &Prototypes,
    sample: &Sample,
    m: Modality,
) -> Vec<f64> {
    let l = config.num_labels;
    match m {
        Modality::Text => {
            let s = config.signal_rate;
            let eta = config.text_swap();
            let v = config.value_vocab as f64;
            let own = (s * (1.0 - eta) / v).ln();
            let other = if l > 1 {
                (s * eta / ((l - 1) as f64 * v)).ln()
            } else {
                f64::NEG_INFINITY
            };
            let mut ll = vec![0.0; l];
            for tok in sample.text.split(' ') {
                if let Some(q) = proto
                    .value_tokens
                    .iter()
                    .position(|vt| vt.iter().any(|t| t == tok))
                {
                    for (r, x) in ll.iter_mut().enumerate() {
                        *x += if r == q { own } else { other };
                    }
                }
            }
            ll
        }
        Modality::Video | Modality::Audio => {
            let (x, means) = if m == Modality::Video {
                (&sample.video, &proto.video_means)
            } else {
                (&sample.audio, &proto.audio_means)
            };
            means
                .iter()
                .map(|mu| {
                    let d2: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                    if config.noise == 0.0 {
                        if d2 < 1e-18 {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        -d2 / (2.0 * config.noise * config.noise)
                    }
                })
                .collect()
        }
    }
}

fn normalize_log(ll: &[f64]) -> Vec<f64> {
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / ll.len() as f64; ll.len()];
    }
    let e: Vec<f64> = ll.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn sample_margin(
    config: &SynthConfig,
    proto: &Prototypes,
    sample: &Sample,
    combo: ModalityCombo,
) -> f64 {
    let l = config.num_labels;
    if l == 1 {
        return f64::INFINITY;
    }
    let post: Vec<f64> = match config.joint {
        JointEncoding::Redundant => {
            let mut ll = vec![0.0; l];
            for m in combo.members() {
                for (acc, x) in ll.iter_mut().zip(value_loglik(config, proto, sample, m)) {
                    *acc += x;
                }
            }
            normalize_log(&ll)
        }
        JointEncoding::Parity => {
            let mut p: Option<Vec<f64>> = None;
            for m in combo.members() {
                let share = normalize_log(&value_loglik(config, proto, sample, m));
                p = Some(match p {
                    None => share,
                    Some(prev) => (0..l)
                        .map(|y| (0..l).map(|r| prev[r] * share[(y + l - r) % l]).sum())
                        .collect(),
                });
            }
            p.expect("combo is non-empty")
        }
    };
    let gold = post[sample.label];
    let best_other = post
        .iter()
        .enumerate()
        .filter(|&(y, _)| y != sample.label)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    gold.ln() - best_other.ln()
}
