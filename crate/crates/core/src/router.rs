//! Input-adaptive modality selection.
//!
//! Each modality block is projected to a shared width `h`, giving three
//! tokens (text, video, audio). One self-attention pass mixes them, the
//! outputs are mean-pooled, compressed to `h/2` through `tanh`, and mapped to
//! five class logits.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ablation::ComboAnnotation;
use crate::dataset::{Dataset, Modality, ModalityCombo, Sample};
use crate::error::{Error, Result};
use crate::learner::{argmax, build_vocab_with, softmax, TextOptions, Vocabulary};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RouteClass {
    T,
    TV,
    TA,
    TVA,
    V,
}

impl RouteClass {
    /// Class order; also the tie-break order.
    pub const ALL: [RouteClass; 5] = [
        RouteClass::T,
        RouteClass::TV,
        RouteClass::TA,
        RouteClass::TVA,
        RouteClass::V,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn combo(self) -> ModalityCombo {
        match self {
            RouteClass::T => ModalityCombo::T,
            RouteClass::TV => ModalityCombo::TV,
            RouteClass::TA => ModalityCombo::TA,
            RouteClass::TVA => ModalityCombo::TVA,
            RouteClass::V => ModalityCombo::V,
        }
    }

    /// The smallest class whose combo contains `combo`: audio-only becomes
    /// T+A and V+A becomes T+V+A.
    pub fn from_combo(combo: ModalityCombo) -> Self {
        RouteClass::ALL
            .into_iter()
            .filter(|c| combo.is_subset_of(c.combo()))
            .min_by_key(|c| (c.combo().len(), c.index()))
            .expect("T+V+A contains every combo")
    }
}

impl fmt::Display for RouteClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.combo().fmt(f)
    }
}

impl FromStr for RouteClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let combo: ModalityCombo = s.parse()?;
        RouteClass::ALL
            .into_iter()
            .find(|c| c.combo() == combo)
            .ok_or_else(|| Error::InvalidConfig(format!("{s} is not a routing class")))
    }
}

pub fn route_targets(annotations: &[ComboAnnotation]) -> Vec<RouteClass> {
    annotations
        .iter()
        .map(|a| RouteClass::from_combo(a.combo))
        .collect()
}

/// Token order inside the model.
const TOKENS: [Modality; 3] = [Modality::Text, Modality::Video, Modality::Audio];

/// All trainable arrays. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    /// Per-token projection `h × d_m` and offset, in text, video, audio order.
    pub proj: [Array2<f64>; 3],
    pub proj_bias: [Array1<f64>; 3],
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    /// `h/2 × h`.
    pub wc: Array2<f64>,
    pub bc: Array1<f64>,
    /// `5 × h/2`.
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
}

impl RouterParams {
    fn zeros(dims: [usize; 3], width: usize) -> Self {
        let h = width;
        RouterParams {
            proj: dims.map(|d| Array2::zeros((h, d))),
            proj_bias: dims.map(|_| Array1::zeros(h)),
            wq: Array2::zeros((h, h)),
            wk: Array2::zeros((h, h)),
            wv: Array2::zeros((h, h)),
            wc: Array2::zeros((h / 2, h)),
            bc: Array1::zeros(h / 2),
            wo: Array2::zeros((5, h / 2)),
            bo: Array1::zeros(5),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(13);
        for (p, b) in self.proj.iter().zip(&self.proj_bias) {
            v.push(p.as_slice().expect("standard layout"));
            v.push(b.as_slice().expect("standard layout"));
        }
        for m in [&self.wq, &self.wk, &self.wv, &self.wc] {
            v.push(m.as_slice().expect("standard layout"));
        }
        v.push(self.bc.as_slice().expect("standard layout"));
        v.push(self.wo.as_slice().expect("standard layout"));
        v.push(self.bo.as_slice().expect("standard layout"));
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(13);
        for (p, b) in self.proj.iter_mut().zip(self.proj_bias.iter_mut()) {
            v.push(p.as_slice_mut().expect("standard layout"));
            v.push(b.as_slice_mut().expect("standard layout"));
        }
        for m in [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wc] {
            v.push(m.as_slice_mut().expect("standard layout"));
        }
        v.push(self.bc.as_slice_mut().expect("standard layout"));
        v.push(self.wo.as_slice_mut().expect("standard layout"));
        v.push(self.bo.as_slice_mut().expect("standard layout"));
        v
    }

    /// Weight matrices, which carry the L2 penalty; offsets do not.
    fn weight_matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v: Vec<&mut Array2<f64>> = self.proj.iter_mut().collect();
        v.extend([
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wc,
            &mut self.wo,
        ]);
        v
    }

    fn weight_sq_norm(&self) -> f64 {
        let mut s: f64 = self
            .proj
            .iter()
            .map(|p| p.iter().map(|x| x * x).sum::<f64>())
            .sum();
        for m in [&self.wq, &self.wk, &self.wv, &self.wc, &self.wo] {
            s += m.iter().map(|x| x * x).sum::<f64>();
        }
        s
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        assert!(
            rest.is_empty(),
            "flat parameter vector has the wrong length"
        );
    }

    fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterModel {
    pub vocab: Vocabulary,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub width: usize,
    pub params: RouterParams,
}

/// Intermediate values of one forward pass.
struct Forward {
    z: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
    p: Array1<f64>,
    c: Array1<f64>,
    logits: Array1<f64>,
}

/// Dense per-token inputs of one sample.
pub struct RouterInput([Array1<f64>; 3]);

impl RouterModel {
    /// All-zero parameters: uniform scores everywhere.
    pub fn zeros(
        vocab: Vocabulary,
        audio_dim: usize,
        video_dim: usize,
        width: usize,
    ) -> Result<Self> {
        if width < 2 || !width.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "router width must be even and positive, got {width}"
            )));
        }
        let dims = [vocab.len(), video_dim, audio_dim];
        Ok(RouterModel {
            vocab,
            audio_dim,
            video_dim,
            width,
            params: RouterParams::zeros(dims, width),
        })
    }

    fn dims(&self) -> [usize; 3] {
        [self.vocab.len(), self.video_dim, self.audio_dim]
    }

    pub fn encode(&self, sample: &Sample) -> Result<RouterInput> {
        let mut text = Array1::zeros(self.vocab.len());
        for (i, x) in self.vocab.encode(&sample.text) {
            text[i] = x;
        }
        let block = |v: &[f64], dim: usize| {
            if v.len() != dim {
                return Err(Error::FeatureLength {
                    expected: dim,
                    found: v.len(),
                });
            }
            Ok(Array1::from(v.to_vec()))
        };
        Ok(RouterInput([
            text,
            block(&sample.video, self.video_dim)?,
            block(&sample.audio, self.audio_dim)?,
        ]))
    }

    fn forward(&self, x: &RouterInput) -> Forward {
        let pr = &self.params;
        let h = self.width;
        let mut z = Array2::zeros((3, h));
        for t in 0..3 {
            let zt = pr.proj[t].dot(&x.0[t]) + &pr.proj_bias[t];
            z.row_mut(t).assign(&zt);
        }
        let q = z.dot(&pr.wq.t());
        let k = z.dot(&pr.wk.t());
        let v = z.dot(&pr.wv.t());
        let scale = (h as f64).sqrt();
        let mut a = q.dot(&k.t()) / scale;
        for mut row in a.rows_mut() {
            let s = softmax(row.as_slice().expect("standard layout"));
            row.assign(&Array1::from(s));
        }
        let o = a.dot(&v);
        let p = o.mean_axis(Axis(0)).expect("three tokens");
        let c = (pr.wc.dot(&p) + &pr.bc).mapv(f64::tanh);
        let logits = pr.wo.dot(&c) + &pr.bo;
        Forward {
            z,
            q,
            k,
            v,
            a,
            p,
            c,
            logits,
        }
    }

    pub fn logits(&self, x: &RouterInput) -> Vec<f64> {
        self.forward(x).logits.to_vec()
    }

    /// Cross-entropy gradient of one sample, accumulated into `g`.
    fn backward(&self, x: &RouterInput, fw: &Forward, target: usize, g: &mut RouterParams) -> f64 {
        let pr = &self.params;
        let h = self.width;
        let scale = (h as f64).sqrt();
        let probs = softmax(fw.logits.as_slice().expect("standard layout"));
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
        let mut dlogits = Array1::from(probs);
        dlogits[target] -= 1.0;

        g.wo += &outer(&dlogits, &fw.c);
        g.bo += &dlogits;
        let dc = pr.wo.t().dot(&dlogits);
        let du = &dc * &fw.c.mapv(|c| 1.0 - c * c);
        g.wc += &outer(&du, &fw.p);
        g.bc += &du;
        let dp = pr.wc.t().dot(&du);

        let mut d_o = Array2::zeros((3, h));
        for mut row in d_o.rows_mut() {
            row.assign(&(&dp / 3.0));
        }
        let dv = fw.a.t().dot(&d_o);
        let da = d_o.dot(&fw.v.t());
        let mut ds = Array2::zeros((3, 3));
        for i in 0..3 {
            let inner: f64 = (0..3).map(|k| fw.a[[i, k]] * da[[i, k]]).sum();
            for j in 0..3 {
                ds[[i, j]] = fw.a[[i, j]] * (da[[i, j]] - inner);
            }
        }
        let dq = ds.dot(&fw.k) / scale;
        let dk = ds.t().dot(&fw.q) / scale;
        g.wq += &dq.t().dot(&fw.z);
        g.wk += &dk.t().dot(&fw.z);
        g.wv += &dv.t().dot(&fw.z);
        let dz = dq.dot(&pr.wq) + dk.dot(&pr.wk) + dv.dot(&pr.wv);
        for t in 0..3 {
            let dzt = dz.row(t).to_owned();
            g.proj[t] += &outer(&dzt, &x.0[t]);
            g.proj_bias[t] += &dzt;
        }
        loss
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params.to_flat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        self.params.set_flat(flat);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RouterFile::from(self)).expect("router serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: RouterFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("router file: {e}")))?;
        file.try_into()
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

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Mean cross-entropy plus `l2/2 · Σ W²` over the weight matrices, and its
/// gradient as a flat vector in [`RouterModel::flat_params`] order.
pub fn router_loss_and_grad(
    model: &RouterModel,
    inputs: &[RouterInput],
    targets: &[RouteClass],
    l2: f64,
) -> (f64, Vec<f64>) {
    let (loss, g) = loss_and_grad(model, inputs, targets, None, l2);
    (loss, g.to_flat())
}

fn loss_and_grad(
    model: &RouterModel,
    inputs: &[RouterInput],
    targets: &[RouteClass],
    batch: Option<&[usize]>,
    l2: f64,
) -> (f64, RouterParams) {
    let mut g = RouterParams::zeros(model.dims(), model.width);
    let all: Vec<usize>;
    let batch = match batch {
        Some(b) => b,
        None => {
            all = (0..inputs.len()).collect();
            &all
        }
    };
    let mut loss = 0.0;
    for &i in batch {
        let fw = model.forward(&inputs[i]);
        loss += model.backward(&inputs[i], &fw, targets[i].index(), &mut g);
    }
    let n = batch.len().max(1) as f64;
    loss /= n;
    for s in g.slices_mut() {
        for x in s.iter_mut() {
            *x /= n;
        }
    }
    if l2 > 0.0 {
        loss += 0.5 * l2 * model.params.weight_sq_norm();
        let mut weights = model.params.clone();
        for (gm, wm) in g
            .weight_matrices_mut()
            .into_iter()
            .zip(weights.weight_matrices_mut())
        {
            gm.scaled_add(l2, wm);
        }
    }
    (loss, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    /// Shared token width; must be even.
    pub width: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    /// Share of the samples held out for early stopping by [`train_router`].
    pub dev_fraction: f64,
    pub text: TextOptions,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            width: 16,
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 20,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
            dev_fraction: 0.2,
            text: TextOptions::default(),
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width >= 2
            && self.width.is_multiple_of(2)
            && self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.max_epochs > 0
            && self.patience > 0
            && self.batch_size > 0
            && self.l2.is_finite()
            && self.l2 >= 0.0
            && (0.0..1.0).contains(&self.dev_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid router config {self:?}"
            )))
        }
    }
}

fn init(model: &mut RouterModel, seed: u64) {
    let mut rng = rng::stream(seed, Purpose::RouterInit, 0);
    let params = &mut model.params;
    for m in params.weight_matrices_mut() {
        let fan_in = m.ncols().max(1) as f64;
        let normal = Normal::new(0.0, 1.0 / fan_in.sqrt()).expect("positive std");
        m.mapv_inplace(|_| normal.sample(&mut rng));
    }
}

pub fn router_accuracy(model: &RouterModel, inputs: &[RouterInput], targets: &[RouteClass]) -> f64 {
    if inputs.is_empty() {
        return 0.0;
    }
    let hits = inputs
        .iter()
        .zip(targets)
        .filter(|(x, t)| argmax(&model.logits(x)) == t.index())
        .count();
    hits as f64 / inputs.len() as f64
}

/// Holds out `dev_fraction` of the samples (seeded) for early stopping and
/// trains on the rest.
pub fn train_router(
    dataset: &Dataset,
    targets: &[RouteClass],
    config: &RouterConfig,
) -> Result<RouterModel> {
    if dataset.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: dataset.len(),
            right: targets.len(),
        });
    }
    config.validate()?;
    let order = rng::shuffled(
        &(0..dataset.len()).collect::<Vec<_>>(),
        config.seed,
        Purpose::RouterSplit,
        0,
    );
    let n_dev = (config.dev_fraction * dataset.len() as f64).round() as usize;
    let n_dev = n_dev.min(dataset.len().saturating_sub(1));
    let mut is_dev = vec![false; dataset.len()];
    for &i in &order[..n_dev] {
        is_dev[i] = true;
    }
    let pick = |dev: bool| -> (Vec<&Sample>, Vec<RouteClass>) {
        dataset
            .samples
            .iter()
            .zip(targets)
            .zip(&is_dev)
            .filter(|(_, &d)| d == dev)
            .map(|((s, &t), _)| (s, t))
            .unzip()
    };
    let (tr, tr_t) = pick(false);
    let (dv, dv_t) = pick(true);
    train_router_split(
        &tr,
        &tr_t,
        &dv,
        &dv_t,
        dataset.audio_dim,
        dataset.video_dim,
        config,
    )
}

/// Adam on mini-batches, keeping the best-dev-accuracy parameters.
pub fn train_router_split(
    train: &[&Sample],
    train_targets: &[RouteClass],
    dev: &[&Sample],
    dev_targets: &[RouteClass],
    audio_dim: usize,
    video_dim: usize,
    config: &RouterConfig,
) -> Result<RouterModel> {
    config.validate()?;
    if train.len() != train_targets.len() || dev.len() != dev_targets.len() {
        return Err(Error::LengthMismatch {
            left: train.len() + dev.len(),
            right: train_targets.len() + dev_targets.len(),
        });
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("router training set"));
    }
    let texts: Vec<&str> = train.iter().map(|s| s.text.as_str()).collect();
    let vocab = match build_vocab_with(
        &texts,
        config.text.min_df,
        config.text.ngram,
        config.text.weighting,
    ) {
        Ok(v) => v,
        Err(Error::EmptyCorpus) => {
            build_vocab_with(&["_"], 1, config.text.ngram, config.text.weighting)?
        }
        Err(e) => return Err(e),
    };
    let mut model = RouterModel::zeros(vocab, audio_dim, video_dim, config.width)?;
    init(&mut model, config.seed);
    let xs: Vec<RouterInput> = train
        .iter()
        .map(|s| model.encode(s))
        .collect::<Result<_>>()?;
    let dxs: Vec<RouterInput> = dev.iter().map(|s| model.encode(s)).collect::<Result<_>>()?;

    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let lr = config.learning_rate;
    let mut theta = model.flat_params();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut step = 0i32;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let natural: Vec<usize> = (0..xs.len()).collect();

    for epoch in 0..config.max_epochs {
        let order = rng::shuffled(&natural, config.seed, Purpose::RouterBatches, epoch as u64);
        for batch in order.chunks(config.batch_size) {
            let (loss, g) = loss_and_grad(&model, &xs, train_targets, Some(batch), config.l2);
            if !loss.is_finite() {
                return Err(Error::Diverged { learning_rate: lr });
            }
            step += 1;
            let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
            for (((t, gi), mi), vi) in theta.iter_mut().zip(g.to_flat()).zip(&mut m).zip(&mut v) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *t -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
            model.set_flat_params(&theta);
        }
        if !model.params.all_finite() {
            return Err(Error::Diverged { learning_rate: lr });
        }
        if dxs.is_empty() {
            continue;
        }
        let acc = router_accuracy(&model, &dxs, dev_targets);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, theta.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        model.set_flat_params(&p);
    }
    Ok(model)
}

/// Most suitable class and the five class scores (T, T+V, T+A, T+V+A, V).
pub fn route(model: &RouterModel, sample: &Sample) -> Result<(RouteClass, [f64; 5])> {
    let z = model.logits(&model.encode(sample)?);
    let p = softmax(&z);
    Ok((RouteClass::ALL[argmax(&z)], [p[0], p[1], p[2], p[3], p[4]]))
}

pub fn routes_to_tsv(routes: &[(String, RouteClass, [f64; 5])]) -> String {
    let mut out = String::from("id\tclass\ts_T\ts_TV\ts_TA\ts_TVA\ts_V\n");
    for (id, class, s) in routes {
        let _ = writeln!(
            out,
            "{id}\t{class}\t{}\t{}\t{}\t{}\t{}",
            s[0], s[1], s[2], s[3], s[4]
        );
    }
    out
}

#[derive(Serialize, Deserialize)]
struct RouterFile {
    width: usize,
    audio_dim: usize,
    video_dim: usize,
    classes: Vec<String>,
    /// Keyed by modality symbol.
    projections: BTreeMap<String, Projection>,
    attention: Attention,
    compress: Dense,
    output: Dense,
    vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct Projection {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Attention {
    query: Vec<Vec<f64>>,
    key: Vec<Vec<f64>>,
    value: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Dense {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, shape: (usize, usize), what: &str) -> Result<Array2<f64>> {
    let bad = || {
        Error::InvalidConfig(format!(
            "router file: {what} should be {}×{}",
            shape.0, shape.1
        ))
    };
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(bad());
    }
    Array2::from_shape_vec(shape, rows.concat()).map_err(|_| bad())
}

fn vector(v: Vec<f64>, len: usize, what: &str) -> Result<Array1<f64>> {
    if v.len() != len {
        return Err(Error::InvalidConfig(format!(
            "router file: {what} should have length {len}"
        )));
    }
    Ok(Array1::from(v))
}

impl From<&RouterModel> for RouterFile {
    fn from(m: &RouterModel) -> Self {
        let p = &m.params;
        let projections = TOKENS
            .iter()
            .enumerate()
            .map(|(t, modality)| {
                (
                    modality.symbol().to_string(),
                    Projection {
                        weights: rows(&p.proj[t]),
                        bias: p.proj_bias[t].to_vec(),
                    },
                )
            })
            .collect();
        RouterFile {
            width: m.width,
            audio_dim: m.audio_dim,
            video_dim: m.video_dim,
            classes: RouteClass::ALL.iter().map(ToString::to_string).collect(),
            projections,
            attention: Attention {
                query: rows(&p.wq),
                key: rows(&p.wk),
                value: rows(&p.wv),
            },
            compress: Dense {
                weights: rows(&p.wc),
                bias: p.bc.to_vec(),
            },
            output: Dense {
                weights: rows(&p.wo),
                bias: p.bo.to_vec(),
            },
            vocab: m.vocab.clone(),
        }
    }
}

impl TryFrom<RouterFile> for RouterModel {
    type Error = Error;

    fn try_from(mut f: RouterFile) -> Result<Self> {
        let mut model = RouterModel::zeros(f.vocab, f.audio_dim, f.video_dim, f.width)?;
        let h = f.width;
        let dims = model.dims();
        for (t, modality) in TOKENS.iter().enumerate() {
            let sym = modality.symbol();
            let pj = f.projections.remove(sym).ok_or_else(|| {
                Error::InvalidConfig(format!("router file: missing projection {sym}"))
            })?;
            model.params.proj[t] = matrix(pj.weights, (h, dims[t]), "projection")?;
            model.params.proj_bias[t] = vector(pj.bias, h, "projection bias")?;
        }
        let p = &mut model.params;
        p.wq = matrix(f.attention.query, (h, h), "query")?;
        p.wk = matrix(f.attention.key, (h, h), "key")?;
        p.wv = matrix(f.attention.value, (h, h), "value")?;
        p.wc = matrix(f.compress.weights, (h / 2, h), "compress")?;
        p.bc = vector(f.compress.bias, h / 2, "compress bias")?;
        p.wo = matrix(f.output.weights, (5, h / 2), "output")?;
        p.bo = vector(f.output.bias, 5, "output bias")?;
        if !p.all_finite() {
            return Err(Error::InvalidConfig(
                "router file has non-finite parameters".into(),
            ));
        }
        Ok(model)
    }
}
