//! End-to-end run driven by one JSON config, writing hashed artifacts.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ablation::{
    aggregate_stats, annotate_minimal, annotations_to_tsv, records_to_tsv, run_ablation,
    run_ablation_rotated, AblationConfig, ComboAnnotation, ComboStats,
};
use crate::dataset::{
    kshot_subset, load_dataset, save_dataset, stratified_split, synth_generate, Dataset,
    ModalityCombo, Sample, Split, SplitSpec, SynthConfig,
};
use crate::debias::{
    build_debiased_with, build_folds_with, detect_bias, random_control, votes_to_tsv,
    DebiasOptions, DetectorConfig, DevRotation, ReductionReport,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_runs, compute_metrics_with, render_comparison, MacroAverage, Metrics, TableFormat,
};
use crate::learner::{Classifier, TextOptions, TrainConfig};
use crate::router::{route, route_targets, routes_to_tsv, train_router, RouterConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset to read. Relative paths resolve against the config file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Generate a synthetic corpus instead of reading one.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    /// Existing split file; without one a stratified split is drawn.
    #[serde(default)]
    pub split: Option<PathBuf>,
    pub seed: u64,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default = "default_min_per_label")]
    pub min_per_label: usize,
    #[serde(default = "yes")]
    pub require_all_splits: bool,
    #[serde(default)]
    pub kshot: Option<usize>,
    /// Annotate every sample through the fold rotation, not just the test part.
    #[serde(default)]
    pub all_samples: bool,
    #[serde(default)]
    pub dev_rotation: DevRotation,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub detectors: DetectorConfig,
    /// Training for the original/debiased/control comparison models.
    #[serde(default)]
    pub eval_train: TrainConfig,
    #[serde(default)]
    pub eval_text: TextOptions,
    #[serde(default)]
    pub macro_average: MacroAverage,
    #[serde(default)]
    pub router: Option<RouterConfig>,
    #[serde(default)]
    pub format: TableFormat,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_ratios() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_min_per_label() -> usize {
    10
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    /// A config with every optional field at its default.
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
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

    pub fn validate(&self) -> Result<()> {
        if self.data.is_some() == self.synth.is_some() {
            return Err(Error::InvalidConfig(
                "set exactly one of `data` and `synth`".into(),
            ));
        }
        self.eval_train.validate()?;
        self.ablation.train.validate()?;
        self.detectors.train.validate()?;
        if let Some(r) = &self.router {
            r.validate()?;
        }
        Ok(())
    }

    /// The config with every stage's training seed replaced by `seed`.
    fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.ablation.train.seed = self.seed;
        c.detectors.train.seed = self.seed;
        c.eval_train.seed = self.seed;
        if let Some(r) = &mut c.router {
            r.seed = self.seed;
        }
        c
    }
}

/// Output directory that remembers what was written.
pub struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Artifacts {
            dir,
            names: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.names.push(name.to_string());
        Ok(path)
    }

    pub fn dataset(&mut self, stem: &str, ds: &Dataset) -> Result<PathBuf> {
        let path = self.dir.join(stem);
        save_dataset(ds, &path)?;
        self.names.push(format!("{stem}.meta.json"));
        self.names.push(format!("{stem}.jsonl"));
        Ok(path)
    }

    /// Writes `manifest.tsv`: every artifact with its SHA-256, sorted by name.
    pub fn write_manifest(&mut self) -> Result<Vec<(String, String)>> {
        let mut names = self.names.clone();
        names.sort();
        names.dedup();
        let mut entries = Vec::with_capacity(names.len());
        let mut out = String::from("artifact\tsha256\n");
        for name in names {
            let path = self.dir.join(&name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            let _ = writeln!(out, "{name}\t{digest}");
            entries.push((name, digest));
        }
        let path = self.dir.join("manifest.tsv");
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        Ok(entries)
    }
}

/// Trains on the train part and scores the test part, both read from the
/// samples' own split fields. An empty training set yields the untrained
/// model, which predicts the first label everywhere.
pub fn train_and_evaluate(
    dataset: &Dataset,
    combo: ModalityCombo,
    text: &TextOptions,
    train: &TrainConfig,
    average: MacroAverage,
) -> Result<Metrics> {
    let part = |sp: Split| -> Vec<&Sample> {
        dataset
            .samples
            .iter()
            .filter(|s| s.split == Some(sp))
            .collect()
    };
    evaluate_parts(
        dataset,
        &part(Split::Train),
        &part(Split::Dev),
        &part(Split::Test),
        combo,
        text,
        train,
        average,
    )
}

#[allow(clippy::too_many_arguments)]
fn evaluate_parts(
    dataset: &Dataset,
    train: &[&Sample],
    dev: &[&Sample],
    test: &[&Sample],
    combo: ModalityCombo,
    text: &TextOptions,
    cfg: &TrainConfig,
    average: MacroAverage,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::EmptyPart("test".into()));
    }
    let gold: Vec<usize> = test.iter().map(|s| s.label).collect();
    let pred: Vec<usize> = if train.is_empty() {
        vec![0; test.len()]
    } else {
        let c = Classifier::fit(
            train.iter().copied(),
            dev.iter().copied(),
            dataset.audio_dim,
            dataset.video_dim,
            combo,
            dataset.labels.len(),
            text,
            cfg,
        )?;
        test.iter().map(|s| c.predict(s)).collect::<Result<_>>()?
    };
    compute_metrics_with(&gold, &pred, &dataset.labels, average)
}

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub samples: usize,
    pub split_sizes: [usize; 3],
    pub biased_fraction: f64,
    pub stats: ComboStats,
    pub debiased_sizes: [usize; 3],
    pub removed_labels: Vec<String>,
    /// Keyed by `<set>_<model>`, e.g. `debiased_text`.
    pub metrics: HashMap<String, Metrics>,
    pub router_accuracy: Option<f64>,
    pub manifest: Vec<(String, String)>,
}

/// Runs every stage, writing artifacts under `out`. Relative paths in the
/// config resolve against `base`.
pub fn run_pipeline(config: &PipelineConfig, base: &Path, out: &Path) -> Result<PipelineSummary> {
    config.validate()?;
    let cfg = config.seeded();
    let seed = cfg.seed;
    let mut art = Artifacts::new(out)?;
    art.write(
        "config.json",
        serde_json::to_string_pretty(config).expect("config serializes") + "\n",
    )?;

    let dataset = match (&cfg.data, &cfg.synth) {
        (Some(p), _) => load_dataset(base.join(p))?,
        (None, Some(s)) => {
            let (ds, plant) = synth_generate(s, seed)?;
            art.dataset("data", &ds)?;
            art.write("plant.tsv", plant.to_tsv(&ds))?;
            ds
        }
        (None, None) => unreachable!("validated"),
    };

    let split = match &cfg.split {
        Some(p) => SplitSpec::read_tsv(base.join(p))?,
        None => stratified_split(&dataset, cfg.ratios, seed)?,
    };
    split.validate_against(&dataset)?;
    art.write("split.tsv", split.to_tsv())?;
    let original = dataset.with_split(&split)?;

    let folds = build_folds_with(&original, &split, seed, cfg.dev_rotation)?;
    let records = if cfg.all_samples {
        run_ablation_rotated(&original, &folds, &cfg.ablation)?
    } else {
        run_ablation(&original, &split, &cfg.ablation)?
    };
    art.write("ablation.tsv", records_to_tsv(&records, &original.labels))?;
    let annotations: Vec<ComboAnnotation> = records.iter().map(annotate_minimal).collect();
    art.write("annotations.tsv", annotations_to_tsv(&annotations))?;
    let stats = aggregate_stats(&annotations)?;
    art.write("stats.tsv", stats.to_tsv())?;

    let votes = detect_bias(&original, &folds, &cfg.detectors)?;
    art.write("votes.tsv", votes_to_tsv(&votes))?;
    let opts = DebiasOptions {
        min_per_label: cfg.min_per_label,
        require_all_splits: cfg.require_all_splits,
    };
    let (debiased, report): (Dataset, ReductionReport) =
        build_debiased_with(&original, &votes, &opts)?;
    art.dataset("debiased", &debiased)?;
    art.write("reduction.tsv", report.to_tsv())?;
    let control = random_control(&original, &debiased, seed)?;
    art.dataset("control", &control)?;

    let ext = match cfg.format {
        TableFormat::Tsv => "tsv",
        TableFormat::Markdown => "md",
    };
    let mut metrics = HashMap::new();
    let models = [("text", ModalityCombo::T), ("fusion", ModalityCombo::TVA)];
    for (set, ds) in [
        ("original", &original),
        ("debiased", &debiased),
        ("control", &control),
    ] {
        for (model, combo) in models {
            let m = train_and_evaluate(
                ds,
                combo,
                &cfg.eval_text,
                &cfg.eval_train,
                cfg.macro_average,
            )?;
            let key = format!("{set}_{model}");
            art.write(&format!("metrics_{key}.json"), m.to_json() + "\n")?;
            metrics.insert(key, m);
        }
    }
    for (model, _) in models {
        let rows = compare_runs(
            &metrics[&format!("original_{model}")],
            &metrics[&format!("debiased_{model}")],
        );
        art.write(
            &format!("report_{model}.{ext}"),
            render_comparison(&rows, cfg.format),
        )?;
        let rows = compare_runs(
            &metrics[&format!("control_{model}")],
            &metrics[&format!("debiased_{model}")],
        );
        art.write(
            &format!("report_control_{model}.{ext}"),
            render_comparison(&rows, cfg.format),
        )?;
    }

    if let Some(k) = cfg.kshot {
        let shots = kshot_subset(&original, &split, k, seed);
        art.dataset(&format!("kshot{k}"), &shots)?;
        let train: Vec<&Sample> = shots.samples.iter().collect();
        let dev: Vec<&Sample> = original.part(&split, Split::Dev).collect();
        let test: Vec<&Sample> = original.part(&split, Split::Test).collect();
        let m = evaluate_parts(
            &original,
            &train,
            &dev,
            &test,
            ModalityCombo::TVA,
            &cfg.eval_text,
            &cfg.eval_train,
            cfg.macro_average,
        )?;
        art.write(&format!("metrics_kshot{k}_fusion.json"), m.to_json() + "\n")?;
        metrics.insert(format!("kshot{k}_fusion"), m);
    }

    let mut router_accuracy = None;
    if let Some(rc) = &cfg.router {
        let by_id: HashMap<&str, &Sample> = original
            .samples
            .iter()
            .map(|s| (s.id.as_str(), s))
            .collect();
        let annotated = original.subset(annotations.iter().map(|a| by_id[a.id.as_str()]));
        let targets = route_targets(&annotations);
        let model = train_router(&annotated, &targets, rc)?;
        art.write("router.json", model.to_json() + "\n")?;
        let mut routes = Vec::with_capacity(original.len());
        for s in &original.samples {
            let (class, scores) = route(&model, s)?;
            routes.push((s.id.clone(), class, scores));
        }
        let class_of: HashMap<&str, _> =
            routes.iter().map(|(id, c, _)| (id.as_str(), *c)).collect();
        let hits = annotations
            .iter()
            .zip(&targets)
            .filter(|(a, t)| class_of[a.id.as_str()] == **t)
            .count();
        router_accuracy = Some(hits as f64 / annotations.len() as f64);
        art.write("routes.tsv", routes_to_tsv(&routes))?;
    }

    let manifest = art.write_manifest()?;
    let biased = votes.iter().filter(|v| v.biased).count();
    Ok(PipelineSummary {
        samples: original.len(),
        split_sizes: split.sizes(),
        biased_fraction: biased as f64 / votes.len() as f64,
        stats,
        debiased_sizes: debiased.split_sizes(),
        removed_labels: report.removed_labels.clone(),
        metrics,
        router_accuracy,
        manifest,
    })
}
