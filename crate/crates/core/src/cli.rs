//! The `modbias` command line.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data or validation
//! errors.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ablation::{
    aggregate_stats, annotate_minimal, annotations_to_tsv, read_annotations, read_records,
    records_to_tsv, run_ablation, run_ablation_rotated, AblationConfig,
};
use crate::dataset::{
    kshot_subset, load_dataset, stratified_split, synth_generate, Dataset, ModalityCombo, Sample,
    Split, SplitSpec, SynthConfig,
};
use crate::debias::{
    build_debiased_with, build_folds_with, detect_bias, random_control, votes_to_tsv,
    DebiasOptions, DetectorConfig, DevRotation,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_runs, compute_metrics_with, render_comparison, MacroAverage, Metrics, TableFormat,
};
use crate::learner::{Classifier, NgramOrder, TextOptions, TrainConfig};
use crate::pipeline::{run_pipeline, Artifacts, PipelineConfig};
use crate::router::{route, route_targets, routes_to_tsv, train_router, RouterConfig};

#[derive(Debug, Parser)]
#[command(
    name = "modbias",
    version,
    about = "Modality ablation and textual-bias removal for multimodal intent datasets"
)]
struct Cli {
    /// Worker threads for independent trainings (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted modality requirements.
    Synth {
        /// Generator settings (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
    },
    /// Draw a stratified train/dev/test split.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = parse_ratios, default_value = "0.6,0.2,0.2")]
        ratios: [f64; 3],
    },
    /// Keep at most k training samples per label.
    Kshot {
        #[command(flatten)]
        input: SplitInput,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Train one model on a modality combination and score the test part.
    Train {
        #[command(flatten)]
        input: SplitInput,
        #[arg(long, default_value = "T+V+A")]
        combo: ModalityCombo,
        #[arg(long, value_enum, default_value = "unigram")]
        ngram: Ngram,
        /// Training settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the seven combination models and record per-sample outcomes.
    Ablate {
        #[command(flatten)]
        input: SplitInput,
        /// Score every sample through the five-fold rotation.
        #[arg(long)]
        all_samples: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ablation settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Minimal combination per sample, plus the combination distribution.
    Annotate {
        #[arg(long)]
        ablation: PathBuf,
        /// Dataset whose label names the ablation file uses.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Flag textually biased samples and build the debiased dataset.
    Debias {
        #[command(flatten)]
        input: SplitInput,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        min_per_label: usize,
        #[arg(long, value_enum, default_value = "cyclic")]
        dev_rotation: Rotation,
        /// Keep labels that lost every sample of some split.
        #[arg(long)]
        no_split_check: bool,
        /// Detector settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Size-matched random subset of the original dataset.
    Control {
        #[command(flatten)]
        input: SplitInput,
        #[arg(long)]
        debiased: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Score a saved model on one part of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: SplitInput,
        #[arg(long, value_enum, default_value = "test")]
        part: Part,
        #[arg(long, value_enum, default_value = "all-labels")]
        macro_average: Macro,
    },
    /// Train the modality router on annotated samples and route every sample.
    Route {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Router settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Before/after comparison table from two metrics files.
    Report {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Run every stage from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct SplitInput {
    #[arg(long)]
    data: PathBuf,
    /// Split file; without it the samples' own split fields are used.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Ngram {
    Unigram,
    Bigram,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Rotation {
    Cyclic,
    Fixed,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Part {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Macro {
    AllLabels,
    PresentOnly,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Format {
    Tsv,
    Md,
}

fn parse_ratios(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| "expected three comma-separated ratios".to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        line: e.line(),
        source: e,
    })
}

fn read_json_or_default<T: serde::de::DeserializeOwned + Default>(
    path: Option<&PathBuf>,
) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

/// Dataset plus the split that applies to it; the split is also stamped onto
/// the samples.
fn load_split(input: &SplitInput) -> Result<(Dataset, SplitSpec)> {
    let ds = load_dataset(&input.data)?;
    let spec = match &input.split {
        Some(p) => SplitSpec::read_tsv(p)?,
        None => SplitSpec::from_dataset(&ds)?,
    };
    spec.validate_against(&ds)?;
    let ds = ds.with_split(&spec)?;
    Ok((ds, spec))
}

fn label_names(path: Option<&PathBuf>) -> Result<Vec<String>> {
    path.map_or_else(|| Ok(Vec::new()), |p| Ok(load_dataset(p)?.labels))
}

fn execute(cli: Cli) -> Result<String> {
    let mut art = Artifacts::new(&cli.out)?;
    let summary = match cli.command {
        Command::Synth { config, seed } => {
            let cfg: SynthConfig = read_json_or_default(config.as_ref())?;
            let (ds, plant) = synth_generate(&cfg, seed)?;
            art.dataset("data", &ds)?;
            art.write("plant.tsv", plant.to_tsv(&ds))?;
            let clear = (0..ds.len()).filter(|&i| plant.clears_margin(i)).count();
            format!(
                "synth: {} samples, {} labels, {clear} clear the margin",
                ds.len(),
                ds.labels.len()
            )
        }
        Command::Split { data, seed, ratios } => {
            let ds = load_dataset(&data)?;
            let spec = stratified_split(&ds, ratios, seed)?;
            art.write("split.tsv", spec.to_tsv())?;
            let [a, b, c] = spec.sizes();
            format!("split: train {a}, dev {b}, test {c}")
        }
        Command::Kshot { input, k, seed } => {
            let (ds, spec) = load_split(&input)?;
            let shots = kshot_subset(&ds, &spec, k, seed);
            art.dataset(&format!("kshot{k}"), &shots)?;
            format!("kshot: {} training samples at k={k}", shots.len())
        }
        Command::Train {
            input,
            combo,
            ngram,
            config,
        } => {
            let (ds, spec) = load_split(&input)?;
            let cfg: TrainConfig = read_json_or_default(config.as_ref())?;
            let text = TextOptions {
                ngram: match ngram {
                    Ngram::Unigram => NgramOrder::Unigram,
                    Ngram::Bigram => NgramOrder::Bigram,
                },
                ..TextOptions::default()
            };
            let train: Vec<&Sample> = ds.part(&spec, Split::Train).collect();
            if train.is_empty() {
                return Err(Error::EmptyPart("train".into()));
            }
            let c = Classifier::fit(
                train,
                ds.part(&spec, Split::Dev),
                ds.audio_dim,
                ds.video_dim,
                combo,
                ds.labels.len(),
                &text,
                &cfg,
            )?;
            c.save(art.dir().join("model.json"))?;
            let m = score(&c, &ds, &spec, Split::Test, MacroAverage::AllLabels)?;
            art.write("metrics.json", m.to_json() + "\n")?;
            format!(
                "train: {combo} model, test accuracy {:.2}",
                100.0 * m.accuracy
            )
        }
        Command::Ablate {
            input,
            all_samples,
            seed,
            config,
        } => {
            let (ds, spec) = load_split(&input)?;
            let cfg: AblationConfig = read_json_or_default(config.as_ref())?;
            let records = if all_samples {
                let folds = build_folds_with(&ds, &spec, seed, DevRotation::Cyclic)?;
                run_ablation_rotated(&ds, &folds, &cfg)?
            } else {
                run_ablation(&ds, &spec, &cfg)?
            };
            art.write("ablation.tsv", records_to_tsv(&records, &ds.labels))?;
            format!("ablate: {} samples x 7 combinations", records.len())
        }
        Command::Annotate { ablation, data } => {
            let labels = label_names(data.as_ref())?;
            let records = read_records(&ablation, &labels)?;
            let annotations: Vec<_> = records.iter().map(annotate_minimal).collect();
            art.write("annotations.tsv", annotations_to_tsv(&annotations))?;
            let stats = aggregate_stats(&annotations)?;
            art.write("stats.tsv", stats.to_tsv())?;
            format!(
                "annotate: {} samples, sigma T {:.2} V {:.2} A {:.2}",
                annotations.len(),
                stats.sigma_t,
                stats.sigma_v,
                stats.sigma_a
            )
        }
        Command::Debias {
            input,
            seed,
            min_per_label,
            dev_rotation,
            no_split_check,
            config,
        } => {
            let (ds, spec) = load_split(&input)?;
            let mut cfg: DetectorConfig = read_json_or_default(config.as_ref())?;
            cfg.train.seed = seed;
            let rotation = match dev_rotation {
                Rotation::Cyclic => DevRotation::Cyclic,
                Rotation::Fixed => DevRotation::Fixed,
            };
            let folds = build_folds_with(&ds, &spec, seed, rotation)?;
            let votes = detect_bias(&ds, &folds, &cfg)?;
            art.write("votes.tsv", votes_to_tsv(&votes))?;
            let opts = DebiasOptions {
                min_per_label,
                require_all_splits: !no_split_check,
            };
            let (debiased, report) = build_debiased_with(&ds, &votes, &opts)?;
            art.dataset("debiased", &debiased)?;
            art.write("reduction.tsv", report.to_tsv())?;
            let biased = votes.iter().filter(|v| v.biased).count();
            format!(
                "debias: {biased}/{} biased, {} kept, {} labels removed",
                votes.len(),
                debiased.len(),
                report.removed_labels.len()
            )
        }
        Command::Control {
            input,
            debiased,
            seed,
        } => {
            let (ds, _) = load_split(&input)?;
            let deb = load_dataset(&debiased)?;
            let control = random_control(&ds, &deb, seed)?;
            art.dataset("control", &control)?;
            let [a, b, c] = control.split_sizes();
            format!("control: train {a}, dev {b}, test {c}")
        }
        Command::Eval {
            model,
            input,
            part,
            macro_average,
        } => {
            let c = Classifier::load(&model)?;
            let (ds, spec) = load_split(&input)?;
            let part = match part {
                Part::Train => Split::Train,
                Part::Dev => Split::Dev,
                Part::Test => Split::Test,
            };
            let average = match macro_average {
                Macro::AllLabels => MacroAverage::AllLabels,
                Macro::PresentOnly => MacroAverage::PresentOnly,
            };
            let m = score(&c, &ds, &spec, part, average)?;
            art.write("metrics.json", m.to_json() + "\n")?;
            format!(
                "eval: {} samples, accuracy {:.2}, macro-F1 {:.2}",
                m.total,
                100.0 * m.accuracy,
                100.0 * m.macro_f1
            )
        }
        Command::Route {
            data,
            annotations,
            seed,
            config,
        } => {
            let ds = load_dataset(&data)?;
            let ann = read_annotations(&annotations)?;
            let mut cfg: RouterConfig = read_json_or_default(config.as_ref())?;
            cfg.seed = seed;
            let by_id: std::collections::HashMap<&str, &Sample> =
                ds.samples.iter().map(|s| (s.id.as_str(), s)).collect();
            let annotated: Vec<&Sample> = ann
                .iter()
                .map(|a| {
                    by_id
                        .get(a.id.as_str())
                        .copied()
                        .ok_or_else(|| Error::MissingSample(a.id.clone()))
                })
                .collect::<Result<_>>()?;
            let model = train_router(&ds.subset(annotated), &route_targets(&ann), &cfg)?;
            model.save(art.dir().join("router.json"))?;
            let routes = ds
                .samples
                .iter()
                .map(|s| route(&model, s).map(|(c, p)| (s.id.clone(), c, p)))
                .collect::<Result<Vec<_>>>()?;
            art.write("routes.tsv", routes_to_tsv(&routes))?;
            format!(
                "route: router trained on {} samples, {} routed",
                ann.len(),
                routes.len()
            )
        }
        Command::Report {
            before,
            after,
            format,
        } => {
            let b = Metrics::load(&before)?;
            let a = Metrics::load(&after)?;
            let (format, name) = match format {
                Format::Tsv => (TableFormat::Tsv, "report.tsv"),
                Format::Md => (TableFormat::Markdown, "report.md"),
            };
            let table = render_comparison(&compare_runs(&b, &a), format);
            art.write(name, &table)?;
            let _ = std::io::stdout().write_all(table.as_bytes());
            format!(
                "report: accuracy {:.2} -> {:.2}",
                100.0 * b.accuracy,
                100.0 * a.accuracy
            )
        }
        Command::Pipeline { config, seed } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let out = cfg
                .out
                .clone()
                .map_or_else(|| cli.out.clone(), |o| base.join(o));
            let s = run_pipeline(&cfg, &base, &out)?;
            format!(
                "pipeline: {} samples, {:.2}% biased, {} artifacts in {}",
                s.samples,
                100.0 * s.biased_fraction,
                s.manifest.len(),
                out.display()
            )
        }
    };
    Ok(summary)
}

fn score(
    c: &Classifier,
    ds: &Dataset,
    spec: &SplitSpec,
    part: Split,
    average: MacroAverage,
) -> Result<Metrics> {
    if c.model.labels != ds.labels.len() {
        return Err(Error::InvalidConfig(format!(
            "model has {} labels, dataset has {}",
            c.model.labels,
            ds.labels.len()
        )));
    }
    let samples: Vec<&Sample> = ds.part(spec, part).collect();
    let gold: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let pred: Vec<usize> = samples
        .iter()
        .map(|s| c.predict(s))
        .collect::<Result<_>>()?;
    compute_metrics_with(&gold, &pred, &ds.labels, average)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match cli.jobs {
        Some(0) => {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(cli)) {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
