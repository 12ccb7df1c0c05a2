//! `<name>.meta.json` header plus `<name>.jsonl` body.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Split};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    labels: Vec<String>,
    audio_dim: usize,
    video_dim: usize,
}

#[derive(Serialize)]
struct LineOut<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
    audio: &'a [f64],
    video: &'a [f64],
    split: Option<Split>,
}

#[derive(Deserialize)]
struct LineIn {
    id: String,
    text: String,
    label: String,
    audio: Vec<f64>,
    video: Vec<f64>,
    #[serde(default)]
    split: Option<Split>,
}

/// Resolves `dir/name`, `dir/name.jsonl` or `dir/name.meta.json` to the
/// (header, body) pair.
pub(crate) fn dataset_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".meta.json")
        .or_else(|| s.strip_suffix(".jsonl"))
        .unwrap_or(&s)
        .to_string();
    (
        PathBuf::from(format!("{stem}.meta.json")),
        PathBuf::from(format!("{stem}.jsonl")),
    )
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let (meta_path, body_path) = dataset_paths(path.as_ref());
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let header: Header = serde_json::from_str(&meta).map_err(|source| Error::Json {
        path: meta_path.clone(),
        line: source.line(),
        source,
    })?;

    let mut ds = Dataset::new(
        header.name,
        header.labels,
        header.audio_dim,
        header.video_dim,
        Vec::new(),
    )?;
    let body = File::open(&body_path).map_err(|e| Error::io(&body_path, e))?;
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(body).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(&body_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LineIn = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: body_path.clone(),
            line: lineno,
            source,
        })?;
        let label = ds
            .label_index(&rec.label)
            .ok_or_else(|| Error::UnknownLabel {
                id: rec.id.clone(),
                label: rec.label.clone(),
            })?;
        let sample = Sample {
            id: rec.id,
            text: rec.text,
            audio: rec.audio,
            video: rec.video,
            label,
            split: rec.split,
        };
        ds.check_sample(&sample)?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::DuplicateId(sample.id));
        }
        ds.samples.push(sample);
    }
    Ok(ds)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let (meta_path, body_path) = dataset_paths(path.as_ref());
    let header = Header {
        name: dataset.name.clone(),
        labels: dataset.labels.clone(),
        audio_dim: dataset.audio_dim,
        video_dim: dataset.video_dim,
    };
    let mut meta = serde_json::to_string(&header).expect("header serializes");
    meta.push('\n');
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    let file = File::create(&body_path).map_err(|e| Error::io(&body_path, e))?;
    let mut w = BufWriter::new(file);
    for s in &dataset.samples {
        let line = LineOut {
            id: &s.id,
            text: &s.text,
            label: &dataset.labels[s.label],
            audio: &s.audio,
            video: &s.video,
            split: s.split,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(&body_path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(&body_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&body_path, e))
}
