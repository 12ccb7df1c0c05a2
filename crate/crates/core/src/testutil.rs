use crate::dataset::{Dataset, Sample};

/// Featureless dataset with `counts[i]` samples of label `L{i}`.
pub(crate) fn labelled(counts: &[usize]) -> Dataset {
    let labels = (0..counts.len()).map(|i| format!("L{i}")).collect();
    let mut samples = Vec::new();
    for (label, &n) in counts.iter().enumerate() {
        for k in 0..n {
            samples.push(Sample {
                id: format!("s{label}_{k}"),
                text: String::new(),
                audio: vec![],
                video: vec![],
                label,
                split: None,
            });
        }
    }
    Dataset::new("t", labels, 0, 0, samples).unwrap()
}
