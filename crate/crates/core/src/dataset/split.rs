use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Train/dev/test assignment for every sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    assignment: IndexMap<String, Split>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitSpec {
    pub fn from_assignment(
        assignment: IndexMap<String, Split>,
        seed: u64,
        ratios: [f64; 3],
    ) -> Self {
        SplitSpec {
            assignment,
            seed,
            ratios,
        }
    }

    /// Reads the assignment off the samples' own `split` fields.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let mut assignment = IndexMap::with_capacity(ds.len());
        for s in &ds.samples {
            let sp = s.split.ok_or_else(|| Error::MissingSample(s.id.clone()))?;
            assignment.insert(s.id.clone(), sp);
        }
        let sizes = ds.split_sizes();
        let n = ds.len().max(1) as f64;
        let ratios = sizes.map(|c| c as f64 / n);
        Ok(SplitSpec {
            assignment,
            seed: 0,
            ratios,
        })
    }

    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignment.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Part sizes in Train/Dev/Test order.
    pub fn sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for sp in self.assignment.values() {
            sizes[sp.index()] += 1;
        }
        sizes
    }

    /// Checks that the assignment is a total function on the dataset's ids.
    pub fn validate_against(&self, ds: &Dataset) -> Result<()> {
        for s in &ds.samples {
            if !self.assignment.contains_key(&s.id) {
                return Err(Error::MissingSample(s.id.clone()));
            }
        }
        if self.assignment.len() != ds.len() {
            let ids: HashSet<&str> = ds.samples.iter().map(|s| s.id.as_str()).collect();
            let extra = self
                .assignment
                .keys()
                .find(|k| !ids.contains(k.as_str()))
                .cloned()
                .unwrap_or_default();
            return Err(Error::InvalidConfig(format!(
                "split assigns id {extra:?} which is not in the dataset"
            )));
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, sp) in &self.assignment {
            let _ = writeln!(out, "{id}\t{sp}");
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Reads an `id<TAB>split` file. Seed and ratios are not stored in the
    /// file; ratios are recomputed from the part sizes.
    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut assignment = IndexMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, sp) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected id<TAB>split"))?;
            let sp: Split = sp
                .parse()
                .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
            if assignment.insert(id.to_string(), sp).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        let n = assignment.len().max(1) as f64;
        let mut spec = SplitSpec {
            assignment,
            seed: 0,
            ratios: [0.0; 3],
        };
        spec.ratios = spec.sizes().map(|c| c as f64 / n);
        Ok(spec)
    }
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    let ok = ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidRatios(ratios))
    }
}

/// Largest-remainder apportionment of `total` by `ratios`. Ties go to the
/// lower part index.
pub(crate) fn largest_remainder(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| total as f64 * r);
    let mut out = exact.map(|e| e.floor() as usize);
    let assigned: usize = out.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Rounds the label × part matrix of exact proportional allocations so that
/// each row sums to its label count, each column sums to the globally
/// apportioned part size, and every cell is the floor or the ceiling of its
/// exact value.
fn controlled_rounding(counts: &[usize], ratios: [f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = counts.iter().sum();
    let targets = largest_remainder(total, ratios);
    let mut cells: Vec<[usize; 3]> = Vec::with_capacity(counts.len());
    let mut fracs: Vec<[f64; 3]> = Vec::with_capacity(counts.len());
    for &n in counts {
        let exact = ratios.map(|r| n as f64 * r);
        cells.push(exact.map(|e| e.floor() as usize));
        fracs.push(exact.map(|e| e - e.floor()));
    }
    let mut row_need: Vec<usize> = counts
        .iter()
        .zip(&cells)
        .map(|(&n, c)| n - c.iter().sum::<usize>())
        .collect();
    let mut col_cap: [usize; 3] = [0; 3];
    for j in 0..3 {
        let used: usize = cells.iter().map(|c| c[j]).sum();
        col_cap[j] = targets[j].saturating_sub(used);
    }

    // Greedy pass by descending remainder.
    let mut edges: Vec<(usize, usize)> = (0..counts.len())
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|&(i, j)| fracs[i][j] > 1e-12)
        .collect();
    edges.sort_by(|a, b| fracs[b.0][b.1].total_cmp(&fracs[a.0][a.1]).then(a.cmp(b)));
    let mut up = vec![[false; 3]; counts.len()];
    for &(i, j) in &edges {
        if row_need[i] > 0 && col_cap[j] > 0 {
            up[i][j] = true;
            row_need[i] -= 1;
            col_cap[j] -= 1;
        }
    }

    // Augmenting paths for rows the greedy pass could not satisfy.
    for i in 0..counts.len() {
        while row_need[i] > 0 {
            let mut seen_cols = [false; 3];
            if !augment(i, &fracs, &mut up, &mut col_cap, &mut seen_cols) {
                break;
            }
            row_need[i] -= 1;
        }
    }
    debug_assert!(
        row_need.iter().all(|&r| r == 0),
        "controlled rounding infeasible"
    );

    for (i, c) in cells.iter_mut().enumerate() {
        for j in 0..3 {
            if up[i][j] {
                c[j] += 1;
            }
        }
        // Only reachable if the flow failed; keep rows summing to their count.
        let short = counts[i] - c.iter().sum::<usize>();
        if short > 0 {
            let j = (0..3)
                .max_by(|&a, &b| fracs[i][a].total_cmp(&fracs[i][b]))
                .unwrap_or(0);
            c[j] += short;
        }
    }
    cells
}

fn augment(
    row: usize,
    fracs: &[[f64; 3]],
    up: &mut [[bool; 3]],
    col_cap: &mut [usize; 3],
    seen: &mut [bool; 3],
) -> bool {
    for j in 0..3 {
        if seen[j] || up[row][j] || fracs[row][j] <= 1e-12 {
            continue;
        }
        seen[j] = true;
        if col_cap[j] > 0 {
            col_cap[j] -= 1;
            up[row][j] = true;
            return true;
        }
        // Column full: move some other row's unit out of column j.
        for other in 0..up.len() {
            if other != row && up[other][j] {
                up[other][j] = false;
                if augment(other, fracs, up, col_cap, seen) {
                    up[row][j] = true;
                    return true;
                }
                up[other][j] = true;
            }
        }
    }
    false
}

/// Per-label proportional split with controlled largest-remainder rounding.
///
/// Within each label, sample ids are sorted and then shuffled with a stream
/// keyed by `(seed, label index)`, so the result does not depend on the order
/// of samples in the file.
pub fn stratified_split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<SplitSpec> {
    check_ratios(ratios)?;
    let mut by_label: Vec<Vec<&str>> = vec![Vec::new(); dataset.labels.len()];
    for s in &dataset.samples {
        by_label[s.label].push(&s.id);
    }
    let counts: Vec<usize> = by_label.iter().map(Vec::len).collect();
    let alloc = controlled_rounding(&counts, ratios);

    let mut assigned: std::collections::HashMap<&str, Split> =
        std::collections::HashMap::with_capacity(dataset.len());
    for (label, ids) in by_label.iter_mut().enumerate() {
        ids.sort_unstable();
        let order = rng::shuffled(ids, seed, Purpose::Split, label as u64);
        let [n_train, n_dev, _] = alloc[label];
        for (k, id) in order.into_iter().enumerate() {
            let sp = if k < n_train {
                Split::Train
            } else if k < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            };
            assigned.insert(id, sp);
        }
    }
    let assignment = dataset
        .samples
        .iter()
        .map(|s| (s.id.clone(), assigned[s.id.as_str()]))
        .collect();
    Ok(SplitSpec {
        assignment,
        seed,
        ratios,
    })
}

/// Up to `k` training samples per label; `k = 0` yields an empty set.
pub fn kshot_subset(dataset: &Dataset, split: &SplitSpec, k: usize, seed: u64) -> Dataset {
    let mut by_label: Vec<Vec<&str>> = vec![Vec::new(); dataset.labels.len()];
    for s in dataset.part(split, Split::Train) {
        by_label[s.label].push(&s.id);
    }
    let mut keep: HashSet<&str> = HashSet::new();
    for (label, ids) in by_label.iter_mut().enumerate() {
        ids.sort_unstable();
        let order = rng::shuffled(ids, seed, Purpose::KShot, label as u64);
        keep.extend(order.into_iter().take(k));
    }
    let mut out = dataset.subset(
        dataset
            .samples
            .iter()
            .filter(|s| keep.contains(s.id.as_str())),
    );
    for s in &mut out.samples {
        s.split = Some(Split::Train);
    }
    out
}
