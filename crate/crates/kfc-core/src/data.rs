//! Datasets, client shards, and the poisoning primitives used by attackers.
//!
//! Features are real vectors with entries in `[0, 1]` (normalized pixel or
//! feature intensities). Synthetic data is drawn from per-class Gaussian
//! blobs; small real datasets can be loaded from headerless CSV files.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One classification example: a feature vector in `[0,1]^p` and a label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A collection of examples sharing a feature dimension and class count.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    feature_dim: usize,
    num_classes: usize,
}

impl Dataset {
    /// Build a dataset, validating that every example conforms to
    /// `(feature_dim, num_classes)` and all features lie in `[0, 1]`.
    pub fn new(
        examples: Vec<LabeledExample>,
        feature_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || num_classes == 0 {
            return Err(Error::Config(
                "feature_dim and num_classes must be positive".into(),
            ));
        }
        for ex in &examples {
            if ex.features.len() != feature_dim {
                return Err(Error::Shape {
                    expected: feature_dim,
                    actual: ex.features.len(),
                });
            }
            if ex.label >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} out of range for {} classes",
                    ex.label, num_classes
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::InvalidArgument(
                    "feature values must be finite and in [0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            examples,
            feature_dim,
            num_classes,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Clone the examples at `indices` into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut examples = Vec::with_capacity(indices.len());
        for &i in indices {
            let ex = self.examples.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("example index {i} out of range"))
            })?;
            examples.push(ex.clone());
        }
        Ok(Self {
            examples,
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        })
    }

    /// Widen the class count, e.g. to reconcile train/test files that do not
    /// both contain the highest label.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        let max_label = self.examples.iter().map(|e| e.label).max().unwrap_or(0);
        if num_classes <= max_label {
            return Err(Error::Config(format!(
                "num_classes {num_classes} must exceed max label {max_label}"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}

/// A backdoor trigger: feature overrides plus the label the attacker wants
/// patterned inputs classified as.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternKey {
    overrides: Vec<(usize, f64)>,
    target_label: usize,
}

impl PatternKey {
    pub fn new(overrides: Vec<(usize, f64)>, target_label: usize) -> Result<Self> {
        if overrides.is_empty() {
            return Err(Error::InvalidArgument(
                "pattern must override at least one feature".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for &(idx, value) in &overrides {
            if !seen.insert(idx) {
                return Err(Error::InvalidArgument(format!(
                    "pattern overrides feature {idx} twice"
                )));
            }
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument(
                    "pattern override values must be in [0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            overrides,
            target_label,
        })
    }

    /// Single-cell trigger at `(row, col)` of a `grid_width`-wide grid.
    pub fn pixel(grid_width: usize, row: usize, col: usize, value: f64, target: usize) -> Result<Self> {
        let idx = grid_index(grid_width, row, col)?;
        Self::new(vec![(idx, value)], target)
    }

    /// Five-cell plus-shaped trigger centered at `(row, col)`.
    pub fn cross(grid_width: usize, row: usize, col: usize, value: f64, target: usize) -> Result<Self> {
        if row == 0 || col == 0 || col + 1 >= grid_width {
            return Err(Error::InvalidArgument(
                "cross center must leave one cell of margin".into(),
            ));
        }
        let cells = [
            (row, col),
            (row - 1, col),
            (row + 1, col),
            (row, col - 1),
            (row, col + 1),
        ];
        let overrides = cells
            .iter()
            .map(|&(r, c)| grid_index(grid_width, r, c).map(|i| (i, value)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(overrides, target)
    }

    /// Nine-cell 3x3 trigger with top-left corner at `(row, col)`.
    pub fn square(grid_width: usize, row: usize, col: usize, value: f64, target: usize) -> Result<Self> {
        if col + 3 > grid_width {
            return Err(Error::InvalidArgument(
                "square does not fit the grid width".into(),
            ));
        }
        let mut overrides = Vec::with_capacity(9);
        for dr in 0..3 {
            for dc in 0..3 {
                overrides.push((grid_index(grid_width, row + dr, col + dc)?, value));
            }
        }
        Self::new(overrides, target)
    }

    pub fn overrides(&self) -> &[(usize, f64)] {
        &self.overrides
    }

    pub fn target_label(&self) -> usize {
        self.target_label
    }

    /// Check the pattern fits a dataset of the given shape.
    pub fn validate_for(&self, feature_dim: usize, num_classes: usize) -> Result<()> {
        for &(idx, _) in &self.overrides {
            if idx >= feature_dim {
                return Err(Error::InvalidArgument(format!(
                    "pattern index {idx} out of range for {feature_dim} features"
                )));
            }
        }
        if self.target_label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "pattern target label {} out of range for {} classes",
                self.target_label, num_classes
            )));
        }
        Ok(())
    }
}

fn grid_index(grid_width: usize, row: usize, col: usize) -> Result<usize> {
    if grid_width == 0 || col >= grid_width {
        return Err(Error::InvalidArgument(format!(
            "grid cell ({row}, {col}) outside width-{grid_width} grid"
        )));
    }
    Ok(row * grid_width + col)
}

/// Disjoint client shards covering a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct ShardAssignment {
    shards: Vec<Vec<usize>>,
}

impl ShardAssignment {
    pub fn n_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.shards[client]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    /// Materialize one client's shard as a dataset.
    pub fn shard_dataset(&self, train: &Dataset, client: usize) -> Result<Dataset> {
        train.subset(&self.shards[client])
    }
}

/// Round `n * fraction` to the nearest integer.
fn rounded_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

/// Generate per-class Gaussian blobs with means drawn uniformly in `[0,1]^p`
/// and features clipped back to `[0, 1]`. Classes are exactly balanced.
pub fn generate_synthetic(
    num_classes: usize,
    feature_dim: usize,
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || feature_dim < 2 || n_per_class < 1 {
        return Err(Error::Config(format!(
            "need k >= 2, p >= 2, n_per_class >= 1 (got k={num_classes}, p={feature_dim}, n={n_per_class})"
        )));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::Config("spread must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..feature_dim).map(|_| rng.gen_range(0.0..=1.0)).collect())
        .collect();
    let mut examples = Vec::with_capacity(num_classes * n_per_class);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            let features = mean
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    (m + spread * z).clamp(0.0, 1.0)
                })
                .collect();
            examples.push(LabeledExample { features, label });
        }
    }
    Dataset::new(examples, feature_dim, num_classes)
}

/// Load a headerless CSV dataset: `p` feature columns in `[0, 1]` followed by
/// one integer label column. The class count is `1 + max(label)`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    let mut feature_dim = None;
    let mut max_label = 0usize;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty line".into(),
            });
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                row,
                message: "need at least one feature column and a label".into(),
            });
        }
        let p = fields.len() - 1;
        match feature_dim {
            None => feature_dim = Some(p),
            Some(expected) if expected != p => {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {expected} feature columns, found {p}"),
                })
            }
            _ => {}
        }
        let mut features = Vec::with_capacity(p);
        for field in &fields[..p] {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                message: format!("invalid feature value '{field}'"),
            })?;
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::Parse {
                    row,
                    message: format!("feature value {value} outside [0, 1]"),
                });
            }
            features.push(value);
        }
        let label_field = fields[p].trim();
        let label: usize = label_field.parse().map_err(|_| Error::Parse {
            row,
            message: format!("invalid label '{label_field}'"),
        })?;
        max_label = max_label.max(label);
        examples.push(LabeledExample { features, label });
    }
    if examples.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "file contains no rows".into(),
        });
    }
    Dataset::new(examples, feature_dim.unwrap(), max_label + 1)
}

/// Split off a validation set from a test set by seeded shuffle. The
/// validation side receives `round(n * fraction)` examples.
pub fn split_validation(
    test_set: &Dataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in (0, 1), got {validation_fraction}"
        )));
    }
    if test_set.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let mut indices: Vec<usize> = (0..test_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let n_validation = rounded_count(test_set.len(), validation_fraction);
    let validation = test_set.subset(&indices[..n_validation])?;
    let test = test_set.subset(&indices[n_validation..])?;
    Ok((validation, test))
}

/// Partition a training set into IID client shards: seeded shuffle followed
/// by round-robin assignment. Shard sizes differ by at most one.
pub fn partition_iid(train: &Dataset, n_clients: usize, seed: u64) -> Result<ShardAssignment> {
    if n_clients == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if n_clients > train.len() {
        return Err(Error::Config(format!(
            "{n_clients} clients exceed {} training examples",
            train.len()
        )));
    }
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut shards = vec![Vec::new(); n_clients];
    for (i, idx) in indices.into_iter().enumerate() {
        shards[i % n_clients].push(idx);
    }
    Ok(ShardAssignment { shards })
}

/// Apply a pattern key to one example: override the trigger features and
/// relabel to the target. The input is not mutated.
pub fn apply_pattern(example: &LabeledExample, pattern: &PatternKey) -> Result<LabeledExample> {
    let mut features = example.features.clone();
    for &(idx, value) in pattern.overrides() {
        let slot = features.get_mut(idx).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "pattern index {idx} out of range for {} features",
                example.features.len()
            ))
        })?;
        *slot = value;
    }
    Ok(LabeledExample {
        features,
        label: pattern.target_label(),
    })
}

/// Replace a seeded selection of `round(n * fraction)` examples by their
/// pattern-poisoned versions.
pub fn poison_backdoor(
    dataset: &Dataset,
    pattern: &PatternKey,
    poison_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(poison_fraction > 0.0 && poison_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "poison fraction must be in (0, 1], got {poison_fraction}"
        )));
    }
    pattern.validate_for(dataset.feature_dim(), dataset.num_classes())?;
    let count = rounded_count(dataset.len(), poison_fraction);
    let selected = select_indices(dataset.len(), count, seed);
    let mut examples = dataset.examples().to_vec();
    for idx in selected {
        examples[idx] = apply_pattern(&examples[idx], pattern)?;
    }
    Dataset::new(examples, dataset.feature_dim(), dataset.num_classes())
}

/// Flip the labels of a seeded selection of examples; each new label is drawn
/// uniformly from the `k - 1` labels different from the original.
pub fn flip_labels(dataset: &Dataset, flip_fraction: f64, seed: u64) -> Result<Dataset> {
    if dataset.num_classes() < 2 {
        return Err(Error::Config(
            "label flipping needs at least two classes".into(),
        ));
    }
    if !(flip_fraction > 0.0 && flip_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "flip fraction must be in (0, 1], got {flip_fraction}"
        )));
    }
    let k = dataset.num_classes();
    let count = rounded_count(dataset.len(), flip_fraction);
    let selected = select_indices(dataset.len(), count, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, &[1]));
    let mut examples = dataset.examples().to_vec();
    for idx in selected {
        let old = examples[idx].label;
        let mut new = rng.gen_range(0..k - 1);
        if new >= old {
            new += 1;
        }
        examples[idx].label = new;
    }
    Dataset::new(examples, dataset.feature_dim(), dataset.num_classes())
}

/// Pattern-poison every example of a test set; measures the backdoor task.
pub fn build_backdoor_test(test: &Dataset, pattern: &PatternKey) -> Result<Dataset> {
    pattern.validate_for(test.feature_dim(), test.num_classes())?;
    let examples = test
        .examples()
        .iter()
        .map(|ex| apply_pattern(ex, pattern))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, test.feature_dim(), test.num_classes())
}

/// Seeded choice of `count` distinct indices out of `0..n`, in ascending order.
fn select_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let count = count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = rand::seq::index::sample(&mut rng, n, count).into_vec();
    selected.sort_unstable();
    selected
}
