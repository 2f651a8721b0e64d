//! Federated aggregation operators: FedAvg, Krum, and coordinate-wise
//! trimmed mean.
//!
//! FedAvg moves the global vector by the server learning rate times the mean
//! client delta. Krum is a selection rule: it returns the single client
//! vector whose summed squared distance to its `n - f - 2` nearest neighbors
//! is minimal, never a blend. All tie-breaks resolve to the lowest index so
//! results are deterministic.

use crate::error::{Error, Result};
use crate::mlcore::ParamVector;

/// The inputs of one aggregation step: the current global vector, the client
/// vectors, and the server learning rate.
#[derive(Clone, Debug)]
pub struct UpdateSet {
    global: ParamVector,
    locals: Vec<ParamVector>,
    server_lr: f64,
}

impl UpdateSet {
    pub fn new(global: ParamVector, locals: Vec<ParamVector>, server_lr: f64) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidArgument(
                "aggregation needs at least one local update".into(),
            ));
        }
        if !(server_lr.is_finite() && server_lr > 0.0) {
            return Err(Error::Config(format!(
                "server learning rate must be positive, got {server_lr}"
            )));
        }
        for local in &locals {
            if local.dim() != global.dim() {
                return Err(Error::Shape {
                    expected: global.dim(),
                    actual: local.dim(),
                });
            }
        }
        Ok(Self {
            global,
            locals,
            server_lr,
        })
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    pub fn locals(&self) -> &[ParamVector] {
        &self.locals
    }

    pub fn server_lr(&self) -> f64 {
        self.server_lr
    }
}

/// Federated averaging: `global + (lr / n) * sum_i(local_i - global)`,
/// accumulated in fixed client order.
pub fn fedavg(updates: &UpdateSet) -> ParamVector {
    let g = updates.global.values();
    let n = updates.locals.len() as f64;
    let scale = updates.server_lr / n;
    let mut delta_sum = vec![0.0; g.len()];
    for local in &updates.locals {
        for (acc, (l, gv)) in delta_sum.iter_mut().zip(local.values().iter().zip(g)) {
            *acc += l - gv;
        }
    }
    let values = g
        .iter()
        .zip(&delta_sum)
        .map(|(gv, d)| gv + scale * d)
        .collect();
    ParamVector::new(values).expect("finite inputs stay finite")
}

fn check_krum_args(n: usize, f: usize) -> Result<usize> {
    // Number of neighbors each score sums over.
    let neighbors = n
        .checked_sub(f + 2)
        .filter(|&m| m >= 1)
        .ok_or_else(|| Error::Config(format!("krum needs n - f - 2 >= 1, got n={n}, f={f}")))?;
    Ok(neighbors)
}

fn check_same_dims(vectors: &[ParamVector]) -> Result<()> {
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    Ok(())
}

fn squared_distance(a: &ParamVector, b: &ParamVector) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Sum of squared distances from `vectors[i]` to its `n - f - 2` nearest
/// neighbors (ties between equidistant neighbors go to the lower index).
pub fn krum_score(vectors: &[ParamVector], i: usize, f: usize) -> Result<f64> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("no vectors".into()));
    }
    let neighbors = check_krum_args(vectors.len(), f)?;
    check_same_dims(vectors)?;
    if i >= vectors.len() {
        return Err(Error::InvalidArgument(format!(
            "index {i} out of range for {} vectors",
            vectors.len()
        )));
    }
    let mut dists: Vec<(f64, usize)> = vectors
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, v)| (squared_distance(&vectors[i], v), j))
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    Ok(dists.iter().take(neighbors).map(|(d, _)| d).sum())
}

fn krum_scores(vectors: &[ParamVector], f: usize) -> Result<Vec<f64>> {
    let n = vectors.len();
    let neighbors = check_krum_args(n, f)?;
    check_same_dims(vectors)?;
    // Pairwise distances once, then a per-row sort of (distance, index).
    let mut pairwise = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(&vectors[i], &vectors[j]);
            pairwise[i * n + j] = d;
            pairwise[j * n + i] = d;
        }
    }
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (pairwise[i * n + j], j))
            .collect();
        row.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        scores.push(row.iter().take(neighbors).map(|(d, _)| d).sum());
    }
    Ok(scores)
}

/// The Krum rule: the client vector with the minimal score, lowest index on
/// ties. The returned vector is always one of the inputs.
pub fn krum_select(vectors: &[ParamVector], f: usize) -> Result<(usize, ParamVector)> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("no vectors".into()));
    }
    let scores = krum_scores(vectors, f)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok((best, vectors[best].clone()))
}

/// Coordinate-wise trimmed mean: per coordinate, sort the `n` values, drop
/// `floor(n * trim_fraction)` from each end, and average the rest.
pub fn trimmed_mean(vectors: &[ParamVector], trim_fraction: f64) -> Result<ParamVector> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("no vectors".into()));
    }
    if !(trim_fraction.is_finite() && (0.0..0.5).contains(&trim_fraction)) {
        return Err(Error::Config(format!(
            "trim fraction must be in [0, 0.5), got {trim_fraction}"
        )));
    }
    check_same_dims(vectors)?;
    let n = vectors.len();
    let drop_each = (n as f64 * trim_fraction).floor() as usize;
    let keep = n.saturating_sub(2 * drop_each);
    if keep == 0 {
        return Err(Error::Config(format!(
            "trimming {drop_each} from each end of {n} values leaves nothing"
        )));
    }
    let dim = vectors[0].dim();
    let mut out = Vec::with_capacity(dim);
    let mut column = vec![0.0; n];
    for j in 0..dim {
        for (slot, v) in column.iter_mut().zip(vectors) {
            *slot = v.values()[j];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("values are finite"));
        let kept = &column[drop_each..n - drop_each];
        out.push(kept.iter().sum::<f64>() / kept.len() as f64);
    }
    ParamVector::new(out)
}
