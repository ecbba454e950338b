//! Distance-weighted k-nearest-neighbour regression over four targets.
//!
//! Fitting memorizes the instances. A prediction takes the `k` nearest
//! instances by Euclidean distance (ties go to the earlier instance) and
//! averages their targets with weights `source_weight / distance`. When any
//! of those neighbours sits at distance zero, only the zero-distance ones are
//! averaged, weighted by their source weights.
//!
//! Instances with source weight 0 are kept in the store but never take part
//! in a neighbourhood.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::RegionId;

pub const DEFAULT_K: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnnError {
    #[error("no training instances")]
    EmptyTrainingSet,
    #[error("expected {expected}-dimensional features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("source weight {0} must be finite and non-negative")]
    BadWeight(f64),
    #[error("every instance has zero weight")]
    NoActiveInstances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: DEFAULT_K }
    }
}

impl KnnConfig {
    pub fn new(k: usize) -> Result<Self, KnnError> {
        let cfg = KnnConfig { k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KnnError> {
        if self.k == 0 {
            Err(KnnError::ZeroK)
        } else {
            Ok(())
        }
    }
}

/// Where an instance came from and how much it counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceTag {
    pub region: Option<RegionId>,
    pub weight: f64,
}

impl Default for SourceTag {
    fn default() -> Self {
        SourceTag {
            region: None,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub targets: [f64; 4],
    pub source: SourceTag,
}

/// Memorized training instances, all of one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStore {
    dim: usize,
    instances: Vec<Instance>,
}

impl InstanceStore {
    pub fn from_instances(instances: Vec<Instance>) -> Result<Self, KnnError> {
        let dim = instances
            .first()
            .ok_or(KnnError::EmptyTrainingSet)?
            .features
            .len();
        let mut store = InstanceStore {
            dim,
            instances: Vec::with_capacity(instances.len()),
        };
        for inst in instances {
            store.push(inst)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, inst: Instance) -> Result<(), KnnError> {
        if inst.features.len() != self.dim {
            return Err(KnnError::DimensionMismatch {
                expected: self.dim,
                got: inst.features.len(),
            });
        }
        let w = inst.source.weight;
        if !(w.is_finite() && w >= 0.0) {
            return Err(KnnError::BadWeight(w));
        }
        self.instances.push(inst);
        Ok(())
    }

    pub fn extend(&mut self, other: InstanceStore) -> Result<(), KnnError> {
        other.instances.into_iter().try_for_each(|i| self.push(i))
    }

    /// Copy with every source weight multiplied by `factor`.
    pub fn reweighted(&self, factor: f64) -> Result<InstanceStore, KnnError> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(KnnError::BadWeight(factor));
        }
        let mut out = self.clone();
        for inst in &mut out.instances {
            inst.source.weight *= factor;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }
}

/// Memorizes `(features, targets)` pairs with default source tags.
pub fn fit_knn<I>(rows: I, cfg: &KnnConfig) -> Result<InstanceStore, KnnError>
where
    I: IntoIterator<Item = (Vec<f64>, [f64; 4])>,
{
    cfg.validate()?;
    InstanceStore::from_instances(
        rows.into_iter()
            .map(|(features, targets)| Instance {
                features,
                targets,
                source: SourceTag::default(),
            })
            .collect(),
    )
}

/// Scaled predictions for [I, H, R, D].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction(pub [f64; 4]);

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check_query(store: &InstanceStore, query: &[f64]) -> Result<(), KnnError> {
    if query.len() != store.dim {
        return Err(KnnError::DimensionMismatch {
            expected: store.dim,
            got: query.len(),
        });
    }
    Ok(())
}

/// The `min(k, active)` nearest active instances as (distance, index),
/// nearest first.
fn nearest(store: &InstanceStore, query: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut cand: Vec<(f64, usize)> = store
        .instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| inst.source.weight > 0.0)
        .map(|(i, inst)| (euclidean(&inst.features, query), i))
        .collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_distance_then_index);
    cand
}

fn weighted_mean(store: &InstanceStore, neigh: &[(f64, usize)]) -> [f64; 4] {
    let exact = neigh.first().is_some_and(|n| n.0 == 0.0);
    let mut num = [0.0; 4];
    let mut den = 0.0;
    for &(d, i) in neigh {
        if exact && d != 0.0 {
            break;
        }
        let inst = &store.instances[i];
        let w = if exact {
            inst.source.weight
        } else {
            inst.source.weight / d
        };
        for (n, t) in num.iter_mut().zip(&inst.targets) {
            *n += w * t;
        }
        den += w;
    }
    num.map(|v| v / den)
}

pub fn predict_knn(store: &InstanceStore, query: &[f64], cfg: &KnnConfig) -> Result<Prediction, KnnError> {
    cfg.validate()?;
    check_query(store, query)?;
    let neigh = nearest(store, query, cfg.k);
    if neigh.is_empty() {
        return Err(KnnError::NoActiveInstances);
    }
    Ok(Prediction(weighted_mean(store, &neigh)))
}

/// Predicts each query row in parallel; output order follows input order.
pub fn predict_batch<Q>(
    store: &InstanceStore,
    queries: &[Q],
    cfg: &KnnConfig,
) -> Result<Vec<Prediction>, KnnError>
where
    Q: AsRef<[f64]> + Sync,
{
    queries
        .par_iter()
        .map(|q| predict_knn(store, q.as_ref(), cfg))
        .collect()
}

/// Reference predictor: full distance table, stable sort by distance, then
/// the plain weighted average. Same contract as [`predict_knn`]; kept as a
/// check on it.
pub fn knn_oracle(store: &InstanceStore, query: &[f64], cfg: &KnnConfig) -> Result<Prediction, KnnError> {
    cfg.validate()?;
    check_query(store, query)?;
    let mut table: Vec<(f64, usize)> = Vec::new();
    for (i, inst) in store.instances.iter().enumerate() {
        if inst.source.weight == 0.0 {
            continue;
        }
        let mut sq = 0.0;
        for (a, b) in inst.features.iter().zip(query) {
            sq += (a - b).powi(2);
        }
        table.push((sq.sqrt(), i));
    }
    if table.is_empty() {
        return Err(KnnError::NoActiveInstances);
    }
    // stable: equal distances keep insertion order
    table.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    table.truncate(cfg.k);

    let zero: Vec<usize> = table.iter().filter(|t| t.0 == 0.0).map(|t| t.1).collect();
    let mut out = [0.0; 4];
    if !zero.is_empty() {
        let total: f64 = zero.iter().map(|&i| store.instances[i].source.weight).sum();
        for (k, o) in out.iter_mut().enumerate() {
            let s: f64 = zero
                .iter()
                .map(|&i| store.instances[i].source.weight * store.instances[i].targets[k])
                .sum();
            *o = s / total;
        }
    } else {
        let weights: Vec<f64> = table
            .iter()
            .map(|&(d, i)| store.instances[i].source.weight / d)
            .collect();
        let total: f64 = weights.iter().sum();
        for (k, o) in out.iter_mut().enumerate() {
            let s: f64 = table
                .iter()
                .zip(&weights)
                .map(|(&(_, i), w)| w * store.instances[i].targets[k])
                .sum();
            *o = s / total;
        }
    }
    Ok(Prediction(out))
}
