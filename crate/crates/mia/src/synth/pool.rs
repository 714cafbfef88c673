//! Population pools: the synthetic data universe experiments draw from.
//!
//! A pool is a fixed, seeded collection of labeled records. Class means
//! sit at deterministic simplex vertices of unit norm; features are the
//! class mean plus isotropic Gaussian noise scaled by `class_scale`.
//! Labels cycle `id % classes`, so class counts are balanced within one.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::{Dataset, Record, SeedSpec};
use crate::error::{Error, Result};

/// Sampling mode for [`sample_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleMode {
    /// Exactly `n` distinct records.
    WithoutReplacement,
    /// Each candidate record included independently with the given rate;
    /// the requested `n` is ignored. Rate must lie in (0, 1].
    Poisson(f64),
}

/// A seeded synthetic population.
///
/// Record ids are `0..len` and double as indices, so lookups are O(1).
/// For membership experiments keep the pool at least ten times larger
/// than any dataset drawn from it; fresh population draws then collide
/// with a given training set rarely enough that rejection sampling of
/// non-members stays cheap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationPool {
    id: String,
    pub dim: usize,
    pub classes: usize,
    pub class_scale: f64,
    pub class_means: Vec<Vec<f64>>,
    records: Vec<Record>,
    seed: SeedSpec,
}

impl PopulationPool {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, id: u64) -> Result<&Record> {
        self.records
            .get(id as usize)
            .ok_or_else(|| Error::invalid(format!("record id {id} not in pool {}", self.id)))
    }

    pub fn seed(&self) -> &SeedSpec {
        &self.seed
    }

    /// Builds a pool from explicit records; ids must equal positions.
    #[cfg(test)]
    pub(crate) fn from_parts(
        dim: usize,
        classes: usize,
        class_scale: f64,
        records: Vec<Record>,
        seed: &SeedSpec,
    ) -> PopulationPool {
        debug_assert!(records.iter().enumerate().all(|(i, r)| r.id == i as u64));
        PopulationPool {
            id: format!("pool-custom-{:016x}", seed.child("pool-id", 0).derive()),
            dim,
            classes,
            class_scale,
            class_means: class_means(dim, classes).unwrap(),
            records,
            seed: seed.clone(),
        }
    }

    /// All records of a dataset, in dataset order.
    pub fn materialize(&self, dataset: &Dataset) -> Result<Vec<&Record>> {
        if dataset.pool_id() != self.id {
            return Err(Error::invalid(format!(
                "dataset references pool {} but this pool is {}",
                dataset.pool_id(),
                self.id
            )));
        }
        dataset.ids().iter().map(|&id| self.record(id)).collect()
    }
}

/// Unit-norm class means at simplex vertices.
///
/// Two classes sit at +/- e0 for any dimension. For three or more
/// classes the vertices are `e_k - (1/K, ..., 1/K)` padded to `dim` and
/// normalized, which needs `dim >= classes`.
fn class_means(dim: usize, classes: usize) -> Result<Vec<Vec<f64>>> {
    if classes == 2 {
        let mut plus = vec![0.0; dim];
        plus[0] = 1.0;
        let mut minus = vec![0.0; dim];
        minus[0] = -1.0;
        return Ok(vec![minus, plus]);
    }
    if dim < classes {
        return Err(Error::invalid(format!(
            "class mean layout needs dim >= classes when classes > 2 (got dim {dim}, classes {classes})"
        )));
    }
    let centroid = 1.0 / classes as f64;
    let mut means = Vec::with_capacity(classes);
    for k in 0..classes {
        let mut v = vec![0.0; dim];
        for (j, item) in v.iter_mut().enumerate().take(classes) {
            *item = if j == k { 1.0 - centroid } else { -centroid };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        means.push(v);
    }
    Ok(means)
}

/// Generates a pool of `pool_size` records in `dim` dimensions across
/// `classes` classes, with isotropic Gaussian noise of scale
/// `class_scale` around each class mean.
pub fn gen_population(
    dim: usize,
    classes: usize,
    pool_size: usize,
    class_scale: f64,
    seed: &SeedSpec,
) -> Result<PopulationPool> {
    if dim < 1 || dim > 64 {
        return Err(Error::invalid(format!("dim {dim} outside [1, 64]")));
    }
    if !(2..=10).contains(&classes) {
        return Err(Error::invalid(format!("classes {classes} outside [2, 10]")));
    }
    if pool_size < classes {
        return Err(Error::invalid(format!(
            "pool_size {pool_size} smaller than classes {classes}"
        )));
    }
    if !class_scale.is_finite() || class_scale < 0.0 {
        return Err(Error::invalid(format!(
            "class_scale {class_scale} must be finite and non-negative"
        )));
    }

    let means = class_means(dim, classes)?;
    let mut records = Vec::with_capacity(pool_size);
    for id in 0..pool_size as u64 {
        let label = (id as usize) % classes;
        // Per-record child streams: record content is independent of
        // pool_size, so growing a pool extends it without rewriting it.
        let mut rng = seed.child("record", id).rng();
        let features = means[label]
            .iter()
            .map(|&m| {
                let noise: f64 = rng.sample(StandardNormal);
                m + class_scale * noise
            })
            .collect();
        records.push(Record {
            id,
            label,
            features,
        });
    }

    let id = format!("pool-{:016x}", {
        let mut h = seed.child("pool-id", 0).derive();
        for &part in &[dim as u64, classes as u64, pool_size as u64, class_scale.to_bits()] {
            h = crate::core::SeedSpec::new(h ^ part).derive();
        }
        h
    });

    Ok(PopulationPool {
        id,
        dim,
        classes,
        class_scale,
        class_means: means,
        records,
        seed: seed.clone(),
    })
}

/// Draws a dataset from the pool, never touching excluded ids.
pub fn sample_dataset(
    pool: &PopulationPool,
    n: usize,
    mode: SampleMode,
    exclude: &BTreeSet<u64>,
    seed: &SeedSpec,
) -> Result<Dataset> {
    let candidates: Vec<u64> = (0..pool.len() as u64)
        .filter(|id| !exclude.contains(id))
        .collect();
    match mode {
        SampleMode::WithoutReplacement => {
            if n == 0 {
                return Err(Error::invalid("cannot sample an empty dataset (n = 0)"));
            }
            if n > candidates.len() {
                return Err(Error::invalid(format!(
                    "requested {n} records but only {} are available after exclusions",
                    candidates.len()
                )));
            }
            let mut ids = candidates;
            let mut rng = seed.rng();
            // Partial Fisher-Yates: the first n slots are the draw.
            for i in 0..n {
                let j = rng.gen_range(i..ids.len());
                ids.swap(i, j);
            }
            ids.truncate(n);
            Dataset::new(pool.id(), ids)
        }
        SampleMode::Poisson(rate) => {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::invalid(format!(
                    "Poisson rate {rate} outside (0, 1]"
                )));
            }
            let mut rng = seed.rng();
            let ids: Vec<u64> = candidates
                .into_iter()
                .filter(|_| rng.gen_bool(rate))
                .collect();
            Dataset::new(pool.id(), ids)
        }
    }
}
