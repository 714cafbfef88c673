//! Builders for the out-world model sets the attacks calibrate on.
//!
//! Every builder returns an [`OutWorldSet`]: a loss matrix (rows are
//! models, columns are records), per-row metadata with seeds and
//! dataset fingerprints, and per-column record labels. Thresholds are
//! calibrated on these matrices; the fingerprints make the exclusion
//! invariants directly checkable.
//!
//! Seed discipline, shared by all builders: model `i` of a set tagged
//! `t` lives under `root.child(t, i)`, draws its dataset from
//! `.child("data", 0)` and its training randomness from
//! `.child("train", 0)`. Rebuilding with the same root seed reproduces
//! every byte.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::core::{Dataset, MatrixKind, SeedSpec, SignalMatrix};
use crate::error::{Error, Result};
use crate::synth::{sample_dataset, PopulationPool, SampleMode, ToyModel, TrainConfig};

/// Provenance of one matrix row.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    /// Row id in the matrix, e.g. `ref.3`.
    pub model_id: String,
    /// Trained model fingerprint (hex).
    pub fingerprint: String,
    /// Seed node the row was built under.
    pub seed: SeedSpec,
    /// Fingerprint of the training dataset (hex). For leave-one-out
    /// rows this is the fixed base dataset before removal.
    pub dataset_fingerprint: String,
    pub dataset_len: usize,
}

/// A calibrated out-world sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct OutWorldSet {
    pub kind: MatrixKind,
    pub matrix: SignalMatrix,
    /// Per-row provenance; empty for ingested matrices.
    pub models: Vec<ModelMeta>,
    /// Per-column record labels, aligned with `matrix.record_ids()`.
    pub labels: Vec<usize>,
    /// Leave-one-out only: per column, whether the record was present
    /// in the fixed dataset it was left out of.
    pub target_presence: Option<Vec<u8>>,
}

impl OutWorldSet {
    /// Label -> column indices. Covers exactly the labels present.
    pub fn grouping(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (j, &label) in self.labels.iter().enumerate() {
            map.entry(label).or_default().push(j);
        }
        map
    }

    pub fn validate(&self) -> Result<()> {
        self.matrix.validate()?;
        if !self.models.is_empty() && self.models.len() != self.matrix.n_models() {
            return Err(Error::invalid(format!(
                "{} metadata entries for {} matrix rows",
                self.models.len(),
                self.matrix.n_models()
            )));
        }
        if self.labels.len() != self.matrix.n_records() {
            return Err(Error::invalid(format!(
                "{} labels for {} matrix columns",
                self.labels.len(),
                self.matrix.n_records()
            )));
        }
        if let Some(p) = &self.target_presence {
            if p.len() != self.matrix.n_records() {
                return Err(Error::invalid(format!(
                    "{} presence flags for {} matrix columns",
                    p.len(),
                    self.matrix.n_records()
                )));
            }
        }
        Ok(())
    }
}

/// Draws `per_class` distinct records of every class, never touching
/// excluded ids. Columns come out class-major.
fn stratified_ids(
    pool: &PopulationPool,
    per_class: usize,
    exclude: &BTreeSet<u64>,
    seed: &SeedSpec,
) -> Result<Vec<u64>> {
    if per_class == 0 {
        return Err(Error::invalid("need at least one evaluation record per class"));
    }
    let mut out = Vec::with_capacity(per_class * pool.classes);
    for class in 0..pool.classes {
        let mut candidates: Vec<u64> = pool
            .records()
            .iter()
            .filter(|r| r.label == class && !exclude.contains(&r.id))
            .map(|r| r.id)
            .collect();
        if candidates.len() < per_class {
            return Err(Error::invalid(format!(
                "label {class} has {} records available after exclusions, need {per_class}",
                candidates.len()
            )));
        }
        let mut rng = seed.child("class", class as u64).rng();
        use rand::Rng;
        for i in 0..per_class {
            let j = rng.gen_range(i..candidates.len());
            candidates.swap(i, j);
        }
        out.extend(candidates.into_iter().take(per_class));
    }
    Ok(out)
}

fn labels_of(pool: &PopulationPool, ids: &[u64]) -> Result<Vec<usize>> {
    ids.iter().map(|&id| Ok(pool.record(id)?.label)).collect()
}

fn check_eval_ids(pool: &PopulationPool, ids: &[u64]) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::invalid("evaluation record set is empty"));
    }
    let mut seen = BTreeSet::new();
    for &id in ids {
        pool.record(id)?;
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate evaluation record id {id}")));
        }
    }
    Ok(())
}

/// Shadow out-world: `n_models` models trained on fresh datasets of
/// size `n`, all evaluated on one shared stratified draw of
/// `eval_per_class` records per class. The evaluation ids are excluded
/// from every shadow training set, so every cell is a non-member loss.
///
/// Evaluation strata live under `root.child("eval", 0).child("class", k)`;
/// shadow model `i` under `root.child("shadow", i)`.
pub fn build_shadow(
    pool: &PopulationPool,
    n: usize,
    n_models: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
    eval_per_class: usize,
) -> Result<OutWorldSet> {
    if n_models == 0 {
        return Err(Error::invalid("need at least one shadow model"));
    }
    let eval_ids = stratified_ids(
        pool,
        eval_per_class,
        &BTreeSet::new(),
        &root_seed.child("eval", 0),
    )?;
    let exclude: BTreeSet<u64> = eval_ids.iter().copied().collect();
    let eval_records: Vec<_> = eval_ids
        .iter()
        .map(|&id| pool.record(id))
        .collect::<Result<_>>()?;

    let rows: Vec<(ModelMeta, Vec<f64>)> = (0..n_models)
        .into_par_iter()
        .map(|i| {
            let node = root_seed.child("shadow", i as u64);
            let ds = sample_dataset(
                pool,
                n,
                SampleMode::WithoutReplacement,
                &exclude,
                &node.child("data", 0),
            )?;
            let mut cfg = config.clone();
            cfg.seed = node.child("train", 0);
            let model = crate::synth::train(pool, &ds, &cfg)?;
            let losses: Vec<f64> = eval_records
                .iter()
                .map(|r| model.loss(r))
                .collect::<Result<_>>()?;
            Ok((
                ModelMeta {
                    model_id: format!("shadow.{i}"),
                    fingerprint: model.id(),
                    seed: node,
                    dataset_fingerprint: ds.fingerprint_hex(),
                    dataset_len: ds.len(),
                },
                losses,
            ))
        })
        .collect::<Result<_>>()?;

    assemble(MatrixKind::Shadow, pool, rows, eval_ids, None)
}

/// Population out-world for one target model: `m_per_class` fresh
/// records per class, none of them in the target's training set,
/// evaluated on the target model alone (a single matrix row keyed by
/// the target model's id).
///
/// Sampling lives under `seed.child("population", 0).child("class", k)`.
pub fn build_population(
    target_model: &ToyModel,
    target_dataset: &Dataset,
    pool: &PopulationPool,
    m_per_class: usize,
    seed: &SeedSpec,
) -> Result<OutWorldSet> {
    if target_model.dim != pool.dim || target_model.classes != pool.classes {
        return Err(Error::invalid(format!(
            "target model is {}d/{} classes but pool is {}d/{} classes",
            target_model.dim, target_model.classes, pool.dim, pool.classes
        )));
    }
    let exclude: BTreeSet<u64> = target_dataset.ids().iter().copied().collect();
    let ids = stratified_ids(pool, m_per_class, &exclude, &seed.child("population", 0))?;
    let losses: Vec<f64> = ids
        .iter()
        .map(|&id| target_model.loss(pool.record(id)?))
        .collect::<Result<_>>()?;
    let meta = ModelMeta {
        model_id: target_model.id(),
        fingerprint: target_model.id(),
        seed: seed.clone(),
        dataset_fingerprint: target_dataset.fingerprint_hex(),
        dataset_len: target_dataset.len(),
    };
    assemble(MatrixKind::Population, pool, vec![(meta, losses)], ids, None)
}

/// Reference out-world for a single record: thin wrapper over
/// [`build_reference_batch`] with one column.
pub fn build_reference(
    pool: &PopulationPool,
    target_record: u64,
    n_models: usize,
    n: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
) -> Result<OutWorldSet> {
    build_reference_batch(pool, &[target_record], n_models, n, config, root_seed)
}

/// Reference out-world for a whole evaluation set: `n_models` models
/// trained on fresh datasets that exclude every evaluation record, so
/// each column is that record's non-member loss distribution. Model `i`
/// lives under `root.child("ref", i)`.
pub fn build_reference_batch(
    pool: &PopulationPool,
    eval_records: &[u64],
    n_models: usize,
    n: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
) -> Result<OutWorldSet> {
    if n_models == 0 {
        return Err(Error::invalid("need at least one reference model"));
    }
    check_eval_ids(pool, eval_records)?;
    let exclude: BTreeSet<u64> = eval_records.iter().copied().collect();
    let records: Vec<_> = eval_records
        .iter()
        .map(|&id| pool.record(id))
        .collect::<Result<_>>()?;

    let rows: Vec<(ModelMeta, Vec<f64>)> = (0..n_models)
        .into_par_iter()
        .map(|i| {
            let node = root_seed.child("ref", i as u64);
            let ds = sample_dataset(
                pool,
                n,
                SampleMode::WithoutReplacement,
                &exclude,
                &node.child("data", 0),
            )?;
            let mut cfg = config.clone();
            cfg.seed = node.child("train", 0);
            let model = crate::synth::train(pool, &ds, &cfg)?;
            let losses: Vec<f64> = records.iter().map(|r| model.loss(r)).collect::<Result<_>>()?;
            Ok((
                ModelMeta {
                    model_id: format!("ref.{i}"),
                    fingerprint: model.id(),
                    seed: node,
                    dataset_fingerprint: ds.fingerprint_hex(),
                    dataset_len: ds.len(),
                },
                losses,
            ))
        })
        .collect::<Result<_>>()?;

    assemble(MatrixKind::Reference, pool, rows, eval_records.to_vec(), None)
}

/// Self-distillation out-world for a single record: thin wrapper over
/// [`build_distilled_batch`] with one column.
pub fn build_distilled(
    target_model: &ToyModel,
    pool: &PopulationPool,
    target_record: u64,
    n_models: usize,
    n: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
) -> Result<OutWorldSet> {
    build_distilled_batch(target_model, pool, &[target_record], n_models, n, config, root_seed)
}

/// Self-distillation out-world: `n_models` students trained on the
/// target model's soft labels over fresh datasets that exclude every
/// evaluation record. Student `i` lives under `root.child("distill", i)`.
pub fn build_distilled_batch(
    target_model: &ToyModel,
    pool: &PopulationPool,
    eval_records: &[u64],
    n_models: usize,
    n: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
) -> Result<OutWorldSet> {
    if n_models == 0 {
        return Err(Error::invalid("need at least one distilled model"));
    }
    check_eval_ids(pool, eval_records)?;
    let exclude: BTreeSet<u64> = eval_records.iter().copied().collect();
    let records: Vec<_> = eval_records
        .iter()
        .map(|&id| pool.record(id))
        .collect::<Result<_>>()?;

    let rows: Vec<(ModelMeta, Vec<f64>)> = (0..n_models)
        .into_par_iter()
        .map(|i| {
            let node = root_seed.child("distill", i as u64);
            let ds = sample_dataset(
                pool,
                n,
                SampleMode::WithoutReplacement,
                &exclude,
                &node.child("data", 0),
            )?;
            let mut cfg = config.clone();
            cfg.seed = node.child("train", 0);
            let model = crate::synth::distill_on(target_model, pool, &ds, &cfg)?;
            let losses: Vec<f64> = records.iter().map(|r| model.loss(r)).collect::<Result<_>>()?;
            Ok((
                ModelMeta {
                    model_id: format!("distilled.{i}"),
                    fingerprint: model.id(),
                    seed: node,
                    dataset_fingerprint: ds.fingerprint_hex(),
                    dataset_len: ds.len(),
                },
                losses,
            ))
        })
        .collect::<Result<_>>()?;

    assemble(MatrixKind::Distilled, pool, rows, eval_records.to_vec(), None)
}

/// Leave-one-out out-world for a single record: thin wrapper over
/// [`build_leave_one_out_batch`] with one column.
pub fn build_leave_one_out(
    pool: &PopulationPool,
    fixed_dataset: &Dataset,
    target_record: u64,
    n_models: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
) -> Result<OutWorldSet> {
    build_leave_one_out_batch(pool, fixed_dataset, &[target_record], n_models, config, root_seed)
}

/// Leave-one-out out-world on a fixed dataset: for every evaluation
/// record `z` and retraining seed `s`, a model trained on exactly
/// `fixed_dataset` minus `z` (minus nothing when `z` is absent, which
/// the presence flags record). Cell `(s, z)` trains under
/// `root.child("loo", s).child("record", z)`.
pub fn build_leave_one_out_batch(
    pool: &PopulationPool,
    fixed_dataset: &Dataset,
    eval_records: &[u64],
    n_models: usize,
    config: &TrainConfig,
    root_seed: &SeedSpec,
) -> Result<OutWorldSet> {
    if n_models == 0 {
        return Err(Error::invalid("need at least one leave-one-out model"));
    }
    check_eval_ids(pool, eval_records)?;
    let mut bases = Vec::with_capacity(eval_records.len());
    let mut presence = Vec::with_capacity(eval_records.len());
    for &z in eval_records {
        if fixed_dataset.contains(z) {
            bases.push(fixed_dataset.without_record(z)?);
            presence.push(1u8);
        } else {
            bases.push(fixed_dataset.clone());
            presence.push(0u8);
        }
    }
    let records: Vec<_> = eval_records
        .iter()
        .map(|&id| pool.record(id))
        .collect::<Result<_>>()?;

    let rows: Vec<(ModelMeta, Vec<f64>)> = (0..n_models)
        .into_par_iter()
        .map(|s| {
            let node = root_seed.child("loo", s as u64);
            let mut losses = Vec::with_capacity(eval_records.len());
            let mut fp_fold = 0u64;
            for ((&z, base), record) in eval_records.iter().zip(&bases).zip(&records) {
                let mut cfg = config.clone();
                cfg.seed = node.child("record", z);
                let model = crate::synth::train(pool, base, &cfg)?;
                fp_fold = crate::core::seed_fold(fp_fold, model.fingerprint());
                losses.push(model.loss(record)?);
            }
            Ok((
                ModelMeta {
                    model_id: format!("loo.{s}"),
                    fingerprint: format!("{fp_fold:016x}"),
                    seed: node,
                    dataset_fingerprint: fixed_dataset.fingerprint_hex(),
                    dataset_len: fixed_dataset.len(),
                },
                losses,
            ))
        })
        .collect::<Result<_>>()?;

    assemble(
        MatrixKind::LeaveOneOut,
        pool,
        rows,
        eval_records.to_vec(),
        Some(presence),
    )
}

/// Reads an externally produced loss matrix in the CSV schema written
/// by the export side of the cli module.
pub fn ingest(path: &Path) -> Result<OutWorldSet> {
    crate::cli::format::read_matrix_csv(path)
}

fn assemble(
    kind: MatrixKind,
    pool: &PopulationPool,
    rows: Vec<(ModelMeta, Vec<f64>)>,
    record_ids: Vec<u64>,
    target_presence: Option<Vec<u8>>,
) -> Result<OutWorldSet> {
    let labels = labels_of(pool, &record_ids)?;
    let mut model_ids = Vec::with_capacity(rows.len());
    let mut models = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * record_ids.len());
    for (meta, losses) in rows {
        model_ids.push(meta.model_id.clone());
        models.push(meta);
        values.extend(losses);
    }
    let n_cells = values.len();
    let matrix =
        SignalMatrix::new(model_ids, record_ids, values)?.with_membership(vec![0; n_cells])?;
    let set = OutWorldSet {
        kind,
        matrix,
        models,
        labels,
        target_presence,
    };
    set.validate()?;
    Ok(set)
}
