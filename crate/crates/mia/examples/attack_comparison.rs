//! Head-to-head comparison of the calibrated threshold attacks on one
//! overfit target model.
//!
//! All four attacks score the same member / non-member challenges; they
//! differ only in what their thresholds are allowed to depend on. The
//! usual ordering emerges: record-aware calibration (reference,
//! distilled) beats record-oblivious calibration (shadow, population).

use std::collections::BTreeMap;

use mia::attacks::AttackKind;
use mia::core::{Record, SeedSpec};
use mia::eval::{default_alpha_grid, roc_alpha_sweep, tpr_at_fpr, EvalChallenge};
use mia::signals::{build_distilled_batch, build_population, build_reference_batch, build_shadow};
use mia::synth::{gen_population, sample_dataset, train, PopulationPool, SampleMode, ToyModel, TrainConfig};
use mia::thresholds::{calibrate_d, calibrate_p, calibrate_r, calibrate_s, SmoothingMethod};

const N: usize = 48;
const PER_CLASS: usize = 6;

/// Up to `PER_CLASS` records per class from `ids`, scanning in id order.
fn stratified(pool: &PopulationPool, ids: impl Iterator<Item = u64>) -> mia::Result<Vec<u64>> {
    let mut counts = vec![0usize; pool.classes];
    let mut picked = Vec::new();
    for id in ids {
        let label = pool.record(id)?.label;
        if counts[label] < PER_CLASS {
            counts[label] += 1;
            picked.push(id);
        }
    }
    Ok(picked)
}

fn challenges(
    model: &ToyModel,
    pool: &PopulationPool,
    ids: &[u64],
    is_member: u8,
) -> mia::Result<Vec<EvalChallenge>> {
    ids.iter()
        .map(|&id| {
            let record: &Record = pool.record(id)?;
            Ok(EvalChallenge {
                model_id: model.id(),
                record_id: id,
                label: record.label,
                loss: model.loss(record)?,
                is_member,
            })
        })
        .collect()
}

fn main() -> mia::Result<()> {
    let seed = SeedSpec::new(42);
    let pool = gen_population(8, 4, 600, 1.5, &seed.child("pool", 0))?;
    let config = TrainConfig {
        hidden_width: 16,
        epochs: 150,
        batch_size: 8,
        learning_rate: 0.35,
        clip_norm: None,
        weight_init_scale: 0.8,
        seed: seed.child("unused", 0),
    };

    let dataset = sample_dataset(
        &pool,
        N,
        SampleMode::WithoutReplacement,
        &std::collections::BTreeSet::new(),
        &seed.child("target-data", 0),
    )?;
    let target_config = TrainConfig {
        seed: seed.child("target-train", 0),
        ..config.clone()
    };
    let target = train(&pool, &dataset, &target_config)?;

    let in_set: std::collections::BTreeSet<u64> = dataset.ids().iter().copied().collect();
    let members = stratified(&pool, dataset.ids().iter().copied())?;
    let nonmembers = stratified(
        &pool,
        pool.records().iter().map(|r| r.id).filter(|id| !in_set.contains(id)),
    )?;
    let eval_ids: Vec<u64> = members.iter().chain(&nonmembers).copied().collect();

    let mut all = challenges(&target, &pool, &members, 1)?;
    all.extend(challenges(&target, &pool, &nonmembers, 0)?);

    let method = SmoothingMethod::LinearInterp;
    let shadow = build_shadow(&pool, N, 24, &config, &seed.child("shadow", 0), PER_CLASS)?;
    let population = build_population(&target, &dataset, &pool, 12, &seed.child("population", 0))?;
    let reference = build_reference_batch(&pool, &eval_ids, 24, N, &config, &seed.child("reference", 0))?;
    let distilled =
        build_distilled_batch(&target, &pool, &eval_ids, 24, N, &config, &seed.child("distilled", 0))?;

    let calibrated = [
        (AttackKind::S, calibrate_s(&shadow.matrix, &shadow.labels, pool.classes, method)?),
        (AttackKind::P, calibrate_p(&population.matrix, method)?),
        (AttackKind::R, calibrate_r(&reference.matrix, method)?),
        (AttackKind::D, calibrate_d(&BTreeMap::from([(target.id(), distilled.matrix)]), method)?),
    ];

    let grid = default_alpha_grid();
    println!(
        "{} members vs {} non-members on one target (n = {N}, {} epochs)",
        members.len(),
        nonmembers.len(),
        config.epochs,
    );
    println!("{:<12} {:>7} {:>12}", "attack", "auc", "tpr@fpr=0.1");
    for (kind, tfn) in &calibrated {
        let curve = roc_alpha_sweep(tfn, &all, &grid)?;
        println!(
            "{:<12} {:>7.3} {:>12.3}",
            kind.to_string(),
            curve.auc(),
            tpr_at_fpr(&curve, 0.1)?,
        );
    }
    Ok(())
}
