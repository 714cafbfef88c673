//! Which records does only the record-calibrated attack catch, and are
//! they genuinely more exposed?
//!
//! Several targets share one training set. Each attack votes per record
//! per target; majority voting partitions the records into "everyone
//! catches it", "only the reference attack catches it", and "the
//! record-oblivious attacks catch it but the reference attack does not".
//! A leave-one-out retraining experiment then measures ground-truth risk
//! for the reference-only records against a random baseline.

use std::collections::BTreeMap;

use mia::attacks::{decide_with_loss, AttackKind};
use mia::core::SeedSpec;
use mia::eval::{default_alpha_grid, loo_vulnerability, partition_records};
use mia::signals::{build_population, build_reference_batch, build_shadow};
use mia::synth::{gen_population, sample_dataset, train, SampleMode, TrainConfig};
use mia::thresholds::{calibrate_p, calibrate_r, calibrate_s, SmoothingMethod};

const N: usize = 80;
const TARGETS: usize = 8;
const ALPHA: f64 = 0.3;

fn main() -> mia::Result<()> {
    let seed = SeedSpec::new(31);
    let pool = gen_population(6, 3, 500, 1.6, &seed.child("pool", 0))?;
    let config = TrainConfig {
        hidden_width: 0,
        epochs: 12,
        batch_size: 8,
        learning_rate: 0.2,
        clip_norm: None,
        weight_init_scale: 0.5,
        seed: seed.child("unused", 0),
    };
    let method = SmoothingMethod::LinearInterp;

    // One dataset, several independently initialized targets.
    let dataset = sample_dataset(
        &pool,
        N,
        SampleMode::WithoutReplacement,
        &std::collections::BTreeSet::new(),
        &seed.child("shared-data", 0),
    )?;
    let targets: Vec<_> = (0..TARGETS)
        .map(|i| {
            train(&pool, &dataset, &TrainConfig { seed: seed.child("target", i as u64), ..config.clone() })
        })
        .collect::<mia::Result<_>>()?;

    let member_ids: Vec<u64> = dataset.ids().to_vec();

    // Shadow and reference calibrations are target-independent; the
    // population calibration is rebuilt per target.
    let shadow = build_shadow(&pool, N, 20, &config, &seed.child("shadow", 0), 8)?;
    let s_tfn = calibrate_s(&shadow.matrix, &shadow.labels, pool.classes, method)?;
    let reference = build_reference_batch(&pool, &member_ids, 20, N, &config, &seed.child("reference", 0))?;
    let r_tfn = calibrate_r(&reference.matrix, method)?;

    let mut votes: BTreeMap<AttackKind, Vec<Vec<u8>>> = BTreeMap::new();
    for model in &targets {
        let population = build_population(model, &dataset, &pool, 12, &seed.child("population", 0))?;
        let p_tfn = calibrate_p(&population.matrix, method)?;
        for (kind, tfn) in [(AttackKind::S, &s_tfn), (AttackKind::P, &p_tfn), (AttackKind::R, &r_tfn)] {
            let mut bits = Vec::with_capacity(member_ids.len());
            for &id in &member_ids {
                let record = pool.record(id)?;
                let loss = model.loss(record)?;
                bits.push(decide_with_loss(tfn, &model.id(), id, record.label, loss, ALPHA)?.predicted_bit);
            }
            votes.entry(kind).or_default().push(bits);
        }
    }

    let partition = partition_records(&member_ids, &votes, 0.7, false, 4, &seed.child("partition", 0))?;
    println!(
        "{} members, {} targets, alpha = {ALPHA}, majority = {}",
        member_ids.len(),
        TARGETS,
        partition.majority,
    );
    println!("  caught by all three attacks: {:?}", partition.all_correct);
    println!("  caught only by reference:    {:?}", partition.r_correct);
    println!("  missed only by reference:    {:?}", partition.sp_correct);
    println!("  random baseline:             {:?}", partition.random_baseline);

    // Ground truth: retrain with and without each record. Higher AUC
    // means the record leaks more.
    let grid = default_alpha_grid();
    println!();
    println!("leave-one-out vulnerability (12 models per side):");
    for (group, ids) in [
        ("reference-only", &partition.r_correct),
        ("random baseline", &partition.random_baseline),
    ] {
        let mut aucs = Vec::new();
        for &id in ids.iter().take(4) {
            let curve = loo_vulnerability(&pool, &dataset, id, 12, &grid, &config, method, &seed.child("loo", id))?;
            aucs.push((id, curve.auc()));
        }
        let mean = aucs.iter().map(|(_, a)| a).sum::<f64>() / aucs.len().max(1) as f64;
        print!("  {group:<16} mean auc {mean:.3}  [");
        for (id, auc) in &aucs {
            print!(" {id}: {auc:.3}");
        }
        println!(" ]");
    }
    Ok(())
}
