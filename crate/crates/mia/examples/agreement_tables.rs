//! Do different attacks catch the *same* records?
//!
//! Aggregate metrics hide this: two attacks with equal accuracy can fire
//! on disjoint record sets. Pairwise agreement tables make the overlap
//! explicit, split by true membership. Including the ground-truth vector
//! as a row turns the last column into per-attack accuracy on the split.

use std::collections::BTreeSet;

use mia::attacks::{decide_with_loss, AttackKind};
use mia::core::SeedSpec;
use mia::eval::agreement_table;
use mia::signals::{build_population, build_reference_batch, build_shadow};
use mia::synth::{gen_population, sample_dataset, train, SampleMode, TrainConfig};
use mia::thresholds::{calibrate_p, calibrate_r, calibrate_s, SmoothingMethod, ThresholdFn};

const N: usize = 40;
const ALPHA: f64 = 0.2;

fn main() -> mia::Result<()> {
    let seed = SeedSpec::new(5);
    let pool = gen_population(6, 3, 500, 1.4, &seed.child("pool", 0))?;
    let config = TrainConfig {
        hidden_width: 8,
        epochs: 60,
        batch_size: 8,
        learning_rate: 0.3,
        clip_norm: None,
        weight_init_scale: 0.6,
        seed: seed.child("unused", 0),
    };

    let dataset = sample_dataset(
        &pool,
        N,
        SampleMode::WithoutReplacement,
        &BTreeSet::new(),
        &seed.child("target-data", 0),
    )?;
    let target = train(
        &pool,
        &dataset,
        &TrainConfig { seed: seed.child("target-train", 0), ..config.clone() },
    )?;

    let members: Vec<u64> = dataset.ids().iter().copied().take(20).collect();
    let in_set: BTreeSet<u64> = dataset.ids().iter().copied().collect();
    let nonmembers: Vec<u64> = pool
        .records()
        .iter()
        .map(|r| r.id)
        .filter(|id| !in_set.contains(id))
        .take(20)
        .collect();
    let eval_ids: Vec<u64> = members.iter().chain(&nonmembers).copied().collect();

    let method = SmoothingMethod::LinearInterp;
    let shadow = build_shadow(&pool, N, 20, &config, &seed.child("shadow", 0), 8)?;
    let population = build_population(&target, &dataset, &pool, 12, &seed.child("population", 0))?;
    let reference = build_reference_batch(&pool, &eval_ids, 20, N, &config, &seed.child("reference", 0))?;

    let attacks: Vec<(AttackKind, ThresholdFn)> = vec![
        (AttackKind::S, calibrate_s(&shadow.matrix, &shadow.labels, pool.classes, method)?),
        (AttackKind::P, calibrate_p(&population.matrix, method)?),
        (AttackKind::R, calibrate_r(&reference.matrix, method)?),
    ];

    for (split, ids, truth_bit) in [("members", &members, 1u8), ("non-members", &nonmembers, 0u8)] {
        let mut predictions: Vec<(String, Vec<u8>)> = Vec::new();
        for (kind, tfn) in &attacks {
            let mut bits = Vec::with_capacity(ids.len());
            for &id in ids {
                let record = pool.record(id)?;
                let loss = target.loss(record)?;
                let d = decide_with_loss(tfn, &target.id(), id, record.label, loss, ALPHA)?;
                bits.push(d.predicted_bit);
            }
            predictions.push((kind.to_string(), bits));
        }
        predictions.push(("truth".into(), vec![truth_bit; ids.len()]));

        let table = agreement_table(&predictions, split)?;
        println!("agreement on the {} split ({} records) at alpha = {ALPHA}:", table.split, ids.len());
        print!("{:>8}", "");
        for name in &table.names {
            print!("{name:>8}");
        }
        println!();
        for (name, row) in table.names.iter().zip(&table.rates) {
            print!("{name:>8}");
            for rate in row {
                print!("{rate:>8.2}");
            }
            println!();
        }
        println!();
    }
    Ok(())
}
