//! End-to-end in sixty lines: generate a population, train a target,
//! calibrate a reference attack against one record, and read off the
//! membership call at a few tolerances.

use mia::attacks::decide;
use mia::core::SeedSpec;
use mia::signals::build_reference;
use mia::synth::{gen_population, sample_dataset, train, SampleMode, TrainConfig};
use mia::thresholds::{calibrate_r, SmoothingMethod};

fn main() -> mia::Result<()> {
    let seed = SeedSpec::new(7);
    let pool = gen_population(8, 4, 600, 1.5, &seed.child("pool", 0))?;

    let config = TrainConfig {
        hidden_width: 8,
        epochs: 40,
        batch_size: 16,
        learning_rate: 0.25,
        clip_norm: None,
        weight_init_scale: 0.5,
        seed: seed.child("train", 0),
    };
    let dataset = sample_dataset(
        &pool,
        64,
        SampleMode::WithoutReplacement,
        &Default::default(),
        &seed.child("data", 0),
    )?;
    let target = train(&pool, &dataset, &config)?;
    println!("target model {} trained on {} records", target.id(), dataset.len());

    // One member and one non-member to interrogate.
    let member = dataset.ids()[0];
    let nonmember = (0..pool.len() as u64)
        .find(|id| !dataset.contains(*id))
        .expect("pool larger than dataset");

    // Reference out-world: models trained on fresh data that exclude
    // both records, giving each record its own non-member loss
    // distribution.
    let refs = build_reference(&pool, member, 24, 64, &config, &seed.child("refs", 0))?;
    let refs_nm = build_reference(&pool, nonmember, 24, 64, &config, &seed.child("refs", 1))?;
    let tfn = calibrate_r(&refs.matrix, SmoothingMethod::LinearInterp)?;
    let tfn_nm = calibrate_r(&refs_nm.matrix, SmoothingMethod::LinearInterp)?;

    for alpha in [0.01, 0.05, 0.1, 0.3] {
        let d = decide(&tfn, &target, pool.record(member)?, alpha)?;
        let d_nm = decide(&tfn_nm, &target, pool.record(nonmember)?, alpha)?;
        println!(
            "alpha {alpha:>4}: member loss {:.3} vs threshold {:.3} -> {} | \
             non-member loss {:.3} vs {:.3} -> {}",
            d.loss,
            d.threshold,
            if d.predicted_bit == 1 { "member" } else { "out" },
            d_nm.loss,
            d_nm.threshold,
            if d_nm.predicted_bit == 1 { "member" } else { "out" },
        );
    }
    Ok(())
}
