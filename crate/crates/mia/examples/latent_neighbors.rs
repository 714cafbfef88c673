//! Nearest neighbors in a model's learned representation.
//!
//! Records that end up close in the penultimate layer influence each
//! other's losses, which matters when auditing a record that has near
//! duplicates in the population. The model here bottlenecks ten input
//! dimensions through three hidden units: a random projection that
//! narrow scrambles the class clusters, while the trained projection
//! keeps exactly the directions that separate them.

use mia::core::SeedSpec;
use mia::eval::latent_neighbors;
use mia::synth::{gen_population, sample_dataset, train, SampleMode, ToyModel, TrainConfig};

const K: usize = 8;

fn same_label_fraction(pool: &mia::synth::PopulationPool, model: &ToyModel, queries: &[u64]) -> mia::Result<f64> {
    let mut same = 0usize;
    for &qid in queries {
        let query = pool.record(qid)?;
        let candidates: Vec<_> = pool.records().iter().filter(|r| r.id != qid).collect();
        for id in latent_neighbors(query, &candidates, model, K)? {
            if pool.record(id)?.label == query.label {
                same += 1;
            }
        }
    }
    Ok(same as f64 / (queries.len() * K) as f64)
}

fn main() -> mia::Result<()> {
    let seed = SeedSpec::new(23);
    let pool = gen_population(10, 4, 400, 0.6, &seed.child("pool", 0))?;

    let dataset = sample_dataset(
        &pool,
        120,
        SampleMode::WithoutReplacement,
        &std::collections::BTreeSet::new(),
        &seed.child("data", 0),
    )?;
    let config = |epochs: usize, learning_rate: f64| TrainConfig {
        hidden_width: 3,
        epochs,
        batch_size: 16,
        learning_rate,
        clip_norm: None,
        weight_init_scale: 0.5,
        seed: seed.child("train", 0),
    };
    // Same weight initialization; a zero learning rate freezes it.
    let untrained = train(&pool, &dataset, &config(1, 0.0))?;
    let trained = train(&pool, &dataset, &config(200, 0.4))?;

    let queries: Vec<u64> = (0..16).collect();
    println!("fraction of {K} nearest latent neighbors sharing the query's label");
    println!("({} query records, cosine distance on tanh activations):", queries.len());
    for (name, model) in [("untrained", &untrained), ("trained", &trained)] {
        println!("  {name:<9} {:.3}", same_label_fraction(&pool, model, &queries)?);
    }

    let query = pool.record(14)?;
    let candidates: Vec<_> = pool.records().iter().filter(|r| r.id != query.id).collect();
    println!();
    println!("query record {} (label {}):", query.id, query.label);
    for (name, model) in [("untrained", &untrained), ("trained", &trained)] {
        let ids = latent_neighbors(query, &candidates, model, K)?;
        let labels: Vec<usize> = ids
            .iter()
            .map(|&id| pool.record(id).map(|r| r.label))
            .collect::<mia::Result<_>>()?;
        println!("  {name:<9} neighbors {ids:?}  labels {labels:?}");
    }
    Ok(())
}
