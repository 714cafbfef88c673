//! Differential vulnerability: which records are caught by which
//! attacks, how hard they are for reference models, and how
//! distinguishable retraining with vs without them is.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;

use crate::attacks::AttackKind;
use crate::core::{Dataset, Record, SeedSpec, SignalMatrix};
use crate::error::{Error, Result};
use crate::eval::roc::{roc_alpha_sweep, EvalChallenge, RocCurve};
use crate::synth::{train, PopulationPool, ToyModel, TrainConfig};
use crate::thresholds::{calibrate_r, SmoothingMethod};

/// Record-id sets from the majority-vote partition, plus the seeded
/// uniform baseline. The three attack-defined sets are pairwise
/// disjoint by construction whenever `majority > 0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct VulnPartition {
    pub all_correct: BTreeSet<u64>,
    pub r_correct: BTreeSet<u64>,
    pub sp_correct: BTreeSet<u64>,
    pub random_baseline: BTreeSet<u64>,
    pub majority: f64,
}

/// Partitions a shared training set by how the attacks vote across
/// target models: a record is "caught" by an attack when at least a
/// `majority` fraction of models predict it member, and "missed" when
/// at most `1 - majority` do.
///
/// AllCorrect: caught by S, P, and R (and D when `include_d`).
/// RCorrect: caught by R, missed by S and by P.
/// SPCorrect: caught by S and P, missed by R.
pub fn partition_records(
    record_ids: &[u64],
    votes: &BTreeMap<AttackKind, Vec<Vec<u8>>>,
    majority: f64,
    include_d: bool,
    baseline_size: usize,
    seed: &SeedSpec,
) -> Result<VulnPartition> {
    if record_ids.is_empty() {
        return Err(Error::invalid("partition needs a non-empty training set"));
    }
    if !(majority > 0.5 && majority <= 1.0) {
        return Err(Error::invalid(format!(
            "majority fraction {majority} outside (0.5, 1]; disjointness needs a strict majority"
        )));
    }
    if baseline_size > record_ids.len() {
        return Err(Error::invalid(format!(
            "baseline size {baseline_size} exceeds the {} training records",
            record_ids.len()
        )));
    }
    let mut required = vec![AttackKind::S, AttackKind::P, AttackKind::R];
    if include_d {
        required.push(AttackKind::D);
    }

    // counts[kind]: (model count, member votes per record).
    let mut counts: BTreeMap<AttackKind, (f64, Vec<f64>)> = BTreeMap::new();
    for kind in &required {
        let per_model = votes
            .get(kind)
            .ok_or_else(|| Error::invalid(format!("no votes for attack {kind}")))?;
        if per_model.len() < 2 {
            return Err(Error::invalid(format!(
                "attack {kind} voted on {} target models, need at least 2",
                per_model.len()
            )));
        }
        let mut sums = vec![0.0f64; record_ids.len()];
        for bits in per_model {
            if bits.len() != record_ids.len() {
                return Err(Error::invalid(format!(
                    "attack {kind}: {} votes for {} records",
                    bits.len(),
                    record_ids.len()
                )));
            }
            for (s, &b) in sums.iter_mut().zip(bits) {
                if b > 1 {
                    return Err(Error::invalid(format!("vote {b} is not a bit")));
                }
                *s += b as f64;
            }
        }
        counts.insert(*kind, (per_model.len() as f64, sums));
    }

    // "Missed" compares the complement count against the same majority
    // bar, so an exact boundary such as 4-of-5 at 0.8 lands on the same
    // side in both directions.
    let caught = |kind: AttackKind, j: usize| {
        let (m, sums) = &counts[&kind];
        sums[j] / m >= majority
    };
    let missed = |kind: AttackKind, j: usize| {
        let (m, sums) = &counts[&kind];
        (m - sums[j]) / m >= majority
    };

    let mut all_correct = BTreeSet::new();
    let mut r_correct = BTreeSet::new();
    let mut sp_correct = BTreeSet::new();
    for (j, &rid) in record_ids.iter().enumerate() {
        let all = required.iter().all(|&k| caught(k, j));
        if all {
            all_correct.insert(rid);
        }
        if caught(AttackKind::R, j) && missed(AttackKind::S, j) && missed(AttackKind::P, j) {
            r_correct.insert(rid);
        }
        if caught(AttackKind::S, j)
            && caught(AttackKind::P, j)
            && missed(AttackKind::R, j)
        {
            sp_correct.insert(rid);
        }
    }

    // Uniform baseline, drawn independently of the vote outcome.
    let mut indices: Vec<usize> = (0..record_ids.len()).collect();
    let mut rng = seed.child("baseline", 0).rng();
    for i in 0..baseline_size {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    let random_baseline = indices[..baseline_size]
        .iter()
        .map(|&i| record_ids[i])
        .collect();

    Ok(VulnPartition {
        all_correct,
        r_correct,
        sp_correct,
        random_baseline,
        majority,
    })
}

/// Ground-truth per-record risk: trains `n_models` on the fixed dataset
/// and `n_models` on the dataset without the record, calibrates the
/// left-out record's loss thresholds on the without-models, and sweeps
/// the tolerance over the combined model population.
pub fn loo_vulnerability(
    pool: &PopulationPool,
    fixed_dataset: &Dataset,
    record_id: u64,
    n_models: usize,
    alpha_grid: &[f64],
    config: &TrainConfig,
    method: SmoothingMethod,
    seed: &SeedSpec,
) -> Result<RocCurve> {
    if !fixed_dataset.contains(record_id) {
        return Err(Error::invalid(format!(
            "record {record_id} is not in the fixed dataset"
        )));
    }
    if n_models < 2 {
        return Err(Error::invalid("need at least 2 models per world"));
    }
    let record = pool.record(record_id)?;
    let without_set = fixed_dataset.without_record(record_id)?;

    let losses_of = |dataset: &Dataset, tag: &'static str| -> Result<Vec<f64>> {
        (0..n_models)
            .into_par_iter()
            .map(|i| {
                let mut cfg = config.clone();
                cfg.seed = seed.child(tag, i as u64);
                let model = train(pool, dataset, &cfg)?;
                model.loss(record)
            })
            .collect()
    };
    let with_losses = losses_of(fixed_dataset, "with")?;
    let without_losses = losses_of(&without_set, "without")?;

    // In this fixed-dataset context the left-out attack's calibration
    // collapses to one per-record distribution: the without-models are
    // exactly the out world for this record.
    let model_ids: Vec<String> = (0..n_models).map(|i| format!("without.{i}")).collect();
    let matrix = SignalMatrix::new(model_ids, vec![record_id], without_losses.clone())?;
    let tfn = calibrate_r(&matrix, method)?;

    let mut challenges = Vec::with_capacity(2 * n_models);
    for (i, &loss) in with_losses.iter().enumerate() {
        challenges.push(EvalChallenge {
            model_id: format!("with.{i}"),
            record_id,
            label: record.label,
            loss,
            is_member: 1,
        });
    }
    for (i, &loss) in without_losses.iter().enumerate() {
        challenges.push(EvalChallenge {
            model_id: format!("without.{i}"),
            record_id,
            label: record.label,
            loss,
            is_member: 0,
        });
    }
    roc_alpha_sweep(&tfn, &challenges, alpha_grid)
}

/// Pooled losses of a record set across a model set, sorted, with the
/// mean and population variance.
#[derive(Clone, Debug, PartialEq)]
pub struct LossHistogram {
    pub losses: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

pub fn loss_histogram(matrix: &SignalMatrix, record_ids: &[u64]) -> Result<LossHistogram> {
    if record_ids.is_empty() {
        return Err(Error::invalid("histogram needs at least one record"));
    }
    let mut losses = Vec::with_capacity(record_ids.len() * matrix.n_models());
    for &rid in record_ids {
        let col = matrix.col_index_of(rid).ok_or_else(|| {
            Error::invalid(format!("record {rid} is not a matrix column"))
        })?;
        losses.extend(matrix.column(col));
    }
    losses.sort_by(f64::total_cmp);
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let variance = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Ok(LossHistogram {
        losses,
        mean,
        variance,
    })
}

/// The `k` candidates closest to `record` in the model's penultimate
/// embedding, by cosine distance. Zero-norm embeddings rank last; exact
/// ties break toward the smaller record id.
pub fn latent_neighbors(
    record: &Record,
    candidates: &[&Record],
    model: &ToyModel,
    k: usize,
) -> Result<Vec<u64>> {
    if model.hidden == 0 {
        return Err(Error::invalid(
            "latent neighbors need a model with a hidden layer",
        ));
    }
    if k > candidates.len() {
        return Err(Error::invalid(format!(
            "asked for {k} neighbors from {} candidates",
            candidates.len()
        )));
    }
    if candidates.iter().any(|c| c.id == record.id) {
        return Err(Error::invalid(format!(
            "candidate set contains the query record {}",
            record.id
        )));
    }
    let query = model.penultimate(&record.features)?;
    let qn = norm(&query);

    let mut ranked: Vec<(f64, u64)> = Vec::with_capacity(candidates.len());
    for c in candidates {
        let emb = model.penultimate(&c.features)?;
        let en = norm(&emb);
        let distance = if qn == 0.0 || en == 0.0 {
            f64::INFINITY
        } else {
            let dot: f64 = query.iter().zip(&emb).map(|(a, b)| a * b).sum();
            1.0 - dot / (qn * en)
        };
        ranked.push((distance, c.id));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked[..k].iter().map(|&(_, id)| id).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_population, sample_dataset, SampleMode};

    fn bits(pattern: &[u8], models: usize) -> Vec<Vec<u8>> {
        (0..models).map(|_| pattern.to_vec()).collect()
    }

    #[test]
    fn unanimous_votes_land_in_the_expected_sets() {
        let seed = SeedSpec::new(70);
        let record_ids = vec![10, 11, 12, 13];
        // Record 10: everyone catches it. Record 11: only R. Record 12:
        // S and P but not R. Record 13: nobody.
        let mut votes = BTreeMap::new();
        votes.insert(AttackKind::S, bits(&[1, 0, 1, 0], 5));
        votes.insert(AttackKind::P, bits(&[1, 0, 1, 0], 5));
        votes.insert(AttackKind::R, bits(&[1, 1, 0, 0], 5));
        let p = partition_records(&record_ids, &votes, 0.8, false, 2, &seed).unwrap();
        assert_eq!(p.all_correct, BTreeSet::from([10]));
        assert_eq!(p.r_correct, BTreeSet::from([11]));
        assert_eq!(p.sp_correct, BTreeSet::from([12]));
        assert_eq!(p.random_baseline.len(), 2);
        assert!(p.random_baseline.iter().all(|id| record_ids.contains(id)));
    }

    #[test]
    fn majority_fraction_is_respected() {
        let seed = SeedSpec::new(71);
        let record_ids = vec![0];
        // R catches the record on 4 of 5 models (0.8 >= 0.8); S and P on
        // 1 of 5 (0.2 <= 0.2): exactly at both boundaries.
        let mut votes = BTreeMap::new();
        votes.insert(AttackKind::S, vec![vec![1], vec![0], vec![0], vec![0], vec![0]]);
        votes.insert(AttackKind::P, vec![vec![0], vec![1], vec![0], vec![0], vec![0]]);
        votes.insert(AttackKind::R, vec![vec![1], vec![1], vec![1], vec![1], vec![0]]);
        let p = partition_records(&record_ids, &votes, 0.8, false, 0, &seed).unwrap();
        assert_eq!(p.r_correct, BTreeSet::from([0]));
        assert!(p.all_correct.is_empty());
        assert!(p.sp_correct.is_empty());
    }

    #[test]
    fn partition_sets_are_pairwise_disjoint() {
        let seed = SeedSpec::new(72);
        let mut rng = seed.child("gen", 0).rng();
        let record_ids: Vec<u64> = (0..50).collect();
        for round in 0..20 {
            let mut votes = BTreeMap::new();
            for kind in [AttackKind::S, AttackKind::P, AttackKind::R] {
                let per_model: Vec<Vec<u8>> = (0..7)
                    .map(|_| (0..50).map(|_| u8::from(rng.gen_bool(0.5))).collect())
                    .collect();
                votes.insert(kind, per_model);
            }
            let p = partition_records(&record_ids, &votes, 0.8, false, 10, &seed.child("b", round))
                .unwrap();
            assert!(p.all_correct.is_disjoint(&p.r_correct));
            assert!(p.all_correct.is_disjoint(&p.sp_correct));
            assert!(p.r_correct.is_disjoint(&p.sp_correct));
        }
    }

    #[test]
    fn include_d_tightens_all_correct() {
        let seed = SeedSpec::new(73);
        let record_ids = vec![0, 1];
        let mut votes = BTreeMap::new();
        votes.insert(AttackKind::S, bits(&[1, 1], 4));
        votes.insert(AttackKind::P, bits(&[1, 1], 4));
        votes.insert(AttackKind::R, bits(&[1, 1], 4));
        votes.insert(AttackKind::D, bits(&[1, 0], 4));
        let without = partition_records(&record_ids, &votes, 0.8, false, 0, &seed).unwrap();
        assert_eq!(without.all_correct, BTreeSet::from([0, 1]));
        let with = partition_records(&record_ids, &votes, 0.8, true, 0, &seed).unwrap();
        assert_eq!(with.all_correct, BTreeSet::from([0]));

        votes.remove(&AttackKind::D);
        let err = partition_records(&record_ids, &votes, 0.8, true, 0, &seed)
            .unwrap_err()
            .to_string();
        assert!(err.contains("attack D"), "{err}");
    }

    #[test]
    fn partition_input_errors_are_named() {
        let seed = SeedSpec::new(74);
        let mut votes = BTreeMap::new();
        votes.insert(AttackKind::S, bits(&[1], 2));
        votes.insert(AttackKind::P, bits(&[1], 2));
        votes.insert(AttackKind::R, vec![vec![1]]);
        let err = partition_records(&[0], &votes, 0.8, false, 0, &seed)
            .unwrap_err()
            .to_string();
        assert!(err.contains("attack R") && err.contains("at least 2"), "{err}");

        votes.insert(AttackKind::R, bits(&[1], 2));
        assert!(partition_records(&[], &votes, 0.8, false, 0, &seed).is_err());
        assert!(partition_records(&[0], &votes, 0.5, false, 0, &seed).is_err());
        assert!(partition_records(&[0], &votes, 0.8, false, 5, &seed).is_err());
    }

    #[test]
    fn baseline_is_deterministic_per_seed() {
        let record_ids: Vec<u64> = (0..30).collect();
        let mut votes = BTreeMap::new();
        for kind in [AttackKind::S, AttackKind::P, AttackKind::R] {
            votes.insert(kind, bits(&vec![0; 30], 3));
        }
        let a = partition_records(&record_ids, &votes, 0.8, false, 10, &SeedSpec::new(75)).unwrap();
        let b = partition_records(&record_ids, &votes, 0.8, false, 10, &SeedSpec::new(75)).unwrap();
        let c = partition_records(&record_ids, &votes, 0.8, false, 10, &SeedSpec::new(76)).unwrap();
        assert_eq!(a.random_baseline, b.random_baseline);
        assert_ne!(a.random_baseline, c.random_baseline);
    }

    fn loo_setup(seed: &SeedSpec) -> (PopulationPool, Dataset) {
        let pool = gen_population(2, 2, 200, 2.0, &seed.child("pool", 0)).unwrap();
        let dataset = sample_dataset(
            &pool,
            16,
            SampleMode::WithoutReplacement,
            &BTreeSet::new(),
            &seed.child("data", 0),
        )
        .unwrap();
        (pool, dataset)
    }

    fn quick_config(seed: &SeedSpec) -> TrainConfig {
        TrainConfig {
            hidden_width: 0,
            epochs: 10,
            batch_size: 8,
            learning_rate: 0.3,
            clip_norm: None,
            weight_init_scale: 0.5,
            seed: seed.child("unused", 0),
        }
    }

    #[test]
    fn untrained_models_make_the_record_indistinguishable() {
        let seed = SeedSpec::new(77);
        let (pool, dataset) = loo_setup(&seed);
        let mut config = quick_config(&seed);
        config.learning_rate = 0.0;
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let curve = loo_vulnerability(
            &pool,
            &dataset,
            dataset.ids()[0],
            40,
            &grid,
            &config,
            SmoothingMethod::LinearInterp,
            &seed.child("loo", 0),
        )
        .unwrap();
        assert!(
            (curve.auc() - 0.5).abs() <= 0.2,
            "zero learning rate should not separate the worlds: AUC {}",
            curve.auc()
        );
    }

    #[test]
    fn duplicated_record_stays_effectively_present() {
        // Record 0 has seven exact copies in the dataset, record 16 is a
        // lone mislabeled outlier. Leaving out a copy changes almost
        // nothing the model can see; leaving out the outlier moves the
        // fit, so the outlier's with/without worlds separate far more.
        let seed = SeedSpec::new(78);
        let mut records = Vec::new();
        for i in 0..40u64 {
            let (features, label) = if i < 8 {
                (vec![1.2, -1.2], 0)
            } else if i == 16 {
                (vec![-2.5, 2.5], 0)
            } else {
                let j = i as f64 * 0.05;
                if i % 2 == 0 {
                    (vec![1.0 + j, -1.0], 0)
                } else {
                    (vec![-1.0 - j, 1.0], 1)
                }
            };
            records.push(Record {
                id: i,
                features,
                label,
            });
        }
        let pool = PopulationPool::from_parts(2, 2, 1.0, records, &seed.child("pool", 0));
        let dataset = Dataset::new(pool.id(), (0..24).collect()).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        // Short, noisy training: run-to-run variation has to dominate the
        // marginal effect of the eighth copy, as it would at realistic
        // scale, while the outlier's pull on the fit stays visible.
        let mut config = quick_config(&seed);
        config.epochs = 6;
        config.learning_rate = 0.2;
        config.weight_init_scale = 1.5;
        let auc_of = |record_id: u64| {
            loo_vulnerability(
                &pool,
                &dataset,
                record_id,
                40,
                &grid,
                &config,
                SmoothingMethod::LinearInterp,
                &seed.child("loo", record_id),
            )
            .unwrap()
            .auc()
        };
        let auc_dup = auc_of(0);
        let auc_outlier = auc_of(16);
        assert!(
            auc_outlier >= auc_dup + 0.15 && auc_dup <= 0.75,
            "duplicate AUC {auc_dup} should sit well under the outlier's {auc_outlier}"
        );
    }

    #[test]
    fn loo_curve_is_deterministic_and_checks_preconditions() {
        let seed = SeedSpec::new(79);
        let (pool, dataset) = loo_setup(&seed);
        let config = quick_config(&seed);
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let run = || {
            loo_vulnerability(
                &pool,
                &dataset,
                dataset.ids()[3],
                6,
                &grid,
                &config,
                SmoothingMethod::LinearInterp,
                &seed.child("loo", 0),
            )
            .unwrap()
        };
        assert_eq!(run().points(), run().points());

        let absent = *pool
            .records()
            .iter()
            .map(|r| &r.id)
            .find(|id| !dataset.contains(**id))
            .unwrap();
        assert!(loo_vulnerability(
            &pool,
            &dataset,
            absent,
            6,
            &grid,
            &config,
            SmoothingMethod::LinearInterp,
            &seed
        )
        .is_err());
    }

    #[test]
    fn histogram_pools_columns_and_matches_hand_stats() {
        let matrix = SignalMatrix::new(
            vec!["a".into(), "b".into()],
            vec![5, 6, 7],
            vec![1.0, 2.0, 3.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        let single = loss_histogram(&matrix, &[6]).unwrap();
        assert_eq!(single.losses, vec![2.0, 4.0]);
        assert_eq!(single.mean, 3.0);
        assert_eq!(single.variance, 1.0);

        let one_cell = SignalMatrix::new(vec!["a".into()], vec![0], vec![0.75]).unwrap();
        let h = loss_histogram(&one_cell, &[0]).unwrap();
        assert_eq!(h.losses.len(), 1);
        assert_eq!(h.mean, 0.75);
        assert_eq!(h.variance, 0.0);

        // A constructed shift moves the mean by exactly the shift.
        let shifted = SignalMatrix::new(
            vec!["a".into(), "b".into()],
            vec![5, 6, 7],
            vec![1.5, 2.5, 3.5, 3.5, 4.5, 5.5],
        )
        .unwrap();
        let base = loss_histogram(&matrix, &[5, 7]).unwrap();
        let moved = loss_histogram(&shifted, &[5, 7]).unwrap();
        assert!((moved.mean - base.mean - 0.5).abs() < 1e-12);

        assert!(loss_histogram(&matrix, &[]).is_err());
        assert!(loss_histogram(&matrix, &[99]).is_err());
    }

    fn embedding_model(seed: &SeedSpec) -> (PopulationPool, ToyModel) {
        let pool = gen_population(3, 2, 120, 2.0, &seed.child("pool", 0)).unwrap();
        let dataset = sample_dataset(
            &pool,
            24,
            SampleMode::WithoutReplacement,
            &BTreeSet::new(),
            &seed.child("data", 0),
        )
        .unwrap();
        let config = TrainConfig {
            hidden_width: 6,
            epochs: 15,
            batch_size: 8,
            learning_rate: 0.2,
            clip_norm: None,
            weight_init_scale: 0.4,
            seed: seed.child("train", 0),
        };
        let model = train(&pool, &dataset, &config).unwrap();
        (pool, model)
    }

    #[test]
    fn identical_candidate_ranks_first_and_k_all_sorts() {
        let seed = SeedSpec::new(80);
        let (pool, model) = embedding_model(&seed);
        let query = pool.record(0).unwrap();
        // A candidate with the query's exact features sits at distance 0.
        let twin = Record {
            id: 999,
            features: query.features.clone(),
            label: query.label,
        };
        let others: Vec<&Record> = pool.records()[1..6].iter().collect();
        let mut candidates = vec![&twin];
        candidates.extend(others);
        let ids = latent_neighbors(query, &candidates, &model, 1).unwrap();
        assert_eq!(ids, vec![999]);

        let all = latent_neighbors(query, &candidates, &model, candidates.len()).unwrap();
        assert_eq!(all.len(), candidates.len());
        assert_eq!(all[0], 999);
    }

    #[test]
    fn neighbor_ranking_matches_independent_scan() {
        let seed = SeedSpec::new(81);
        let (pool, model) = embedding_model(&seed);
        let mut rng = seed.child("probe", 0).rng();
        for _ in 0..100 {
            let qid = rng.gen_range(0..40u64);
            let query = pool.record(qid).unwrap();
            let candidates: Vec<&Record> = pool
                .records()
                .iter()
                .filter(|r| r.id != qid && r.id < 40)
                .collect();
            let k = rng.gen_range(1..=candidates.len());
            let got = latent_neighbors(query, &candidates, &model, k).unwrap();

            // Independent scan: explicit cosine distances, stable sort.
            let q = model.penultimate(&query.features).unwrap();
            let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut want: Vec<(f64, u64)> = candidates
                .iter()
                .map(|c| {
                    let e = model.penultimate(&c.features).unwrap();
                    let en = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let d = if qn == 0.0 || en == 0.0 {
                        f64::INFINITY
                    } else {
                        1.0 - q.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / (qn * en)
                    };
                    (d, c.id)
                })
                .collect();
            want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want_ids: Vec<u64> = want[..k].iter().map(|&(_, id)| id).collect();
            assert_eq!(got, want_ids);
        }
    }

    #[test]
    fn zero_norm_embeddings_rank_last_by_id() {
        // A zeroed model embeds everything at the origin: every distance
        // is maximal, so ranking falls back to record ids.
        let model = ToyModel::zeroed(3, 2, 4).unwrap();
        let seed = SeedSpec::new(82);
        let pool = gen_population(3, 2, 20, 2.0, &seed).unwrap();
        let query = pool.record(10).unwrap();
        let candidates: Vec<&Record> = pool.records()[..5].iter().collect();
        let ids = latent_neighbors(query, &candidates, &model, 5).unwrap();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn latent_neighbor_preconditions() {
        let seed = SeedSpec::new(83);
        let (pool, model) = embedding_model(&seed);
        let query = pool.record(0).unwrap();
        let candidates: Vec<&Record> = pool.records()[..4].iter().collect();
        // Query inside the candidate set.
        assert!(latent_neighbors(query, &candidates, &model, 2).is_err());

        let clean: Vec<&Record> = pool.records()[1..4].iter().collect();
        assert!(latent_neighbors(query, &clean, &model, 4).is_err());

        let flat = ToyModel::zeroed(3, 2, 0).unwrap();
        let err = latent_neighbors(query, &clean, &flat, 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("hidden"), "{err}");
    }
}
