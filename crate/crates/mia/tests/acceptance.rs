//! Acceptance suite: one test per shipping criterion, each ending in a
//! single printed verdict line (run with `--nocapture` to see them on
//! success). Tolerances are pinned in the constants below; a criterion
//! fails loudly rather than degrading.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use mia::attacks::{decide_with_loss, AttackKind};
use mia::core::{Dataset, SeedSpec};
use mia::eval::{
    default_alpha_grid, lemma1_experiment, loo_vulnerability, partition_records, roc_score_sweep,
    Lemma1Config,
};
use mia::games::{play, GameSpec, GameVariant, LossThreshold};
use mia::signals::{build_distilled_batch, build_population, build_reference_batch, build_shadow};
use mia::synth::{
    batch_gradient, batch_loss, gen_population, sample_dataset, train, train_traced,
    PopulationPool, SampleMode, SgdTrainer, ToyModel, TrainConfig,
};
use mia::thresholds::{
    calibrate_d, calibrate_p, calibrate_r, calibrate_s, confidence_avg, percentile_linear,
    percentile_logit, smooth_threshold, threshold_min, EmpiricalDist, SmoothingMethod,
};

fn verdict(name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("acceptance: {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

// ---------------------------------------------------------------------
// 1. Calibrated attacks hit their false-positive budget on 2000
//    independent fresh out-world draws each. The pinned tolerance covers
//    the two finite-sample effects exactly as statistics predicts them:
//    the linear percentile estimator's mean bias |1-2a| / (n_dist + 1)
//    on an n_dist-sample calibration set, plus three standard deviations
//    of the combined challenge + calibration binomial noise, where
//    n_eff is n_dist summed over the independent distributions the
//    challenges average across.
// ---------------------------------------------------------------------

const C1_ALPHAS: [f64; 4] = [0.01, 0.05, 0.1, 0.3];
const C1_CHALLENGES: usize = 2000;

fn c1_tolerance(alpha: f64, n_dist: usize, n_eff: usize) -> f64 {
    let bias = (1.0 - 2.0 * alpha).abs() / (n_dist + 1) as f64;
    let var = alpha * (1.0 - alpha) * (1.0 / C1_CHALLENGES as f64 + 1.0 / n_eff as f64);
    bias + 3.0 * var.sqrt()
}

/// `per_class` ids per class, scanned in id order, skipping `taken`.
fn stratified_ids(pool: &PopulationPool, taken: &BTreeSet<u64>, per_class: usize) -> Vec<u64> {
    let mut counts = vec![0usize; pool.classes];
    let mut out = Vec::with_capacity(per_class * pool.classes);
    for r in pool.records() {
        if counts[r.label] < per_class && !taken.contains(&r.id) {
            counts[r.label] += 1;
            out.push(r.id);
        }
    }
    assert!(out.len() == per_class * pool.classes, "pool too small for eval split");
    out
}

/// Empirical fraction of (loss, record) cells at or below the calibrated
/// threshold. `model_id` keys per-model tables; per-label and per-record
/// tables ignore it.
fn fpr_on(
    tfn: &mia::thresholds::ThresholdFn,
    model_id: &str,
    cells: &[(u64, usize, f64)],
    alpha: f64,
) -> f64 {
    let hits = cells
        .iter()
        .filter(|(rid, label, loss)| {
            *loss <= tfn.threshold(model_id, *rid, *label, alpha).expect("threshold")
        })
        .count();
    hits as f64 / cells.len() as f64
}

#[test]
fn criterion_1_fpr_calibration() {
    let seed = SeedSpec::new(9001);
    let pool = gen_population(4, 4, 6000, 1.5, &seed.child("pool", 0)).unwrap();
    let config = TrainConfig {
        hidden_width: 0,
        epochs: 15,
        batch_size: 16,
        learning_rate: 0.3,
        clip_norm: None,
        weight_init_scale: 0.5,
        seed: seed.child("unused", 0),
    };
    let method = SmoothingMethod::LinearInterp;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut check = |kind: AttackKind, alpha: f64, fpr: f64, n_dist: usize, n_eff: usize| {
        let dev = (fpr - alpha).abs();
        let tol = c1_tolerance(alpha, n_dist, n_eff);
        if dev / tol > worst.0 {
            worst = (dev / tol, format!("{kind} at alpha {alpha}: fpr {fpr:.4}"));
        }
        assert!(dev <= tol, "{kind} at alpha {alpha}: fpr {fpr:.4} deviates {dev:.4} > {tol:.4}");
    };
    // One challenge model excluding exactly `exclude`, scored on one
    // record. Every challenge is an independent out-world draw.
    let fresh_loss = |tag: &str, i: u64, exclude: &BTreeSet<u64>, rid: u64| -> f64 {
        let node = seed.child(tag, i);
        let ds = sample_dataset(&pool, 64, SampleMode::WithoutReplacement, exclude, &node.child("data", 0)).unwrap();
        let model = train(&pool, &ds, &TrainConfig { seed: node.child("train", 0), ..config.clone() }).unwrap();
        model.loss(pool.record(rid).unwrap()).unwrap()
    };

    // S: thresholds pooled per label from 40 shadow models x 100 eval
    // records per class (4000-sample distributions), checked on 2000
    // fresh (model, record) pairs, one model per record.
    let shadow = build_shadow(&pool, 64, 40, &config, &seed.child("shadow", 0), 100).unwrap();
    let s_tfn = calibrate_s(&shadow.matrix, &shadow.labels, pool.classes, method).unwrap();
    let shadow_eval: BTreeSet<u64> = shadow.matrix.record_ids().iter().copied().collect();
    let s_ids = stratified_ids(&pool, &shadow_eval, C1_CHALLENGES / pool.classes);
    let s_cells: Vec<(u64, usize, f64)> = s_ids
        .iter()
        .enumerate()
        .map(|(i, &rid)| {
            let loss = fresh_loss("s-fresh", i as u64, &BTreeSet::from([rid]), rid);
            (rid, pool.record(rid).unwrap().label, loss)
        })
        .collect();
    // 2000 challenges averaging over 4 label distributions of 4000.
    for alpha in C1_ALPHAS {
        check(AttackKind::S, alpha, fpr_on(&s_tfn, "any", &s_cells, alpha), 4000, 16000);
    }

    // P: one threshold pooled over 2000 population records under one
    // target, checked on 2000 further non-members of the same target.
    let dataset = sample_dataset(&pool, 64, SampleMode::WithoutReplacement, &BTreeSet::new(), &seed.child("target-data", 0)).unwrap();
    let target = train(&pool, &dataset, &TrainConfig { seed: seed.child("target-train", 0), ..config.clone() }).unwrap();
    let population = build_population(&target, &dataset, &pool, 500, &seed.child("population", 0)).unwrap();
    let p_tfn = calibrate_p(&population.matrix, method).unwrap();
    let mut p_taken: BTreeSet<u64> = dataset.ids().iter().copied().collect();
    p_taken.extend(population.matrix.record_ids().iter().copied());
    let p_ids = stratified_ids(&pool, &p_taken, C1_CHALLENGES / pool.classes);
    let p_cells: Vec<(u64, usize, f64)> = p_ids
        .iter()
        .map(|&id| {
            let r = pool.record(id).unwrap();
            (id, r.label, target.loss(r).unwrap())
        })
        .collect();
    for alpha in C1_ALPHAS {
        check(AttackKind::P, alpha, fpr_on(&p_tfn, &target.id(), &p_cells, alpha), 2000, 2000);
    }

    // R: per-record thresholds from 200 reference models, checked on
    // 2000 fresh models (one per challenge) cycling over the 200
    // records; calibration error averages across 200 distributions.
    let r_ids = stratified_ids(&pool, &BTreeSet::new(), 50);
    let r_exclude: BTreeSet<u64> = r_ids.iter().copied().collect();
    let r_calib = build_reference_batch(&pool, &r_ids, 200, 64, &config, &seed.child("r-calib", 0)).unwrap();
    let r_tfn = calibrate_r(&r_calib.matrix, method).unwrap();
    let r_cells: Vec<(u64, usize, f64)> = (0..C1_CHALLENGES)
        .map(|i| {
            let rid = r_ids[i % r_ids.len()];
            let loss = fresh_loss("r-fresh", i as u64, &r_exclude, rid);
            (rid, pool.record(rid).unwrap().label, loss)
        })
        .collect();
    for alpha in C1_ALPHAS {
        check(AttackKind::R, alpha, fpr_on(&r_tfn, "any", &r_cells, alpha), 200, 40000);
    }

    // D: per-(target, record) thresholds from 200 distilled students,
    // checked on 2000 fresh students, one per challenge.
    let d_calib = build_distilled_batch(&target, &pool, &r_ids, 200, 64, &config, &seed.child("d-calib", 0)).unwrap();
    let d_tfn = calibrate_d(&BTreeMap::from([(target.id(), d_calib.matrix)]), method).unwrap();
    let d_cells: Vec<(u64, usize, f64)> = (0..C1_CHALLENGES)
        .map(|i| {
            let rid = r_ids[i % r_ids.len()];
            let node = seed.child("d-fresh", i as u64);
            let ds = sample_dataset(&pool, 64, SampleMode::WithoutReplacement, &r_exclude, &node.child("data", 0)).unwrap();
            let cfg = TrainConfig { seed: node.child("train", 0), ..config.clone() };
            let student = mia::synth::distill_on(&target, &pool, &ds, &cfg).unwrap();
            (rid, pool.record(rid).unwrap().label, student.loss(pool.record(rid).unwrap()).unwrap())
        })
        .collect();
    for alpha in C1_ALPHAS {
        check(AttackKind::D, alpha, fpr_on(&d_tfn, &target.id(), &d_cells, alpha), 200, 40000);
    }

    verdict(
        "criterion 1 (fpr calibration, S/P/R/D x 4 alphas, 2000 fresh draws each)",
        true,
        format!("worst deviation {:.2} of tolerance: {}", worst.0, worst.1),
    );
}

// ---------------------------------------------------------------------
// 2. Smoothing oracles: each method agrees with an independently coded
//    route. linear <= 1e-12, logit <= 1e-8 (quantile via bisection on
//    erfc), min is the pointwise minimum, avg round-trips its CDF to
//    1e-8.
// ---------------------------------------------------------------------

fn random_dist(rng: &mut impl Rng, min_len: usize) -> EmpiricalDist {
    let len = rng.gen_range(min_len..400);
    let losses: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..20.0)).collect();
    EmpiricalDist::new(losses).unwrap()
}

/// Standard normal quantile by bisection on statrs' erfc, independent of
/// the rational approximation inside the library.
fn quantile_by_bisection(p: f64) -> f64 {
    let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_2_smoothing_oracles() {
    let mut rng = SeedSpec::new(9002).child("dists", 0).rng();

    // Linear interpolation against a structurally different expression
    // of the same percentile.
    let mut max_lin = 0.0f64;
    for _ in 0..1000 {
        let dist = random_dist(&mut rng, 2);
        let ls = dist.losses();
        for k in 0..=20 {
            let alpha = k as f64 / 20.0;
            let pos = alpha * (ls.len() - 1) as f64;
            let (lo, hi) = (ls[pos.floor() as usize], ls[pos.ceil() as usize]);
            let oracle = lo + (pos - pos.floor()) * (hi - lo);
            max_lin = max_lin.max((percentile_linear(&dist, alpha).unwrap() - oracle).abs());
        }
    }
    assert!(max_lin <= 1e-12, "linear percentile deviates {max_lin:.2e}");

    // Logit rescaling: refit the logit-normal by hand (losses stay
    // inside the transform's clamp range by construction) and take the
    // quantile through the bisection oracle.
    let mut max_logit = 0.0f64;
    for _ in 0..200 {
        let dist = random_dist(&mut rng, 2);
        let t: Vec<f64> = dist.losses().iter().map(|&l| -l.exp_m1().ln()).collect();
        let mu = t.iter().sum::<f64>() / t.len() as f64;
        let sigma = (t.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / t.len() as f64).sqrt();
        for alpha in [0.05, 0.1, 0.3, 0.5, 0.7, 0.9] {
            let q = mu + sigma * quantile_by_bisection(1.0 - alpha);
            let oracle = (-q).max(0.0) + (-q.abs()).exp().ln_1p();
            max_logit = max_logit.max((percentile_logit(&dist, alpha).unwrap() - oracle).abs());
        }
    }
    assert!(max_logit <= 1e-8, "logit threshold deviates {max_logit:.2e}");

    // Min-of-both is exactly the pointwise minimum of the two routes.
    for _ in 0..500 {
        let dist = random_dist(&mut rng, 2);
        for alpha in [0.02, 0.1, 0.5, 0.95] {
            let expect = percentile_linear(&dist, alpha)
                .unwrap()
                .min(percentile_logit(&dist, alpha).unwrap());
            assert_eq!(threshold_min(&dist, alpha).unwrap(), expect);
        }
    }

    // Averaged-confidence thresholds invert their own CDF.
    let mut max_avg = 0.0f64;
    for _ in 0..200 {
        let dist = random_dist(&mut rng, 2);
        for alpha in [0.01, 0.05, 0.2, 0.5, 0.8, 0.99] {
            let c = smooth_threshold(&dist, SmoothingMethod::AvgConfidence, alpha).unwrap();
            max_avg = max_avg.max((confidence_avg(&dist, c).unwrap() - alpha).abs());
        }
    }
    assert!(max_avg <= 1e-8, "avg-confidence round trip deviates {max_avg:.2e}");

    verdict(
        "criterion 2 (smoothing dual-route oracles)",
        true,
        format!("linear {max_lin:.1e}, logit {max_logit:.1e}, avg round-trip {max_avg:.1e}"),
    );
}

// ---------------------------------------------------------------------
// 3. Attack ordering on an overfit benchmark, averaged over three root
//    seeds: record-calibrated beats record-oblivious, shadow tracks
//    population within 0.05, distilled stays within 0.02 of reference.
// ---------------------------------------------------------------------

struct BenchAucs {
    s: f64,
    p: f64,
    r: f64,
    d: f64,
}

fn bench_config(seed: &SeedSpec) -> TrainConfig {
    // Full-batch descent so memorization stays partial: member losses land
    // near 1e-2 rather than the floor, which keeps the per-record geometry
    // visible instead of letting every attack saturate.
    TrainConfig {
        hidden_width: 32,
        epochs: 200,
        batch_size: 64,
        learning_rate: 0.1,
        clip_norm: None,
        weight_init_scale: 0.8,
        seed: seed.clone(),
    }
}

/// One benchmark run: ten targets, separate 200-model shadow and
/// reference batches (pooled vs per-record calibration of the same kind
/// of out-world signal), per-target population and distilled
/// calibrations, all scored at alpha 0.1 by confidence sweep.
fn bench_aucs(root: u64) -> BenchAucs {
    const ALPHA: f64 = 0.1;
    const TARGETS: usize = 10;
    let seed = SeedSpec::new(root);
    let pool = gen_population(16, 4, 3000, 1.2, &seed.child("pool", 0)).unwrap();
    let config = bench_config(&seed.child("unused", 0));
    let method = SmoothingMethod::LinearInterp;

    // Eval universe: 480 records the out-world batches never train on.
    let eval_pool = stratified_ids(&pool, &BTreeSet::new(), 120);
    let shadow_world =
        build_reference_batch(&pool, &eval_pool, 200, 64, &config, &seed.child("shadow-world", 0)).unwrap();
    let out_world =
        build_reference_batch(&pool, &eval_pool, 200, 64, &config, &seed.child("out-world", 0)).unwrap();
    let s_tfn = calibrate_s(&shadow_world.matrix, &shadow_world.labels, pool.classes, method).unwrap();
    let r_tfn = calibrate_r(&out_world.matrix, method).unwrap();

    let eval_set: BTreeSet<u64> = eval_pool.iter().copied().collect();
    let filler: Vec<u64> = pool
        .records()
        .iter()
        .map(|r| r.id)
        .filter(|id| !eval_set.contains(id))
        .collect();

    let mut confidences: BTreeMap<AttackKind, Vec<f64>> = BTreeMap::new();
    let mut bits: Vec<u8> = Vec::new();
    for t in 0..TARGETS {
        // Dataset: 24 eval members plus filler drawn outside the eval
        // universe, so every eval record keeps a valid out-world.
        let members: Vec<u64> = eval_pool[t * 24..(t + 1) * 24].to_vec();
        let nonmembers: Vec<u64> = eval_pool[TARGETS * 24 + t * 24..TARGETS * 24 + (t + 1) * 24].to_vec();
        let mut rng = seed.child("filler", t as u64).rng();
        let mut ids = members.clone();
        let mut pos = 0usize;
        while ids.len() < 64 {
            pos = rng.gen_range(0..filler.len());
            if !ids.contains(&filler[pos]) {
                ids.push(filler[pos]);
            }
        }
        let _ = pos;
        let dataset = Dataset::new(pool.id(), ids).unwrap();
        let target = train(&pool, &dataset, &TrainConfig { seed: seed.child("target", t as u64), ..config.clone() }).unwrap();

        let population = build_population(&target, &dataset, &pool, 20, &seed.child("population", t as u64)).unwrap();
        let p_tfn = calibrate_p(&population.matrix, method).unwrap();
        let eval_ids: Vec<u64> = members.iter().chain(&nonmembers).copied().collect();
        let students = build_distilled_batch(&target, &pool, &eval_ids, 20, 128, &config, &seed.child("students", t as u64)).unwrap();
        let d_tfn = calibrate_d(&BTreeMap::from([(target.id(), students.matrix)]), method).unwrap();

        for (ids, bit) in [(&members, 1u8), (&nonmembers, 0u8)] {
            for &id in ids.iter() {
                let record = pool.record(id).unwrap();
                let loss = target.loss(record).unwrap();
                bits.push(bit);
                for (kind, tfn) in [
                    (AttackKind::S, &s_tfn),
                    (AttackKind::P, &p_tfn),
                    (AttackKind::R, &r_tfn),
                    (AttackKind::D, &d_tfn),
                ] {
                    let d = decide_with_loss(tfn, &target.id(), id, record.label, loss, ALPHA).unwrap();
                    confidences.entry(kind).or_default().push(d.confidence);
                }
            }
        }
    }

    let auc = |kind: AttackKind| roc_score_sweep(&confidences[&kind], &bits).unwrap().auc();
    BenchAucs { s: auc(AttackKind::S), p: auc(AttackKind::P), r: auc(AttackKind::R), d: auc(AttackKind::D) }
}

#[test]
fn criterion_3_attack_ordering() {
    let runs: Vec<BenchAucs> = [101, 202, 303].iter().map(|&r| bench_aucs(r)).collect();
    let mean = |f: fn(&BenchAucs) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let (s, p, r, d) = (mean(|b| b.s), mean(|b| b.p), mean(|b| b.r), mean(|b| b.d));

    assert!(r > s, "reference auc {r:.3} not above shadow {s:.3}");
    assert!(r > p, "reference auc {r:.3} not above population {p:.3}");
    assert!((s - p).abs() <= 0.05, "shadow {s:.3} and population {p:.3} drift apart");
    assert!(d >= r - 0.02, "distilled {d:.3} more than 0.02 below reference {r:.3}");
    verdict(
        "criterion 3 (attack ordering over 3 seeds x 10 targets)",
        true,
        format!("auc S {s:.3}, P {p:.3}, R {r:.3}, D {d:.3}"),
    );
}

// ---------------------------------------------------------------------
// 4. The loss-threshold adversary is near Bayes-optimal on the
//    posterior-sampled toy stack: |auc gap| <= 0.05 over 2000 trials,
//    with the quadrature's refinement error <= 1e-3.
// ---------------------------------------------------------------------

#[test]
fn criterion_4_loss_threshold_near_optimal() {
    let seed = SeedSpec::new(9004);
    let pool = gen_population(1, 2, 100, 1.2, &seed.child("pool", 0)).unwrap();
    let config = Lemma1Config { n: 8, trials: 2000, temperature: 0.1, ..Lemma1Config::default() };
    let report = lemma1_experiment(&pool, &config, &seed.child("exp", 0)).unwrap();

    assert!(report.posterior_mass_error <= 1e-3, "quadrature mass error {:.2e}", report.posterior_mass_error);
    assert!(report.gap.abs() <= 0.05, "auc gap {:.4} exceeds 0.05", report.gap);
    verdict(
        "criterion 4 (optimality gap, 2000 posterior trials)",
        true,
        format!(
            "auc loss {:.4} vs oracle {:.4}, gap {:+.4}, mass error {:.1e}",
            report.auc_loss, report.auc_oracle, report.gap, report.posterior_mass_error,
        ),
    );
}

// ---------------------------------------------------------------------
// 5. Differential vulnerability: the majority-vote partition is
//    non-trivial, reference-only records have heavier out-world losses
//    than records only the pooled attacks catch, and leave-one-out
//    retraining confirms reference-only records outrank a random
//    baseline.
// ---------------------------------------------------------------------

#[test]
fn criterion_5_differential_vulnerability() {
    const ALPHA: f64 = 0.3;
    const TARGETS: usize = 10;
    let seed = SeedSpec::new(9005);
    let pool = gen_population(16, 4, 3000, 1.2, &seed.child("pool", 0)).unwrap();
    let config = bench_config(&seed.child("unused", 0));
    let method = SmoothingMethod::LinearInterp;

    let dataset = sample_dataset(&pool, 64, SampleMode::WithoutReplacement, &BTreeSet::new(), &seed.child("shared-data", 0)).unwrap();
    let member_ids: Vec<u64> = dataset.ids().to_vec();
    let targets: Vec<ToyModel> = (0..TARGETS)
        .map(|t| train(&pool, &dataset, &TrainConfig { seed: seed.child("target", t as u64), ..config.clone() }).unwrap())
        .collect();

    let out_world = build_reference_batch(&pool, &member_ids, 200, 64, &config, &seed.child("out-world", 0)).unwrap();
    let s_tfn = calibrate_s(&out_world.matrix, &out_world.labels, pool.classes, method).unwrap();
    let r_tfn = calibrate_r(&out_world.matrix, method).unwrap();

    let mut votes: BTreeMap<AttackKind, Vec<Vec<u8>>> = BTreeMap::new();
    for (t, model) in targets.iter().enumerate() {
        let population = build_population(model, &dataset, &pool, 20, &seed.child("population", t as u64)).unwrap();
        let p_tfn = calibrate_p(&population.matrix, method).unwrap();
        for (kind, tfn) in [(AttackKind::S, &s_tfn), (AttackKind::P, &p_tfn), (AttackKind::R, &r_tfn)] {
            let mut row = Vec::with_capacity(member_ids.len());
            for &id in &member_ids {
                let record = pool.record(id).unwrap();
                let loss = model.loss(record).unwrap();
                row.push(decide_with_loss(tfn, &model.id(), id, record.label, loss, ALPHA).unwrap().predicted_bit);
            }
            votes.entry(kind).or_default().push(row);
        }
    }

    let partition = partition_records(&member_ids, &votes, 0.7, false, 10, &seed.child("partition", 0)).unwrap();
    assert!(!partition.r_correct.is_empty(), "no reference-only records");
    assert!(!partition.sp_correct.is_empty(), "no pooled-only records");

    // Reference-only records should be the out-world-hard ones.
    let mean_out_loss = |ids: &BTreeSet<u64>| -> f64 {
        let mut total = 0.0;
        for &id in ids {
            let col = out_world.matrix.col_index_of(id).unwrap();
            let losses = out_world.matrix.column(col);
            total += losses.iter().sum::<f64>() / losses.len() as f64;
        }
        total / ids.len() as f64
    };
    let hard = mean_out_loss(&partition.r_correct);
    let easy = mean_out_loss(&partition.sp_correct);
    assert!(
        hard > easy,
        "reference-only records average out-world loss {hard:.3}, pooled-only {easy:.3}",
    );

    // Ground truth by retraining: reference-only ids outrank a random
    // baseline of members.
    let grid = default_alpha_grid();
    let loo_mean = |ids: &BTreeSet<u64>| -> f64 {
        let aucs: Vec<f64> = ids
            .iter()
            .take(10)
            .map(|&id| {
                loo_vulnerability(&pool, &dataset, id, 20, &grid, &config, method, &seed.child("loo", id))
                    .unwrap()
                    .auc()
            })
            .collect();
        aucs.iter().sum::<f64>() / aucs.len() as f64
    };
    let loo_r = loo_mean(&partition.r_correct);
    let loo_base = loo_mean(&partition.random_baseline);
    assert!(
        loo_r > loo_base,
        "leave-one-out auc {loo_r:.3} for reference-only vs {loo_base:.3} baseline",
    );

    verdict(
        "criterion 5 (differential vulnerability on 10 shared-dataset targets)",
        true,
        format!(
            "partition sizes all/{} r-only/{} sp-only/{}; out-world loss {hard:.2} vs {easy:.2}; loo auc {loo_r:.3} vs {loo_base:.3}",
            partition.all_correct.len(),
            partition.r_correct.len(),
            partition.sp_correct.len(),
        ),
    );
}

// ---------------------------------------------------------------------
// 6. Score-sweep AUC equals the brute-force pairwise statistic (ties at
//    half weight) to 1e-9 on 200 random instances.
// ---------------------------------------------------------------------

#[test]
fn criterion_6_auc_matches_brute_force() {
    let mut rng = SeedSpec::new(9006).child("auc", 0).rng();
    let mut max_dev = 0.0f64;
    for _ in 0..200 {
        let n_pos = rng.gen_range(1..=250);
        let n_neg = rng.gen_range(1..=250);
        let mut scores = Vec::with_capacity(n_pos + n_neg);
        let mut bits = Vec::with_capacity(n_pos + n_neg);
        for i in 0..n_pos + n_neg {
            // Coarse grid forces plenty of ties.
            scores.push(rng.gen_range(-8i32..8) as f64 / 4.0);
            bits.push(u8::from(i < n_pos));
        }
        let auc = roc_score_sweep(&scores, &bits).unwrap().auc();

        let mut wins = 0.0f64;
        for i in 0..n_pos {
            for j in n_pos..n_pos + n_neg {
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        let brute = wins / (n_pos * n_neg) as f64;
        max_dev = max_dev.max((auc - brute).abs());
    }
    assert!(max_dev <= 1e-9, "auc deviates {max_dev:.2e} from pairwise count");
    verdict(
        "criterion 6 (auc vs brute-force pairwise, 200 instances)",
        true,
        format!("max deviation {max_dev:.1e}"),
    );
}

// ---------------------------------------------------------------------
// 7. Determinism and fingerprints: a fixed-model game reuses one model,
//    worst-case trials differ by exactly the challenge record, and
//    replays are identical.
// ---------------------------------------------------------------------

#[test]
fn criterion_7_fingerprints_and_determinism() {
    let seed = SeedSpec::new(9007);
    let pool = gen_population(3, 2, 300, 1.5, &seed.child("pool", 0)).unwrap();
    let config = TrainConfig {
        hidden_width: 0,
        epochs: 10,
        batch_size: 8,
        learning_rate: 0.3,
        clip_norm: None,
        weight_init_scale: 0.5,
        seed: seed.child("unused", 0),
    };
    let trainer = SgdTrainer { config: config.clone() };
    let adversary = LossThreshold::new(
        {
            let shadow = build_shadow(&pool, 24, 12, &config, &seed.child("shadow", 0), 6).unwrap();
            calibrate_s(&shadow.matrix, &shadow.labels, pool.classes, SmoothingMethod::LinearInterp).unwrap()
        },
        0.1,
    );

    let mut spec = GameSpec::new(GameVariant::FixedModel, 24, 100, seed.child("fm", 0));
    spec.fixed_dataset_seed = Some(seed.child("fixed-data", 0));
    spec.fixed_model_seed = Some(seed.child("fixed-model", 0));
    let t1 = play(&spec, &pool, &trainer, &adversary).unwrap();
    let fps: BTreeSet<u64> = t1.trials.iter().map(|t| t.model_fingerprint).collect();
    assert_eq!(fps.len(), 1, "fixed-model game produced {} distinct models", fps.len());

    let t2 = play(&spec, &pool, &trainer, &adversary).unwrap();
    let summarize = |t: &mia::games::Transcript| -> Vec<(u8, u8, u64, u64, u64)> {
        t.trials
            .iter()
            .map(|tr| (tr.challenge.secret_bit, tr.guess.bit, tr.model_fingerprint, tr.dataset_fingerprint_out, tr.dataset_fingerprint_in))
            .collect()
    };
    assert_eq!(summarize(&t1), summarize(&t2), "replay diverged");

    // Worst-case game: out-world and in-world datasets must be the
    // pinned base set and base + challenge record, every trial.
    let mut wc = GameSpec::new(GameVariant::FixedWorstCase, 24, 50, seed.child("wc", 0));
    wc.fixed_dataset_seed = Some(seed.child("wc-data", 0));
    wc.fixed_record_seed = Some(seed.child("wc-record", 0));
    let base = sample_dataset(&pool, 24, SampleMode::WithoutReplacement, &BTreeSet::new(), wc.fixed_dataset_seed.as_ref().unwrap()).unwrap();
    let t3 = play(&wc, &pool, &trainer, &adversary).unwrap();
    let rid = t3.trials[0].challenge.record.id;
    let with_record = Dataset::new(
        pool.id(),
        base.ids().iter().copied().chain([rid]).collect(),
    )
    .unwrap();
    for trial in &t3.trials {
        assert_eq!(trial.challenge.record.id, rid, "challenge record drifted");
        assert_eq!(trial.dataset_fingerprint_out, base.fingerprint(), "out-world dataset drifted");
        assert_eq!(trial.dataset_fingerprint_in, with_record.fingerprint(), "in-world dataset is not base + record");
    }

    verdict(
        "criterion 7 (fixed-model reuse, worst-case fingerprints, replay determinism)",
        true,
        format!("1 model over 100 trials; 50 worst-case trials differ by record {rid} only"),
    );
}

// ---------------------------------------------------------------------
// 8. Training internals: analytic gradients match central differences to
//    a relative 1e-4 on random probes, and gradient clipping caps every
//    applied update norm.
// ---------------------------------------------------------------------

#[test]
fn criterion_8_gradients_and_clipping() {
    let seed = SeedSpec::new(9008);
    let mut max_rel = 0.0f64;
    for probe in 0..20u64 {
        let mut rng = seed.child("probe", probe).rng();
        let dim = rng.gen_range(2..=6);
        let classes = rng.gen_range(2..=4).min(dim);
        let hidden = if probe % 2 == 0 { 0 } else { rng.gen_range(2..=5) };
        let pool = gen_population(dim, classes, 40, 1.0, &seed.child("pool", probe)).unwrap();
        let records: Vec<_> = pool.records()[..8].to_vec();

        let mut model = ToyModel::zeroed(dim, classes, hidden).unwrap();
        let params: Vec<f64> = (0..model.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        model.set_params(&params);

        let grad = batch_gradient(&model, &records).unwrap();
        let mut fd = vec![0.0; params.len()];
        for j in 0..params.len() {
            let h = 1e-5 * (1.0 + params[j].abs());
            let mut shifted = params.clone();
            shifted[j] = params[j] + h;
            model.set_params(&shifted);
            let up = batch_loss(&model, &records).unwrap();
            shifted[j] = params[j] - h;
            model.set_params(&shifted);
            let down = batch_loss(&model, &records).unwrap();
            fd[j] = (up - down) / (2.0 * h);
        }
        model.set_params(&params);

        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&fd).max(1e-12);
        max_rel = max_rel.max(rel);
    }
    assert!(max_rel <= 1e-4, "gradient relative error {max_rel:.2e}");

    // Clipping: raw norms exceed the cap somewhere, applied norms never.
    let pool = gen_population(6, 3, 400, 1.2, &seed.child("clip-pool", 0)).unwrap();
    let dataset = sample_dataset(&pool, 32, SampleMode::WithoutReplacement, &BTreeSet::new(), &seed.child("clip-data", 0)).unwrap();
    let clip = 0.5;
    let config = TrainConfig {
        hidden_width: 8,
        epochs: 10,
        batch_size: 8,
        learning_rate: 0.3,
        clip_norm: Some(clip),
        weight_init_scale: 1.0,
        seed: seed.child("clip-train", 0),
    };
    let (_, trace) = train_traced(&pool, &dataset, &config).unwrap();
    let worst_applied = trace.applied_grad_norms.iter().cloned().fold(0.0, f64::max);
    assert!(worst_applied <= clip + 1e-9, "applied gradient norm {worst_applied} above clip {clip}");
    assert!(
        trace.raw_grad_norms.iter().any(|&n| n > clip),
        "clip never engaged; raw norms all below {clip}",
    );

    verdict(
        "criterion 8 (gradient probes and clipping)",
        true,
        format!("max relative gradient error {max_rel:.1e}; applied norm cap {worst_applied:.3} <= {clip}"),
    );
}
