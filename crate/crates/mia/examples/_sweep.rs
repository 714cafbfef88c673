use std::collections::{BTreeMap, BTreeSet};
use mia::attacks::{decide_with_loss, AttackKind};
use mia::core::{Dataset, SeedSpec};
use mia::eval::roc_score_sweep;
use mia::signals::{build_distilled_batch, build_population, build_reference_batch};
use mia::synth::{gen_population, train, PopulationPool, TrainConfig};
use mia::thresholds::{calibrate_d, calibrate_p, calibrate_r, calibrate_s, SmoothingMethod};
use rand::Rng;

fn stratified_ids(pool: &PopulationPool, per_class: usize) -> Vec<u64> {
    let mut counts = vec![0usize; pool.classes];
    let mut out = Vec::new();
    for r in pool.records() {
        if counts[r.label] < per_class {
            counts[r.label] += 1;
            out.push(r.id);
        }
    }
    out
}

fn quartiles(mut v: Vec<f64>) -> (f64, f64, f64) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| v[((v.len() - 1) as f64 * p) as usize];
    (q(0.25), q(0.5), q(0.75))
}

fn run(root: u64, noise: f64, lr: f64, batch: usize) {
    const DIST_N: usize = 128;
    const TARGETS: usize = 10;
    const N: usize = 64;
    let seed = SeedSpec::new(root);
    let pool = gen_population(16, 4, 3000, noise, &seed.child("pool", 0)).unwrap();
    let config = TrainConfig {
        hidden_width: 32, epochs: 200, batch_size: batch, learning_rate: lr,
        clip_norm: None, weight_init_scale: 0.8, seed: seed.child("u", 0),
    };
    let method = SmoothingMethod::LinearInterp;
    let eval_pool = stratified_ids(&pool, 120);
    let shadow_w = build_reference_batch(&pool, &eval_pool, 100, N, &config, &seed.child("sw", 0)).unwrap();
    let out_world = build_reference_batch(&pool, &eval_pool, 100, N, &config, &seed.child("ow", 0)).unwrap();
    let s_tfn = calibrate_s(&shadow_w.matrix, &shadow_w.labels, pool.classes, method).unwrap();
    let r_tfn = calibrate_r(&out_world.matrix, method).unwrap();
    let eval_set: BTreeSet<u64> = eval_pool.iter().copied().collect();
    let filler: Vec<u64> = pool.records().iter().map(|r| r.id).filter(|id| !eval_set.contains(id)).collect();

    let mut conf: BTreeMap<(AttackKind, u64), Vec<f64>> = BTreeMap::new();
    let mut bits: Vec<u8> = Vec::new();
    let mut mem_losses = Vec::new();
    let mut non_losses = Vec::new();
    for t in 0..TARGETS {
        let members: Vec<u64> = eval_pool[t * 24..(t + 1) * 24].to_vec();
        let nonmembers: Vec<u64> = eval_pool[TARGETS * 24 + t * 24..TARGETS * 24 + (t + 1) * 24].to_vec();
        let mut rng = seed.child("filler", t as u64).rng();
        let mut ids = members.clone();
        while ids.len() < N {
            let c = filler[rng.gen_range(0..filler.len())];
            if !ids.contains(&c) { ids.push(c); }
        }
        let dataset = Dataset::new(pool.id(), ids).unwrap();
        let target = train(&pool, &dataset, &TrainConfig { seed: seed.child("t", t as u64), ..config.clone() }).unwrap();
        let population = build_population(&target, &dataset, &pool, 20, &seed.child("pop", t as u64)).unwrap();
        let p_tfn = calibrate_p(&population.matrix, method).unwrap();
        let eval_ids: Vec<u64> = members.iter().chain(&nonmembers).copied().collect();
        let students = build_distilled_batch(&target, &pool, &eval_ids, 20, DIST_N, &config, &seed.child("st", t as u64)).unwrap();
        let d_tfn = calibrate_d(&BTreeMap::from([(target.id(), students.matrix)]), method).unwrap();
        for (ids, bit) in [(&members, 1u8), (&nonmembers, 0u8)] {
            for &id in ids.iter() {
                let record = pool.record(id).unwrap();
                let loss = target.loss(record).unwrap();
                if bit == 1 { mem_losses.push(loss) } else { non_losses.push(loss) }
                bits.push(bit);
                for (kind, tfn) in [(AttackKind::S, &s_tfn), (AttackKind::P, &p_tfn), (AttackKind::R, &r_tfn), (AttackKind::D, &d_tfn)] {
                    for pct in [10u64, 15u64, 25u64] {
                        let a = pct as f64 / 100.0;
                        conf.entry((kind, pct)).or_default()
                            .push(decide_with_loss(tfn, &target.id(), id, record.label, loss, a).unwrap().confidence);
                    }
                }
            }
        }
    }
    let (mq1, mq2, mq3) = quartiles(mem_losses);
    let (nq1, nq2, nq3) = quartiles(non_losses);
    println!("noise {noise} lr {lr} batch {batch}: member loss [{mq1:.2e} {mq2:.2e} {mq3:.2e}]  non-member [{nq1:.2} {nq2:.2} {nq3:.2}]");
    for pct in [10u64, 15u64, 25u64] {
        let g = |k: AttackKind| roc_score_sweep(&conf[&(k, pct)], &bits).unwrap().auc();
        let (s, p, r, d) = (g(AttackKind::S), g(AttackKind::P), g(AttackKind::R), g(AttackKind::D));
        println!("  alpha 0.{pct:02}: S {s:.3} P {p:.3} R {r:.3} D {d:.3}  (R-S {:+.3}, |S-P| {:.3}, D-R {:+.3})", r - s, (s - p).abs(), d - r);
    }
}

fn main() {
    for (noise, lr, batch) in [
        (1.2, 0.1, 64),
        
    ] {
        for root in [101, 202, 303] { run(root, noise, lr, batch); }
    }
}
