//! Deterministic mini-batch SGD for [`ToyModel`], plus knowledge
//! distillation onto soft labels.
//!
//! Everything downstream (shadow models, reference models, game trials)
//! funnels through [`train`], so determinism here makes whole pipelines
//! replayable: init weights come from the config seed's `("init", 0)`
//! child, the epoch-`e` shuffle from its `("epoch", e)` child, and the
//! trained model records a fingerprint of (dataset, config, seed).

use serde::{Deserialize, Serialize};

use super::model::{log_softmax, softmax, ToyModel};
use super::pool::{sample_dataset, PopulationPool, SampleMode};
use super::posterior::{posterior_sample, PosteriorConfig};
use crate::core::{Dataset, Record, SeedSpec};
use crate::error::{Error, Result};

/// Hyperparameters plus the training seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// 0 trains multinomial logistic regression.
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global L2 gradient clip. `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub weight_init_scale: f64,
    pub seed: SeedSpec,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width > 64 {
            return Err(Error::invalid(format!(
                "hidden_width {} above 64",
                self.hidden_width
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid(format!(
                "learning_rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::invalid(format!("clip_norm {c} must be positive")));
            }
        }
        if !self.weight_init_scale.is_finite() || self.weight_init_scale < 0.0 {
            return Err(Error::invalid(format!(
                "weight_init_scale {} must be finite and non-negative",
                self.weight_init_scale
            )));
        }
        Ok(())
    }

    fn content_hash(&self) -> u64 {
        let mut h = crate::core::SeedSpec::new(self.hidden_width as u64).derive();
        for part in [
            self.epochs as u64,
            self.batch_size as u64,
            self.learning_rate.to_bits(),
            self.clip_norm.map_or(u64::MAX, f64::to_bits),
            self.weight_init_scale.to_bits(),
            self.seed.derive(),
        ] {
            h = crate::core::seed_fold(h, part);
        }
        h
    }
}

/// Per-step diagnostics from a traced run.
#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    /// Global L2 norm of each applied update's gradient, after clipping.
    pub applied_grad_norms: Vec<f64>,
    /// Same, before clipping.
    pub raw_grad_norms: Vec<f64>,
    /// Mean training-set cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
}

enum Target<'a> {
    Hard(usize),
    Soft(&'a [f64]),
}

struct Example<'a> {
    features: &'a [f64],
    target: Target<'a>,
}

/// Trains on the dataset's records with hard labels.
pub fn train(pool: &PopulationPool, dataset: &Dataset, config: &TrainConfig) -> Result<ToyModel> {
    Ok(train_traced(pool, dataset, config)?.0)
}

/// [`train`] plus per-step gradient norms and per-epoch losses.
pub fn train_traced(
    pool: &PopulationPool,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(ToyModel, TrainTrace)> {
    let records = pool.materialize(dataset)?;
    if records.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let examples: Vec<Example> = records
        .iter()
        .map(|r| {
            if r.label >= pool.classes {
                return Err(Error::invalid(format!(
                    "record {} label {} outside pool classes {}",
                    r.id, r.label, pool.classes
                )));
            }
            Ok(Example {
                features: &r.features,
                target: Target::Hard(r.label),
            })
        })
        .collect::<Result<_>>()?;

    let (mut model, trace) = fit(pool.dim, pool.classes, &examples, config)?;
    let fp = crate::core::seed_fold(
        crate::core::seed_fold(0xA11D_17, dataset.fingerprint()),
        config.content_hash(),
    );
    model.set_fingerprint(fp);
    Ok((model, trace))
}

/// Teacher probability vectors for each record, in input order.
pub fn soft_label(model: &ToyModel, records: &[Record]) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| model.predict_proba(&r.features))
        .collect()
}

/// Trains one distilled model: draws a fresh size-`n` dataset from the
/// pool (seed child `("data", 0)`), soft-labels it with the teacher, and
/// fits a student on the full probability vectors (seed child
/// `("train", 0)` replaces the config seed).
pub fn distill(
    teacher: &ToyModel,
    pool: &PopulationPool,
    n: usize,
    config: &TrainConfig,
    seed: &SeedSpec,
) -> Result<ToyModel> {
    if n == 0 {
        return Err(Error::invalid("distillation set is empty (n = 0)"));
    }
    let dataset = sample_dataset(
        pool,
        n,
        SampleMode::WithoutReplacement,
        &std::collections::BTreeSet::new(),
        &seed.child("data", 0),
    )?;
    let mut cfg = config.clone();
    cfg.seed = seed.child("train", 0);
    distill_on(teacher, pool, &dataset, &cfg)
}

/// Distills onto a caller-chosen dataset. The out-world builders use
/// this for exclusion control over the distillation data; it is public
/// for the same reason [`train`] is.
pub fn distill_on(
    teacher: &ToyModel,
    pool: &PopulationPool,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<ToyModel> {
    let records = pool.materialize(dataset)?;
    if records.is_empty() {
        return Err(Error::invalid("distillation set is empty"));
    }
    if teacher.dim != pool.dim || teacher.classes != pool.classes {
        return Err(Error::invalid(
            "teacher shape does not match pool dimensions",
        ));
    }
    let soft: Vec<Vec<f64>> = records
        .iter()
        .map(|r| teacher.predict_proba(&r.features))
        .collect::<Result<_>>()?;
    let examples: Vec<Example> = records
        .iter()
        .zip(&soft)
        .map(|(r, q)| Example {
            features: &r.features,
            target: Target::Soft(q),
        })
        .collect();
    let (mut model, _) = fit(pool.dim, pool.classes, &examples, config)?;
    let fp = crate::core::seed_fold(
        crate::core::seed_fold(
            crate::core::seed_fold(0xD157_111, teacher.fingerprint()),
            dataset.fingerprint(),
        ),
        config.content_hash(),
    );
    model.set_fingerprint(fp);
    Ok(model)
}

fn fit(
    dim: usize,
    classes: usize,
    examples: &[Example],
    config: &TrainConfig,
) -> Result<(ToyModel, TrainTrace)> {
    config.validate()?;
    let mut rng = config.seed.child("init", 0).rng();
    let mut model = ToyModel::init(dim, classes, config.hidden_width, config.weight_init_scale, &mut rng)?;
    let mut trace = TrainTrace::default();
    let n = examples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.n_params()];

    for epoch in 0..config.epochs {
        let mut shuffle_rng = config.seed.child("epoch", epoch as u64).rng();
        for i in 0..n {
            let j = rand::Rng::gen_range(&mut shuffle_rng, i..n);
            order.swap(i, j);
        }
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                accumulate_gradient(&model, &examples[idx], &mut grad)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);

            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            trace.raw_grad_norms.push(norm);
            let applied_norm = match config.clip_norm {
                Some(clip) if norm > clip => {
                    let scale = clip / norm;
                    grad.iter_mut().for_each(|g| *g *= scale);
                    clip
                }
                _ => norm,
            };
            trace.applied_grad_norms.push(applied_norm);

            apply_update(&mut model, &grad, config.learning_rate);
        }
        // tanh and the max-shifted softmax keep values representable long
        // after the model is useless, so runaway weights are caught by
        // magnitude as well as by non-finiteness.
        let scale = model
            .params()
            .iter()
            .fold(0.0f64, |m, p| m.max(p.abs()));
        if !scale.is_finite() || scale > 1e100 {
            return Err(Error::Diverged {
                epoch,
                detail: format!("parameter magnitude {scale} after update"),
            });
        }
        let epoch_loss = mean_objective(&model, examples)?;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("non-finite training loss {epoch_loss}"),
            });
        }
        trace.epoch_losses.push(epoch_loss);
    }
    Ok((model, trace))
}

/// Mean unclamped cross-entropy of the batch under the model. This is
/// the exact objective whose gradient the trainer descends; the floored
/// per-record `loss` op is the reporting signal, not the objective.
pub fn batch_loss(model: &ToyModel, records: &[Record]) -> Result<f64> {
    let examples: Vec<Example> = records
        .iter()
        .map(|r| Example {
            features: &r.features,
            target: Target::Hard(r.label),
        })
        .collect();
    mean_objective(model, &examples)
}

/// Analytic gradient of [`batch_loss`], flattened in parameter order
/// (`w1`, `b1`, `w2`, `b2`). Exposed for gradient probes.
pub fn batch_gradient(model: &ToyModel, records: &[Record]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.n_params()];
    for r in records {
        let ex = Example {
            features: &r.features,
            target: Target::Hard(r.label),
        };
        accumulate_gradient(model, &ex, &mut grad)?;
    }
    let inv = 1.0 / records.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(grad)
}

fn mean_objective(model: &ToyModel, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let logits = model.logits(ex.features)?;
        let logp = log_softmax(&logits);
        total += match &ex.target {
            Target::Hard(y) => -logp[*y],
            Target::Soft(q) => -q.iter().zip(&logp).map(|(qi, li)| qi * li).sum::<f64>(),
        };
    }
    Ok(total / examples.len() as f64)
}

/// Backprop for one example into the flat gradient accumulator.
fn accumulate_gradient(model: &ToyModel, ex: &Example, grad: &mut [f64]) -> Result<()> {
    let x = ex.features;
    let hidden_acts = if model.hidden == 0 {
        Vec::new()
    } else {
        model.penultimate(x)?
    };
    let input: &[f64] = if model.hidden == 0 { x } else { &hidden_acts };

    let logits = {
        let in_dim = input.len();
        let mut l = vec![0.0; model.classes];
        for (k, lk) in l.iter_mut().enumerate() {
            let mut a = model.b2[k];
            for (w, xi) in model.w2[k * in_dim..(k + 1) * in_dim].iter().zip(input) {
                a += w * xi;
            }
            *lk = a;
        }
        l
    };
    let p = softmax(&logits);

    // d(loss)/d(logit_k) = p_k - q_k for both hard and soft targets.
    let mut dlogit = p;
    match &ex.target {
        Target::Hard(y) => {
            if *y >= model.classes {
                return Err(Error::invalid(format!(
                    "label {} outside model classes {}",
                    y, model.classes
                )));
            }
            dlogit[*y] -= 1.0;
        }
        Target::Soft(q) => {
            if q.len() != model.classes {
                return Err(Error::invalid("soft target length mismatch"));
            }
            for (d, qi) in dlogit.iter_mut().zip(q.iter()) {
                *d -= qi;
            }
        }
    }

    let in_dim = input.len();
    let (gw1, rest) = grad.split_at_mut(model.w1.len());
    let (gb1, rest) = rest.split_at_mut(model.b1.len());
    let (gw2, gb2) = rest.split_at_mut(model.w2.len());

    for k in 0..model.classes {
        for (j, xi) in input.iter().enumerate() {
            gw2[k * in_dim + j] += dlogit[k] * xi;
        }
        gb2[k] += dlogit[k];
    }

    if model.hidden > 0 {
        for i in 0..model.hidden {
            let mut dh = 0.0;
            for k in 0..model.classes {
                dh += model.w2[k * model.hidden + i] * dlogit[k];
            }
            let da = dh * (1.0 - hidden_acts[i] * hidden_acts[i]);
            for (j, xj) in x.iter().enumerate() {
                gw1[i * model.dim + j] += da * xj;
            }
            gb1[i] += da;
        }
    }
    Ok(())
}

fn apply_update(model: &mut ToyModel, grad: &[f64], lr: f64) {
    let mut i = 0;
    for dst in model
        .w1
        .iter_mut()
        .chain(model.b1.iter_mut())
        .chain(model.w2.iter_mut())
        .chain(model.b2.iter_mut())
    {
        *dst -= lr * grad[i];
        i += 1;
    }
}

/// A training algorithm the games can call per trial with a fresh seed.
pub trait ModelTrainer: Sync {
    fn train_model(
        &self,
        pool: &PopulationPool,
        dataset: &Dataset,
        seed: &SeedSpec,
    ) -> Result<ToyModel>;
}

/// SGD training; the passed seed replaces the config's.
pub struct SgdTrainer {
    pub config: TrainConfig,
}

impl ModelTrainer for SgdTrainer {
    fn train_model(
        &self,
        pool: &PopulationPool,
        dataset: &Dataset,
        seed: &SeedSpec,
    ) -> Result<ToyModel> {
        let mut cfg = self.config.clone();
        cfg.seed = seed.clone();
        train(pool, dataset, &cfg)
    }
}

/// Posterior sampling as the "training" algorithm; the passed seed
/// replaces the config's.
pub struct PosteriorTrainer {
    pub config: PosteriorConfig,
}

impl ModelTrainer for PosteriorTrainer {
    fn train_model(
        &self,
        pool: &PopulationPool,
        dataset: &Dataset,
        seed: &SeedSpec,
    ) -> Result<ToyModel> {
        let mut cfg = self.config.clone();
        cfg.seed = seed.clone();
        posterior_sample(pool, dataset, &cfg)
    }
}
