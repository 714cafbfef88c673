//! Inference games: challenger-vs-adversary experiments whose fixed-vs-
//! fresh seed choices decide which kind of leakage the success rate
//! measures.
//!
//! Four variants. AverageAll redraws everything per trial; FixedModel
//! pins one dataset and model; FixedRecord pins the challenge record and
//! retrains per trial with and without it; FixedWorstCase pins both the
//! dataset and the record so only training randomness varies.
//!
//! Seed discipline per trial `t` under the spec's root seed:
//! coin `trial.t/coin.0`, dataset `trial.t/data.0`, training
//! `trial.t/train.0`, member pick `trial.t/member.0`, fresh non-member
//! `trial.t/fresh.0`. Fixed artifacts use the spec's dedicated seeds, so
//! a transcript is reproducible from the spec alone.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use crate::core::{Dataset, Record, SeedSpec};
use crate::error::{Error, Result};
use crate::synth::{sample_dataset, ModelTrainer, PopulationPool, SampleMode, ToyModel};
use crate::thresholds::ThresholdFn;

/// Which challenger components stay fixed across trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GameVariant {
    /// Fresh dataset, model, and record every trial.
    AverageAll,
    /// One dataset and one trained model, reused in every trial.
    FixedModel,
    /// One record; datasets and models are retrained per trial.
    FixedRecord,
    /// One record and one dataset; only training seeds vary.
    FixedWorstCase,
}

impl GameVariant {
    pub const ALL: [GameVariant; 4] = [
        GameVariant::AverageAll,
        GameVariant::FixedModel,
        GameVariant::FixedRecord,
        GameVariant::FixedWorstCase,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GameVariant::AverageAll => "average_all",
            GameVariant::FixedModel => "fixed_model",
            GameVariant::FixedRecord => "fixed_record",
            GameVariant::FixedWorstCase => "fixed_worst_case",
        }
    }

    pub fn parse(s: &str) -> Option<GameVariant> {
        Some(match s {
            "average_all" => GameVariant::AverageAll,
            "fixed_model" => GameVariant::FixedModel,
            "fixed_record" => GameVariant::FixedRecord,
            "fixed_worst_case" => GameVariant::FixedWorstCase,
            _ => return None,
        })
    }
}

impl std::fmt::Display for GameVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full description of a game: variant, sizes, and every seed the
/// challenger may use.
#[derive(Clone, Debug)]
pub struct GameSpec {
    pub variant: GameVariant,
    /// Training-set size drawn by the challenger.
    pub n: usize,
    pub trials: usize,
    pub root_seed: SeedSpec,
    /// Required by FixedModel and FixedWorstCase.
    pub fixed_dataset_seed: Option<SeedSpec>,
    /// Required by FixedModel.
    pub fixed_model_seed: Option<SeedSpec>,
    /// Required by FixedRecord and FixedWorstCase, unless
    /// `fixed_record_id` names the record explicitly.
    pub fixed_record_seed: Option<SeedSpec>,
    /// Explicit challenge record, overriding the seeded draw.
    pub fixed_record_id: Option<u64>,
}

impl GameSpec {
    /// A spec with only the always-required fields; fixed seeds unset.
    pub fn new(variant: GameVariant, n: usize, trials: usize, root_seed: SeedSpec) -> Self {
        GameSpec {
            variant,
            n,
            trials,
            root_seed,
            fixed_dataset_seed: None,
            fixed_model_seed: None,
            fixed_record_seed: None,
            fixed_record_id: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("game requires a positive training-set size n"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("game requires at least one trial"));
        }
        let need = |field: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{} requires {field}",
                    self.variant.as_str()
                )))
            }
        };
        match self.variant {
            GameVariant::AverageAll => {}
            GameVariant::FixedModel => {
                need("fixed_dataset_seed", self.fixed_dataset_seed.is_some())?;
                need("fixed_model_seed", self.fixed_model_seed.is_some())?;
            }
            GameVariant::FixedRecord => {
                need(
                    "fixed_record_seed (or an explicit fixed_record_id)",
                    self.fixed_record_seed.is_some() || self.fixed_record_id.is_some(),
                )?;
            }
            GameVariant::FixedWorstCase => {
                need("fixed_dataset_seed", self.fixed_dataset_seed.is_some())?;
                need(
                    "fixed_record_seed (or an explicit fixed_record_id)",
                    self.fixed_record_seed.is_some() || self.fixed_record_id.is_some(),
                )?;
            }
        }
        Ok(())
    }
}

/// What the adversary sees in one trial, plus the secret bit for scoring.
/// Honest adversaries must not read `secret_bit`; the oracle adversary
/// exists to calibrate the harness itself.
#[derive(Clone, Debug)]
pub struct Challenge {
    pub model: ToyModel,
    pub record: Record,
    pub secret_bit: u8,
    pub trial_index: usize,
}

/// An adversary's answer. Loss and threshold are carried when the
/// adversary computed them, so transcripts can be exported with the
/// evidence behind each bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Guess {
    pub bit: u8,
    pub loss: Option<f64>,
    pub threshold: Option<f64>,
}

impl Guess {
    pub fn bit(bit: u8) -> Guess {
        Guess {
            bit,
            loss: None,
            threshold: None,
        }
    }
}

/// A decision rule mapping a challenge to a membership bit. Pure: the
/// same challenge must always produce the same guess.
pub trait Adversary: Sync {
    fn decide(&self, challenge: &Challenge) -> Result<Guess>;
}

/// Reads the secret bit. Calibration tool: any correct harness scores it
/// at accuracy 1.
pub struct Oracle;

impl Adversary for Oracle {
    fn decide(&self, challenge: &Challenge) -> Result<Guess> {
        Ok(Guess::bit(challenge.secret_bit))
    }
}

/// Ignores the challenge and answers a seeded fair coin per trial.
pub struct CoinFlip {
    pub seed: SeedSpec,
}

impl Adversary for CoinFlip {
    fn decide(&self, challenge: &Challenge) -> Result<Guess> {
        let bit = (self.seed.child("guess", challenge.trial_index as u64).derive() & 1) as u8;
        Ok(Guess::bit(bit))
    }
}

/// The calibrated loss-threshold rule: member iff the challenge loss is
/// at or below the threshold for the trial's record at tolerance α.
pub struct LossThreshold {
    pub tfn: ThresholdFn,
    pub alpha: f64,
    /// Model id used for table lookups when the threshold function is
    /// model-dependent. Label- and record-keyed kinds ignore it.
    pub target_id: String,
}

impl LossThreshold {
    pub fn new(tfn: ThresholdFn, alpha: f64) -> LossThreshold {
        LossThreshold {
            tfn,
            alpha,
            target_id: "challenge-target".into(),
        }
    }
}

impl Adversary for LossThreshold {
    fn decide(&self, challenge: &Challenge) -> Result<Guess> {
        let loss = challenge.model.loss(&challenge.record)?;
        let decision = crate::attacks::decide_with_loss(
            &self.tfn,
            &self.target_id,
            challenge.record.id,
            challenge.record.label,
            loss,
            self.alpha,
        )?;
        Ok(Guess {
            bit: decision.predicted_bit,
            loss: Some(loss),
            threshold: Some(decision.threshold),
        })
    }
}

/// One played trial. The two dataset fingerprints describe the training
/// sets the challenger would use under either bit; for AverageAll and
/// FixedModel they coincide (one dataset serves both worlds), for
/// FixedRecord and FixedWorstCase they differ by exactly the record.
#[derive(Clone, Debug)]
pub struct Trial {
    pub challenge: Challenge,
    pub guess: Guess,
    pub correct: bool,
    pub model_fingerprint: u64,
    pub dataset_fingerprint_out: u64,
    pub dataset_fingerprint_in: u64,
}

/// Accuracy and the per-bit rates. A rate over zero trials is undefined
/// and reported as absent, never as 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub n_member: usize,
    pub n_nonmember: usize,
    pub n_correct: usize,
}

/// Everything a game run produced, in trial-index order.
#[derive(Clone, Debug)]
pub struct Transcript {
    pub spec: GameSpec,
    pub trials: Vec<Trial>,
    pub summary: Score,
}

/// Summarizes a transcript. Positive = member: TPR counts b=1 trials
/// answered 1, FPR counts b=0 trials answered 1.
pub fn score(trials: &[Trial]) -> Result<Score> {
    if trials.is_empty() {
        return Err(Error::invalid("cannot score an empty transcript"));
    }
    let mut n_member = 0usize;
    let mut n_nonmember = 0usize;
    let mut hits_member = 0usize;
    let mut false_member = 0usize;
    let mut n_correct = 0usize;
    for trial in trials {
        if trial.challenge.secret_bit == 1 {
            n_member += 1;
            if trial.guess.bit == 1 {
                hits_member += 1;
            }
        } else {
            n_nonmember += 1;
            if trial.guess.bit == 1 {
                false_member += 1;
            }
        }
        if trial.correct {
            n_correct += 1;
        }
    }
    Ok(Score {
        accuracy: n_correct as f64 / trials.len() as f64,
        tpr: (n_member > 0).then(|| hits_member as f64 / n_member as f64),
        fpr: (n_nonmember > 0).then(|| false_member as f64 / n_nonmember as f64),
        n_member,
        n_nonmember,
        n_correct,
    })
}

/// Per-variant artifacts built once before the trial loop.
enum Setup {
    Fresh,
    Model { dataset: Dataset, model: ToyModel },
    Record { record: Record },
    WorstCase { dataset: Dataset, record: Record },
}

fn coin(node: &SeedSpec) -> u8 {
    (node.child("coin", 0).derive() & 1) as u8
}

fn uniform_member(pool: &PopulationPool, dataset: &Dataset, seed: &SeedSpec) -> Result<Record> {
    let idx = seed.rng().gen_range(0..dataset.len());
    Ok(pool.record(dataset.ids()[idx])?.clone())
}

/// Rejection-samples a pool record outside `dataset`, making the
/// non-member ground truth exact rather than merely high-probability.
fn fresh_nonmember(pool: &PopulationPool, dataset: &Dataset, seed: &SeedSpec) -> Result<Record> {
    if pool.len() <= dataset.len() {
        return Err(Error::invalid(format!(
            "pool of {} records has no fresh non-members outside a dataset of {}",
            pool.len(),
            dataset.len()
        )));
    }
    let mut rng = seed.rng();
    for _ in 0..10_000 {
        let candidate = &pool.records()[rng.gen_range(0..pool.len())];
        if !dataset.contains(candidate.id) {
            return Ok(candidate.clone());
        }
    }
    Err(Error::Numeric(
        "rejection sampling failed to leave the dataset after 10000 draws".into(),
    ))
}

fn fixed_record(spec: &GameSpec, pool: &PopulationPool, avoid: Option<&Dataset>) -> Result<Record> {
    if let Some(id) = spec.fixed_record_id {
        let record = pool.record(id)?.clone();
        if let Some(dataset) = avoid {
            if dataset.contains(id) {
                return Err(Error::invalid(format!(
                    "fixed record {id} lies inside the fixed dataset; choose another record"
                )));
            }
        }
        return Ok(record);
    }
    let seed = spec.fixed_record_seed.as_ref().expect("validated");
    match avoid {
        None => {
            let idx = seed.rng().gen_range(0..pool.len());
            Ok(pool.records()[idx].clone())
        }
        Some(dataset) => fresh_nonmember(pool, dataset, seed),
    }
}

fn run_trial(
    spec: &GameSpec,
    pool: &PopulationPool,
    trainer: &dyn ModelTrainer,
    adversary: &dyn Adversary,
    setup: &Setup,
    t: usize,
) -> Result<Trial> {
    let node = spec.root_seed.child("trial", t as u64);
    let b = coin(&node);
    let none = BTreeSet::new();

    let (model, record, fp_out, fp_in) = match setup {
        Setup::Fresh => {
            let dataset = sample_dataset(
                pool,
                spec.n,
                SampleMode::WithoutReplacement,
                &none,
                &node.child("data", 0),
            )?;
            let model = trainer.train_model(pool, &dataset, &node.child("train", 0))?;
            let record = if b == 1 {
                uniform_member(pool, &dataset, &node.child("member", 0))?
            } else {
                fresh_nonmember(pool, &dataset, &node.child("fresh", 0))?
            };
            let fp = dataset.fingerprint();
            (model, record, fp, fp)
        }
        Setup::Model { dataset, model } => {
            let record = if b == 1 {
                uniform_member(pool, dataset, &node.child("member", 0))?
            } else {
                fresh_nonmember(pool, dataset, &node.child("fresh", 0))?
            };
            let fp = dataset.fingerprint();
            (model.clone(), record, fp, fp)
        }
        Setup::Record { record } => {
            let exclude: BTreeSet<u64> = [record.id].into();
            let base = sample_dataset(
                pool,
                spec.n,
                SampleMode::WithoutReplacement,
                &exclude,
                &node.child("data", 0),
            )?;
            let with = base.with_record(record.id)?;
            let trained_on = if b == 1 { &with } else { &base };
            let model = trainer.train_model(pool, trained_on, &node.child("train", 0))?;
            (model, record.clone(), base.fingerprint(), with.fingerprint())
        }
        Setup::WorstCase { dataset, record } => {
            let with = dataset.with_record(record.id)?;
            let trained_on = if b == 1 { &with } else { dataset };
            let model = trainer.train_model(pool, trained_on, &node.child("train", 0))?;
            (
                model,
                record.clone(),
                dataset.fingerprint(),
                with.fingerprint(),
            )
        }
    };

    let challenge = Challenge {
        model,
        record,
        secret_bit: b,
        trial_index: t,
    };
    let guess = adversary.decide(&challenge)?;
    if guess.bit > 1 {
        return Err(Error::invalid(format!(
            "adversary answered {}, not a bit",
            guess.bit
        )));
    }
    let correct = guess.bit == b;
    let model_fingerprint = challenge.model.fingerprint();
    Ok(Trial {
        challenge,
        guess,
        correct,
        model_fingerprint,
        dataset_fingerprint_out: fp_out,
        dataset_fingerprint_in: fp_in,
    })
}

/// Plays `spec.trials` independent trials and scores them. Any trial
/// failure (training divergence, adversary error) aborts the whole game,
/// naming the trial; silently skipped trials would bias the rates.
pub fn play(
    spec: &GameSpec,
    pool: &PopulationPool,
    trainer: &dyn ModelTrainer,
    adversary: &dyn Adversary,
) -> Result<Transcript> {
    spec.validate()?;
    let setup = match spec.variant {
        GameVariant::AverageAll => Setup::Fresh,
        GameVariant::FixedModel => {
            let dataset = sample_dataset(
                pool,
                spec.n,
                SampleMode::WithoutReplacement,
                &BTreeSet::new(),
                spec.fixed_dataset_seed.as_ref().expect("validated"),
            )?;
            let model = trainer.train_model(
                pool,
                &dataset,
                spec.fixed_model_seed.as_ref().expect("validated"),
            )?;
            Setup::Model { dataset, model }
        }
        GameVariant::FixedRecord => Setup::Record {
            record: fixed_record(spec, pool, None)?,
        },
        GameVariant::FixedWorstCase => {
            let dataset = sample_dataset(
                pool,
                spec.n,
                SampleMode::WithoutReplacement,
                &BTreeSet::new(),
                spec.fixed_dataset_seed.as_ref().expect("validated"),
            )?;
            let record = fixed_record(spec, pool, Some(&dataset))?;
            Setup::WorstCase { dataset, record }
        }
    };

    let trials: Vec<Trial> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(spec, pool, trainer, adversary, &setup, t)
                .map_err(|e| Error::invalid(format!("trial {t}: {e}")))
        })
        .collect::<Result<_>>()?;

    let summary = score(&trials)?;
    Ok(Transcript {
        spec: spec.clone(),
        trials,
        summary,
    })
}
