//! The commands behind the binary's subcommands. Each command derives
//! everything it needs from the config and the files earlier commands
//! wrote, so a full pipeline is reproducible byte for byte: rerunning
//! any command with the same config rewrites identical files.
//!
//! Artifact layout under the output directory:
//!   pool.csv                  synthetic population (one record per row)
//!   target.json               target dataset ids + trained parameters
//!   fingerprints.csv          model and dataset fingerprints
//!   signals_<kind>.csv        out-world loss matrices (+ .membership)
//!   decisions_<kind>.csv      per-record, per-alpha membership calls
//!   roc_alpha_<kind>.csv      threshold sweep over the default grid
//!   roc_score_<kind>.csv      confidence sweep at the middle alpha
//!   agreement.csv             pairwise attack agreement rates
//!   histograms.csv            target losses, members vs non-members
//!   summary.txt               plain-text report of the above
//!   transcript.csv            inference-game trials
//!   lemma1.csv                loss attack vs exact likelihood ratio

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{decide_with_loss, AttackKind};
use crate::cli::config::ExperimentConfig;
use crate::cli::format;
use crate::core::{Dataset, SeedSpec};
use crate::error::{Error, Result};
use crate::eval::{
    agreement_table, default_alpha_grid, lemma1_experiment, loss_histogram, roc_alpha_sweep,
    roc_score_sweep, EvalChallenge, Lemma1Config, RocCurve,
};
use crate::games::{play, GameSpec, GameVariant, LossThreshold};
use crate::signals::{
    build_distilled_batch, build_leave_one_out_batch, build_population, build_reference_batch,
    build_shadow, ingest, OutWorldSet,
};
use crate::synth::{gen_population, sample_dataset, train, PopulationPool, SampleMode, ToyModel};
use crate::thresholds::{
    calibrate_d, calibrate_l, calibrate_p, calibrate_r, calibrate_s, ThresholdFn,
};

fn kind_slug(kind: AttackKind) -> &'static str {
    match kind {
        AttackKind::S => "shadow",
        AttackKind::P => "population",
        AttackKind::R => "reference",
        AttackKind::D => "distilled",
        AttackKind::L => "loo",
    }
}

/// Everything later stages share, derived once from the config.
struct Stage<'a> {
    config: &'a ExperimentConfig,
    hash: String,
    out: PathBuf,
    root: SeedSpec,
    pool: PopulationPool,
}

impl<'a> Stage<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Stage<'a>> {
        let p = config.population()?;
        let out = config.out_dir()?.to_path_buf();
        std::fs::create_dir_all(&out)?;
        let root = config.root_seed();
        let pool = gen_population(
            p.dim,
            p.classes,
            p.pool_size,
            p.class_scale,
            &root.child("pool", 0),
        )?;
        Ok(Stage {
            config,
            hash: config.hash(),
            out,
            root,
            pool,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The file an earlier command must have written; the error says
    /// which command to run.
    fn upstream(&self, name: &str, command: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} not found; run the {command} command first",
                path.display()
            )));
        }
        Ok(path)
    }

    fn target_dataset(&self) -> Result<Dataset> {
        sample_dataset(
            &self.pool,
            self.config.training()?.n,
            SampleMode::WithoutReplacement,
            &std::collections::BTreeSet::new(),
            &self.root.child("target-data", 0),
        )
    }

    /// Stratified evaluation records: `eval_per_class` members per class
    /// drawn from the target dataset and as many fresh non-members from
    /// the rest of the pool. Members come first in the combined order.
    fn eval_split(&self, dataset: &Dataset) -> Result<(Vec<u64>, Vec<u64>)> {
        let per_class = self.config.attack()?.eval_per_class;
        let classes = self.pool.classes;
        let members = self.stratified(
            dataset.ids().to_vec(),
            per_class,
            classes,
            "target dataset",
            &self.root.child("eval-members", 0),
        )?;
        let rest: Vec<u64> = (0..self.pool.len() as u64)
            .filter(|id| !dataset.contains(*id))
            .collect();
        let nonmembers = self.stratified(
            rest,
            per_class,
            classes,
            "pool remainder",
            &self.root.child("eval-nonmembers", 0),
        )?;
        Ok((members, nonmembers))
    }

    fn stratified(
        &self,
        candidates: Vec<u64>,
        per_class: usize,
        classes: usize,
        source: &str,
        seed: &SeedSpec,
    ) -> Result<Vec<u64>> {
        let mut by_class: BTreeMap<usize, Vec<u64>> = (0..classes).map(|y| (y, vec![])).collect();
        for id in candidates {
            by_class
                .get_mut(&self.pool.record(id)?.label)
                .expect("labels below class count")
                .push(id);
        }
        let mut out = Vec::with_capacity(classes * per_class);
        for (y, mut ids) in by_class {
            if ids.len() < per_class {
                return Err(Error::Config(format!(
                    "{source} holds {} records of class {y}, need {per_class} for evaluation",
                    ids.len()
                )));
            }
            ids.sort_unstable();
            let mut rng = seed.child("class", y as u64).rng();
            for i in 0..per_class {
                let j = rng.gen_range(i..ids.len());
                ids.swap(i, j);
            }
            out.extend_from_slice(&ids[..per_class]);
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    classes: usize,
    hidden: usize,
    params: Vec<f64>,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct TargetFile {
    config_hash: String,
    pool_id: String,
    dataset_ids: Vec<u64>,
    dataset_fingerprint: String,
    model: ModelFile,
}

fn read_target(stage: &Stage) -> Result<(Dataset, ToyModel)> {
    let path = stage.upstream("target.json", "train")?;
    let text = std::fs::read_to_string(&path)?;
    let file: TargetFile = serde_json::from_str(&text)?;
    if file.pool_id != stage.pool.id() {
        return Err(Error::Config(format!(
            "{} was trained on pool {}, config generates {}",
            path.display(),
            file.pool_id,
            stage.pool.id()
        )));
    }
    let dataset = Dataset::new(file.pool_id, file.dataset_ids)?;
    let mut model = ToyModel::zeroed(file.model.dim, file.model.classes, file.model.hidden)?;
    if file.model.params.len() != model.n_params() {
        return Err(Error::Config(format!(
            "{}: {} parameters for a {}-parameter model",
            path.display(),
            file.model.params.len(),
            model.n_params()
        )));
    }
    model.set_params(&file.model.params);
    let fp = u64::from_str_radix(&file.model.fingerprint, 16).map_err(|_| {
        Error::Config(format!(
            "{}: fingerprint {:?} is not 16 hex digits",
            path.display(),
            file.model.fingerprint
        ))
    })?;
    model.set_fingerprint(fp);
    Ok((dataset, model))
}

/// Generates the population and writes it as one record per row.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let path = stage.path("pool.csv");
    let dim = stage.pool.dim;
    let feat_cols: Vec<String> = (0..dim).map(|j| format!("feat_{j}")).collect();
    let header = format!("record_id,label,{}", feat_cols.join(","));
    let rows: Vec<String> = stage
        .pool
        .records()
        .iter()
        .map(|r| {
            let feats: Vec<String> = r.features.iter().map(|x| format!("{x}")).collect();
            format!("{},{},{}", r.id, r.label, feats.join(","))
        })
        .collect();
    format::write_table(
        &path,
        &[("config", stage.hash.clone()), ("pool", stage.pool.id().to_string())],
        &header,
        &rows,
    )?;
    Ok(vec![path])
}

/// Trains the target model on a fresh dataset and records both.
pub fn cmd_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let dataset = stage.target_dataset()?;
    let train_config = config.train_config(stage.root.child("target-train", 0))?;
    let model = train(&stage.pool, &dataset, &train_config)?;

    let target_path = stage.path("target.json");
    let file = TargetFile {
        config_hash: stage.hash.clone(),
        pool_id: stage.pool.id().to_string(),
        dataset_ids: dataset.ids().to_vec(),
        dataset_fingerprint: dataset.fingerprint_hex(),
        model: ModelFile {
            dim: model.dim,
            classes: model.classes,
            hidden: model.hidden,
            params: model.params(),
            fingerprint: model.id(),
        },
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(&target_path, text)?;

    let fp_path = stage.path("fingerprints.csv");
    format::write_table(
        &fp_path,
        &[("config", stage.hash.clone())],
        "model_id,model_fingerprint,dataset_fingerprint,dataset_len",
        &[format!(
            "target,{},{},{}",
            model.id(),
            dataset.fingerprint_hex(),
            dataset.len()
        )],
    )?;
    Ok(vec![target_path, fp_path])
}

/// Builds one out-world loss matrix per configured attack kind.
pub fn cmd_signals(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let attack = config.attack()?;
    let training = config.training()?;
    let (dataset, model) = read_target(&stage)?;
    let (members, nonmembers) = stage.eval_split(&dataset)?;
    let eval_ids: Vec<u64> = members.iter().chain(&nonmembers).copied().collect();
    // The builders draw their own per-model seeds; the seed on this
    // config is never used.
    let train_config = config.train_config(stage.root.child("never-used", 0))?;

    let mut written = Vec::new();
    for &kind in &attack.kinds {
        let set = match kind {
            AttackKind::S => build_shadow(
                &stage.pool,
                training.n,
                attack.n_shadow,
                &train_config,
                &stage.root.child("signals-shadow", 0),
                attack.eval_per_class,
            )?,
            AttackKind::P => build_population(
                &model,
                &dataset,
                &stage.pool,
                attack.m_per_class,
                &stage.root.child("signals-population", 0),
            )?,
            AttackKind::R => build_reference_batch(
                &stage.pool,
                &eval_ids,
                attack.n_reference,
                training.n,
                &train_config,
                &stage.root.child("signals-reference", 0),
            )?,
            AttackKind::D => build_distilled_batch(
                &model,
                &stage.pool,
                &eval_ids,
                attack.n_distilled,
                training.n,
                &train_config,
                &stage.root.child("signals-distilled", 0),
            )?,
            AttackKind::L => build_leave_one_out_batch(
                &stage.pool,
                &dataset,
                &eval_ids,
                attack.n_loo(),
                &train_config,
                &stage.root.child("signals-loo", 0),
            )?,
        };
        let path = stage.path(&format!("signals_{}.csv", kind_slug(kind)));
        format::write_matrix_csv(&set, &path, Some(&stage.hash))?;
        written.push(path);
    }
    Ok(written)
}

fn load_signals(stage: &Stage, kind: AttackKind) -> Result<OutWorldSet> {
    let path = stage.upstream(&format!("signals_{}.csv", kind_slug(kind)), "signals")?;
    ingest(&path)
}

fn calibrate(
    stage: &Stage,
    kind: AttackKind,
    model: &ToyModel,
) -> Result<ThresholdFn> {
    let attack = stage.config.attack()?;
    let set = load_signals(stage, kind)?;
    match kind {
        AttackKind::S => calibrate_s(&set.matrix, &set.labels, stage.pool.classes, attack.method),
        AttackKind::P => calibrate_p(&set.matrix, attack.method),
        AttackKind::R => calibrate_r(&set.matrix, attack.method),
        AttackKind::D => calibrate_d(
            &BTreeMap::from([(model.id(), set.matrix)]),
            attack.method,
        ),
        AttackKind::L => calibrate_l(
            &BTreeMap::from([(model.id(), set.matrix)]),
            attack.method,
        ),
    }
}

/// The target's loss on every evaluation record, members first.
fn target_losses(
    stage: &Stage,
    model: &ToyModel,
    members: &[u64],
    nonmembers: &[u64],
) -> Result<Vec<(u64, usize, u8, f64)>> {
    let mut out = Vec::with_capacity(members.len() + nonmembers.len());
    for (ids, bit) in [(members, 1u8), (nonmembers, 0u8)] {
        for &id in ids {
            let record = stage.pool.record(id)?;
            out.push((id, record.label, bit, model.loss(record)?));
        }
    }
    Ok(out)
}

/// Calibrates each configured attack and writes its per-alpha calls on
/// the evaluation records.
pub fn cmd_attack(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let attack = config.attack()?;
    let (dataset, model) = read_target(&stage)?;
    let (members, nonmembers) = stage.eval_split(&dataset)?;
    let evals = target_losses(&stage, &model, &members, &nonmembers)?;

    let mut written = Vec::new();
    for &kind in &attack.kinds {
        let tfn = calibrate(&stage, kind, &model)?;
        let mut rows = Vec::with_capacity(evals.len() * attack.alphas.len());
        for &(id, label, member, loss) in &evals {
            for &alpha in &attack.alphas {
                let d = decide_with_loss(&tfn, &model.id(), id, label, loss, alpha)?;
                rows.push(format!(
                    "{id},{label},{member},{alpha},{loss},{},{},{}",
                    d.threshold, d.predicted_bit, d.confidence
                ));
            }
        }
        let path = stage.path(&format!("decisions_{}.csv", kind_slug(kind)));
        format::write_table(
            &path,
            &[
                ("config", stage.hash.clone()),
                ("attack", kind.as_str().to_string()),
                ("method", attack.method.as_str().to_string()),
            ],
            "record_id,label,member,alpha,loss,threshold,decision,confidence",
            &rows,
        )?;
        written.push(path);
    }
    Ok(written)
}

fn write_curve(
    stage: &Stage,
    name: &str,
    provenance: &str,
    curve: &RocCurve,
) -> Result<PathBuf> {
    let path = stage.path(name);
    let rows: Vec<String> = curve
        .points()
        .iter()
        .map(|(fpr, tpr)| format!("{fpr},{tpr},{}", curve.auc()))
        .collect();
    format::write_table(
        &path,
        &[
            ("config", stage.hash.clone()),
            ("provenance", provenance.to_string()),
        ],
        "fpr,tpr,auc",
        &rows,
    )?;
    Ok(path)
}

/// Sweeps each configured attack into ROC curves, tabulates pairwise
/// agreement at the middle alpha, splits the loss histograms by
/// membership, and writes a plain-text summary.
pub fn cmd_eval(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let attack = config.attack()?;
    let (dataset, model) = read_target(&stage)?;
    let (members, nonmembers) = stage.eval_split(&dataset)?;
    let evals = target_losses(&stage, &model, &members, &nonmembers)?;
    let challenges: Vec<EvalChallenge> = evals
        .iter()
        .map(|&(id, label, member, loss)| EvalChallenge {
            model_id: model.id(),
            record_id: id,
            label,
            loss,
            is_member: member,
        })
        .collect();
    let bits: Vec<u8> = evals.iter().map(|e| e.2).collect();
    let mid_alpha = attack.alphas[attack.alphas.len() / 2];
    let grid = default_alpha_grid();

    let mut written = Vec::new();
    let mut summary = String::new();
    summary.push_str(&format!("config {}\n", stage.hash));
    summary.push_str(&format!(
        "target model {} on {} records ({} member / {} non-member evaluations)\n",
        model.id(),
        dataset.len(),
        members.len(),
        nonmembers.len()
    ));
    summary.push_str(&format!(
        "smoothing {}, score sweep at alpha {mid_alpha}\n\n",
        attack.method.as_str()
    ));

    let mut predictions = Vec::new();
    for &kind in &attack.kinds {
        let tfn = calibrate(&stage, kind, &model)?;
        let alpha_curve = roc_alpha_sweep(&tfn, &challenges, &grid)?;
        written.push(write_curve(
            &stage,
            &format!("roc_alpha_{}.csv", kind_slug(kind)),
            "alpha_sweep",
            &alpha_curve,
        )?);

        let mut confidences = Vec::with_capacity(evals.len());
        let mut calls = Vec::with_capacity(evals.len());
        for &(id, label, _, loss) in &evals {
            let d = decide_with_loss(&tfn, &model.id(), id, label, loss, mid_alpha)?;
            confidences.push(d.confidence);
            calls.push(d.predicted_bit);
        }
        let score_curve = roc_score_sweep(&confidences, &bits)?;
        written.push(write_curve(
            &stage,
            &format!("roc_score_{}.csv", kind_slug(kind)),
            "score_sweep",
            &score_curve,
        )?);
        summary.push_str(&format!(
            "attack {}: alpha-sweep AUC {:.4}, score-sweep AUC {:.4}\n",
            kind.as_str(),
            alpha_curve.auc(),
            score_curve.auc()
        ));
        predictions.push((kind.as_str().to_string(), calls));
    }

    if predictions.len() >= 2 {
        let table = agreement_table(&predictions, "eval")?;
        let path = stage.path("agreement.csv");
        let header = format!("attack,{}", table.names.join(","));
        let rows: Vec<String> = table
            .names
            .iter()
            .zip(&table.rates)
            .map(|(name, row)| {
                let cells: Vec<String> = row.iter().map(|r| format!("{r}")).collect();
                format!("{name},{}", cells.join(","))
            })
            .collect();
        format::write_table(
            &path,
            &[
                ("config", stage.hash.clone()),
                ("split", table.split.clone()),
                ("alpha", format!("{mid_alpha}")),
            ],
            &header,
            &rows,
        )?;
        written.push(path);
        summary.push('\n');
        for (i, a) in table.names.iter().enumerate() {
            for (j, b) in table.names.iter().enumerate() {
                if j > i {
                    summary.push_str(&format!(
                        "agreement {a}/{b}: {:.4}\n",
                        table.rates[i][j]
                    ));
                }
            }
        }
    }

    // Loss histograms of the target on both evaluation splits.
    let loss_matrix = |ids: &[u64]| -> Result<_> {
        let mut values = Vec::with_capacity(ids.len());
        for &id in ids {
            values.push(model.loss(stage.pool.record(id)?)?);
        }
        crate::core::SignalMatrix::new(vec![model.id()], ids.to_vec(), values)
    };
    let member_hist = loss_histogram(&loss_matrix(&members)?, &members)?;
    let nonmember_hist = loss_histogram(&loss_matrix(&nonmembers)?, &nonmembers)?;
    let hist_path = stage.path("histograms.csv");
    let mut rows = Vec::new();
    for (split, hist) in [("member", &member_hist), ("nonmember", &nonmember_hist)] {
        for l in &hist.losses {
            rows.push(format!("{split},{l}"));
        }
    }
    format::write_table(
        &hist_path,
        &[
            ("config", stage.hash.clone()),
            ("member_mean", format!("{}", member_hist.mean)),
            ("member_variance", format!("{}", member_hist.variance)),
            ("nonmember_mean", format!("{}", nonmember_hist.mean)),
            ("nonmember_variance", format!("{}", nonmember_hist.variance)),
        ],
        "split,loss",
        &rows,
    )?;
    written.push(hist_path);
    summary.push_str(&format!(
        "\nmember losses: mean {:.4}, variance {:.4}\nnon-member losses: mean {:.4}, variance {:.4}\n",
        member_hist.mean, member_hist.variance, nonmember_hist.mean, nonmember_hist.variance
    ));

    let summary_path = stage.path("summary.txt");
    std::fs::write(&summary_path, summary)?;
    written.push(summary_path);
    Ok(written)
}

/// Plays the configured game with a shadow-calibrated threshold
/// adversary and writes the transcript.
pub fn cmd_game(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let game = config.game()?;
    let attack = config.attack()?;
    let training = config.training()?;
    let train_config = config.train_config(stage.root.child("never-used", 0))?;

    let alpha = attack.alphas[0];
    if !attack.method.alpha_in_domain(alpha) {
        return Err(Error::Config(format!(
            "alpha {alpha} lies outside the domain of method {}",
            attack.method.as_str()
        )));
    }
    // Label-keyed thresholds work for every trial model, including the
    // fresh ones the average-all variant trains.
    let shadow = build_shadow(
        &stage.pool,
        training.n,
        attack.n_shadow,
        &train_config,
        &stage.root.child("game-shadow", 0),
        attack.eval_per_class,
    )?;
    let tfn = calibrate_s(&shadow.matrix, &shadow.labels, stage.pool.classes, attack.method)?;
    let adversary = LossThreshold::new(tfn, alpha);

    let mut spec = GameSpec::new(
        game.variant,
        training.n,
        game.trials,
        stage.root.child("game", 0),
    );
    match game.variant {
        GameVariant::AverageAll => {}
        GameVariant::FixedModel => {
            spec.fixed_dataset_seed = Some(stage.root.child("game-fixed-data", 0));
            spec.fixed_model_seed = Some(stage.root.child("game-fixed-model", 0));
        }
        GameVariant::FixedRecord => {
            spec.fixed_record_seed = Some(stage.root.child("game-fixed-record", 0));
        }
        GameVariant::FixedWorstCase => {
            spec.fixed_dataset_seed = Some(stage.root.child("game-fixed-data", 0));
            spec.fixed_record_seed = Some(stage.root.child("game-fixed-record", 0));
        }
    }
    let transcript = play(&spec, &stage.pool, &crate::synth::SgdTrainer { config: train_config }, &adversary)?;

    let path = stage.path("transcript.csv");
    let rows: Vec<String> = transcript
        .trials
        .iter()
        .map(|t| {
            let loss = t.guess.loss.map_or(String::new(), |l| format!("{l}"));
            let threshold = t.guess.threshold.map_or(String::new(), |c| format!("{c}"));
            format!(
                "{},{},{},{},{loss},{threshold},{:016x},{:016x},{:016x}",
                t.challenge.trial_index,
                t.challenge.secret_bit,
                t.guess.bit,
                u8::from(t.correct),
                t.model_fingerprint,
                t.dataset_fingerprint_out,
                t.dataset_fingerprint_in
            )
        })
        .collect();
    let s = &transcript.summary;
    let mut comments = vec![
        ("config", stage.hash.clone()),
        ("variant", game.variant.as_str().to_string()),
        ("alpha", format!("{alpha}")),
        ("accuracy", format!("{}", s.accuracy)),
    ];
    if let Some(tpr) = s.tpr {
        comments.push(("tpr", format!("{tpr}")));
    }
    if let Some(fpr) = s.fpr {
        comments.push(("fpr", format!("{fpr}")));
    }
    let comments: Vec<(&str, String)> = comments;
    format::write_table(
        &path,
        &comments,
        "trial,secret_bit,guess,correct,loss,threshold,model_fp,dataset_fp_out,dataset_fp_in",
        &rows,
    )?;
    Ok(vec![path])
}

/// Runs the posterior-sampling optimality experiment and writes the
/// AUC gap report.
pub fn cmd_lemma1(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stage = Stage::new(config)?;
    let lemma_config = Lemma1Config {
        n: config.training()?.n,
        trials: config.game()?.trials,
        ..Lemma1Config::default()
    };
    let report = lemma1_experiment(&stage.pool, &lemma_config, &stage.root.child("lemma1", 0))?;
    let path = stage.path("lemma1.csv");
    format::write_table(
        &path,
        &[("config", stage.hash.clone())],
        "auc_loss,auc_oracle,gap,posterior_mass_error,trials",
        &[format!(
            "{},{},{},{},{}",
            report.auc_loss,
            report.auc_oracle,
            report.gap,
            report.posterior_mass_error,
            report.trials
        )],
    )?;
    Ok(vec![path])
}
