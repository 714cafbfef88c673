//! Optimality check for the loss-threshold family: against a Bayes
//! posterior "trainer" the exact likelihood-ratio adversary is the best
//! any attack can do, so a calibrated loss score should land close to
//! it. Runs the average-all game with posterior-sampled models, scores
//! every challenge with both adversaries, and compares the two AUCs.
//!
//! The likelihood ratio needs posterior densities, hence partition
//! functions. Those are computed by quadrature, which is why this
//! experiment is restricted to one-dimensional two-class pools with
//! linear models: the softmax depends on the parameters only through
//! the differences `u = w1 - w0` and `v = b1 - b0`, so the four-dim
//! box integral collapses to a two-dim grid with triangle weights
//! `(2B - |u|)(2B - |v|)` from integrating out the invariant sums.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::core::{Record, SeedSpec};
use crate::error::{Error, Result};
use crate::eval::roc::roc_score_sweep;
use crate::games::{play, CoinFlip, GameSpec, GameVariant};
use crate::synth::{PopulationPool, PosteriorConfig, PosteriorTrainer, ToyModel};

/// Refinement tolerance on partition functions: doubling the grid must
/// not move the posterior mass by more than this.
pub const MASS_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Config {
    /// Training-set size per trial.
    pub n: usize,
    pub trials: usize,
    pub temperature: f64,
    pub step_size: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub param_box: f64,
    /// Quadrature cells per effective parameter dimension; even, so the
    /// triangle-weight kink at zero falls on a cell boundary.
    pub grid_cells: usize,
    /// Monte Carlo datasets the likelihood ratio averages over.
    pub mc_datasets: usize,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Lemma1Config {
            n: 8,
            trials: 400,
            temperature: 0.1,
            step_size: 0.15,
            burn_in: 2000,
            thinning: 20,
            param_box: 3.0,
            grid_cells: 400,
            mc_datasets: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report {
    /// AUC of the plain loss score, `-loss(theta, z)`.
    pub auc_loss: f64,
    /// AUC of the exact likelihood-ratio adversary.
    pub auc_oracle: f64,
    /// `auc_oracle - auc_loss`.
    pub gap: f64,
    /// Worst refinement drift of any checked partition function.
    pub posterior_mass_error: f64,
    pub trials: usize,
}

/// Midpoint grid over `[-2B, 2B]^2` in the reduced coordinates. The
/// per-dim factor folds the triangle weight and the cell width, so a
/// plain weighted sum of `exp(-E/T)` over cells is the box integral.
struct Grid {
    cells: usize,
    centers: Vec<f64>,
    factors: Vec<f64>,
}

impl Grid {
    fn new(param_box: f64, cells: usize) -> Grid {
        let half = 2.0 * param_box;
        let h = 2.0 * half / cells as f64;
        let centers: Vec<f64> = (0..cells)
            .map(|i| -half + (i as f64 + 0.5) * h)
            .collect();
        let factors = centers.iter().map(|u| (half - u.abs()) * h).collect();
        Grid {
            cells,
            centers,
            factors,
        }
    }

    fn len(&self) -> usize {
        self.cells * self.cells
    }

    fn weight(&self, c: usize) -> f64 {
        self.factors[c / self.cells] * self.factors[c % self.cells]
    }
}

/// Adds each cell's loss of `record` into `acc`. The probe model is the
/// class representative `(w0, w1, b0, b1) = (0, u, 0, v)`, evaluated
/// through the same loss as the sampler so the energies agree exactly.
fn add_losses(grid: &Grid, record: &Record, probe: &mut ToyModel, acc: &mut [f64]) -> Result<()> {
    let mut c = 0;
    for &u in &grid.centers {
        for &v in &grid.centers {
            probe.set_params(&[0.0, u, 0.0, v]);
            acc[c] += probe.loss(record)?;
            c += 1;
        }
    }
    Ok(())
}

fn energy_grid(pool: &PopulationPool, ids: &[u64], grid: &Grid) -> Result<Vec<f64>> {
    let mut probe = ToyModel::zeroed(1, 2, 0)?;
    let mut acc = vec![0.0; grid.len()];
    for &id in ids {
        add_losses(grid, pool.record(id)?, &mut probe, &mut acc)?;
    }
    Ok(acc)
}

/// `ln Z` for the dataset with per-cell energies `e`: the weighted grid
/// sum of `exp(-e/T)`, max-shifted so low temperatures cannot underflow.
fn ln_z(grid: &Grid, energies: &[f64], inv_t: f64) -> f64 {
    let peak = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (c, &e) in energies.iter().enumerate() {
        sum += grid.weight(c) * (-(e - peak) * inv_t).exp();
    }
    -peak * inv_t + sum.ln()
}

fn logsumexp(xs: &[f64]) -> f64 {
    let peak = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    peak + xs.iter().map(|x| (x - peak).exp()).sum::<f64>().ln()
}

/// Per-dataset state for the likelihood ratio. World 0 conditions on
/// the challenge record being absent, so its partition function is a
/// plain per-dataset constant; world 1 inserts the record, and its
/// partition function folds the record in per challenge via a dot
/// product with the cached `a1` table.
struct McWorld {
    /// Ordered draw; the first `n - 1` ids are the world-1 base.
    ids: Vec<u64>,
    ln_z0: f64,
    /// Max-shift used by `a1`.
    c1: f64,
    /// `weight(c) * exp(-E_base(c)/T - c1)` per cell.
    a1: Vec<f64>,
}

fn draw_ids(pool_size: usize, n: usize, seed: &SeedSpec) -> Vec<u64> {
    let mut ids: Vec<u64> = (0..pool_size as u64).collect();
    let mut rng = seed.rng();
    for i in 0..n {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(n);
    ids
}

fn build_world(
    pool: &PopulationPool,
    config: &Lemma1Config,
    grid: &Grid,
    seed: &SeedSpec,
    j: u64,
) -> Result<McWorld> {
    let inv_t = 1.0 / config.temperature;
    let ids = draw_ids(pool.len(), config.n, &seed.child("mc", j));
    let base = energy_grid(pool, &ids[..config.n - 1], grid)?;

    // World 0 energies extend the base by the draw's last record.
    let mut full = base.clone();
    let mut probe = ToyModel::zeroed(1, 2, 0)?;
    add_losses(grid, pool.record(ids[config.n - 1])?, &mut probe, &mut full)?;
    let ln_z0 = ln_z(grid, &full, inv_t);

    let c1 = base
        .iter()
        .map(|e| -e * inv_t)
        .fold(f64::NEG_INFINITY, f64::max);
    let a1 = base
        .iter()
        .enumerate()
        .map(|(c, &e)| grid.weight(c) * (-e * inv_t - c1).exp())
        .collect();
    Ok(McWorld {
        ids,
        ln_z0,
        c1,
        a1,
    })
}

fn validate(pool: &PopulationPool, config: &Lemma1Config) -> Result<()> {
    if pool.dim != 1 || pool.classes != 2 {
        return Err(Error::invalid(format!(
            "the quadrature reduction needs dim 1 and 2 classes, pool has dim {} and {} classes",
            pool.dim, pool.classes
        )));
    }
    if config.n == 0 || config.n >= pool.len() {
        return Err(Error::invalid(format!(
            "n {} must be positive and below the pool size {}",
            config.n,
            pool.len()
        )));
    }
    if config.trials < 2 {
        return Err(Error::invalid("need at least 2 trials"));
    }
    if config.grid_cells < 8 || config.grid_cells % 2 != 0 {
        return Err(Error::invalid(format!(
            "grid_cells {} must be even and at least 8",
            config.grid_cells
        )));
    }
    if config.mc_datasets < 2 {
        return Err(Error::invalid("need at least 2 Monte Carlo datasets"));
    }
    Ok(())
}

pub fn lemma1_experiment(
    pool: &PopulationPool,
    config: &Lemma1Config,
    seed: &SeedSpec,
) -> Result<Lemma1Report> {
    validate(pool, config)?;
    let posterior = PosteriorConfig {
        temperature: config.temperature,
        step_size: config.step_size,
        burn_in: config.burn_in,
        thinning: config.thinning,
        param_box: config.param_box,
        seed: seed.child("posterior", 0),
    };
    posterior.validate()?;
    let trainer = PosteriorTrainer { config: posterior };

    let spec = GameSpec::new(
        GameVariant::AverageAll,
        config.n,
        config.trials,
        seed.child("game", 0),
    );
    let coin = CoinFlip {
        seed: seed.child("dummy", 0),
    };
    let transcript = play(&spec, pool, &trainer, &coin)?;

    let inv_t = 1.0 / config.temperature;
    let grid = Grid::new(config.param_box, config.grid_cells);
    let worlds: Vec<McWorld> = (0..config.mc_datasets as u64)
        .into_par_iter()
        .map(|j| build_world(pool, config, &grid, seed, j))
        .collect::<Result<_>>()?;

    // Refinement self-check: the posterior normalized on this grid must
    // integrate to 1 on a doubled grid as well, within MASS_TOL.
    let fine = Grid::new(config.param_box, 2 * config.grid_cells);
    let mass_error = worlds[..worlds.len().min(4)]
        .par_iter()
        .map(|w| {
            let energies = energy_grid(pool, &w.ids, &fine)?;
            Ok((ln_z(&fine, &energies, inv_t) - w.ln_z0).exp_m1().abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    if mass_error > MASS_TOL {
        return Err(Error::Numeric(format!(
            "posterior mass drifts by {mass_error:.2e} under grid refinement (tolerance {MASS_TOL:.0e}); \
             raise grid_cells or the temperature"
        )));
    }

    // Challenges sharing a record share the world-1 partition functions,
    // so process them grouped by record id.
    let mut buckets: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for trial in &transcript.trials {
        buckets
            .entry(trial.challenge.record.id)
            .or_default()
            .push(trial.challenge.trial_index);
    }

    let losses: Vec<f64> = transcript
        .trials
        .iter()
        .map(|t| t.challenge.model.loss(&t.challenge.record))
        .collect::<Result<_>>()?;

    let scored: Vec<(usize, f64)> = buckets
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(rid, trial_indices)| {
            let record = pool.record(rid)?;
            let mut probe = ToyModel::zeroed(1, 2, 0)?;
            let mut b_z = vec![0.0; grid.len()];
            add_losses(&grid, record, &mut probe, &mut b_z)?;
            for b in &mut b_z {
                *b = (-*b * inv_t).exp();
            }

            // World-1 partition functions and the conditioning filters.
            let mut ln_z1 = vec![f64::NAN; worlds.len()];
            let mut in_world1 = vec![false; worlds.len()];
            let mut in_world0 = vec![false; worlds.len()];
            for (j, w) in worlds.iter().enumerate() {
                in_world0[j] = !w.ids.contains(&rid);
                if w.ids[..config.n - 1].contains(&rid) {
                    continue;
                }
                let dot: f64 = w.a1.iter().zip(&b_z).map(|(a, b)| a * b).sum();
                if dot > 0.0 {
                    in_world1[j] = true;
                    ln_z1[j] = w.c1 + dot.ln();
                }
            }
            if !in_world0.iter().any(|&b| b) || !in_world1.iter().any(|&b| b) {
                return Err(Error::Numeric(format!(
                    "record {rid} cannot be conditioned on: every Monte Carlo dataset \
                     contains it; raise mc_datasets or the pool size"
                )));
            }

            let mut out = Vec::with_capacity(trial_indices.len());
            for t in trial_indices {
                let model = &transcript.trials[t].challenge.model;
                let loss_z = losses[t];
                let mut lp0 = Vec::new();
                let mut lp1 = Vec::new();
                for (j, w) in worlds.iter().enumerate() {
                    if !in_world0[j] && !in_world1[j] {
                        continue;
                    }
                    let mut base = 0.0;
                    for &id in &w.ids[..config.n - 1] {
                        base += model.loss(pool.record(id)?)?;
                    }
                    if in_world1[j] {
                        lp1.push(-(base + loss_z) * inv_t - ln_z1[j]);
                    }
                    if in_world0[j] {
                        let last = model.loss(pool.record(w.ids[config.n - 1])?)?;
                        lp0.push(-(base + last) * inv_t - w.ln_z0);
                    }
                }
                let score = logsumexp(&lp1) - (lp1.len() as f64).ln()
                    - (logsumexp(&lp0) - (lp0.len() as f64).ln());
                if !score.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite likelihood ratio at trial {t}"
                    )));
                }
                out.push((t, score));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut oracle_scores = vec![0.0; transcript.trials.len()];
    for (t, s) in scored {
        oracle_scores[t] = s;
    }
    let bits: Vec<u8> = transcript
        .trials
        .iter()
        .map(|t| t.challenge.secret_bit)
        .collect();
    let loss_scores: Vec<f64> = losses.iter().map(|l| -l).collect();

    let auc_loss = roc_score_sweep(&loss_scores, &bits)?.auc();
    let auc_oracle = roc_score_sweep(&oracle_scores, &bits)?.auc();
    Ok(Lemma1Report {
        auc_loss,
        auc_oracle,
        gap: auc_oracle - auc_loss,
        posterior_mass_error: mass_error,
        trials: config.trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_population;

    fn quick_config() -> Lemma1Config {
        Lemma1Config {
            n: 6,
            trials: 120,
            temperature: 0.5,
            step_size: 0.4,
            burn_in: 300,
            thinning: 5,
            param_box: 3.0,
            grid_cells: 96,
            mc_datasets: 24,
        }
    }

    #[test]
    fn triangle_weights_integrate_the_box_volume_exactly() {
        // exp(0) over the grid must give the 4-dim box volume (2B)^4;
        // the midpoint rule is exact for the piecewise-linear weight.
        let grid = Grid::new(1.5, 32);
        let z = ln_z(&grid, &vec![0.0; grid.len()], 1.0);
        assert!((z - (3.0f64.powi(4)).ln()).abs() < 1e-12, "ln Z = {z}");
    }

    #[test]
    fn high_temperature_blinds_both_adversaries() {
        // Near-infinite temperature makes the posterior the uniform box
        // prior whatever the dataset, so neither score carries signal.
        let seed = SeedSpec::new(90);
        let pool = gen_population(1, 2, 60, 1.0, &seed.child("pool", 0)).unwrap();
        let mut config = quick_config();
        config.temperature = 1e6;
        config.trials = 200;
        let report = lemma1_experiment(&pool, &config, &seed.child("run", 0)).unwrap();
        assert!(
            (report.auc_loss - 0.5).abs() <= 0.13,
            "loss AUC {}",
            report.auc_loss
        );
        assert!(
            (report.auc_oracle - 0.5).abs() <= 0.13,
            "oracle AUC {}",
            report.auc_oracle
        );
        assert!(report.posterior_mass_error <= MASS_TOL);
    }

    #[test]
    fn oracle_stays_close_to_the_loss_attack() {
        let seed = SeedSpec::new(91);
        let pool = gen_population(1, 2, 80, 1.5, &seed.child("pool", 0)).unwrap();
        let report = lemma1_experiment(&pool, &quick_config(), &seed.child("run", 0)).unwrap();
        assert!(
            report.auc_oracle > 0.52,
            "oracle finds no signal: {}",
            report.auc_oracle
        );
        assert!(
            report.gap.abs() <= 0.15,
            "loss {} vs oracle {}",
            report.auc_loss,
            report.auc_oracle
        );
        assert_eq!(report.gap, report.auc_oracle - report.auc_loss);
    }

    #[test]
    fn report_is_deterministic() {
        let seed = SeedSpec::new(92);
        let pool = gen_population(1, 2, 50, 1.0, &seed.child("pool", 0)).unwrap();
        let mut config = quick_config();
        config.trials = 40;
        config.burn_in = 150;
        let a = lemma1_experiment(&pool, &config, &seed.child("run", 0)).unwrap();
        let b = lemma1_experiment(&pool, &config, &seed.child("run", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coarse_grid_trips_the_mass_check() {
        let seed = SeedSpec::new(93);
        let pool = gen_population(1, 2, 50, 2.0, &seed.child("pool", 0)).unwrap();
        let mut config = quick_config();
        config.temperature = 0.05;
        config.grid_cells = 8;
        let err = lemma1_experiment(&pool, &config, &seed.child("run", 0)).unwrap_err();
        assert!(
            err.to_string().contains("grid_cells"),
            "expected the mass-check failure, got: {err}"
        );
    }

    #[test]
    fn reduction_preconditions_are_enforced() {
        let seed = SeedSpec::new(94);
        let config = quick_config();
        let wide = gen_population(2, 2, 50, 1.0, &seed.child("a", 0)).unwrap();
        assert!(lemma1_experiment(&wide, &config, &seed).is_err());
        let multi = gen_population(3, 3, 50, 1.0, &seed.child("b", 0)).unwrap();
        assert!(lemma1_experiment(&multi, &config, &seed).is_err());

        let pool = gen_population(1, 2, 50, 1.0, &seed.child("c", 0)).unwrap();
        let mut bad = config.clone();
        bad.n = 50;
        assert!(lemma1_experiment(&pool, &bad, &seed).is_err());
        let mut bad = config.clone();
        bad.grid_cells = 33;
        assert!(lemma1_experiment(&pool, &bad, &seed).is_err());
    }
}
