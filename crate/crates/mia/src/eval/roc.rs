//! ROC curves two ways: sweeping the attack's tolerance α over a grid,
//! or sweeping a cutoff over raw confidence scores. The α sweep shows
//! what a deployable attack achieves at its calibrated operating points;
//! the score sweep gives the smooth curve and the rank-statistic AUC.

use crate::attacks::decide_with_loss;
use crate::error::{Error, Result};
use crate::thresholds::ThresholdFn;

/// How a curve was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    AlphaSweep(Vec<f64>),
    ScoreSweep,
}

/// A closed ROC curve: (fpr, tpr) points with non-decreasing fpr,
/// starting at (0,0) and ending at (1,1), with the trapezoidal AUC.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    points: Vec<(f64, f64)>,
    auc: f64,
    provenance: Provenance,
}

impl RocCurve {
    /// Closes, orders, and validates raw sweep points.
    fn assemble(mut points: Vec<(f64, f64)>, provenance: Provenance) -> Result<RocCurve> {
        points.push((0.0, 0.0));
        points.push((1.0, 1.0));
        for &(fpr, tpr) in &points {
            if !(0.0..=1.0).contains(&fpr) || !(0.0..=1.0).contains(&tpr) {
                return Err(Error::invalid(format!(
                    "rate point ({fpr}, {tpr}) outside the unit square"
                )));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup();
        let auc = trapezoid(&points);
        Ok(RocCurve {
            points,
            auc,
            provenance,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn auc(&self) -> f64 {
        self.auc
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// One evaluated challenge: the loss a model produced on a record, plus
/// the ground truth needed to score decisions against it.
#[derive(Clone, Debug)]
pub struct EvalChallenge {
    pub model_id: String,
    pub record_id: u64,
    pub label: usize,
    pub loss: f64,
    pub is_member: u8,
}

fn class_counts(members: impl Iterator<Item = u8>) -> Result<(usize, usize)> {
    let mut pos = 0usize;
    let mut neg = 0usize;
    for bit in members {
        match bit {
            1 => pos += 1,
            0 => neg += 1,
            other => return Err(Error::invalid(format!("membership bit {other} is not 0/1"))),
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(format!(
            "need both classes: {pos} members, {neg} non-members"
        )));
    }
    Ok((pos, neg))
}

/// The default tolerance grid: 0, a 25-point geometric ladder from 1e-4
/// to 1 resolving the small-FPR region, and 0.05 linear steps for the
/// rest of the curve.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    for k in 0..25 {
        grid.push(1e-4 * 1e4f64.powf(k as f64 / 24.0));
    }
    for k in 1..=20 {
        grid.push(k as f64 * 0.05);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Sweeps the attack over `alpha_grid`, producing one empirical
/// (FPR, TPR) point per tolerance inside the smoothing method's domain,
/// closed with (0,0) and (1,1).
pub fn roc_alpha_sweep(
    tfn: &ThresholdFn,
    challenges: &[EvalChallenge],
    alpha_grid: &[f64],
) -> Result<RocCurve> {
    let (pos, neg) = class_counts(challenges.iter().map(|c| c.is_member))?;
    if alpha_grid.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    for w in alpha_grid.windows(2) {
        if w[0] > w[1] {
            return Err(Error::invalid(format!(
                "alpha grid not sorted at {} > {}",
                w[0], w[1]
            )));
        }
    }
    if alpha_grid[0] < 0.0 || alpha_grid[alpha_grid.len() - 1] > 1.0 {
        return Err(Error::invalid("alpha grid must lie in [0, 1]"));
    }

    let mut points = Vec::new();
    for &alpha in alpha_grid {
        if !tfn.method().alpha_in_domain(alpha) {
            continue;
        }
        let mut member_hits = 0usize;
        let mut false_hits = 0usize;
        for c in challenges {
            let decision =
                decide_with_loss(tfn, &c.model_id, c.record_id, c.label, c.loss, alpha)?;
            if decision.predicted_bit == 1 {
                if c.is_member == 1 {
                    member_hits += 1;
                } else {
                    false_hits += 1;
                }
            }
        }
        points.push((false_hits as f64 / neg as f64, member_hits as f64 / pos as f64));
    }
    RocCurve::assemble(points, Provenance::AlphaSweep(alpha_grid.to_vec()))
}

/// Thresholds `confidences` at every distinct value, higher meaning
/// more member-like. The trapezoidal AUC of the resulting curve equals
/// the pairwise rank statistic, ties counting one half.
pub fn roc_score_sweep(confidences: &[f64], members: &[u8]) -> Result<RocCurve> {
    if confidences.len() != members.len() {
        return Err(Error::invalid(format!(
            "{} confidences for {} membership bits",
            confidences.len(),
            members.len()
        )));
    }
    let (pos, neg) = class_counts(members.iter().copied())?;
    if let Some(bad) = confidences.iter().find(|c| c.is_nan()) {
        return Err(Error::invalid(format!("confidence {bad} is NaN")));
    }

    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        // Consume the whole tie group before emitting a point, so equal
        // scores contribute a diagonal segment (half credit).
        let score = confidences[order[i]];
        while i < order.len() && confidences[order[i]] == score {
            if members[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    RocCurve::assemble(points, Provenance::ScoreSweep)
}

/// TPR at the queried FPR, linearly interpolated; on a vertical segment
/// the highest TPR at that FPR is returned.
pub fn tpr_at_fpr(curve: &RocCurve, fpr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fpr) {
        return Err(Error::invalid(format!("fpr query {fpr} outside [0, 1]")));
    }
    let pts = curve.points();
    let mut best = 0.0f64;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if (x0..=x1).contains(&fpr) {
            let y = if x1 == x0 {
                y0.max(y1)
            } else {
                y0 + (y1 - y0) * (fpr - x0) / (x1 - x0)
            };
            best = best.max(y);
        }
    }
    Ok(best)
}

/// FPR at the queried TPR: the smallest FPR the curve needs to reach
/// that TPR, linearly interpolated.
pub fn fpr_at_tpr(curve: &RocCurve, tpr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tpr) {
        return Err(Error::invalid(format!("tpr query {tpr} outside [0, 1]")));
    }
    let pts = curve.points();
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 <= tpr && tpr <= y1 {
            if y1 == y0 {
                return Ok(x0);
            }
            return Ok(x0 + (x1 - x0) * (tpr - y0) / (y1 - y0));
        }
    }
    Ok(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{SeedSpec, SignalMatrix};
    use crate::thresholds::{calibrate_r, SmoothingMethod};
    use rand::Rng;

    /// Record-keyed threshold table over `record_ids` with per-record
    /// calibration losses given by `dist_of`.
    fn table(record_ids: &[u64], dist_of: impl Fn(u64) -> Vec<f64>) -> ThresholdFn {
        let n_models = dist_of(record_ids[0]).len();
        let model_ids: Vec<String> = (0..n_models).map(|i| format!("ref.{i}")).collect();
        let mut values = vec![0.0; n_models * record_ids.len()];
        for (j, &rid) in record_ids.iter().enumerate() {
            for (i, v) in dist_of(rid).into_iter().enumerate() {
                values[i * record_ids.len() + j] = v;
            }
        }
        let matrix = SignalMatrix::new(model_ids, record_ids.to_vec(), values).unwrap();
        calibrate_r(&matrix, SmoothingMethod::LinearInterp).unwrap()
    }

    #[test]
    fn separated_losses_reach_auc_one() {
        // Calibration dist per record spans [1, 2]; member losses sit
        // far below, non-member losses far above every threshold.
        let ids: Vec<u64> = (0..40).collect();
        let tfn = table(&ids, |_| vec![1.0, 1.5, 2.0]);
        let challenges: Vec<EvalChallenge> = ids
            .iter()
            .map(|&rid| EvalChallenge {
                model_id: "t".into(),
                record_id: rid,
                label: 0,
                loss: if rid % 2 == 0 { 0.1 } else { 5.0 },
                is_member: u8::from(rid % 2 == 0),
            })
            .collect();
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let curve = roc_alpha_sweep(&tfn, &challenges, &grid).unwrap();
        assert_eq!(curve.auc(), 1.0);
        assert_eq!(curve.points().first(), Some(&(0.0, 0.0)));
        assert_eq!(curve.points().last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn degenerate_grid_gives_the_diagonal() {
        let ids: Vec<u64> = (0..10).collect();
        let tfn = table(&ids, |_| vec![0.5, 1.0, 2.0]);
        // All challenge losses sit strictly inside (0.5, 2.0): at alpha
        // 0 nothing is a member, at alpha 1 everything is.
        let challenges: Vec<EvalChallenge> = ids
            .iter()
            .map(|&rid| EvalChallenge {
                model_id: "t".into(),
                record_id: rid,
                label: 0,
                loss: 0.6 + 0.1 * (rid % 3) as f64,
                is_member: u8::from(rid % 2 == 0),
            })
            .collect();
        let curve = roc_alpha_sweep(&tfn, &challenges, &[0.0, 1.0]).unwrap();
        assert_eq!(curve.points(), &[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(curve.auc(), 0.5);
    }

    #[test]
    fn coin_decisions_hover_near_half() {
        // An attack whose loss is an independent coin: per challenge the
        // loss is 0 or 10 with equal probability, thresholds at 1.
        let mut rng = SeedSpec::new(60).rng();
        let ids: Vec<u64> = (0..2000).collect();
        let tfn = table(&ids, |_| vec![1.0, 1.0]);
        let challenges: Vec<EvalChallenge> = ids
            .iter()
            .map(|&rid| EvalChallenge {
                model_id: "t".into(),
                record_id: rid,
                label: 0,
                loss: if rng.gen_bool(0.5) { 0.0 } else { 10.0 },
                is_member: u8::from(rng.gen_bool(0.5)),
            })
            .collect();
        let curve = roc_alpha_sweep(&tfn, &challenges, &default_alpha_grid()).unwrap();
        assert!(
            (curve.auc() - 0.5).abs() <= 0.04,
            "coin AUC {}",
            curve.auc()
        );
    }

    #[test]
    fn alpha_sweep_rates_never_decrease() {
        let mut rng = SeedSpec::new(61).rng();
        let ids: Vec<u64> = (0..60).collect();
        let tfn = table(&ids, |rid| {
            (0..8).map(|i| 0.1 * (rid % 5) as f64 + 0.3 * i as f64).collect()
        });
        let challenges: Vec<EvalChallenge> = ids
            .iter()
            .map(|&rid| EvalChallenge {
                model_id: "t".into(),
                record_id: rid,
                label: 0,
                loss: rng.gen_range(0.0..2.5),
                is_member: u8::from(rng.gen_bool(0.5)),
            })
            .collect();
        // Nested member sets: both rates are monotone in alpha, so the
        // assembled curve must visit the same points in grid order.
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let curve = roc_alpha_sweep(&tfn, &challenges, &grid).unwrap();
        let mut prev = (0.0, 0.0);
        for &(fpr, tpr) in curve.points() {
            assert!(fpr >= prev.0 && tpr >= prev.1, "({fpr}, {tpr}) after {prev:?}");
            prev = (fpr, tpr);
        }
    }

    #[test]
    fn perfect_and_tied_score_sweeps() {
        let curve =
            roc_score_sweep(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap();
        assert_eq!(curve.auc(), 1.0);
        assert_eq!(*curve.provenance(), Provenance::ScoreSweep);

        let curve = roc_score_sweep(&[0.3; 6], &[1, 0, 1, 0, 1, 0]).unwrap();
        assert_eq!(curve.auc(), 0.5);
        assert_eq!(curve.points(), &[(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn score_sweep_auc_equals_pairwise_statistic() {
        let mut rng = SeedSpec::new(62).rng();
        for round in 0..200 {
            let n = rng.gen_range(2..=500);
            let mut scores = Vec::with_capacity(n);
            let mut bits = Vec::with_capacity(n);
            for _ in 0..n {
                // Coarse scores force plenty of exact ties.
                scores.push((rng.gen_range(0..20) as f64) / 10.0);
                bits.push(u8::from(rng.gen_bool(0.5)));
            }
            if !bits.contains(&1) || !bits.contains(&0) {
                continue;
            }
            let curve = roc_score_sweep(&scores, &bits).unwrap();

            // Brute-force Mann-Whitney: correctly ordered pairs plus
            // half credit for ties.
            let mut won = 0.0f64;
            let mut pairs = 0.0f64;
            for i in 0..n {
                if bits[i] != 1 {
                    continue;
                }
                for j in 0..n {
                    if bits[j] != 0 {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        won += 1.0;
                    } else if scores[i] == scores[j] {
                        won += 0.5;
                    }
                }
            }
            let want = won / pairs;
            assert!(
                (curve.auc() - want).abs() <= 1e-9,
                "round {round}: {} vs {want}",
                curve.auc()
            );
        }
    }

    #[test]
    fn single_class_inputs_are_rejected() {
        assert!(roc_score_sweep(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(roc_score_sweep(&[0.1, 0.2], &[0, 0]).is_err());
        assert!(roc_score_sweep(&[0.1], &[1, 0]).is_err());
        assert!(roc_score_sweep(&[f64::NAN, 0.2], &[1, 0]).is_err());

        let ids: Vec<u64> = (0..4).collect();
        let tfn = table(&ids, |_| vec![1.0, 2.0]);
        let challenges: Vec<EvalChallenge> = ids
            .iter()
            .map(|&rid| EvalChallenge {
                model_id: "t".into(),
                record_id: rid,
                label: 0,
                loss: 1.0,
                is_member: 1,
            })
            .collect();
        assert!(roc_alpha_sweep(&tfn, &challenges, &[0.5]).is_err());
    }

    #[test]
    fn rate_queries_interpolate_along_the_curve() {
        let diagonal = roc_score_sweep(&[0.3; 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(tpr_at_fpr(&diagonal, 0.3).unwrap(), 0.3);

        // A perfect curve: {(0,0), (0,1), (1,1)}.
        let perfect = roc_score_sweep(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap();
        assert_eq!(tpr_at_fpr(&perfect, 0.0).unwrap(), 1.0);
        assert_eq!(fpr_at_tpr(&perfect, 1.0).unwrap(), 0.0);

        // Hand oracle on a three-point curve {(0,0), (0.5, 0.75), (1,1)}.
        let curve = RocCurve::assemble(vec![(0.5, 0.75)], Provenance::ScoreSweep).unwrap();
        assert_eq!(tpr_at_fpr(&curve, 0.25).unwrap(), 0.375);
        assert_eq!(tpr_at_fpr(&curve, 0.75).unwrap(), 0.875);
        assert_eq!(fpr_at_tpr(&curve, 0.375).unwrap(), 0.25);
        let auc = curve.auc();
        assert!((auc - (0.5 * 0.375 + 0.5 * 0.875)).abs() < 1e-15);

        assert!(tpr_at_fpr(&curve, 1.5).is_err());
        assert!(fpr_at_tpr(&curve, -0.1).is_err());
    }

    #[test]
    fn default_grid_is_sorted_and_covers_both_regions() {
        let grid = default_alpha_grid();
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), 1.0);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(grid.iter().any(|&a| a < 1e-3));
        assert!(grid.contains(&0.5));
    }
}
