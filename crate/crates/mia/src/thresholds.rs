//! The calibration engine: empirical loss distributions, four smoothing
//! methods for reading a percentile off a finite histogram, and the
//! per-attack threshold tables.
//!
//! A calibrated attack answers one question: "below which loss do at
//! most an `alpha` fraction of non-member losses fall?" The attacks
//! differ in which non-member losses they pool (see [`calibrate_s`]
//! through [`calibrate_l`]); the smoothing methods differ in how they
//! interpolate the finite sample into a continuous quantile.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;
use crate::core::SignalMatrix;
use crate::error::{Error, Result};

/// Losses below this are clamped before the logit transform, which
/// diverges at zero (routine for overfit members).
const LOGIT_CLAMP_LO: f64 = 1e-7;
/// Losses above this are clamped before the logit transform; beyond it
/// the transform is numerically `-loss` anyway.
const LOGIT_CLAMP_HI: f64 = 30.0;

/// A sorted histogram of non-negative, finite losses, at least two.
///
/// The Gaussian fit of the logit-transformed values is computed once at
/// construction so that repeated threshold queries stay cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDist {
    losses: Vec<f64>,
    logit_mu: f64,
    logit_sigma: f64,
}

impl EmpiricalDist {
    pub fn new(mut losses: Vec<f64>) -> Result<Self> {
        if losses.len() < 2 {
            return Err(Error::invalid(format!(
                "empirical distribution needs at least 2 losses, got {}",
                losses.len()
            )));
        }
        for &l in &losses {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::invalid(format!(
                    "distribution loss {l} must be finite and non-negative"
                )));
            }
        }
        losses.sort_unstable_by(f64::total_cmp);
        let n = losses.len() as f64;
        let transformed: Vec<f64> = losses
            .iter()
            .map(|&l| loss_to_logit(l.clamp(LOGIT_CLAMP_LO, LOGIT_CLAMP_HI)))
            .collect();
        let mu = transformed.iter().sum::<f64>() / n;
        let var = transformed.iter().map(|t| (t - mu) * (t - mu)).sum::<f64>() / n;
        Ok(EmpiricalDist {
            losses,
            logit_mu: mu,
            logit_sigma: var.sqrt(),
        })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn max_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// `phi(l) = ln(e^-l / (1 - e^-l)) = -ln(e^l - 1)`, strictly decreasing
/// on `(0, inf)`.
fn loss_to_logit(loss: f64) -> f64 {
    -loss.exp_m1().ln()
}

/// Inverse of [`loss_to_logit`]: `ln(1 + e^-t)`, the softplus of `-t`.
fn logit_to_loss(t: f64) -> f64 {
    let x = -t;
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_alpha_closed(alpha: f64) -> Result<()> {
    if alpha.is_finite() && (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")))
    }
}

fn check_alpha_open(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Linear interpolation of the `alpha`-percentile:
/// `p(a) = l_i * (i + 1 - aN) + (aN - i) * l_{i+1}` with `i = floor(aN)`.
pub fn percentile_linear(dist: &EmpiricalDist, alpha: f64) -> Result<f64> {
    check_alpha_closed(alpha)?;
    let ls = &dist.losses;
    let n = ls.len() - 1;
    let t = alpha * n as f64;
    let i = t.floor() as usize;
    if i >= n {
        return Ok(ls[n]);
    }
    let frac = t - i as f64;
    Ok(ls[i] * (1.0 - frac) + frac * ls[i + 1])
}

/// Logit rescaling: fit `N(mu, sigma^2)` to the logit-transformed
/// losses, take the `(1 - alpha)`-quantile there, and pull it back.
/// The transform is decreasing, so small `alpha` yields small loss
/// thresholds. With `sigma = 0` every quantile is `mu`, giving the
/// common loss back for all `alpha`.
pub fn percentile_logit(dist: &EmpiricalDist, alpha: f64) -> Result<f64> {
    check_alpha_open(alpha)?;
    let q = dist.logit_mu + dist.logit_sigma * inverse_normal_cdf(1.0 - alpha)?;
    Ok(logit_to_loss(q))
}

/// Minimum of the linear-interpolation and logit-rescaling thresholds.
pub fn threshold_min(dist: &EmpiricalDist, alpha: f64) -> Result<f64> {
    let a = percentile_linear(dist, alpha)?;
    let b = percentile_logit(dist, alpha)?;
    Ok(a.min(b))
}

/// Smoothed CDF value at `loss`: the average of the interpolated
/// empirical CDF and the Gaussian CDF pulled back through the logit
/// transform. Monotone non-decreasing in `loss`, with values in [0, 1].
pub fn confidence_avg(dist: &EmpiricalDist, loss: f64) -> Result<f64> {
    if loss.is_nan() {
        return Err(Error::invalid("loss is NaN"));
    }
    Ok(0.5 * (empirical_cdf(dist, loss) + logit_cdf(dist, loss)))
}

/// Inverts [`confidence_avg`] by bisection: the loss where the averaged
/// CDF first reaches `alpha`.
pub fn threshold_avg(dist: &EmpiricalDist, alpha: f64) -> Result<f64> {
    check_alpha_open(alpha)?;
    if confidence_avg(dist, 0.0)? >= alpha {
        return Ok(0.0);
    }
    let mut hi = dist.max_loss().max(60.0);
    let mut guard = 0;
    while confidence_avg(dist, hi)? < alpha && guard < 60 {
        hi *= 2.0;
        guard += 1;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if confidence_avg(dist, mid)? < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Piecewise-linear empirical CDF over the sorted losses: grid point
/// `l_i` carries CDF value `i / N`. Ties collapse to the highest index.
fn empirical_cdf(dist: &EmpiricalDist, x: f64) -> f64 {
    let ls = &dist.losses;
    let n = (ls.len() - 1) as f64;
    if x < ls[0] {
        return 0.0;
    }
    if x >= ls[ls.len() - 1] {
        return 1.0;
    }
    let hi = ls.partition_point(|&l| l <= x);
    let i = hi - 1;
    let frac = (x - ls[i]) / (ls[hi] - ls[i]);
    (i as f64 + frac) / n
}

/// CDF of the fitted logit-normal: `P(L <= x) = 1 - Phi((phi(x) - mu) / sigma)`.
/// The fit uses clamped transforms; the query point does not need the
/// clamp because `phi` itself is defined on all of `(0, inf)`.
fn logit_cdf(dist: &EmpiricalDist, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let t = loss_to_logit(x);
    if dist.logit_sigma == 0.0 {
        return if t <= dist.logit_mu { 1.0 } else { 0.0 };
    }
    1.0 - normal_cdf((t - dist.logit_mu) / dist.logit_sigma)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

// Coefficients of Wichura's PPND16 rational approximations to the
// standard normal quantile (Applied Statistics 37, algorithm AS 241),
// constant term first. Absolute error is far below the 1e-8 the
// calibration math needs; the unit tests pin it against a
// bisection-on-erfc oracle.
const PPND_A: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const PPND_B: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const PPND_C: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const PPND_D: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const PPND_E: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const PPND_F: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

fn polyval(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Standard normal quantile on (0, 1).
fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numeric(format!(
            "normal quantile undefined at p = {p}"
        )));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * polyval(&PPND_A, r) / polyval(&PPND_B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        polyval(&PPND_C, r) / polyval(&PPND_D, r)
    } else {
        let r = r - 5.0;
        polyval(&PPND_E, r) / polyval(&PPND_F, r)
    };
    Ok(if q < 0.0 { -x } else { x })
}

/// How a finite loss histogram is smoothed into a quantile function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmoothingMethod {
    /// Linear interpolation of the percentile. Defined on all of [0, 1].
    #[default]
    LinearInterp,
    /// Gaussian fit in logit space, quantile pulled back. Open (0, 1).
    LogitRescale,
    /// Pointwise minimum of the two above. Open (0, 1).
    MinOfBoth,
    /// Inverse of the averaged CDFs of the two above. Open (0, 1).
    AvgConfidence,
}

impl SmoothingMethod {
    pub const ALL: [SmoothingMethod; 4] = [
        SmoothingMethod::LinearInterp,
        SmoothingMethod::LogitRescale,
        SmoothingMethod::MinOfBoth,
        SmoothingMethod::AvgConfidence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SmoothingMethod::LinearInterp => "linear",
            SmoothingMethod::LogitRescale => "logit",
            SmoothingMethod::MinOfBoth => "min",
            SmoothingMethod::AvgConfidence => "avg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SmoothingMethod::LinearInterp),
            "logit" => Ok(SmoothingMethod::LogitRescale),
            "min" => Ok(SmoothingMethod::MinOfBoth),
            "avg" => Ok(SmoothingMethod::AvgConfidence),
            other => Err(Error::invalid(format!(
                "unknown smoothing method {other:?} (expected linear, logit, min, or avg)"
            ))),
        }
    }

    /// Whether this method can evaluate the given tolerance at all:
    /// the Gaussian quantile is undefined at exactly 0 and 1.
    pub fn alpha_in_domain(self, alpha: f64) -> bool {
        if !alpha.is_finite() {
            return false;
        }
        match self {
            SmoothingMethod::LinearInterp => (0.0..=1.0).contains(&alpha),
            _ => alpha > 0.0 && alpha < 1.0,
        }
    }
}

impl std::fmt::Display for SmoothingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evaluates one smoothing method on one distribution.
pub fn smooth_threshold(dist: &EmpiricalDist, method: SmoothingMethod, alpha: f64) -> Result<f64> {
    match method {
        SmoothingMethod::LinearInterp => percentile_linear(dist, alpha),
        SmoothingMethod::LogitRescale => percentile_logit(dist, alpha),
        SmoothingMethod::MinOfBoth => threshold_min(dist, alpha),
        SmoothingMethod::AvgConfidence => threshold_avg(dist, alpha),
    }
}

/// Identifies one calibration entry inside a [`ThresholdFn`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThresholdKey {
    Label(usize),
    Model(String),
    ModelLabel(String, usize),
    Record(u64),
    ModelRecord(String, u64),
}

impl std::fmt::Display for ThresholdKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdKey::Label(y) => write!(f, "label:{y}"),
            ThresholdKey::Model(m) => write!(f, "model:{m}"),
            ThresholdKey::ModelLabel(m, y) => write!(f, "model:{m}/label:{y}"),
            ThresholdKey::Record(r) => write!(f, "record:{r}"),
            ThresholdKey::ModelRecord(m, r) => write!(f, "model:{m}/record:{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Table {
    PerLabel(BTreeMap<usize, EmpiricalDist>),
    PerModel(BTreeMap<String, EmpiricalDist>),
    PerModelLabel(BTreeMap<(String, usize), EmpiricalDist>),
    PerRecord(BTreeMap<u64, EmpiricalDist>),
    PerModelRecord(BTreeMap<(String, u64), EmpiricalDist>),
}

/// A calibrated threshold function `c_alpha(target)`.
///
/// Immutable once built; evaluation is a pure lookup plus smoothing, so
/// values are monotone in `alpha` and depend on the target only through
/// the slot the attack is allowed to see (its label, model, record, or
/// model-record pair).
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdFn {
    kind: AttackKind,
    method: SmoothingMethod,
    table: Table,
}

impl ThresholdFn {
    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn method(&self) -> SmoothingMethod {
        self.method
    }

    /// Threshold for a fully described target. Unused slots are ignored.
    pub fn threshold(
        &self,
        model_id: &str,
        record_id: u64,
        label: usize,
        alpha: f64,
    ) -> Result<f64> {
        let dist = match &self.table {
            Table::PerLabel(m) => m
                .get(&label)
                .ok_or_else(|| self.missing(format_args!("label {label}")))?,
            Table::PerModel(m) => m
                .get(model_id)
                .ok_or_else(|| self.missing(format_args!("model {model_id}")))?,
            Table::PerModelLabel(m) => m
                .get(&(model_id.to_string(), label))
                .ok_or_else(|| self.missing(format_args!("model {model_id}, label {label}")))?,
            Table::PerRecord(m) => m
                .get(&record_id)
                .ok_or_else(|| self.missing(format_args!("record {record_id}")))?,
            Table::PerModelRecord(m) => m
                .get(&(model_id.to_string(), record_id))
                .ok_or_else(|| {
                    self.missing(format_args!("model {model_id}, record {record_id}"))
                })?,
        };
        smooth_threshold(dist, self.method, alpha)
    }

    /// Threshold for an entry named directly by key.
    pub fn threshold_at(&self, key: &ThresholdKey, alpha: f64) -> Result<f64> {
        let dist = match (&self.table, key) {
            (Table::PerLabel(m), ThresholdKey::Label(y)) => m.get(y),
            (Table::PerModel(m), ThresholdKey::Model(id)) => m.get(id),
            (Table::PerModelLabel(m), ThresholdKey::ModelLabel(id, y)) => {
                m.get(&(id.clone(), *y))
            }
            (Table::PerRecord(m), ThresholdKey::Record(r)) => m.get(r),
            (Table::PerModelRecord(m), ThresholdKey::ModelRecord(id, r)) => {
                m.get(&(id.clone(), *r))
            }
            _ => None,
        };
        let dist = dist.ok_or_else(|| self.missing(format_args!("{key}")))?;
        smooth_threshold(dist, self.method, alpha)
    }

    /// All calibration entries, in stable sorted order.
    pub fn keys(&self) -> Vec<ThresholdKey> {
        match &self.table {
            Table::PerLabel(m) => m.keys().map(|&y| ThresholdKey::Label(y)).collect(),
            Table::PerModel(m) => m.keys().map(|id| ThresholdKey::Model(id.clone())).collect(),
            Table::PerModelLabel(m) => m
                .keys()
                .map(|(id, y)| ThresholdKey::ModelLabel(id.clone(), *y))
                .collect(),
            Table::PerRecord(m) => m.keys().map(|&r| ThresholdKey::Record(r)).collect(),
            Table::PerModelRecord(m) => m
                .keys()
                .map(|(id, r)| ThresholdKey::ModelRecord(id.clone(), *r))
                .collect(),
        }
    }

    pub fn n_entries(&self) -> usize {
        match &self.table {
            Table::PerLabel(m) => m.len(),
            Table::PerModel(m) => m.len(),
            Table::PerModelLabel(m) => m.len(),
            Table::PerRecord(m) => m.len(),
            Table::PerModelRecord(m) => m.len(),
        }
    }

    /// Combines calibrations of the same attack and method built from
    /// disjoint target sets (e.g. per-target distillation tables).
    pub fn merge(parts: Vec<ThresholdFn>) -> Result<ThresholdFn> {
        let mut iter = parts.into_iter();
        let mut acc = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot merge zero threshold tables"))?;
        for part in iter {
            if part.kind != acc.kind {
                return Err(Error::invalid(format!(
                    "cannot merge attack {} calibration into attack {}",
                    part.kind, acc.kind
                )));
            }
            if part.method != acc.method {
                return Err(Error::invalid(format!(
                    "cannot merge method {} calibration into method {}",
                    part.method, acc.method
                )));
            }
            match (&mut acc.table, part.table) {
                (Table::PerLabel(a), Table::PerLabel(b)) => {
                    for (k, v) in b {
                        if a.insert(k, v).is_some() {
                            return Err(Error::invalid(format!("duplicate entry label {k}")));
                        }
                    }
                }
                (Table::PerModel(a), Table::PerModel(b)) => {
                    for (k, v) in b {
                        if a.insert(k.clone(), v).is_some() {
                            return Err(Error::invalid(format!("duplicate entry model {k}")));
                        }
                    }
                }
                (Table::PerModelLabel(a), Table::PerModelLabel(b)) => {
                    for (k, v) in b {
                        if a.insert(k.clone(), v).is_some() {
                            return Err(Error::invalid(format!(
                                "duplicate entry model {}, label {}",
                                k.0, k.1
                            )));
                        }
                    }
                }
                (Table::PerRecord(a), Table::PerRecord(b)) => {
                    for (k, v) in b {
                        if a.insert(k, v).is_some() {
                            return Err(Error::invalid(format!("duplicate entry record {k}")));
                        }
                    }
                }
                (Table::PerModelRecord(a), Table::PerModelRecord(b)) => {
                    for (k, v) in b {
                        if a.insert(k.clone(), v).is_some() {
                            return Err(Error::invalid(format!(
                                "duplicate entry model {}, record {}",
                                k.0, k.1
                            )));
                        }
                    }
                }
                _ => {
                    return Err(Error::invalid(
                        "cannot merge threshold tables with different key shapes",
                    ))
                }
            }
        }
        Ok(acc)
    }

    fn missing(&self, what: std::fmt::Arguments<'_>) -> Error {
        Error::MissingCalibration(format!(
            "attack {} has no calibration entry for {what}",
            self.kind
        ))
    }
}

/// Calibration matrices must hold non-member losses only.
fn ensure_out_world(matrix: &SignalMatrix) -> Result<()> {
    if let Some(membership) = matrix.membership() {
        if membership.iter().any(|&b| b != 0) {
            return Err(Error::invalid(
                "calibration matrix contains member-labeled losses; thresholds are calibrated on non-members",
            ));
        }
    }
    Ok(())
}

/// Attack S: pool every shadow model's losses per record label. The
/// threshold for a target then depends only on its label.
pub fn calibrate_s(
    matrix: &SignalMatrix,
    labels: &[usize],
    classes: usize,
    method: SmoothingMethod,
) -> Result<ThresholdFn> {
    ensure_out_world(matrix)?;
    if classes == 0 {
        return Err(Error::invalid("classes must be positive"));
    }
    if labels.len() != matrix.n_records() {
        return Err(Error::invalid(format!(
            "got {} labels for {} matrix records",
            labels.len(),
            matrix.n_records()
        )));
    }
    let mut pools: BTreeMap<usize, Vec<f64>> = (0..classes).map(|y| (y, Vec::new())).collect();
    for (j, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::invalid(format!(
                "record {} has label {label} outside {classes} classes",
                matrix.record_ids()[j]
            )));
        }
    }
    for m in 0..matrix.n_models() {
        for (j, &label) in labels.iter().enumerate() {
            pools.get_mut(&label).unwrap().push(matrix.value(m, j));
        }
    }
    let mut table = BTreeMap::new();
    for (label, pool) in pools {
        if pool.len() < 2 {
            return Err(Error::MissingCalibration(format!(
                "label {label} has {} pooled shadow losses; need at least 2",
                pool.len()
            )));
        }
        table.insert(label, EmpiricalDist::new(pool)?);
    }
    Ok(ThresholdFn {
        kind: AttackKind::S,
        method,
        table: Table::PerLabel(table),
    })
}

/// Attack P: one distribution per target model, its losses on fresh
/// population records. Identical threshold for every record of that
/// model.
pub fn calibrate_p(matrix: &SignalMatrix, method: SmoothingMethod) -> Result<ThresholdFn> {
    ensure_out_world(matrix)?;
    let mut table = BTreeMap::new();
    for (m, id) in matrix.model_ids().iter().enumerate() {
        if matrix.n_records() < 2 {
            return Err(Error::MissingCalibration(format!(
                "model {id} has {} population losses; need at least 2",
                matrix.n_records()
            )));
        }
        table.insert(id.clone(), EmpiricalDist::new(matrix.row(m).to_vec())?);
    }
    Ok(ThresholdFn {
        kind: AttackKind::P,
        method,
        table: Table::PerModel(table),
    })
}

/// Attack P, per-label variant: population losses grouped by record
/// label within each target model. Same calibration data as
/// [`calibrate_p`], one distribution per (model, label) instead of per
/// model.
pub fn calibrate_p_per_label(
    matrix: &SignalMatrix,
    labels: &[usize],
    classes: usize,
    method: SmoothingMethod,
) -> Result<ThresholdFn> {
    ensure_out_world(matrix)?;
    if classes == 0 {
        return Err(Error::invalid("classes must be positive"));
    }
    if labels.len() != matrix.n_records() {
        return Err(Error::invalid(format!(
            "got {} labels for {} matrix records",
            labels.len(),
            matrix.n_records()
        )));
    }
    let mut table = BTreeMap::new();
    for (m, id) in matrix.model_ids().iter().enumerate() {
        let mut pools: BTreeMap<usize, Vec<f64>> = (0..classes).map(|y| (y, Vec::new())).collect();
        for (j, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::invalid(format!(
                    "record {} has label {label} outside {classes} classes",
                    matrix.record_ids()[j]
                )));
            }
            pools.get_mut(&label).unwrap().push(matrix.value(m, j));
        }
        for (label, pool) in pools {
            if pool.len() < 2 {
                return Err(Error::MissingCalibration(format!(
                    "model {id}, label {label} has {} population losses; need at least 2",
                    pool.len()
                )));
            }
            table.insert((id.clone(), label), EmpiricalDist::new(pool)?);
        }
    }
    Ok(ThresholdFn {
        kind: AttackKind::P,
        method,
        table: Table::PerModelLabel(table),
    })
}

/// Attack R: one distribution per target record, its losses across
/// reference models trained without it. Identical threshold across
/// target models.
pub fn calibrate_r(matrix: &SignalMatrix, method: SmoothingMethod) -> Result<ThresholdFn> {
    ensure_out_world(matrix)?;
    let mut table = BTreeMap::new();
    for (j, &record_id) in matrix.record_ids().iter().enumerate() {
        if matrix.n_models() < 2 {
            return Err(Error::MissingCalibration(format!(
                "record {record_id} has {} reference losses; need at least 2",
                matrix.n_models()
            )));
        }
        table.insert(record_id, EmpiricalDist::new(matrix.column(j))?);
    }
    Ok(ThresholdFn {
        kind: AttackKind::R,
        method,
        table: Table::PerRecord(table),
    })
}

fn per_model_record_table(
    sets: &BTreeMap<String, SignalMatrix>,
    kind: AttackKind,
    what: &str,
    method: SmoothingMethod,
) -> Result<ThresholdFn> {
    if sets.is_empty() {
        return Err(Error::invalid(format!(
            "no target models supplied for attack {kind} calibration"
        )));
    }
    let mut table = BTreeMap::new();
    for (target_id, matrix) in sets {
        ensure_out_world(matrix)?;
        for (j, &record_id) in matrix.record_ids().iter().enumerate() {
            if matrix.n_models() < 2 {
                return Err(Error::MissingCalibration(format!(
                    "model {target_id}, record {record_id} has {} {what} losses; need at least 2",
                    matrix.n_models()
                )));
            }
            table.insert((target_id.clone(), record_id), EmpiricalDist::new(matrix.column(j))?);
        }
    }
    Ok(ThresholdFn {
        kind,
        method,
        table: Table::PerModelRecord(table),
    })
}

/// Attack D: per target model, a matrix of its self-distilled models'
/// losses (rows) on the evaluation records (columns); one distribution
/// per (model, record) pair.
pub fn calibrate_d(
    sets: &BTreeMap<String, SignalMatrix>,
    method: SmoothingMethod,
) -> Result<ThresholdFn> {
    per_model_record_table(sets, AttackKind::D, "distilled", method)
}

/// Attack L: per target model, a matrix of leave-one-out retraining
/// losses. Row `s` is retraining seed `s`; the models behind column `z`
/// were trained on the target dataset minus record `z`, so each column
/// is that record's own out-world distribution.
pub fn calibrate_l(
    sets: &BTreeMap<String, SignalMatrix>,
    method: SmoothingMethod,
) -> Result<ThresholdFn> {
    per_model_record_table(sets, AttackKind::L, "leave-one-out", method)
}
