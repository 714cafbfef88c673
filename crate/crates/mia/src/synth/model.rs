//! The audited model family: a one-hidden-layer tanh network with a
//! softmax head, degenerating to multinomial logistic regression at
//! hidden width zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::Record;
use crate::error::{Error, Result};

/// Probabilities are floored at this value inside the loss, which caps
/// the loss at `LOSS_CEILING`.
pub const PROBA_FLOOR: f64 = 1e-12;

/// `-ln(PROBA_FLOOR)`, the largest loss the stack can report.
pub const LOSS_CEILING: f64 = 27.631021115928547;

/// Dense parameters, row-major. `w1`/`b1` are empty when `hidden == 0`
/// and `w2` maps inputs (or hidden activations) straight to class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub dim: usize,
    pub classes: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    fingerprint: u64,
}

impl ToyModel {
    /// Zero-initialized model (uniform predictions everywhere).
    pub fn zeroed(dim: usize, classes: usize, hidden: usize) -> Result<Self> {
        if dim == 0 || classes < 2 {
            return Err(Error::invalid(format!(
                "model shape dim {dim}, classes {classes} invalid"
            )));
        }
        let in_dim = if hidden == 0 { dim } else { hidden };
        Ok(ToyModel {
            dim,
            classes,
            hidden,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; classes * in_dim],
            b2: vec![0.0; classes],
            fingerprint: 0,
        })
    }

    /// Gaussian weight init with zero biases. Draw order is fixed: `w1`
    /// row-major, then `w2` row-major.
    pub(crate) fn init(
        dim: usize,
        classes: usize,
        hidden: usize,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut m = ToyModel::zeroed(dim, classes, hidden)?;
        for w in m.w1.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *w = scale * g;
        }
        for w in m.w2.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *w = scale * g;
        }
        Ok(m)
    }

    pub(crate) fn set_fingerprint(&mut self, fp: u64) {
        self.fingerprint = fp;
    }

    /// Hash of (dataset, training config, seed) recorded by the trainer.
    /// Zero for hand-built models.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Stable string id used in signal matrices and transcripts.
    pub fn id(&self) -> String {
        format!("{:016x}", self.fingerprint)
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::invalid(format!(
                "feature dim {} does not match model dim {}",
                features.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Hidden activations. Errors at hidden width zero, where no
    /// penultimate layer exists.
    pub fn penultimate(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        if self.hidden == 0 {
            return Err(Error::invalid(
                "model has hidden width 0; no penultimate layer",
            ));
        }
        let mut h = vec![0.0; self.hidden];
        for (i, hi) in h.iter_mut().enumerate() {
            let mut a = self.b1[i];
            let row = &self.w1[i * self.dim..(i + 1) * self.dim];
            for (w, x) in row.iter().zip(features) {
                a += w * x;
            }
            *hi = a.tanh();
        }
        Ok(h)
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let acts;
        let input: &[f64] = if self.hidden == 0 {
            features
        } else {
            acts = self.penultimate(features)?;
            &acts
        };
        let in_dim = input.len();
        let mut logits = vec![0.0; self.classes];
        for (k, lk) in logits.iter_mut().enumerate() {
            let mut a = self.b2[k];
            let row = &self.w2[k * in_dim..(k + 1) * in_dim];
            for (w, x) in row.iter().zip(input) {
                a += w * x;
            }
            *lk = a;
        }
        Ok(logits)
    }

    /// Softmax class probabilities. Sums to one up to rounding.
    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        let logits = self.logits(features)?;
        Ok(softmax(&logits))
    }

    /// Cross-entropy loss of the record's true label, floored at
    /// `PROBA_FLOOR`: `-ln(max(p_label, 1e-12))`. Always finite and in
    /// `[0, LOSS_CEILING]`.
    pub fn loss(&self, record: &Record) -> Result<f64> {
        if record.label >= self.classes {
            return Err(Error::invalid(format!(
                "record label {} outside model's {} classes",
                record.label, self.classes
            )));
        }
        let logits = self.logits(&record.features)?;
        let logp = log_softmax(&logits);
        let raw = -logp[record.label];
        // A probability of exactly zero yields +inf here and clamps to the
        // ceiling; NaN means the logits themselves overflowed.
        if raw.is_nan() {
            return Err(Error::Numeric(format!(
                "loss is NaN for record {} (overflowing logits)",
                record.id
            )));
        }
        Ok(raw.min(LOSS_CEILING))
    }

    /// Flat parameter vector in `w1, b1, w2, b2` order. Together with
    /// [`ToyModel::set_params`] this supports gradient probes and
    /// samplers that treat the model as a point in parameter space.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p
    }

    /// Overwrites all parameters from a flat vector laid out as in
    /// [`ToyModel::params`]. The length must match `n_params`.
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter vector length");
        let mut i = 0;
        for dst in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *dst = flat[i];
            i += 1;
        }
    }
}

/// Max-shifted softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Max-shifted log-softmax; finite for finite logits.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::SeedSpec;

    fn record(label: usize, features: Vec<f64>) -> Record {
        Record {
            id: 0,
            label,
            features,
        }
    }

    #[test]
    fn zeroed_model_is_uniform() {
        let m = ToyModel::zeroed(3, 4, 2).unwrap();
        let p = m.predict_proba(&[0.5, -1.0, 2.0]).unwrap();
        for pi in &p {
            assert!((pi - 0.25).abs() < 1e-12);
        }
        // ln(4) loss on any record.
        let l = m.loss(&record(2, vec![0.5, -1.0, 2.0])).unwrap();
        assert!((l - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_on_random_models() {
        let mut rng = SeedSpec::new(77).rng();
        for i in 0..1000 {
            let hidden = if i % 2 == 0 { 0 } else { 5 };
            let m = ToyModel::init(4, 3, hidden, 2.0, &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|j| ((i * 7 + j) as f64).sin() * 3.0).collect();
            let p = m.predict_proba(&x).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn loss_matches_analytic_values() {
        // Logistic model with known logits: w2 = [[1],[0]], b2 = 0,
        // x = [0] gives uniform p = 1/2.
        let mut m = ToyModel::zeroed(1, 2, 0).unwrap();
        m.w2 = vec![1.0, 0.0];
        let l = m.loss(&record(0, vec![0.0])).unwrap();
        assert!((l - 2.0f64.ln()).abs() < 1e-12);

        // Extreme logits saturate at the ceiling instead of overflowing.
        m.w2 = vec![1000.0, 0.0];
        let l = m.loss(&record(1, vec![1.0])).unwrap();
        assert!((l - LOSS_CEILING).abs() < 1e-9);
        let l = m.loss(&record(0, vec![1.0])).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn loss_is_always_finite_and_bounded() {
        let mut rng = SeedSpec::new(5).rng();
        for _ in 0..200 {
            let m = ToyModel::init(2, 3, 4, 50.0, &mut rng).unwrap();
            let r = record(1, vec![100.0, -100.0]);
            let l = m.loss(&r).unwrap();
            assert!(l.is_finite());
            assert!((0.0..=LOSS_CEILING).contains(&l));
        }
    }

    #[test]
    fn penultimate_shape_and_h0_error() {
        let m = ToyModel::zeroed(3, 2, 5).unwrap();
        let h = m.penultimate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h.len(), 5);
        assert!(h.iter().all(|&v| v == 0.0)); // tanh(0) = 0 at zero weights

        let m0 = ToyModel::zeroed(3, 2, 0).unwrap();
        let err = m0.penultimate(&[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("no penultimate layer"));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = ToyModel::zeroed(3, 2, 0).unwrap();
        assert!(m.predict_proba(&[1.0]).is_err());
        assert!(m.loss(&record(0, vec![1.0, 2.0])).is_err());
        assert!(m.loss(&record(5, vec![1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut rng = SeedSpec::new(9).rng();
        let m = ToyModel::init(3, 2, 4, 1.0, &mut rng).unwrap();
        let flat = m.params();
        let mut m2 = ToyModel::zeroed(3, 2, 4).unwrap();
        m2.set_params(&flat);
        assert_eq!(m.w1, m2.w1);
        assert_eq!(m.b1, m2.b1);
        assert_eq!(m.w2, m2.w2);
        assert_eq!(m.b2, m2.b2);
    }
}
