//! The decision layer: turn calibrated thresholds into membership calls.
//!
//! Every attack in this crate is a loss-threshold test. The attacks
//! differ only in what their threshold is allowed to depend on; the
//! decision rule itself is always "member iff loss <= threshold".

use serde::{Deserialize, Serialize};

use crate::core::Record;
use crate::error::{Error, Result};
use crate::synth::ToyModel;
use crate::thresholds::ThresholdFn;

/// The five calibration strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    /// Shadow models; threshold depends on the record's label.
    S,
    /// Population data; threshold depends on the target model.
    P,
    /// Reference models; threshold depends on the target record.
    R,
    /// Self-distillation; threshold depends on model and record.
    D,
    /// Leave-one-out retraining; threshold depends on model and record.
    L,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::S,
        AttackKind::P,
        AttackKind::R,
        AttackKind::D,
        AttackKind::L,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::S => "S",
            AttackKind::P => "P",
            AttackKind::R => "R",
            AttackKind::D => "D",
            AttackKind::L => "L",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(AttackKind::S),
            "P" | "p" => Ok(AttackKind::P),
            "R" | "r" => Ok(AttackKind::R),
            "D" | "d" => Ok(AttackKind::D),
            "L" | "l" => Ok(AttackKind::L),
            other => Err(Error::invalid(format!(
                "unknown attack kind {other:?} (expected one of S, P, R, D, L)"
            ))),
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a threshold function is allowed to condition on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencySpec {
    pub uses_label: bool,
    pub uses_model: bool,
    pub uses_record: bool,
}

impl DependencySpec {
    pub fn describe(self) -> String {
        let mut parts = Vec::new();
        if self.uses_label {
            parts.push("label");
        }
        if self.uses_model {
            parts.push("model");
        }
        if self.uses_record {
            parts.push("record");
        }
        parts.join("+")
    }
}

/// Per-attack dependency slots: what identifies a calibration entry.
pub fn dependency_of(kind: AttackKind) -> DependencySpec {
    match kind {
        AttackKind::S => DependencySpec {
            uses_label: true,
            uses_model: false,
            uses_record: false,
        },
        AttackKind::P => DependencySpec {
            uses_label: false,
            uses_model: true,
            uses_record: false,
        },
        AttackKind::R => DependencySpec {
            uses_label: false,
            uses_model: false,
            uses_record: true,
        },
        AttackKind::D | AttackKind::L => DependencySpec {
            uses_label: false,
            uses_model: true,
            uses_record: true,
        },
    }
}

/// One membership call. `confidence = threshold - loss`, so positive
/// confidence always means a member prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackDecision {
    pub kind: AttackKind,
    pub predicted_bit: u8,
    pub loss: f64,
    pub threshold: f64,
    pub confidence: f64,
    pub alpha: f64,
}

/// The decision rule shared by every attack: member iff the loss is at
/// most the calibrated threshold. Equality decides member, keeping the
/// rejection region closed.
pub fn decide_with_loss(
    tfn: &ThresholdFn,
    model_id: &str,
    record_id: u64,
    label: usize,
    loss: f64,
    alpha: f64,
) -> Result<AttackDecision> {
    if !loss.is_finite() || loss < 0.0 {
        return Err(Error::invalid(format!(
            "loss {loss} for record {record_id} must be finite and non-negative"
        )));
    }
    let threshold = tfn.threshold(model_id, record_id, label, alpha)?;
    Ok(AttackDecision {
        kind: tfn.kind(),
        predicted_bit: u8::from(loss <= threshold),
        loss,
        threshold,
        confidence: threshold - loss,
        alpha,
    })
}

/// Evaluates the target model on the record, then applies the rule.
pub fn decide(
    tfn: &ThresholdFn,
    model: &ToyModel,
    record: &Record,
    alpha: f64,
) -> Result<AttackDecision> {
    let loss = model.loss(record)?;
    decide_with_loss(tfn, &model.id(), record.id, record.label, loss, alpha)
}

/// Element-wise [`decide`], aborting on the first failure with its index.
pub fn decide_batch(
    tfn: &ThresholdFn,
    challenges: &[(&ToyModel, &Record)],
    alpha: f64,
) -> Result<Vec<AttackDecision>> {
    challenges
        .iter()
        .enumerate()
        .map(|(i, (model, record))| {
            decide(tfn, model, record, alpha)
                .map_err(|e| Error::invalid(format!("challenge {i}: {e}")))
        })
        .collect()
}
