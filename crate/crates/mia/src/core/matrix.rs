//! The signal matrix: losses of a set of models on a set of records.
//!
//! This is the interchange object between model training and attack
//! calibration. Rows are models, columns are records, cells are loss
//! values. An optional parallel bit matrix marks which (model, record)
//! cells were training members.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance tag for a matrix: which out-world construction produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixKind {
    Shadow,
    Population,
    Reference,
    Distilled,
    LeaveOneOut,
    External,
}

impl MatrixKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixKind::Shadow => "Shadow",
            MatrixKind::Population => "Population",
            MatrixKind::Reference => "Reference",
            MatrixKind::Distilled => "Distilled",
            MatrixKind::LeaveOneOut => "LeaveOneOut",
            MatrixKind::External => "External",
        }
    }

    pub fn parse(s: &str) -> Option<MatrixKind> {
        Some(match s {
            "Shadow" => MatrixKind::Shadow,
            "Population" => MatrixKind::Population,
            "Reference" => MatrixKind::Reference,
            "Distilled" => MatrixKind::Distilled,
            "LeaveOneOut" => MatrixKind::LeaveOneOut,
            "External" => MatrixKind::External,
            _ => return None,
        })
    }
}

/// Dense loss matrix with row/column identity.
///
/// Invariants (checked at construction and by [`validate_matrix`]):
/// model ids unique and non-empty, record ids unique, every value finite
/// and non-negative, membership bits (when present) 0/1 with matching
/// shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix {
    model_ids: Vec<String>,
    record_ids: Vec<u64>,
    values: Vec<f64>,
    membership: Option<Vec<u8>>,
}

impl SignalMatrix {
    /// Builds a matrix from row-major values. `values.len()` must equal
    /// `model_ids.len() * record_ids.len()`.
    pub fn new(model_ids: Vec<String>, record_ids: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        let m = SignalMatrix {
            model_ids,
            record_ids,
            values,
            membership: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// Attaches a row-major membership bit matrix of the same shape.
    pub fn with_membership(mut self, bits: Vec<u8>) -> Result<Self> {
        self.membership = Some(bits);
        self.validate()?;
        Ok(self)
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn n_records(&self) -> usize {
        self.record_ids.len()
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn record_ids(&self) -> &[u64] {
        &self.record_ids
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.record_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.record_ids.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.model_ids.len())
            .map(|r| self.value(r, col))
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn membership(&self) -> Option<&[u8]> {
        self.membership.as_deref()
    }

    pub fn membership_at(&self, row: usize, col: usize) -> Option<u8> {
        self.membership
            .as_ref()
            .map(|m| m[row * self.record_ids.len() + col])
    }

    pub fn row_index_of(&self, model_id: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == model_id)
    }

    pub fn col_index_of(&self, record_id: u64) -> Option<usize> {
        self.record_ids.iter().position(|&r| r == record_id)
    }

    /// Checks every invariant, reporting the first violation found with
    /// enough position information to locate it.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.model_ids.len() * self.record_ids.len() {
            return Err(Error::Matrix(format!(
                "value count {} does not match shape {} x {}",
                self.values.len(),
                self.model_ids.len(),
                self.record_ids.len()
            )));
        }
        let mut seen_models = std::collections::BTreeSet::new();
        for id in &self.model_ids {
            if id.is_empty() {
                return Err(Error::Matrix("empty model id".into()));
            }
            if !seen_models.insert(id.as_str()) {
                return Err(Error::Matrix(format!("duplicate model id \"{id}\"")));
            }
        }
        let mut seen_records = std::collections::BTreeSet::new();
        for &id in &self.record_ids {
            if !seen_records.insert(id) {
                return Err(Error::Matrix(format!("duplicate record id {id}")));
            }
        }
        let w = self.record_ids.len();
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                let (r, c) = (i / w, i % w);
                return Err(Error::Matrix(format!(
                    "value {v} at model \"{}\", record {} is not a finite non-negative loss",
                    self.model_ids[r], self.record_ids[c]
                )));
            }
        }
        if let Some(bits) = &self.membership {
            if bits.len() != self.values.len() {
                return Err(Error::Matrix(format!(
                    "membership bit count {} does not match value count {}",
                    bits.len(),
                    self.values.len()
                )));
            }
            for (i, &b) in bits.iter().enumerate() {
                if b > 1 {
                    let (r, c) = (i / w, i % w);
                    return Err(Error::Matrix(format!(
                        "membership cell at model \"{}\", record {} is {b}, not 0/1",
                        self.model_ids[r], self.record_ids[c]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`SignalMatrix::validate`].
pub fn validate_matrix(matrix: &SignalMatrix) -> Result<()> {
    matrix.validate()
}
