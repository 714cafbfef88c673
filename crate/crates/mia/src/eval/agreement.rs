//! Pairwise agreement between attack predictions and ground truth,
//! reported as a square table over named prediction vectors.

use crate::error::{Error, Result};

/// Fraction of indices where two aligned prediction vectors match.
pub fn agreement(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "prediction vectors of lengths {} and {} cannot be compared",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("cannot compute agreement of empty vectors"));
    }
    let matches = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(matches as f64 / a.len() as f64)
}

/// Square agreement-rate table over named prediction sets, typically the
/// attack kinds plus a GT column. Symmetric with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementTable {
    pub names: Vec<String>,
    /// `rates[i][j]` = agreement between sets `i` and `j`.
    pub rates: Vec<Vec<f64>>,
    /// Which evaluation split produced the predictions ("train"/"test").
    pub split: String,
}

impl AgreementTable {
    pub fn rate(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.rates[i][j])
    }
}

/// Builds the full table from aligned prediction vectors.
pub fn agreement_table(predictions: &[(String, Vec<u8>)], split: &str) -> Result<AgreementTable> {
    if predictions.is_empty() {
        return Err(Error::invalid("agreement table needs at least one prediction set"));
    }
    let n = predictions.len();
    let mut rates = vec![vec![0.0; n]; n];
    for i in 0..n {
        rates[i][i] = 1.0;
        for j in (i + 1)..n {
            let r = agreement(&predictions[i].1, &predictions[j].1)?;
            rates[i][j] = r;
            rates[j][i] = r;
        }
    }
    Ok(AgreementTable {
        names: predictions.iter().map(|(name, _)| name.clone()).collect(),
        rates,
        split: split.to_string(),
    })
}
