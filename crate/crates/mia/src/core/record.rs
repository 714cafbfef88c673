//! Records and datasets. A record is a labeled feature vector with a pool
//! id; a dataset is an id list referencing one pool.

use serde::{Deserialize, Serialize};

use super::seed::{fingerprint_ids, fold_fingerprint};
use crate::error::{Error, Result};

/// One labeled example. Ids are unique within a pool and stable across
/// runs, so datasets and signal matrices can reference records by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub label: usize,
    pub features: Vec<f64>,
}

impl Record {
    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// An ordered list of record ids drawn from one population pool.
///
/// Order is the draw order (training consumers shuffle per epoch anyway);
/// the fingerprint is order-independent so two datasets with the same id
/// set always compare equal by fingerprint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pool_id: String,
    ids: Vec<u64>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids.
    pub fn new(pool_id: impl Into<String>, ids: Vec<u64>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::invalid(format!(
                    "dataset contains duplicate record id {id}"
                )));
            }
        }
        Ok(Dataset {
            pool_id: pool_id.into(),
            ids,
        })
    }

    pub fn pool_id(&self) -> &str {
        &self.pool_id
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.contains(&id)
    }

    /// Dataset with `id` appended. Errors if already present.
    pub fn with_record(&self, id: u64) -> Result<Self> {
        if self.contains(id) {
            return Err(Error::invalid(format!(
                "record {id} already in dataset; cannot add"
            )));
        }
        let mut ids = self.ids.clone();
        ids.push(id);
        Ok(Dataset {
            pool_id: self.pool_id.clone(),
            ids,
        })
    }

    /// Dataset with `id` removed. Errors if absent.
    pub fn without_record(&self, id: u64) -> Result<Self> {
        if !self.contains(id) {
            return Err(Error::invalid(format!(
                "record {id} not in dataset; cannot remove"
            )));
        }
        let ids = self.ids.iter().copied().filter(|&x| x != id).collect();
        Ok(Dataset {
            pool_id: self.pool_id.clone(),
            ids,
        })
    }

    /// Order-independent content fingerprint (pool id folded with the
    /// sorted record ids).
    pub fn fingerprint(&self) -> u64 {
        let ids_fp = fingerprint_ids(&self.ids);
        let pool_fp = fingerprint_ids(
            &self
                .pool_id
                .bytes()
                .map(u64::from)
                .collect::<Vec<u64>>(),
        );
        fold_fingerprint(pool_fp, ids_fp)
    }

    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint())
    }
}
