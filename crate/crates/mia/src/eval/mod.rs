//! Reporting and analysis: ROC/AUC curves, agreement tables, the
//! differential-vulnerability partition, leave-one-out vulnerability,
//! latent-neighbor lookup, and the small-scale likelihood-ratio
//! comparison experiment.

mod agreement;
mod lemma1;
mod roc;
mod vuln;

pub use agreement::{agreement, agreement_table, AgreementTable};
pub use lemma1::{lemma1_experiment, Lemma1Config, Lemma1Report};
pub use roc::{
    default_alpha_grid, fpr_at_tpr, roc_alpha_sweep, roc_score_sweep, tpr_at_fpr, EvalChallenge,
    Provenance, RocCurve,
};
pub use vuln::{
    latent_neighbors, loo_vulnerability, loss_histogram, partition_records, LossHistogram,
    VulnPartition,
};
