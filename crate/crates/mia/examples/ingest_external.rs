//! Auditing a model that was trained somewhere else.
//!
//! Nothing in the threshold machinery needs the built-in training stack:
//! any tool that can export per-record out-world losses as CSV can feed
//! the calibrators. This example writes such a file the way an external
//! pipeline would, ingests it, and runs the record-calibrated attack on
//! three observed target losses.
//!
//! Record 333 is the point of the exercise: its observed loss (3.0) is
//! higher than record 205's (2.1), yet it is flagged as a member and 205
//! is not, because thresholds are relative to each record's own
//! out-world distribution.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use mia::attacks::decide_with_loss;
use mia::core::SeedSpec;
use mia::signals::ingest;
use mia::thresholds::{calibrate_r, SmoothingMethod};

const ALPHA: f64 = 0.1;

/// (record id, out-world mean, out-world spread, observed target loss)
const RECORDS: [(u64, f64, f64, f64); 3] = [
    (101, 2.0, 0.3, 0.4),
    (205, 2.0, 0.3, 2.1),
    (333, 6.0, 0.5, 3.0),
];

fn main() -> mia::Result<()> {
    // Stand-in for another framework's export: 30 models' losses on the
    // three audited records, one row per model.
    let mut rng = SeedSpec::new(7).child("external", 0).rng();
    let mut csv = String::from("#kind=External\n#labels=0,1,1\nmodel_id");
    for (rid, ..) in RECORDS {
        let _ = write!(csv, ",{rid}");
    }
    csv.push('\n');
    for m in 0..30 {
        let _ = write!(csv, "ext.{m}");
        for (_, mean, spread, _) in RECORDS {
            let noise: f64 = rng.sample(StandardNormal);
            let _ = write!(csv, ",{:.6}", (mean + spread * noise).max(0.0));
        }
        csv.push('\n');
    }
    let path = std::env::temp_dir().join("mia_external_losses.csv");
    std::fs::write(&path, csv)?;

    let set = ingest(&path)?;
    println!(
        "ingested {}: {} models x {} records ({:?})",
        path.display(),
        set.matrix.n_models(),
        set.matrix.n_records(),
        set.kind,
    );

    let tfn = calibrate_r(&set.matrix, SmoothingMethod::LinearInterp)?;
    println!();
    println!("record-calibrated decisions at alpha = {ALPHA}:");
    for (rid, _, _, observed) in RECORDS {
        let d = decide_with_loss(&tfn, "external-target", rid, 0, observed, ALPHA)?;
        println!(
            "  record {rid}: loss {observed:.2} vs threshold {:.2} -> {}",
            d.threshold,
            if d.predicted_bit == 1 { "member" } else { "non-member" },
        );
    }
    Ok(())
}
