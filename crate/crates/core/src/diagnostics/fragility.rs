use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::certainty::{benchmark, csv_field, BenchmarkSpec, BenchmarkTable};
use crate::data::Dataset;
use crate::error::Result;
use crate::model::{evaluate, train, AugmentSpec, Checkpoint, TrainSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodChange {
    pub method: String,
    pub before_mi_nats: f64,
    pub after_mi_nats: f64,
    /// `after - before`.
    pub absolute_change: f64,
    /// `(after - before) / before`; negative when certainty drops.
    pub relative_change: f64,
}

impl MethodChange {
    /// Relative drop, positive when MI decreased.
    pub fn relative_drop(&self) -> f64 {
        -self.relative_change
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragilityReport {
    pub before: BenchmarkTable,
    pub after: BenchmarkTable,
    pub changes: Vec<MethodChange>,
    pub fine_tuned_model_id: String,
    /// Test accuracy of the base and fine-tuned models on the benchmark data.
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

impl FragilityReport {
    pub fn change(&self, method: &str) -> Option<&MethodChange> {
        self.changes.iter().find(|c| c.method == method)
    }

    /// `method,beforeMI_nats,afterMI_nats,absoluteChange,relativeChange` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,beforeMI_nats,afterMI_nats,absoluteChange,relativeChange\n");
        for c in &self.changes {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                csv_field(&c.method),
                c.before_mi_nats,
                c.after_mi_nats,
                c.absolute_change,
                c.relative_change
            );
        }
        out
    }
}

/// Benchmarks `base`, fine-tunes it on `train_data` with `aug` layered onto
/// `fine_tune`, and benchmarks the result on the same images and seeds.
///
/// Returns the fine-tuned checkpoint alongside the report.
pub fn augmentation_fragility(
    base: &Checkpoint,
    train_data: &Dataset,
    eval_data: &Dataset,
    aug: &AugmentSpec,
    fine_tune: &TrainSpec,
    bench: &BenchmarkSpec,
) -> Result<(FragilityReport, Checkpoint)> {
    aug.validate()?;
    fine_tune.validate()?;
    let before = benchmark(base, eval_data, bench)?;
    let spec = TrainSpec {
        augmentation: Some(aug.clone()),
        ..fine_tune.clone()
    };
    let tuned = train(base, train_data, &spec)?;
    let after = benchmark(&tuned, eval_data, bench)?;
    let changes = before
        .rows
        .iter()
        .zip(&after.rows)
        .map(|(b, a)| MethodChange {
            method: b.method.clone(),
            before_mi_nats: b.mean_mi_nats,
            after_mi_nats: a.mean_mi_nats,
            absolute_change: a.mean_mi_nats - b.mean_mi_nats,
            relative_change: (a.mean_mi_nats - b.mean_mi_nats) / b.mean_mi_nats,
        })
        .collect();
    let report = FragilityReport {
        accuracy_before: evaluate(base, eval_data)?,
        accuracy_after: evaluate(&tuned, eval_data)?,
        fine_tuned_model_id: tuned.id().to_string(),
        before,
        after,
        changes,
    };
    Ok((report, tuned))
}
