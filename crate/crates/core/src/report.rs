//! Model-versus-measurement ledger and operating-point checks.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::criteria::{
    correlation_report, evaluate_criteria, optimal_gains_for_state, CorrelationRow,
};
use crate::error::{Error, Result};
use crate::network::{infer_atomic_db, run_pipeline, ExperimentSpec, Stage};

/// Measured value and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured(pub f64, pub f64);

impl Measured {
    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn err(&self) -> f64 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub combination: String,
    pub input: Measured,
    pub atomic: Measured,
    pub released: Measured,
}

impl ReferenceRow {
    pub fn at(&self, stage: Stage) -> Measured {
        match stage {
            Stage::Input => self.input,
            Stage::Atomic => self.atomic,
            Stage::Released => self.released,
        }
    }
}

/// Published measurements to compare the model against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub description: String,
    pub rows: Vec<ReferenceRow>,
    pub released_witness: Measured,
    pub r: f64,
    pub eta_mapping: f64,
    pub eta_read: f64,
    pub eta_total: f64,
    pub transmission_loss: f64,
    pub storage_time_ns: f64,
}

impl Reference {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn row(&self, combination: &str) -> Option<&ReferenceRow> {
        self.rows.iter().find(|r| r.combination == combination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub combination: String,
    pub stage: Stage,
    #[serde(rename = "model_dB")]
    pub model_db: f64,
    #[serde(rename = "measured_dB")]
    pub reference_db: f64,
    #[serde(rename = "measured_err")]
    pub reference_err: f64,
}

impl LedgerEntry {
    pub fn deviation(&self) -> f64 {
        self.model_db - self.reference_db
    }

    pub fn within_error(&self) -> bool {
        self.deviation().abs() <= self.reference_err + 1e-12
    }
}

/// One ledger entry per (row, stage), rows in reference order.
pub fn ledger(spec: &ExperimentSpec, reference: &Reference) -> Result<Vec<LedgerEntry>> {
    let model = correlation_report(spec)?;
    let mut out = Vec::with_capacity(3 * model.len());
    for row in &model {
        let r = reference.row(&row.combination).ok_or_else(|| {
            Error::Settings(format!("reference has no row '{}'", row.combination))
        })?;
        for (stage, value) in [
            (Stage::Input, row.input_db),
            (Stage::Atomic, row.atomic_db),
            (Stage::Released, row.released_db),
        ] {
            out.push(LedgerEntry {
                combination: row.combination.clone(),
                stage,
                model_db: value,
                reference_db: r.at(stage).value(),
                reference_err: r.at(stage).err(),
            });
        }
    }
    Ok(out)
}

pub fn write_ledger_csv<W: Write>(writer: W, entries: &[LedgerEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "combination",
        "stage",
        "model_dB",
        "measured_dB",
        "measured_err",
    ])?;
    for e in entries {
        w.write_record([
            e.combination.clone(),
            e.stage.to_string(),
            format!("{:.6}", e.model_db),
            format!("{:.2}", e.reference_db),
            format!("{:.2}", e.reference_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table: one line per combination, model and measured value
/// for each stage, plus the atomic value inferred from the measured
/// released value.
pub fn format_table(
    rows: &[CorrelationRow],
    reference: &Reference,
    eta_read: f64,
) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>8} {:>14} {:>8} {:>14} {:>8} {:>14} {:>10}",
        "combination",
        "input",
        "measured",
        "atomic",
        "measured",
        "released",
        "measured",
        "inferred"
    );
    for row in rows {
        let r = reference.row(&row.combination).ok_or_else(|| {
            Error::Settings(format!("reference has no row '{}'", row.combination))
        })?;
        let fmt = |m: Measured| format!("{:.2} ± {:.2}", m.value(), m.err());
        let inferred = infer_atomic_db(r.released.value(), eta_read)?;
        let _ = writeln!(
            s,
            "{:<12} {:>8.3} {:>14} {:>8.3} {:>14} {:>8.3} {:>14} {:>10.3}",
            row.combination,
            row.input_db,
            fmt(r.input),
            row.atomic_db,
            fmt(r.atomic),
            row.released_db,
            fmt(r.released),
            inferred
        );
    }
    Ok(s)
}

/// A single model-versus-reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub model: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, model: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            model,
            target,
            tolerance,
            pass: (model - target).abs() <= tolerance + 1e-12,
        }
    }
}

/// Compares a config against the reference operating point: the first two
/// ledger rows at each stage within their error bars, the stated
/// efficiencies, and the released-stage witness with its verdict.
pub fn reference_checks(spec: &ExperimentSpec, reference: &Reference) -> Result<Vec<Check>> {
    let entries = ledger(spec, reference)?;
    let mut checks = Vec::new();
    for e in entries.iter().take(6) {
        checks.push(Check::new(
            format!("{} {} dB", e.stage, e.combination),
            e.model_db,
            e.reference_db,
            e.reference_err,
        ));
    }
    let eta_m = spec.mapping_efficiencies()?;
    let eta = spec.total_efficiencies()?;
    checks.push(Check::new("r", spec.r.0[0], reference.r, 0.0));
    checks.push(Check::new("eta_M", eta_m[0], reference.eta_mapping, 0.005));
    checks.push(Check::new(
        "eta_read",
        spec.eta_read.0[0],
        reference.eta_read,
        0.005,
    ));
    checks.push(Check::new("eta total", eta[0], reference.eta_total, 0.005));

    let pipeline = run_pipeline(spec)?;
    let released = pipeline.released.state();
    let result = evaluate_criteria(
        released,
        optimal_gains_for_state(released)?,
        Stage::Released,
    )?;
    checks.push(Check::new(
        "released I",
        result.witness,
        reference.released_witness.value(),
        2.0 * reference.released_witness.err(),
    ));
    checks.push(Check::new(
        "released entangled",
        f64::from(u8::from(result.entangled)),
        1.0,
        0.0,
    ));
    Ok(checks)
}
