//! Simulated pulsed balanced-homodyne measurement.

pub mod export;
pub mod filter;
pub mod mc;
pub mod settings;
pub mod traces;

pub use filter::{Biquad, SosFilter};
pub use mc::{
    estimate_criteria_mc, CriterionErrors, McCombination, McReport, McStageReport,
    MeasurementSession, StageShots,
};
pub use settings::{McSettings, TemporalMode};
pub use traces::{
    bandpass_and_average, calibration_batches, labels_for, raw_estimates, sample_shots,
    synthesize_traces, Calibration, ChannelLabel, Detector, FilteredEstimates, ShotMatrix,
    TraceBatch,
};
