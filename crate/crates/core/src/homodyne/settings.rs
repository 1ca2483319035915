use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Envelope of the temporal mode each pulse is integrated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalMode {
    #[default]
    FlatTop,
    Hann,
}

/// Monte Carlo and detection-chain settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    pub shots: usize,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub pulse_ns: f64,
    /// Empty record kept before and after each pulse.
    pub guard_ns: f64,
    pub filter_center_hz: f64,
    pub filter_bandwidth_hz: f64,
    pub filter_order: usize,
    /// Electronic noise variance relative to the vacuum (shot-noise) level
    /// of the unfiltered temporal-mode estimate.
    pub electronic_noise_rel: f64,
    pub temporal_mode: TemporalMode,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            shots: 10_000,
            seed: 1,
            sample_rate_hz: 1e8,
            pulse_ns: 500.0,
            guard_ns: 250.0,
            filter_center_hz: 2.5e6,
            filter_bandwidth_hz: 2e6,
            filter_order: 4,
            electronic_noise_rel: 0.01,
            temporal_mode: TemporalMode::FlatTop,
        }
    }
}

pub(crate) const MIN_PULSE_SAMPLES: usize = 16;
const MAX_FILTER_ORDER: usize = 16;

impl McSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Settings(msg));
        if self.shots < 2 {
            return bad(format!("shots = {} (need at least 2)", self.shots));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample_rate_hz = {}", self.sample_rate_hz));
        }
        if !(self.pulse_ns > 0.0) || !(self.guard_ns >= 0.0) {
            return bad(format!(
                "pulse_ns = {}, guard_ns = {}",
                self.pulse_ns, self.guard_ns
            ));
        }
        if self.pulse_samples() < MIN_PULSE_SAMPLES {
            return bad(format!(
                "pulse spans {} samples, need at least {MIN_PULSE_SAMPLES}",
                self.pulse_samples()
            ));
        }
        let nyquist = 0.5 * self.sample_rate_hz;
        if !(self.filter_bandwidth_hz > 0.0 && self.filter_bandwidth_hz < nyquist) {
            return bad(format!(
                "filter_bandwidth_hz = {} must be in (0, {nyquist})",
                self.filter_bandwidth_hz
            ));
        }
        let (lo, hi) = self.passband();
        if !(lo > 0.0 && hi < nyquist) {
            return bad(format!(
                "passband [{lo}, {hi}] Hz must lie inside (0, {nyquist}) Hz"
            ));
        }
        if self.filter_order == 0 || self.filter_order > MAX_FILTER_ORDER {
            return bad(format!(
                "filter_order = {} (1..={MAX_FILTER_ORDER})",
                self.filter_order
            ));
        }
        if !(self.electronic_noise_rel >= 0.0 && self.electronic_noise_rel.is_finite()) {
            return bad(format!(
                "electronic_noise_rel = {}",
                self.electronic_noise_rel
            ));
        }
        Ok(())
    }

    pub fn passband(&self) -> (f64, f64) {
        let half = 0.5 * self.filter_bandwidth_hz;
        (self.filter_center_hz - half, self.filter_center_hz + half)
    }

    pub fn pulse_samples(&self) -> usize {
        (self.pulse_ns * 1e-9 * self.sample_rate_hz).round() as usize
    }

    pub fn guard_samples(&self) -> usize {
        (self.guard_ns * 1e-9 * self.sample_rate_hz).round() as usize
    }

    /// Samples per recorded trace: guard, pulse, guard.
    pub fn record_samples(&self) -> usize {
        self.pulse_samples() + 2 * self.guard_samples()
    }
}
