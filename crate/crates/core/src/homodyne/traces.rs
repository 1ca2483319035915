//! Shot sampling, pulsed homodyne trace synthesis and the filter-and-integrate
//! estimator.
//!
//! Synthesis model for one channel of one shot with quadrature value `q`:
//!
//! ```text
//! trace[n] = q · u[n] + σ · ξ[n],        ξ[n] ~ N(0, 1) i.i.d.
//! ```
//!
//! where `u` is the temporal mode (pulse envelope times a carrier at the
//! filter centre frequency, zero in the guard intervals) normalized to unit
//! energy, and `σ² = electronic_noise_rel / 2`. Shot noise is not added
//! separately: it is the vacuum part of `q` itself, so a vacuum input sits
//! exactly at the shot-noise level.
//!
//! The estimator filters the trace with the zero-phase band-pass `H` and
//! projects onto the filtered mode, `q̂ = ⟨Hu, H·trace⟩ / ⟨Hu, Hu⟩`. Being
//! linear, it returns `q` plus filtered electronic noise, so the signal gain is
//! exactly one at every sample rate.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::SosFilter;
use super::settings::{McSettings, TemporalMode};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, Quadrature, VACUUM_VARIANCE};

const MAX_GROUPS: usize = 100;

/// Deterministic RNG for one group of shots of one batch.
///
/// Every batch has a `tag`; shots are split into at most 100 contiguous
/// groups and group `g` draws from ChaCha8 stream
/// `(tag << 33) | (noise << 32) | g` under the run seed. Quadrature draws and
/// detector-noise draws use separate streams (`noise = 0/1`). Results are
/// therefore independent of how groups are scheduled across threads.
pub fn stream_rng(seed: u64, tag: u64, noise: bool, group: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 33) | ((noise as u64) << 32) | group as u64);
    rng
}

/// Contiguous shot ranges used for RNG streams and jackknife blocks.
pub fn shot_groups(shots: usize) -> Vec<Range<usize>> {
    let n = shots.clamp(1, MAX_GROUPS);
    (0..n).map(|g| g * shots / n..(g + 1) * shots / n).collect()
}

/// One homodyne channel: which node it looks at and in which quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLabel {
    pub node: usize,
    pub quadrature: Quadrature,
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.quadrature, self.node + 1)
    }
}

pub fn labels_for(basis: &[Quadrature]) -> Vec<ChannelLabel> {
    basis
        .iter()
        .enumerate()
        .map(|(node, &quadrature)| ChannelLabel { node, quadrature })
        .collect()
}

/// Shot-level quadrature values, row-major `shots × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotMatrix {
    shots: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ShotMatrix {
    pub fn new(shots: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != shots * channels {
            return Err(Error::Dimension {
                expected: shots * channels,
                got: values.len(),
            });
        }
        Ok(Self {
            shots,
            channels,
            values,
        })
    }

    pub fn zeros(shots: usize, channels: usize) -> Self {
        Self {
            shots,
            channels,
            values: vec![0.0; shots * channels],
        }
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, shot: usize) -> &[f64] {
        &self.values[shot * self.channels..(shot + 1) * self.channels]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Sample variance of `Σ_k c_k · column_k`.
    pub fn combination_variance(&self, coeffs: &[f64]) -> f64 {
        let combo: Vec<f64> = (0..self.shots)
            .map(|s| self.row(s).iter().zip(coeffs).map(|(v, c)| v * c).sum())
            .collect();
        sample_variance(&combo)
    }
}

pub(crate) fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `F` with `F Fᵀ = cov`; falls back to an eigen-decomposition for
/// singular (but positive semidefinite) matrices.
pub(crate) fn sampling_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(cov.clone());
    let scale = cov.diagonal().amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-12 * scale {
        return Err(Error::NotPsd(min));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

pub(crate) struct QuadratureSampler {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
}

impl QuadratureSampler {
    pub(crate) fn new(state: &GaussianState, basis: &[Quadrature]) -> Result<Self> {
        let (mean, cov) = state.quadrature_marginal(basis)?;
        Ok(Self {
            mean: mean.iter().copied().collect(),
            factor: sampling_factor(&cov)?,
        })
    }

    pub(crate) fn channels(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.mean.len();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.mean[i] + (0..n).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>();
        }
    }
}

/// Draws `settings.shots` i.i.d. samples of the quadratures selected by
/// `basis` (one per mode). `stream` distinguishes independent batches under
/// the same seed.
pub fn sample_shots(
    state: &GaussianState,
    basis: &[Quadrature],
    settings: &McSettings,
    stream: u64,
) -> Result<ShotMatrix> {
    settings.validate()?;
    let sampler = QuadratureSampler::new(state, basis)?;
    let ch = sampler.channels();
    let chunks: Vec<Vec<f64>> = shot_groups(settings.shots)
        .into_par_iter()
        .enumerate()
        .map(|(g, range)| {
            let mut rng = stream_rng(settings.seed, stream, false, g);
            let mut out = vec![0.0; range.len() * ch];
            for row in out.chunks_mut(ch) {
                sampler.draw(&mut rng, row);
            }
            out
        })
        .collect();
    ShotMatrix::new(settings.shots, ch, chunks.concat())
}

/// The temporal mode and band-pass shared by every channel.
#[derive(Debug, Clone)]
pub struct Detector {
    filter: SosFilter,
    template: Vec<f64>,
    filtered_template: Vec<f64>,
    filtered_energy: f64,
    noise_sigma: f64,
}

impl Detector {
    pub fn new(settings: &McSettings) -> Result<Self> {
        settings.validate()?;
        let (lo, hi) = settings.passband();
        let filter = SosFilter::butterworth_bandpass(
            settings.filter_order,
            lo,
            hi,
            settings.sample_rate_hz,
            settings.filter_center_hz,
        )?;
        let template = temporal_mode(settings);
        let mut filtered_template = template.clone();
        filter.filtfilt(&mut filtered_template);
        let filtered_energy: f64 = filtered_template.iter().map(|v| v * v).sum();
        if !(filtered_energy > 0.0 && filtered_energy.is_finite()) {
            return Err(Error::Calibration(format!(
                "temporal mode has no energy in the passband ({filtered_energy:e})"
            )));
        }
        Ok(Self {
            filter,
            template,
            filtered_template,
            filtered_energy,
            noise_sigma: (settings.electronic_noise_rel * VACUUM_VARIANCE).sqrt(),
        })
    }

    pub fn filter(&self) -> &SosFilter {
        &self.filter
    }

    pub fn template(&self) -> &[f64] {
        &self.template
    }

    pub fn record_samples(&self) -> usize {
        self.template.len()
    }

    /// Writes one synthesized record for quadrature value `q`.
    pub fn synthesize_into<R: Rng>(&self, q: f64, rng: &mut R, out: &mut [f64]) {
        for (o, u) in out.iter_mut().zip(&self.template) {
            let noise: f64 = rng.sample(StandardNormal);
            *o = q * u + self.noise_sigma * noise;
        }
    }

    /// Band-pass filters `record` in place and integrates it against the
    /// filtered temporal mode.
    pub fn estimate(&self, record: &mut [f64]) -> f64 {
        self.filter.filtfilt(record);
        let dot: f64 = record
            .iter()
            .zip(&self.filtered_template)
            .map(|(a, b)| a * b)
            .sum();
        dot / self.filtered_energy
    }
}

fn temporal_mode(settings: &McSettings) -> Vec<f64> {
    let pulse = settings.pulse_samples();
    let guard = settings.guard_samples();
    let mut u = vec![0.0; settings.record_samples()];
    let omega = 2.0 * PI * settings.filter_center_hz / settings.sample_rate_hz;
    for n in 0..pulse {
        let envelope = match settings.temporal_mode {
            TemporalMode::FlatTop => 1.0,
            TemporalMode::Hann => (PI * (n as f64 + 0.5) / pulse as f64).sin().powi(2),
        };
        u[guard + n] = envelope * (omega * n as f64).cos();
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    u
}

/// Vacuum (local oscillator only) and dark (no light at all) reference
/// records, taken with the same settings as the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub vacuum: TraceBatch,
    pub dark: TraceBatch,
}

/// Synthesized records, stored shot-major then channel: record
/// `shot * channels + ch` occupies `samples` consecutive values.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBatch {
    pub settings: McSettings,
    pub labels: Vec<ChannelLabel>,
    pub shots: usize,
    pub samples: usize,
    pub data: Vec<f64>,
    pub calibration: Option<Box<Calibration>>,
}

impl TraceBatch {
    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn record(&self, shot: usize, channel: usize) -> &[f64] {
        let start = (shot * self.channels() + channel) * self.samples;
        &self.data[start..start + self.samples]
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = Some(Box::new(calibration));
        self
    }
}

/// Turns shot values into pulsed homodyne records (see the module docs for
/// the synthesis formula). Detector noise is drawn from `stream`.
pub fn synthesize_traces(
    shots: &ShotMatrix,
    labels: &[ChannelLabel],
    settings: &McSettings,
    stream: u64,
) -> Result<TraceBatch> {
    if labels.len() != shots.channels() {
        return Err(Error::Dimension {
            expected: shots.channels(),
            got: labels.len(),
        });
    }
    if shots.shots() != settings.shots {
        return Err(Error::Settings(format!(
            "shot matrix has {} rows but settings.shots = {}",
            shots.shots(),
            settings.shots
        )));
    }
    let detector = Detector::new(settings)?;
    let samples = detector.record_samples();
    let ch = shots.channels();
    let chunks: Vec<Vec<f64>> = shot_groups(settings.shots)
        .into_par_iter()
        .enumerate()
        .map(|(g, range)| {
            let mut rng = stream_rng(settings.seed, stream, true, g);
            let mut out = vec![0.0; range.len() * ch * samples];
            for (i, shot) in range.enumerate() {
                for (c, &q) in shots.row(shot).iter().enumerate() {
                    let start = (i * ch + c) * samples;
                    detector.synthesize_into(q, &mut rng, &mut out[start..start + samples]);
                }
            }
            out
        })
        .collect();
    Ok(TraceBatch {
        settings: settings.clone(),
        labels: labels.to_vec(),
        shots: settings.shots,
        samples,
        data: chunks.concat(),
        calibration: None,
    })
}

pub(crate) const VACUUM_TAG: u64 = 0x100;
pub(crate) const DARK_TAG: u64 = 0x101;

/// Reference batches for `channels` detectors: vacuum quadratures through the
/// full chain, and detector noise alone.
pub fn calibration_batches(settings: &McSettings, channels: usize) -> Result<Calibration> {
    let vac = GaussianState::vacuum(channels)?;
    let basis = vec![Quadrature::X; channels];
    let labels = labels_for(&basis);
    let vac_shots = sample_shots(&vac, &basis, settings, VACUUM_TAG)?;
    Ok(Calibration {
        vacuum: synthesize_traces(&vac_shots, &labels, settings, VACUUM_TAG)?,
        dark: synthesize_traces(
            &ShotMatrix::zeros(settings.shots, channels),
            &labels,
            settings,
            DARK_TAG,
        )?,
    })
}

/// Raw per-record estimates of a batch, `shots × channels`, unnormalized.
pub fn raw_estimates(batch: &TraceBatch) -> Result<ShotMatrix> {
    let detector = Detector::new(&batch.settings)?;
    if detector.record_samples() != batch.samples {
        return Err(Error::Dimension {
            expected: detector.record_samples(),
            got: batch.samples,
        });
    }
    let values: Vec<f64> = batch
        .data
        .par_chunks(batch.samples)
        .map(|rec| {
            let mut buf = rec.to_vec();
            detector.estimate(&mut buf)
        })
        .collect();
    ShotMatrix::new(batch.shots, batch.channels(), values)
}

/// Per-shot quadrature estimates normalized so the vacuum reference has
/// variance 1/2 on every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredEstimates {
    pub labels: Vec<ChannelLabel>,
    pub values: ShotMatrix,
    /// Amplitude factor applied to the raw estimates of each channel.
    pub scale: Vec<f64>,
    /// Residual detector-noise variance per channel after normalization;
    /// subtract it from single-channel variances (it is independent between
    /// channels).
    pub dark_variance: Vec<f64>,
}

impl FilteredEstimates {
    /// Variance of `Σ c_k q_k` with detector noise removed.
    pub fn combination_variance(&self, coeffs: &[f64]) -> f64 {
        let noise: f64 = coeffs
            .iter()
            .zip(&self.dark_variance)
            .map(|(c, d)| c * c * d)
            .sum();
        self.values.combination_variance(coeffs) - noise
    }
}

/// Per-channel `(vacuum variance, dark variance)` of raw estimates.
pub(crate) fn calibration_levels(vac: &ShotMatrix, dark: &ShotMatrix) -> Vec<(f64, f64)> {
    (0..vac.channels())
        .map(|c| {
            let col =
                |m: &ShotMatrix| -> Vec<f64> { (0..m.shots()).map(|s| m.row(s)[c]).collect() };
            (sample_variance(&col(vac)), sample_variance(&col(dark)))
        })
        .collect()
}

pub(crate) fn variance_scale(vacuum: f64, dark: f64, channel: usize) -> Result<f64> {
    let shot_noise = vacuum - dark;
    if !(shot_noise > 0.0) {
        return Err(Error::Calibration(format!(
            "channel {channel}: vacuum level {vacuum:e} does not exceed dark level {dark:e}"
        )));
    }
    Ok(VACUUM_VARIANCE / shot_noise)
}

/// Band-pass filters and integrates every record, then normalizes each
/// channel against the batch's calibration records.
pub fn bandpass_and_average(batch: &TraceBatch) -> Result<FilteredEstimates> {
    let cal = batch
        .calibration
        .as_ref()
        .ok_or_else(|| Error::Calibration("batch has no calibration records".into()))?;
    if cal.vacuum.settings != batch.settings || cal.dark.settings != batch.settings {
        return Err(Error::Calibration(
            "calibration taken with different settings".into(),
        ));
    }
    let raw = raw_estimates(batch)?;
    let levels = calibration_levels(&raw_estimates(&cal.vacuum)?, &raw_estimates(&cal.dark)?);
    let mut scale = Vec::with_capacity(levels.len());
    let mut dark_variance = Vec::with_capacity(levels.len());
    for (c, &(w, d)) in levels.iter().enumerate() {
        let s = variance_scale(w, d, c)?;
        scale.push(s.sqrt());
        dark_variance.push(s * d);
    }
    let ch = raw.channels();
    let values: Vec<f64> = raw
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * scale[i % ch])
        .collect();
    Ok(FilteredEstimates {
        labels: batch.labels.clone(),
        values: ShotMatrix::new(raw.shots(), ch, values)?,
        scale,
        dark_variance,
    })
}
