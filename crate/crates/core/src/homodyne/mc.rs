//! End-to-end Monte Carlo of the measurement: sample shots from a stage's
//! state, synthesize homodyne records, filter and integrate them, normalize
//! against vacuum and dark references and evaluate the criteria.
//!
//! Records are processed group by group (see [`shot_groups`]) without
//! keeping the raw traces, so memory does not grow with the record length.
//! Each group reduces to first and second moments, and standard errors come
//! from a delete-one-group jackknife applied jointly to the signal, vacuum
//! and dark batches.

use rayon::prelude::*;
use serde::Serialize;

use super::settings::McSettings;
use super::traces::{
    shot_groups, stream_rng, variance_scale, Detector, QuadratureSampler, ShotMatrix, DARK_TAG,
    VACUUM_TAG,
};
use crate::criteria::{
    evaluate_criteria, optimal_gains_for_state, to_db, Combination, CriterionResult, GainTriple,
};
use crate::error::Result;
use crate::gaussian::{GaussianState, Quadrature};
use crate::network::{run_pipeline, ExperimentSpec, Pipeline, Stage, N_NODES};

/// Running sums over a set of shots: count, Σx and Σxxᵀ.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    n: f64,
    sum: [f64; N_NODES],
    outer: [[f64; N_NODES]; N_NODES],
}

impl Moments {
    const ZERO: Moments = Moments {
        n: 0.0,
        sum: [0.0; N_NODES],
        outer: [[0.0; N_NODES]; N_NODES],
    };

    fn from_rows(values: &[f64]) -> Self {
        let mut m = Self::ZERO;
        for row in values.chunks(N_NODES) {
            m.n += 1.0;
            for i in 0..N_NODES {
                m.sum[i] += row[i];
                for j in 0..N_NODES {
                    m.outer[i][j] += row[i] * row[j];
                }
            }
        }
        m
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        let mut out = *self;
        out.n += sign * other.n;
        for i in 0..N_NODES {
            out.sum[i] += sign * other.sum[i];
            for j in 0..N_NODES {
                out.outer[i][j] += sign * other.outer[i][j];
            }
        }
        out
    }

    fn covariance(&self, i: usize, j: usize) -> f64 {
        (self.outer[i][j] - self.sum[i] * self.sum[j] / self.n) / (self.n - 1.0)
    }
}

/// Raw estimates of one batch, kept per group.
#[derive(Debug, Clone)]
struct Measured {
    groups: Vec<Vec<f64>>,
    moments: Vec<Moments>,
}

impl Measured {
    fn total(&self) -> Moments {
        self.moments
            .iter()
            .fold(Moments::ZERO, |acc, m| acc.combine(m, 1.0))
    }

    fn without(&self, g: usize) -> Moments {
        self.total().combine(&self.moments[g], -1.0)
    }

    fn shot_matrix(&self) -> Result<ShotMatrix> {
        let values = self.groups.concat();
        ShotMatrix::new(values.len() / N_NODES, N_NODES, values)
    }
}

/// Samples, synthesizes and estimates one batch of `settings.shots` shots.
/// `sampler = None` measures with no light (dark reference). Bitwise equal
/// to `raw_estimates(synthesize_traces(sample_shots(..)))` under the same tag.
fn measure(
    sampler: Option<&QuadratureSampler>,
    detector: &Detector,
    settings: &McSettings,
    tag: u64,
) -> Measured {
    let samples = detector.record_samples();
    let groups: Vec<Vec<f64>> = shot_groups(settings.shots)
        .into_par_iter()
        .enumerate()
        .map(|(g, range)| {
            let mut q_rng = stream_rng(settings.seed, tag, false, g);
            let mut n_rng = stream_rng(settings.seed, tag, true, g);
            let mut shot = [0.0; N_NODES];
            let mut record = vec![0.0; samples];
            let mut out = Vec::with_capacity(range.len() * N_NODES);
            for _ in range {
                if let Some(s) = sampler {
                    s.draw(&mut q_rng, &mut shot);
                }
                for &q in &shot {
                    detector.synthesize_into(q, &mut n_rng, &mut record);
                    out.push(detector.estimate(&mut record));
                }
            }
            out
        })
        .collect();
    let moments = groups.iter().map(|g| Moments::from_rows(g)).collect();
    Measured { groups, moments }
}

/// One measured correlation variance, model against Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCombination {
    pub combination: String,
    pub gain: Option<f64>,
    pub model_variance: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub model_db: f64,
    pub db: f64,
}

/// Jackknife standard errors of the criterion values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionErrors {
    #[serde(rename = "I")]
    pub witness: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
}

impl CriterionErrors {
    pub fn values(&self) -> [f64; N_NODES] {
        [self.i1, self.i2, self.i3]
    }
}

/// Monte Carlo criteria for one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStageReport {
    pub stage: Stage,
    pub shots: usize,
    pub seed: u64,
    /// Criteria estimated from the synthesized data.
    pub estimate: CriterionResult,
    pub standard_error: CriterionErrors,
    /// The same criteria evaluated on the model covariance.
    pub model: CriterionResult,
    pub combinations: Vec<McCombination>,
}

impl McStageReport {
    /// `|estimate − model|` in units of the standard error, per criterion
    /// value and for the witness.
    pub fn deviations(&self) -> [f64; N_NODES + 1] {
        let e = self.estimate.values();
        let m = self.model.values();
        let s = self.standard_error.values();
        let mut out = [0.0; N_NODES + 1];
        for k in 0..N_NODES {
            out[k] = (e[k] - m[k]).abs() / s[k];
        }
        out[N_NODES] =
            (self.estimate.witness - self.model.witness).abs() / self.standard_error.witness;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub settings: McSettings,
    pub stages: Vec<McStageReport>,
}

/// Per-shot normalized estimates of one stage (X batch and P batch).
#[derive(Debug, Clone, PartialEq)]
pub struct StageShots {
    pub x: ShotMatrix,
    pub p: ShotMatrix,
}

/// A simulated measurement campaign: one model pipeline and one set of
/// vacuum and dark references shared by every stage.
pub struct MeasurementSession {
    spec: ExperimentSpec,
    pipeline: Pipeline,
    detector: Detector,
    vacuum: Measured,
    dark: Measured,
}

fn stage_tag(stage: Stage, basis: Quadrature) -> u64 {
    let s = match stage {
        Stage::Input => 0,
        Stage::Atomic => 1,
        Stage::Released => 2,
    };
    1 + 2 * s + u64::from(basis == Quadrature::P)
}

impl MeasurementSession {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let pipeline = run_pipeline(spec)?;
        let detector = Detector::new(&spec.mc)?;
        let vac =
            QuadratureSampler::new(&GaussianState::vacuum(N_NODES)?, &[Quadrature::X; N_NODES])?;
        let vacuum = measure(Some(&vac), &detector, &spec.mc, VACUUM_TAG);
        let dark = measure(None, &detector, &spec.mc, DARK_TAG);
        let total_vac = vacuum.total();
        let total_dark = dark.total();
        for c in 0..N_NODES {
            variance_scale(total_vac.covariance(c, c), total_dark.covariance(c, c), c)?;
        }
        Ok(Self {
            spec: spec.clone(),
            pipeline,
            detector,
            vacuum,
            dark,
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    fn measure_stage(&self, stage: Stage) -> Result<(Measured, Measured)> {
        let state = self.pipeline.stage(stage).state();
        let mut out = Vec::with_capacity(2);
        for basis in [Quadrature::X, Quadrature::P] {
            let sampler = QuadratureSampler::new(state, &[basis; N_NODES])?;
            out.push(measure(
                Some(&sampler),
                &self.detector,
                &self.spec.mc,
                stage_tag(stage, basis),
            ));
        }
        let p = out.pop().unwrap_or_else(|| unreachable!());
        let x = out.pop().unwrap_or_else(|| unreachable!());
        Ok((x, p))
    }

    /// Normalized per-shot estimates of a stage (for export).
    pub fn shots(&self, stage: Stage) -> Result<StageShots> {
        let (x, p) = self.measure_stage(stage)?;
        let amp = self.amplitude_scale(&self.vacuum.total(), &self.dark.total());
        let normalize = |m: &Measured| -> Result<ShotMatrix> {
            let raw = m.shot_matrix()?;
            let values = raw
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| v * amp[i % N_NODES])
                .collect();
            ShotMatrix::new(raw.shots(), N_NODES, values)
        };
        Ok(StageShots {
            x: normalize(&x)?,
            p: normalize(&p)?,
        })
    }

    fn amplitude_scale(&self, vac: &Moments, dark: &Moments) -> [f64; N_NODES] {
        std::array::from_fn(|c| {
            let (w, d) = (vac.covariance(c, c), dark.covariance(c, c));
            (0.5 / (w - d)).sqrt()
        })
    }

    /// Normalized, dark-subtracted variance of `Σ a_c q_c`.
    fn combo_variance(
        &self,
        signal: &Moments,
        vac: &Moments,
        dark: &Moments,
        a: &[f64; N_NODES],
    ) -> f64 {
        let amp = self.amplitude_scale(vac, dark);
        let mut v = 0.0;
        for i in 0..N_NODES {
            for j in 0..N_NODES {
                let mut c = signal.covariance(i, j);
                if i == j {
                    c -= dark.covariance(i, i);
                }
                v += a[i] * a[j] * amp[i] * amp[j] * c;
            }
        }
        v
    }

    /// Six combination variances (XDiff for criterion 0..3, then PSum) and
    /// the three criterion values.
    fn statistics(
        &self,
        x: &Moments,
        p: &Moments,
        vac: &Moments,
        dark: &Moments,
        gains: [f64; N_NODES],
    ) -> ([f64; 2 * N_NODES], [f64; N_NODES]) {
        let mut combos = [0.0; 2 * N_NODES];
        let mut values = [0.0; N_NODES];
        for k in 0..N_NODES {
            let (cx, cp) = Combination::for_criterion(k);
            let vx = self.combo_variance(x, vac, dark, &cx.coefficients(gains[k]).0);
            let vp = self.combo_variance(p, vac, dark, &cp.coefficients(gains[k]).1);
            combos[k] = vx;
            combos[N_NODES + k] = vp;
            values[k] = 0.5 * (vx + vp);
        }
        (combos, values)
    }

    /// Measures one stage and evaluates the criteria with the gains that are
    /// optimal for that stage's model state.
    pub fn estimate(&self, stage: Stage) -> Result<McStageReport> {
        let state = self.pipeline.stage(stage).state();
        let gains = optimal_gains_for_state(state)?;
        self.estimate_with_gains(stage, gains)
    }

    pub fn estimate_with_gains(&self, stage: Stage, gains: GainTriple) -> Result<McStageReport> {
        let state = self.pipeline.stage(stage).state();
        let model = evaluate_criteria(state, gains, stage)?;
        let g = gains.as_array();
        let (x, p) = self.measure_stage(stage)?;
        let full = self.statistics(
            &x.total(),
            &p.total(),
            &self.vacuum.total(),
            &self.dark.total(),
            g,
        );
        let estimate = CriterionResult::new(stage, full.1, gains);

        let n_groups = x.moments.len();
        let leave_out: Vec<([f64; 2 * N_NODES], [f64; N_NODES + 1])> = (0..n_groups)
            .map(|j| {
                let (c, v) = self.statistics(
                    &x.without(j),
                    &p.without(j),
                    &self.vacuum.without(j),
                    &self.dark.without(j),
                    g,
                );
                let w = CriterionResult::new(stage, v, gains).witness;
                (c, [v[0], v[1], v[2], w])
            })
            .collect();
        let combo_se: Vec<f64> = (0..2 * N_NODES)
            .map(|i| jackknife_se(leave_out.iter().map(|(c, _)| c[i])))
            .collect();
        let value_se: Vec<f64> = (0..=N_NODES)
            .map(|i| jackknife_se(leave_out.iter().map(|(_, v)| v[i])))
            .collect();

        let mut combinations = Vec::with_capacity(2 * N_NODES);
        for (half, pick) in [(0usize, 0usize), (N_NODES, 1)] {
            for k in 0..N_NODES {
                let pair = Combination::for_criterion(k);
                let combo = if pick == 0 { pair.0 } else { pair.1 };
                let model_variance = combo.variance(state, g[k])?;
                let vac_level = combo.vacuum_level(g[k]);
                let variance = full.0[half + k];
                combinations.push(McCombination {
                    combination: combo.label(),
                    gain: combo.gain_node().map(|n| g[n]),
                    model_variance,
                    variance,
                    variance_se: combo_se[half + k],
                    model_db: to_db(model_variance, vac_level)?,
                    db: to_db(variance.max(f64::MIN_POSITIVE), vac_level)?,
                });
            }
        }
        Ok(McStageReport {
            stage,
            shots: self.spec.mc.shots,
            seed: self.spec.mc.seed,
            estimate,
            standard_error: CriterionErrors {
                i1: value_se[0],
                i2: value_se[1],
                i3: value_se[2],
                witness: value_se[3],
            },
            model,
            combinations,
        })
    }

    pub fn estimate_all(&self) -> Result<McReport> {
        Ok(McReport {
            settings: self.spec.mc.clone(),
            stages: Stage::ALL
                .iter()
                .map(|&s| self.estimate(s))
                .collect::<Result<_>>()?,
        })
    }
}

fn jackknife_se(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    ((n - 1.0) / n * values.map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Monte Carlo criteria at the released stage, the stage at which the
/// optical measurement is actually made.
pub fn estimate_criteria_mc(spec: &ExperimentSpec) -> Result<McStageReport> {
    MeasurementSession::new(spec)?.estimate(Stage::Released)
}
