//! The three-node experiment as a staged Gaussian pipeline:
//! squeezed-light source → write into atoms → storage → read out.
//!
//! Node `k` (0-based) carries optical submode `L(k+1)` and atomic spin wave
//! `A(k+1)`. Covariances of atomic spin waves use the same canonical
//! quadrature convention as light.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{check_non_negative, check_unit_interval, Error, Result};
use crate::gaussian::{
    GaussianChannel, GaussianState, SqueezeOrientation, SymplecticOp, VACUUM_VARIANCE,
};
use crate::homodyne::McSettings;

pub const N_NODES: usize = 3;

/// Where along the pipeline a state lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Entangled light as it leaves the beam-splitter network.
    Input,
    /// Spin waves after writing and storage.
    Atomic,
    /// Light read back out of the memories.
    Released,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Input, Stage::Atomic, Stage::Released];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Atomic => "atomic",
            Stage::Released => "released",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(Stage::Input),
            "atomic" => Ok(Stage::Atomic),
            "released" => Ok(Stage::Released),
            other => Err(Error::Settings(format!("unknown stage '{other}'"))),
        }
    }
}

/// A three-mode state tagged with the pipeline stage that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    stage: Stage,
    state: GaussianState,
}

impl StageState {
    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn state(&self) -> &GaussianState {
        &self.state
    }

    pub fn into_state(self) -> GaussianState {
        self.state
    }
}

/// One value per node. Deserializes from either a bare number (applied to
/// every node) or a three-element array; always serializes as an array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PerNode(pub [f64; N_NODES]);

impl PerNode {
    pub const fn uniform(v: f64) -> Self {
        Self([v; N_NODES])
    }

    pub fn is_uniform(&self) -> bool {
        self.0.iter().all(|v| *v == self.0[0])
    }
}

impl From<f64> for PerNode {
    fn from(v: f64) -> Self {
        Self::uniform(v)
    }
}

impl<'de> Deserialize<'de> for PerNode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(f64),
            Array([f64; N_NODES]),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Scalar(v) => PerNode::uniform(v),
            Repr::Array(a) => PerNode(a),
        })
    }
}

fn one() -> PerNode {
    PerNode::uniform(1.0)
}

fn zero() -> PerNode {
    PerNode::uniform(0.0)
}

/// Full parameterization of the three-node experiment.
///
/// The write efficiency of node `k` is `eta_T·eta_W·exp(−t/τ_s)` unless
/// `eta_M` is given, in which case it overrides the product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Squeezing parameter of each source (source 1 is phase squeezed,
    /// sources 2 and 3 amplitude squeezed).
    pub r: PerNode,
    #[serde(rename = "eta_T", default = "one")]
    pub eta_t: PerNode,
    #[serde(rename = "eta_W", default = "one")]
    pub eta_w: PerNode,
    /// Storage lifetime; `None` disables decay.
    #[serde(default)]
    pub tau_s_ns: Option<f64>,
    #[serde(default)]
    pub t_ns: f64,
    #[serde(default = "one")]
    pub eta_read: PerNode,
    /// Variance added to each quadrature of each node during storage, in
    /// covariance units (vacuum = 1/2).
    #[serde(default = "zero")]
    pub excess_noise: PerNode,
    #[serde(rename = "eta_M", default, skip_serializing_if = "Option::is_none")]
    pub eta_m: Option<PerNode>,
    #[serde(default)]
    pub mc: McSettings,
}

impl ExperimentSpec {
    /// Equal-parameter config with the write efficiency given directly.
    pub fn symmetric(r: f64, eta_m: f64, eta_read: f64) -> Self {
        Self {
            r: r.into(),
            eta_t: one(),
            eta_w: one(),
            tau_s_ns: None,
            t_ns: 0.0,
            eta_read: eta_read.into(),
            excess_noise: zero(),
            eta_m: Some(eta_m.into()),
            mc: McSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..N_NODES {
            check_non_negative("r", self.r.0[k])?;
            check_unit_interval("eta_T", self.eta_t.0[k])?;
            check_unit_interval("eta_W", self.eta_w.0[k])?;
            check_unit_interval("eta_read", self.eta_read.0[k])?;
            check_non_negative("excess_noise", self.excess_noise.0[k])?;
            if let Some(eta_m) = &self.eta_m {
                check_unit_interval("eta_M", eta_m.0[k])?;
            }
        }
        check_non_negative("t_ns", self.t_ns)?;
        if let Some(tau) = self.tau_s_ns {
            if !(tau > 0.0) {
                return Err(Error::domain("tau_s_ns", tau, "(0, inf)"));
            }
        }
        self.mc.validate()
    }

    /// Write efficiency `η_M` of each node.
    pub fn mapping_efficiencies(&self) -> Result<[f64; N_NODES]> {
        if let Some(eta_m) = &self.eta_m {
            for v in eta_m.0 {
                check_unit_interval("eta_M", v)?;
            }
            return Ok(eta_m.0);
        }
        let mut out = [0.0; N_NODES];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = mapping_efficiency(self.eta_t.0[k], self.eta_w.0[k], self.t_ns, self.tau_s_ns)?;
        }
        Ok(out)
    }

    /// End-to-end efficiency `η = η_M·η′_M` of each node.
    pub fn total_efficiencies(&self) -> Result<[f64; N_NODES]> {
        let eta_m = self.mapping_efficiencies()?;
        Ok(std::array::from_fn(|k| eta_m[k] * self.eta_read.0[k]))
    }

    /// True when every per-node parameter is shared by all three nodes.
    pub fn is_symmetric(&self) -> bool {
        let eta_m_uniform = self.eta_m.as_ref().is_none_or(PerNode::is_uniform);
        self.r.is_uniform()
            && self.eta_t.is_uniform()
            && self.eta_w.is_uniform()
            && self.eta_read.is_uniform()
            && self.excess_noise.is_uniform()
            && eta_m_uniform
    }
}

/// `η_M = η_T η_W exp(−t/τ_s)`; `tau_s_ns = None` means no decay.
pub fn mapping_efficiency(eta_t: f64, eta_w: f64, t_ns: f64, tau_s_ns: Option<f64>) -> Result<f64> {
    check_unit_interval("eta_T", eta_t)?;
    check_unit_interval("eta_W", eta_w)?;
    check_non_negative("t_ns", t_ns)?;
    let decay = match tau_s_ns {
        Some(tau) if tau > 0.0 => (-t_ns / tau).exp(),
        Some(tau) => return Err(Error::domain("tau_s_ns", tau, "(0, inf)")),
        None => 1.0,
    };
    Ok(eta_t * eta_w * decay)
}

fn check_squeezing(r: &[f64; N_NODES]) -> Result<()> {
    for &v in r {
        check_non_negative("squeezing parameter r", v)?;
    }
    Ok(())
}

/// The symplectic map from the three source vacua to the input submodes:
/// one phase-squeezed and two amplitude-squeezed sources, a 1:2 (R:T)
/// beam splitter and a 1:1 beam splitter.
///
/// With the port convention of [`SymplecticOp::beam_splitter`], BS1 carries
/// a π phase on its second port and the first two outputs are relabeled so
/// that the composed matrix equals [`input_coefficient_matrix`] entrywise.
pub fn input_network(r: [f64; N_NODES]) -> Result<SymplecticOp> {
    check_squeezing(&r)?;
    use SqueezeOrientation::*;
    let n = N_NODES;
    let steps = [
        SymplecticOp::squeezer(n, 0, r[0], PhaseSqueezed)?,
        SymplecticOp::squeezer(n, 1, r[1], AmplitudeSqueezed)?,
        SymplecticOp::squeezer(n, 2, r[2], AmplitudeSqueezed)?,
        SymplecticOp::beam_splitter(n, 0, 1, 2.0 / 3.0, PI)?,
        SymplecticOp::beam_splitter(n, 0, 2, 0.5, 0.0)?,
        SymplecticOp::permutation(&[1, 0, 2])?,
    ];
    steps
        .iter()
        .try_fold(SymplecticOp::identity(n), |acc, op| acc.then(op))
}

/// Entangled three-mode input state produced by the source network.
pub fn build_input_state(r: [f64; N_NODES]) -> Result<GaussianState> {
    GaussianState::vacuum(N_NODES)?.apply_symplectic(&input_network(r)?)
}

/// Closed-form coefficients of the input submodes over the source vacuum
/// quadratures, written out directly rather than composed from optical
/// elements. Rows are `(X_L1, P_L1, X_L2, ...)`, columns
/// `(X_S1⁰, P_S1⁰, X_S2⁰, ...)`.
pub fn input_coefficient_matrix(r: [f64; N_NODES]) -> Result<DMatrix<f64>> {
    check_squeezing(&r)?;
    let (a, b, c) = (
        (1.0_f64 / 3.0).sqrt(),
        (2.0_f64 / 3.0).sqrt(),
        (1.0_f64 / 6.0).sqrt(),
    );
    let h = FRAC_1_SQRT_2;
    let up = |k: usize| r[k].exp();
    let down = |k: usize| (-r[k]).exp();
    // X rows: source 1 anti-squeezed (e^r), sources 2,3 squeezed (e^-r);
    // P rows swap the exponents.
    let x_rows = [
        [a * up(0), b * down(1), 0.0],
        [a * up(0), -c * down(1), h * down(2)],
        [a * up(0), -c * down(1), -h * down(2)],
    ];
    let p_rows = [
        [a * down(0), b * up(1), 0.0],
        [a * down(0), -c * up(1), h * up(2)],
        [a * down(0), -c * up(1), -h * up(2)],
    ];
    let mut m = DMatrix::zeros(2 * N_NODES, 2 * N_NODES);
    for l in 0..N_NODES {
        for s in 0..N_NODES {
            m[(2 * l, 2 * s)] = x_rows[l][s];
            m[(2 * l + 1, 2 * s + 1)] = p_rows[l][s];
        }
    }
    Ok(m)
}

/// Covariance of the equal-parameter state after a loss of total efficiency
/// `eta`, assembled from closed-form coefficients: signal part
/// `√η × input coefficients` plus an independent vacuum with coefficient
/// `√(1−η)` on every quadrature. `eta = η_M` gives the atomic spin waves,
/// `eta = η_M·η′_M` the released light.
pub fn stored_covariance(r: f64, eta: f64) -> Result<DMatrix<f64>> {
    check_unit_interval("efficiency eta", eta)?;
    let signal = input_coefficient_matrix([r; N_NODES])? * eta.sqrt();
    let vac = 1.0 - eta;
    let dim = 2 * N_NODES;
    Ok(&signal * signal.transpose() * VACUUM_VARIANCE
        + DMatrix::identity(dim, dim) * (vac * VACUUM_VARIANCE))
}

pub fn input_stage(r: [f64; N_NODES]) -> Result<StageState> {
    Ok(StageState {
        stage: Stage::Input,
        state: build_input_state(r)?,
    })
}

fn require_stage(s: &StageState, expected: Stage) -> Result<()> {
    if s.stage == expected {
        Ok(())
    } else {
        Err(Error::WrongStage {
            expected,
            got: s.stage,
        })
    }
}

/// Maps each input submode onto its atomic spin wave with efficiency
/// `eta_m[k]`, then adds `excess_noise[k]` to both quadratures.
pub fn write_to_atoms(
    input: &StageState,
    eta_m: [f64; N_NODES],
    excess_noise: [f64; N_NODES],
) -> Result<StageState> {
    require_stage(input, Stage::Input)?;
    let mut channel = GaussianChannel::identity(N_NODES);
    for k in 0..N_NODES {
        channel = channel
            .then(&GaussianChannel::loss(N_NODES, k, eta_m[k])?)?
            .then(&GaussianChannel::additive_noise(
                N_NODES,
                k,
                excess_noise[k],
            )?)?;
    }
    Ok(StageState {
        stage: Stage::Atomic,
        state: input.state.apply_channel(&channel)?,
    })
}

/// Releases each spin wave into light with retrieval efficiency
/// `eta_read[k]`; transferred quadratures change sign.
pub fn read_from_atoms(atomic: &StageState, eta_read: [f64; N_NODES]) -> Result<StageState> {
    require_stage(atomic, Stage::Atomic)?;
    let mut channel = GaussianChannel::identity(N_NODES);
    for (k, &eta) in eta_read.iter().enumerate() {
        channel = channel.then(&GaussianChannel::retrieval(N_NODES, k, eta)?)?;
    }
    Ok(StageState {
        stage: Stage::Released,
        state: atomic.state.apply_channel(&channel)?,
    })
}

/// Undoes the read-out loss for one measured combination:
/// `V_atom = (V_rel − (1−η′) V_vac) / η′`, with `V_vac` the same
/// combination evaluated on vacuum.
pub fn infer_atomic_from_released(measured: f64, eta_read: f64, vacuum_level: f64) -> Result<f64> {
    if !(eta_read > 0.0 && eta_read <= 1.0) {
        return Err(Error::domain("eta_read", eta_read, "(0, 1]"));
    }
    if !(vacuum_level > 0.0) {
        return Err(Error::domain("vacuum level", vacuum_level, "(0, inf)"));
    }
    check_non_negative("measured variance", measured)?;
    let atomic = (measured - (1.0 - eta_read) * vacuum_level) / eta_read;
    if atomic <= 0.0 {
        return Err(Error::InfeasibleMeasurement(atomic));
    }
    Ok(atomic)
}

/// [`infer_atomic_from_released`] on vacuum-normalized dB values.
pub fn infer_atomic_db(released_db: f64, eta_read: f64) -> Result<f64> {
    let ratio = 10f64.powf(released_db / 10.0);
    let atomic = infer_atomic_from_released(ratio, eta_read, 1.0)?;
    Ok(10.0 * atomic.log10())
}

/// All three stages of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub input: StageState,
    pub atomic: StageState,
    pub released: StageState,
}

impl Pipeline {
    pub fn stage(&self, stage: Stage) -> &StageState {
        match stage {
            Stage::Input => &self.input,
            Stage::Atomic => &self.atomic,
            Stage::Released => &self.released,
        }
    }
}

pub fn run_pipeline(spec: &ExperimentSpec) -> Result<Pipeline> {
    spec.validate()?;
    let input = input_stage(spec.r.0)?;
    let atomic = write_to_atoms(&input, spec.mapping_efficiencies()?, spec.excess_noise.0)?;
    let released = read_from_atoms(&atomic, spec.eta_read.0)?;
    Ok(Pipeline {
        input,
        atomic,
        released,
    })
}
