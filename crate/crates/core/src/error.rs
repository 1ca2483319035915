use thiserror::Error;

/// Errors raised by the simulator.
///
/// Variants split into configuration/domain problems (bad inputs) and
/// numerical failures (something went wrong while computing). The CLI maps
/// the two classes onto distinct exit codes via [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode count must be at least 1")]
    NoModes,
    #[error("mode index {index} out of range for {n_modes}-mode state")]
    ModeOutOfRange { index: usize, n_modes: usize },
    #[error("beam splitter needs two distinct modes, got {0} twice")]
    SameMode(usize),
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(
        "covariance violates the uncertainty relation (smallest symplectic eigenvalue {0:.3e})"
    )]
    Unphysical(f64),
    #[error("matrix is not symplectic (max deviation {0:.3e})")]
    NotSymplectic(f64),
    #[error("channel is not completely positive (min eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),
    #[error("operation requires stage {expected}, state is at stage {got}")]
    WrongStage {
        expected: crate::Stage,
        got: crate::Stage,
    },
    #[error("inferred variance {0:.6} is below the physical floor; measurement is infeasible")]
    InfeasibleMeasurement(f64),
    #[error("quadrature covariance is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("could not bracket a minimum after {0} expansions")]
    BracketFailure(usize),
    #[error("filter is unstable: pole radius {radius:.6} in section {section} (a = {a:?})")]
    UnstableFilter {
        section: usize,
        radius: f64,
        a: [f64; 3],
    },
    #[error("detector calibration failed: {0}")]
    Calibration(String),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("malformed trace file: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            domain,
        }
    }

    /// True for failures that happen during computation rather than because
    /// of bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unphysical(_)
                | Error::NotSymplectic(_)
                | Error::NotCompletelyPositive(_)
                | Error::InfeasibleMeasurement(_)
                | Error::NotPsd(_)
                | Error::BracketFailure(_)
                | Error::UnstableFilter { .. }
                | Error::Calibration(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::domain(name, value, "[0, 1]"))
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::domain(name, value, "[0, inf)"))
    }
}
