//! Gaussian states, symplectic maps and Gaussian channels in quadrature
//! phase space.
//!
//! Conventions used throughout the crate:
//!
//! * quadratures are ordered `x1, p1, x2, p2, ...` (per-mode blocks are
//!   contiguous);
//! * `X = (a + a†)/√2`, `P = (a − a†)/(√2 i)`, so `[X, P] = i` and every
//!   vacuum quadrature has variance 1/2;
//! * the symplectic form is `Ω = ⊕ [[0, 1], [−1, 0]]` and a covariance `V`
//!   is physical iff `V + (i/2)Ω ≥ 0`.
//!
//! All types are immutable values; operations return new states.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_unit_interval, Error, Result};

/// Variance of one vacuum quadrature.
pub const VACUUM_VARIANCE: f64 = 0.5;

const SYMMETRY_TOL: f64 = 1e-12;
const SYMPLECTIC_TOL: f64 = 1e-10;
const PHYSICAL_TOL: f64 = 1e-9;

/// One of the two canonical quadratures of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

impl std::fmt::Display for Quadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quadrature::X => f.write_str("X"),
            Quadrature::P => f.write_str("P"),
        }
    }
}

/// Which quadrature a single-mode squeezer reduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqueezeOrientation {
    /// `X → e^{−r} X`, `P → e^{r} P` (parametric deamplification).
    AmplitudeSqueezed,
    /// `X → e^{r} X`, `P → e^{−r} P` (parametric amplification).
    PhaseSqueezed,
}

/// The standard symplectic form for `n_modes` modes.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of the Hermitian matrix `re + i·im` (with `re`
/// symmetric and `im` antisymmetric), computed through its real 2n×2n
/// representation `[[re, −im], [im, re]]`.
pub fn min_eigenvalue_hermitian(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    let n = re.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(re);
    big.view_mut((n, n), (n, n)).copy_from(re);
    big.view_mut((0, n), (n, n)).copy_from(&(-im));
    big.view_mut((n, 0), (n, n)).copy_from(im);
    let big = symmetrize(&big);
    SymmetricEigen::new(big).eigenvalues.min()
}

/// Mean vector and covariance matrix of an `n`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state from moments. The covariance is symmetrized and checked
    /// against the uncertainty relation.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::NoModes);
        }
        if dim % 2 != 0 {
            return Err(Error::Dimension {
                expected: dim + 1,
                got: dim,
            });
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: cov.nrows(),
            });
        }
        let state = Self {
            n_modes: dim / 2,
            mean,
            cov: symmetrize(&cov),
        };
        state.check_physical()?;
        Ok(state)
    }

    /// Constructor for results of operations already known to preserve
    /// physicality (symplectic maps, CP channels).
    fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let n_modes = mean.len() / 2;
        Self {
            n_modes,
            mean,
            cov: symmetrize(&cov),
        }
    }

    /// `n`-mode vacuum: zero mean, covariance `I/2`.
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::NoModes);
        }
        let dim = 2 * n_modes;
        Ok(Self {
            n_modes,
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * VACUUM_VARIANCE,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Returns a copy with the mean replaced (the covariance is untouched).
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: mean.len(),
            });
        }
        Ok(Self {
            n_modes: self.n_modes,
            mean,
            cov: self.cov.clone(),
        })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.n_modes {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange {
                index: mode,
                n_modes: self.n_modes,
            })
        }
    }

    /// Verifies `V + (i/2)Ω ≥ 0`: the covariance must be positive definite
    /// and all symplectic eigenvalues at least 1/2 (within 1e-9).
    pub fn check_physical(&self) -> Result<()> {
        let asym = max_abs(&(&self.cov - self.cov.transpose()));
        if asym > SYMMETRY_TOL {
            return Err(Error::Unphysical(f64::NAN));
        }
        let nu_min = self
            .symplectic_eigenvalues()
            .map(|nu| nu.into_iter().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NEG_INFINITY);
        if nu_min < VACUUM_VARIANCE - PHYSICAL_TOL {
            return Err(Error::Unphysical(nu_min));
        }
        Ok(())
    }

    /// Symplectic eigenvalues in ascending order, one per mode. `None` if the
    /// covariance is not positive definite.
    pub fn symplectic_eigenvalues(&self) -> Option<Vec<f64>> {
        let chol = self.cov.clone().cholesky()?;
        let l = chol.l();
        let k = l.transpose() * symplectic_form(self.n_modes) * &l;
        // K is antisymmetric with eigenvalues ±iν, so KᵀK has each ν² twice.
        let ktk = symmetrize(&(k.transpose() * &k));
        let mut eig: Vec<f64> = SymmetricEigen::new(ktk)
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        eig.sort_by(|a, b| a.total_cmp(b));
        Some(
            eig.chunks(2)
                .map(|pair| 0.5 * (pair[0] + pair[1]))
                .collect(),
        )
    }

    /// `det(2V)`, equal to 1 for pure states.
    pub fn det_2v(&self) -> f64 {
        (&self.cov * 2.0).determinant()
    }

    pub fn apply_symplectic(&self, op: &SymplecticOp) -> Result<Self> {
        let dim = self.mean.len();
        if op.matrix.nrows() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: op.matrix.nrows(),
            });
        }
        let s = &op.matrix;
        Ok(Self::from_parts(
            s * &self.mean,
            s * &self.cov * s.transpose(),
        ))
    }

    pub fn apply_channel(&self, channel: &GaussianChannel) -> Result<Self> {
        let dim = self.mean.len();
        if channel.scale.nrows() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: channel.scale.nrows(),
            });
        }
        let a = &channel.scale;
        Ok(Self::from_parts(
            a * &self.mean,
            a * &self.cov * a.transpose() + &channel.noise,
        ))
    }

    pub fn apply_squeezer(
        &self,
        mode: usize,
        r: f64,
        orientation: SqueezeOrientation,
    ) -> Result<Self> {
        self.check_mode(mode)?;
        self.apply_symplectic(&SymplecticOp::squeezer(self.n_modes, mode, r, orientation)?)
    }

    /// Mixes `mode_i` and `mode_j` on a beam splitter of transmissivity `t`;
    /// see [`SymplecticOp::beam_splitter`] for the sign convention.
    pub fn apply_beamsplitter(
        &self,
        mode_i: usize,
        mode_j: usize,
        t: f64,
        relative_phase: f64,
    ) -> Result<Self> {
        self.check_mode(mode_i)?;
        self.check_mode(mode_j)?;
        self.apply_symplectic(&SymplecticOp::beam_splitter(
            self.n_modes,
            mode_i,
            mode_j,
            t,
            relative_phase,
        )?)
    }

    pub fn apply_phase_shift(&self, mode: usize, theta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        self.apply_symplectic(&SymplecticOp::phase_shift(self.n_modes, mode, theta)?)
    }

    /// Pure-loss channel on one mode: each quadrature becomes
    /// `√η q + √(1−η) q_vac`.
    pub fn apply_loss(&self, mode: usize, eta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        self.apply_channel(&GaussianChannel::loss(self.n_modes, mode, eta)?)
    }

    /// Variance of `Σ_k x_k X_k + Σ_k p_k P_k`.
    pub fn combination_variance(&self, x_coeffs: &[f64], p_coeffs: &[f64]) -> Result<f64> {
        for coeffs in [x_coeffs, p_coeffs] {
            if coeffs.len() != self.n_modes {
                return Err(Error::Dimension {
                    expected: self.n_modes,
                    got: coeffs.len(),
                });
            }
        }
        let c = DVector::from_fn(2 * self.n_modes, |row, _| {
            let k = row / 2;
            if row % 2 == 0 {
                x_coeffs[k]
            } else {
                p_coeffs[k]
            }
        });
        Ok((c.transpose() * &self.cov * &c)[(0, 0)])
    }

    /// Mean and covariance of the quadratures `(mode k, basis[k])`, one per
    /// mode, i.e. the marginal seen by a set of homodyne detectors.
    pub fn quadrature_marginal(
        &self,
        basis: &[Quadrature],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if basis.len() != self.n_modes {
            return Err(Error::Dimension {
                expected: self.n_modes,
                got: basis.len(),
            });
        }
        let idx: Vec<usize> = basis
            .iter()
            .enumerate()
            .map(|(k, q)| 2 * k + q.offset())
            .collect();
        let n = idx.len();
        let mean = DVector::from_fn(n, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(n, n, |i, j| self.cov[(idx[i], idx[j])]);
        Ok((mean, cov))
    }
}

/// A real symplectic matrix `S` with `S Ω Sᵀ = Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
}

impl SymplecticOp {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || dim % 2 != 0 || matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim.max(2),
                got: matrix.ncols(),
            });
        }
        let op = Self { matrix };
        let dev = op.symplectic_deviation();
        if dev > SYMPLECTIC_TOL {
            return Err(Error::NotSymplectic(dev));
        }
        Ok(op)
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// `max |S Ω Sᵀ − Ω|`.
    pub fn symplectic_deviation(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        max_abs(&(&self.matrix * &omega * self.matrix.transpose() - omega))
    }

    /// Applies `self` first, then `next`.
    pub fn then(&self, next: &SymplecticOp) -> Result<Self> {
        if next.matrix.nrows() != self.matrix.nrows() {
            return Err(Error::Dimension {
                expected: self.matrix.nrows(),
                got: next.matrix.nrows(),
            });
        }
        Ok(Self {
            matrix: &next.matrix * &self.matrix,
        })
    }

    pub fn squeezer(
        n_modes: usize,
        mode: usize,
        r: f64,
        orientation: SqueezeOrientation,
    ) -> Result<Self> {
        check_mode(n_modes, mode)?;
        check_non_negative("squeezing parameter r", r)?;
        let (sx, sp) = match orientation {
            SqueezeOrientation::AmplitudeSqueezed => ((-r).exp(), r.exp()),
            SqueezeOrientation::PhaseSqueezed => (r.exp(), (-r).exp()),
        };
        let mut m = DMatrix::identity(2 * n_modes, 2 * n_modes);
        m[(2 * mode, 2 * mode)] = sx;
        m[(2 * mode + 1, 2 * mode + 1)] = sp;
        Ok(Self { matrix: m })
    }

    /// Phase rotation `a → e^{iθ} a` on one mode.
    pub fn phase_shift(n_modes: usize, mode: usize, theta: f64) -> Result<Self> {
        check_mode(n_modes, mode)?;
        let (s, c) = theta.sin_cos();
        let mut m = DMatrix::identity(2 * n_modes, 2 * n_modes);
        let (x, p) = (2 * mode, 2 * mode + 1);
        m[(x, x)] = c;
        m[(x, p)] = -s;
        m[(p, x)] = s;
        m[(p, p)] = c;
        Ok(Self { matrix: m })
    }

    /// Beam splitter with transmissivity `t` (reflectivity `1 − t`).
    ///
    /// Port `j` first picks up the phase `a_j → e^{iφ} a_j`; the ports then
    /// mix as
    ///
    /// ```text
    /// a_i' = √T a_i + √R a_j
    /// a_j' = √R a_i − √T a_j
    /// ```
    pub fn beam_splitter(
        n_modes: usize,
        mode_i: usize,
        mode_j: usize,
        t: f64,
        relative_phase: f64,
    ) -> Result<Self> {
        check_mode(n_modes, mode_i)?;
        check_mode(n_modes, mode_j)?;
        if mode_i == mode_j {
            return Err(Error::SameMode(mode_i));
        }
        check_unit_interval("transmissivity T", t)?;
        let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
        let mut mix = DMatrix::identity(2 * n_modes, 2 * n_modes);
        for q in 0..2 {
            let (a, b) = (2 * mode_i + q, 2 * mode_j + q);
            mix[(a, a)] = st;
            mix[(a, b)] = sr;
            mix[(b, a)] = sr;
            mix[(b, b)] = -st;
        }
        let phase = Self::phase_shift(n_modes, mode_j, relative_phase)?;
        Ok(Self {
            matrix: mix * phase.matrix,
        })
    }

    /// Relabels modes: output mode `k` is input mode `perm[k]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in perm {
            check_mode(n, p)?;
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::SameMode(p));
            }
        }
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for (k, &p) in perm.iter().enumerate() {
            m[(2 * k, 2 * p)] = 1.0;
            m[(2 * k + 1, 2 * p + 1)] = 1.0;
        }
        Ok(Self { matrix: m })
    }
}

fn check_mode(n_modes: usize, mode: usize) -> Result<()> {
    if n_modes == 0 {
        return Err(Error::NoModes);
    }
    if mode < n_modes {
        Ok(())
    } else {
        Err(Error::ModeOutOfRange {
            index: mode,
            n_modes,
        })
    }
}

/// Linear Gaussian channel `V → A V Aᵀ + M`, `d → A d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    scale: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl GaussianChannel {
    /// Builds a channel and checks complete positivity,
    /// `M + (i/2)(Ω − A Ω Aᵀ) ≥ 0` to within 1e-9.
    pub fn new(scale: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        let dim = scale.nrows();
        if dim == 0 || dim % 2 != 0 || scale.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim.max(2),
                got: scale.ncols(),
            });
        }
        if noise.nrows() != dim || noise.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: noise.nrows(),
            });
        }
        let channel = Self {
            scale,
            noise: symmetrize(&noise),
        };
        let min_eig = channel.cp_min_eigenvalue();
        if min_eig < -PHYSICAL_TOL {
            return Err(Error::NotCompletelyPositive(min_eig));
        }
        Ok(channel)
    }

    pub fn identity(n_modes: usize) -> Self {
        let dim = 2 * n_modes;
        Self {
            scale: DMatrix::identity(dim, dim),
            noise: DMatrix::zeros(dim, dim),
        }
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn n_modes(&self) -> usize {
        self.scale.nrows() / 2
    }

    /// Smallest eigenvalue of `M + (i/2)(Ω − A Ω Aᵀ)`.
    pub fn cp_min_eigenvalue(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        let im = (&omega - &self.scale * &omega * self.scale.transpose()) * 0.5;
        min_eigenvalue_hermitian(&self.noise, &im)
    }

    /// Applies `self` first, then `next`.
    pub fn then(&self, next: &GaussianChannel) -> Result<Self> {
        if next.scale.nrows() != self.scale.nrows() {
            return Err(Error::Dimension {
                expected: self.scale.nrows(),
                got: next.scale.nrows(),
            });
        }
        Ok(Self {
            scale: &next.scale * &self.scale,
            noise: symmetrize(&(&next.scale * &self.noise * next.scale.transpose() + &next.noise)),
        })
    }

    fn single_mode(n_modes: usize, mode: usize, gain: f64, added: f64) -> Result<Self> {
        check_mode(n_modes, mode)?;
        let mut ch = Self::identity(n_modes);
        for q in 0..2 {
            let k = 2 * mode + q;
            ch.scale[(k, k)] = gain;
            ch.noise[(k, k)] = added;
        }
        Ok(ch)
    }

    /// Beam-splitter coupling to a vacuum port: `q → √η q + √(1−η) q_vac`.
    pub fn loss(n_modes: usize, mode: usize, eta: f64) -> Result<Self> {
        check_unit_interval("efficiency eta", eta)?;
        Self::single_mode(n_modes, mode, eta.sqrt(), (1.0 - eta) * VACUUM_VARIANCE)
    }

    /// Like [`GaussianChannel::loss`] but with the transferred quadratures
    /// sign-flipped: `q → −√η q + √(1−η) q_vac`.
    pub fn retrieval(n_modes: usize, mode: usize, eta: f64) -> Result<Self> {
        check_unit_interval("efficiency eta", eta)?;
        Self::single_mode(n_modes, mode, -eta.sqrt(), (1.0 - eta) * VACUUM_VARIANCE)
    }

    /// Adds `variance` to both quadratures of one mode.
    pub fn additive_noise(n_modes: usize, mode: usize, variance: f64) -> Result<Self> {
        check_non_negative("excess noise", variance)?;
        Self::single_mode(n_modes, mode, 1.0, variance)
    }
}
