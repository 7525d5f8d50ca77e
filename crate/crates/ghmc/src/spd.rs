//! Symmetric positive definite matrices and their spectral calculus.
//!
//! Covariances and every analytic function of them (inverse, square root,
//! cosine, sine, logarithm) are evaluated through a cached eigendecomposition:
//! for `M = V diag(λ) Vᵀ` we take `f(M) = V diag(f(λ)) Vᵀ`. Matrices are small
//! and dense by design, so the spectral route is both exact and cheap.
//!
//! The module also builds the flow matrices of the exact Gaussian dynamics,
//!
//! ```text
//!     A = sqrt(Σf Σg⁻¹),   C = cos(D),   S = sin(D),   D = t sqrt(Σf⁻¹ Σg⁻¹),
//! ```
//!
//! for a commuting pair of covariances `(Σf, Σg)`. `A`, `C`, `S` are produced
//! on one shared eigenbasis, so they commute with each other exactly and
//! satisfy `C² + S² = I` to machine precision.

use nalgebra::{DMatrix, DVector};

use crate::error::{GhmcError, Result};

/// Relative symmetry tolerance for accepting input matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues at or below `SPD_FLOOR * λ_max` are rejected.
pub const SPD_FLOOR: f64 = 1e-12;
/// Relative tolerance for commutator checks, `‖MN − NM‖ ≤ tol ‖M‖ ‖N‖`.
pub const COMMUTE_TOL: f64 = 1e-10;
/// Tolerance for internal matrix identities (`C² + S² = I` and friends).
pub const IDENTITY_TOL: f64 = 1e-10;
/// Orthonormality tolerance for supplied eigenbases.
pub const ORTHO_TOL: f64 = 1e-10;
/// Relative tolerance for the spectral reconstruction `V diag(λ) Vᵀ = M`.
pub const RECON_TOL: f64 = 1e-12;
/// Flow angles within this distance of a multiple of π/2 mark the flow as
/// degenerate (cosine or sine block near singular).
pub const ANGLE_GUARD: f64 = 1e-8;

/// Exact symmetrization `(M + Mᵀ)/2`.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Relative commutator residual `‖MN − NM‖_F / (‖M‖_F ‖N‖_F)`.
pub fn commutator_residual(m: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let scale = m.norm() * n.norm();
    if scale == 0.0 {
        return 0.0;
    }
    ((m * n) - (n * m)).norm() / scale
}

/// Spectral norm (largest singular value) of a dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Scalar function tags applicable to an [`SpdMatrix`] spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFn {
    Inverse,
    Sqrt,
    Cos,
    Sin,
    Log,
}

/// A symmetric positive definite matrix with its cached eigendecomposition.
///
/// Invariants established at construction:
/// - the stored entries are exactly symmetrized,
/// - all eigenvalues exceed `SPD_FLOOR * λ_max`,
/// - `V diag(λ) Vᵀ` reproduces the entries to within `RECON_TOL * ‖M‖`.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates and decomposes a dense symmetric positive definite matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(GhmcError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GhmcError::NonFinite);
        }
        let norm = m.norm();
        let asym = (&m - m.transpose()).norm();
        if asym > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(GhmcError::NotSymmetric {
                residual: asym,
                tol: SYMMETRY_TOL * norm,
            });
        }
        let sym = symmetrize(&m);
        let (vals, vecs) = jacobi_eigen(&sym);
        let (eigenvalues, eigenvectors) = sort_spectrum(&vals, &vecs);

        let lambda_max = eigenvalues[eigenvalues.len() - 1];
        let floor = SPD_FLOOR * lambda_max.max(0.0);
        let lambda_min = eigenvalues[0];
        if lambda_min <= floor || lambda_max <= 0.0 {
            return Err(GhmcError::NotPositiveDefinite {
                min_eigenvalue: lambda_min,
                floor,
            });
        }

        let recon = &eigenvectors * DMatrix::from_diagonal(&eigenvalues) * eigenvectors.transpose();
        let residual = (&recon - &sym).norm();
        if residual > RECON_TOL * sym.norm() {
            return Err(GhmcError::ReconstructionFailed {
                residual,
                tol: RECON_TOL * sym.norm(),
            });
        }

        Ok(Self {
            entries: sym,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Builds an SPD matrix from an orthonormal basis and positive eigenvalues.
    ///
    /// The supplied spectrum is cached verbatim, so matrices built on the same
    /// basis commute exactly.
    pub fn from_spectrum(basis: &DMatrix<f64>, eigenvalues: &DVector<f64>) -> Result<Self> {
        let d = check_orthonormal(basis)?;
        if eigenvalues.len() != d {
            return Err(GhmcError::DimensionMismatch {
                expected: d,
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(GhmcError::NonFinite);
        }
        let lambda_max = eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let floor = SPD_FLOOR * lambda_max.max(0.0);
        let lambda_min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= floor || lambda_max <= 0.0 {
            return Err(GhmcError::NotPositiveDefinite {
                min_eigenvalue: lambda_min,
                floor,
            });
        }
        let entries =
            symmetrize(&(basis * DMatrix::from_diagonal(eigenvalues) * basis.transpose()));
        Ok(Self {
            entries,
            eigenvalues: eigenvalues.clone(),
            eigenvectors: basis.clone(),
        })
    }

    /// The d-dimensional identity matrix.
    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
            eigenvalues: DVector::from_element(dim, 1.0),
            eigenvectors: DMatrix::identity(dim, dim),
        }
    }

    /// Diagonal SPD matrix from strictly positive entries.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        Self::from_spectrum(&DMatrix::identity(d, d), &DVector::from_row_slice(diag))
    }

    /// 1x1 SPD matrix from a positive scalar.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_diagonal(&[value])
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Applies a scalar function to the spectrum, `V diag(f(λ)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let vals = self.eigenvalues.map(f);
        symmetrize(
            &(&self.eigenvectors * DMatrix::from_diagonal(&vals) * self.eigenvectors.transpose()),
        )
    }

    fn map_spectrum_spd(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let vals = self.eigenvalues.map(f);
        SpdMatrix::from_spectrum(&self.eigenvectors, &vals)
            .expect("positive spectral map on an SPD matrix stays SPD")
    }

    /// The inverse, again SPD.
    pub fn inverse(&self) -> SpdMatrix {
        self.map_spectrum_spd(|x| 1.0 / x)
    }

    /// The principal square root, again SPD.
    pub fn sqrt(&self) -> SpdMatrix {
        self.map_spectrum_spd(f64::sqrt)
    }

    /// Matrix cosine. Symmetric but not necessarily positive.
    pub fn cos(&self) -> DMatrix<f64> {
        self.map_spectrum(f64::cos)
    }

    /// Matrix sine. Symmetric but not necessarily positive.
    pub fn sin(&self) -> DMatrix<f64> {
        self.map_spectrum(f64::sin)
    }

    /// Matrix logarithm (defined on the positive spectrum).
    pub fn log(&self) -> DMatrix<f64> {
        self.map_spectrum(f64::ln)
    }

    /// Determinant as the product of cached eigenvalues.
    pub fn determinant(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    /// Log-determinant as the sum of eigenvalue logarithms.
    pub fn log_determinant(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x.ln()).sum()
    }

    // Spectra built from a supplied basis keep the caller's eigenvalue
    // order, so these scan rather than assume sorting.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Spectral norm; equals the largest eigenvalue for an SPD matrix.
    pub fn spectral_norm(&self) -> f64 {
        self.max_eigenvalue()
    }

    pub fn condition_number(&self) -> f64 {
        self.max_eigenvalue() / self.min_eigenvalue()
    }

    /// A factor `L = V diag(√λ)` with `L Lᵀ = M`, used for sampling.
    pub fn sqrt_factor(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues.map(f64::sqrt))
    }

    /// Applies `M⁻¹` to a vector through the cached spectrum.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = self.eigenvectors.transpose() * rhs;
        for (c, l) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c /= l;
        }
        &self.eigenvectors * coeffs
    }

    /// Quadratic form `xᵀ M⁻¹ x` through the cached spectrum.
    pub fn inv_quadratic_form(&self, x: &DVector<f64>) -> f64 {
        let coeffs = self.eigenvectors.transpose() * x;
        coeffs
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, l)| c * c / l)
            .sum()
    }
}

/// Applies one of the named scalar functions to an SPD matrix spectrum.
///
/// The result is symmetric; for `Inverse` and `Sqrt` it is again positive
/// definite, which callers recover via [`SpdMatrix::inverse`] and
/// [`SpdMatrix::sqrt`] when they need the typed form.
pub fn spd_function(m: &SpdMatrix, f: MatrixFn) -> DMatrix<f64> {
    match f {
        MatrixFn::Inverse => m.map_spectrum(|x| 1.0 / x),
        MatrixFn::Sqrt => m.map_spectrum(f64::sqrt),
        MatrixFn::Cos => m.cos(),
        MatrixFn::Sin => m.sin(),
        MatrixFn::Log => m.log(),
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps of plane rotations annihilate off-diagonal entries until their mass
/// falls below machine precision relative to the matrix norm. Jacobi keeps
/// the eigenvector basis orthogonal to roundoff and reconstructs the input to
/// a few ulps, which the `RECON_TOL` invariant depends on.
pub(crate) fn jacobi_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if (2.0 * off).sqrt() <= f64::EPSILON * scale {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(p, i)] = a[(i, p)];
                        a[(i, q)] = s * aip + c * aiq;
                        a[(q, i)] = a[(i, q)];
                    }
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    (a.diagonal(), v)
}

fn sort_spectrum(values: &DVector<f64>, vectors: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = values.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        values[i]
            .partial_cmp(&values[j])
            .expect("finite eigenvalues")
    });
    let sorted_vals = DVector::from_fn(d, |i, _| values[order[i]]);
    let sorted_vecs = DMatrix::from_fn(d, d, |i, j| vectors[(i, order[j])]);
    (sorted_vals, sorted_vecs)
}

fn check_orthonormal(basis: &DMatrix<f64>) -> Result<usize> {
    if basis.nrows() != basis.ncols() {
        return Err(GhmcError::NotSquare {
            rows: basis.nrows(),
            cols: basis.ncols(),
        });
    }
    let d = basis.nrows();
    let residual = (basis.transpose() * basis - DMatrix::identity(d, d)).norm();
    if residual > ORTHO_TOL {
        return Err(GhmcError::NotOrthonormal {
            residual,
            tol: ORTHO_TOL,
        });
    }
    Ok(d)
}

/// A family of symmetric matrices sharing one orthonormal eigenbasis.
///
/// Members are stored as eigenvalue vectors, so any two reconstructed members
/// commute exactly.
#[derive(Clone, Debug)]
pub struct CommutingFamily {
    basis: DMatrix<f64>,
    members: Vec<DVector<f64>>,
}

impl CommutingFamily {
    pub fn new(basis: DMatrix<f64>, members: Vec<DVector<f64>>) -> Result<Self> {
        let d = check_orthonormal(&basis)?;
        for m in &members {
            if m.len() != d {
                return Err(GhmcError::DimensionMismatch {
                    expected: d,
                    got: m.len(),
                });
            }
        }
        Ok(Self { basis, members })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self, index: usize) -> &DVector<f64> {
        &self.members[index]
    }

    /// Dense reconstruction of one member.
    pub fn member(&self, index: usize) -> DMatrix<f64> {
        symmetrize(
            &(&self.basis * DMatrix::from_diagonal(&self.members[index]) * self.basis.transpose()),
        )
    }

    /// Reconstruction of one member as an SPD matrix (requires a positive spectrum).
    pub fn member_spd(&self, index: usize) -> Result<SpdMatrix> {
        SpdMatrix::from_spectrum(&self.basis, &self.members[index])
    }

    /// Largest relative commutator over all member pairs; a diagnostic for tests.
    pub fn max_pairwise_commutator(&self) -> f64 {
        let dense: Vec<DMatrix<f64>> = (0..self.len()).map(|i| self.member(i)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..dense.len() {
            for j in (i + 1)..dense.len() {
                worst = worst.max(commutator_residual(&dense[i], &dense[j]));
            }
        }
        worst
    }
}

/// Builds a commuting SPD pair from a shared orthonormal eigenbasis and two
/// positive eigenvalue vectors. Test-fixture plumbing for the commuting
/// covariance assumption.
pub fn build_commuting_pair(
    eigbasis: &DMatrix<f64>,
    lambda_f: &DVector<f64>,
    lambda_g: &DVector<f64>,
) -> Result<(SpdMatrix, SpdMatrix)> {
    let first = SpdMatrix::from_spectrum(eigbasis, lambda_f)?;
    let second = SpdMatrix::from_spectrum(eigbasis, lambda_g)?;
    Ok((first, second))
}

/// The matrices `A`, `C`, `S` governing one exact flow of duration `t`,
/// realized on a shared eigenbasis.
#[derive(Clone, Debug)]
pub struct FlowMatrices {
    basis: DMatrix<f64>,
    scale_vals: DVector<f64>,
    cos_vals: DVector<f64>,
    sin_vals: DVector<f64>,
    time: f64,
    degenerate_angle: bool,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    c: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl FlowMatrices {
    fn assemble(
        basis: DMatrix<f64>,
        scale_vals: DVector<f64>,
        cos_vals: DVector<f64>,
        sin_vals: DVector<f64>,
        time: f64,
        degenerate_angle: bool,
    ) -> Self {
        let dense = |vals: &DVector<f64>| {
            symmetrize(&(&basis * DMatrix::from_diagonal(vals) * basis.transpose()))
        };
        let a = dense(&scale_vals);
        let a_inv = dense(&scale_vals.map(|x| 1.0 / x));
        let c = dense(&cos_vals);
        let s = dense(&sin_vals);
        Self {
            basis,
            scale_vals,
            cos_vals,
            sin_vals,
            time,
            degenerate_angle,
            a,
            a_inv,
            c,
            s,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `A = sqrt(Σf Σg⁻¹)`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `A⁻¹`.
    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// `C = cos(D)`.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `S = sin(D)`.
    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// True when some flow angle lies within [`ANGLE_GUARD`] of a multiple of
    /// π/2, making `C` or `S` near singular. The flow itself stays valid.
    pub fn degenerate_angle(&self) -> bool {
        self.degenerate_angle
    }

    /// Smallest eigenvalue of `C`; positive iff `0 < C`.
    pub fn c_min_eigenvalue(&self) -> f64 {
        self.cos_vals.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Spectral norm of `C`.
    pub fn c_spectral_norm(&self) -> f64 {
        self.cos_vals.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// The same flow run backwards: the sine block changes sign, the cosine
    /// block is unchanged.
    pub fn reversed(&self) -> Self {
        Self::assemble(
            self.basis.clone(),
            self.scale_vals.clone(),
            self.cos_vals.clone(),
            -self.sin_vals.clone(),
            -self.time,
            self.degenerate_angle,
        )
    }

    /// `‖C² + S² − I‖_F`; a diagnostic for tests.
    pub fn identity_residual(&self) -> f64 {
        let d = self.dim();
        (&self.c * &self.c + &self.s * &self.s - DMatrix::identity(d, d)).norm()
    }
}

/// Computes the flow matrices `(A, C, S)` for a commuting covariance pair and
/// duration `t`.
///
/// Fails with [`GhmcError::NonCommutingCovariances`] when the pair does not
/// commute within [`COMMUTE_TOL`]; outside the commuting class the closed-form
/// dynamics do not apply, so such inputs are rejected rather than silently
/// mishandled.
pub fn flow_matrices(sigma_f: &SpdMatrix, sigma_g: &SpdMatrix, t: f64) -> Result<FlowMatrices> {
    if sigma_f.dim() != sigma_g.dim() {
        return Err(GhmcError::DimensionMismatch {
            expected: sigma_f.dim(),
            got: sigma_g.dim(),
        });
    }
    if !t.is_finite() {
        return Err(GhmcError::InvalidParameter(
            "flow time must be finite".into(),
        ));
    }
    let residual = commutator_residual(sigma_f.entries(), sigma_g.entries());
    if residual > COMMUTE_TOL {
        return Err(GhmcError::NonCommutingCovariances {
            residual,
            tol: COMMUTE_TOL,
        });
    }

    let (basis, lambda_f, lambda_g) = joint_eigenbasis(sigma_f, sigma_g)?;
    let d = basis.nrows();

    let mut scale_vals = DVector::zeros(d);
    let mut cos_vals = DVector::zeros(d);
    let mut sin_vals = DVector::zeros(d);
    let mut degenerate = false;
    for i in 0..d {
        let lf = lambda_f[i];
        let lg = lambda_g[i];
        scale_vals[i] = (lf / lg).sqrt();
        let theta = t / (lf * lg).sqrt();
        cos_vals[i] = theta.cos();
        sin_vals[i] = theta.sin();
        let r = theta.abs() % std::f64::consts::FRAC_PI_2;
        if r.min(std::f64::consts::FRAC_PI_2 - r) < ANGLE_GUARD {
            degenerate = true;
        }
    }

    Ok(FlowMatrices::assemble(
        basis, scale_vals, cos_vals, sin_vals, t, degenerate,
    ))
}

/// Joint eigenbasis of two commuting SPD matrices.
///
/// Diagonalizes a fixed generic combination `P/‖P‖ + ω Q/‖Q‖`; for commuting
/// inputs its eigenbasis diagonalizes both matrices, and the combination
/// splits degeneracies that either matrix alone cannot. Eigenvalues of the
/// inputs are recovered as Rayleigh quotients.
fn joint_eigenbasis(
    p: &SpdMatrix,
    q: &SpdMatrix,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    const WEIGHTS: [f64; 3] = [0.754_877_666_2, 1.324_717_957_2, 0.567_143_290_4];
    const ACCEPT_TOL: f64 = 1e-9;

    let np = p.spectral_norm();
    let nq = q.spectral_norm();

    let mut best_residual = f64::INFINITY;
    for &w in &WEIGHTS {
        let combo = symmetrize(&(p.entries() / np + q.entries() * (w / nq)));
        let (vals, vecs) = jacobi_eigen(&combo);
        let (_, basis) = sort_spectrum(&vals, &vecs);

        let lambda_p = rayleigh_diagonal(&basis, p.entries());
        let lambda_q = rayleigh_diagonal(&basis, q.entries());

        let recon = |vals: &DVector<f64>, m: &DMatrix<f64>| -> f64 {
            ((&basis * DMatrix::from_diagonal(vals) * basis.transpose()) - m).norm() / m.norm()
        };
        let residual = recon(&lambda_p, p.entries()).max(recon(&lambda_q, q.entries()));
        if residual <= ACCEPT_TOL {
            return Ok((basis, lambda_p, lambda_q));
        }
        best_residual = best_residual.min(residual);
    }

    Err(GhmcError::IdentityViolation {
        what: "joint diagonalization of a commuting pair",
        residual: best_residual,
        tol: ACCEPT_TOL,
    })
}

fn rayleigh_diagonal(basis: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let d = basis.nrows();
    DVector::from_fn(d, |i, _| {
        let v = basis.column(i);
        (v.transpose() * m * v)[(0, 0)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::rng::RngStream;

    fn rotation2(angle: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()])
    }

    #[test]
    fn sqrt_of_identity_is_identity() {
        let m = SpdMatrix::identity(3);
        let r = spd_function(&m, MatrixFn::Sqrt);
        assert!((r - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn sqrt_of_diagonal_is_entrywise() {
        let m = SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let r = spd_function(&m, MatrixFn::Sqrt);
        let expected = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 3.0]));
        assert!((r - expected).norm() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back_to_input() {
        let mut rng = RngStream::new(11).rng();
        let m = generate::random_spd(4, 0.5, 3.0, &mut rng);
        let r = m.sqrt();
        assert!((r.entries() * r.entries() - m.entries()).norm() < 1e-10);
    }

    #[test]
    fn inverse_times_input_is_identity_up_to_conditioning() {
        let mut rng = RngStream::new(12).rng();
        // Condition number 1e6.
        let basis = generate::random_orthonormal(4, &mut rng);
        let vals = DVector::from_row_slice(&[1e-3, 1.0, 10.0, 1e3]);
        let m = SpdMatrix::from_spectrum(&basis, &vals).unwrap();
        let prod = m.inverse().entries() * m.entries();
        let residual = (prod - DMatrix::identity(4, 4)).norm();
        assert!(residual < 1e-10, "residual {residual:.3e}");
    }

    #[test]
    fn construction_rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(
            SpdMatrix::new(m),
            Err(GhmcError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn construction_rejects_indefinite_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(m),
            Err(GhmcError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn construction_rejects_non_finite_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, f64::NAN]);
        assert!(matches!(SpdMatrix::new(m), Err(GhmcError::NonFinite)));
    }

    #[test]
    fn commuting_pair_diagonal_case() {
        let (f, g) = build_commuting_pair(
            &DMatrix::identity(2, 2),
            &DVector::from_row_slice(&[1.0, 2.0]),
            &DVector::from_row_slice(&[3.0, 4.0]),
        )
        .unwrap();
        let df = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]));
        let dg = DMatrix::from_diagonal(&DVector::from_row_slice(&[3.0, 4.0]));
        assert!((f.entries() - df).norm() < 1e-15);
        assert!((g.entries() - dg).norm() < 1e-15);
    }

    #[test]
    fn commuting_pair_rotated_basis_commutes() {
        let basis = rotation2(std::f64::consts::FRAC_PI_4);
        let (f, g) = build_commuting_pair(
            &basis,
            &DVector::from_row_slice(&[1.0, 2.0]),
            &DVector::from_row_slice(&[3.0, 4.0]),
        )
        .unwrap();
        let comm = (f.entries() * g.entries() - g.entries() * f.entries()).norm();
        assert!(comm < 1e-12, "commutator {comm:.3e}");
    }

    #[test]
    fn commuting_pair_scalar_auxiliary() {
        let s = 2.5;
        let (f, g) = build_commuting_pair(
            &DMatrix::identity(3, 3),
            &DVector::from_element(3, 1.0),
            &DVector::from_element(3, s),
        )
        .unwrap();
        assert!((f.entries() - DMatrix::identity(3, 3)).norm() < 1e-15);
        assert!((g.entries() - DMatrix::identity(3, 3) * s).norm() < 1e-15);
    }

    #[test]
    fn commuting_pair_rejects_skewed_basis() {
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.0, 1.0]);
        let out = build_commuting_pair(
            &skew,
            &DVector::from_row_slice(&[1.0, 2.0]),
            &DVector::from_row_slice(&[3.0, 4.0]),
        );
        assert!(matches!(out, Err(GhmcError::NotOrthonormal { .. })));
    }

    #[test]
    fn flow_matrices_identity_pair_is_scalar_rotation() {
        let id = SpdMatrix::identity(3);
        let t = 0.7;
        let flow = flow_matrices(&id, &id, t).unwrap();
        assert!((flow.a() - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!((flow.c() - DMatrix::identity(3, 3) * t.cos()).norm() < 1e-14);
        assert!((flow.s() - DMatrix::identity(3, 3) * t.sin()).norm() < 1e-14);
    }

    #[test]
    fn flow_matrices_univariate_angle() {
        let sf = SpdMatrix::scalar(2.0).unwrap();
        let sg = SpdMatrix::scalar(0.5).unwrap();
        let t = 0.9;
        let flow = flow_matrices(&sf, &sg, t).unwrap();
        // C = cos(t / (σf σg)) with σf σg = sqrt(2.0 * 0.5) = 1.
        let expected = (t / (2.0_f64 * 0.5).sqrt()).cos();
        assert!((flow.c()[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn flow_matrices_trig_identity_random_pair() {
        let mut rng = RngStream::new(5).rng();
        for _ in 0..10 {
            let (sf, sg) = generate::random_commuting_pair(3, 0.3, 3.0, &mut rng);
            let flow = flow_matrices(&sf, &sg, 1.3).unwrap();
            assert!(flow.identity_residual() < 1e-12);
            // A, C, S mutually commute and commute with F and G.
            let f = sf.inverse();
            let g = sg.inverse();
            for (m, n) in [
                (flow.a(), flow.c()),
                (flow.a(), flow.s()),
                (flow.c(), flow.s()),
                (flow.c(), f.entries()),
                (flow.s(), g.entries()),
                (flow.a(), f.entries()),
            ] {
                assert!(commutator_residual(m, n) < COMMUTE_TOL);
            }
        }
    }

    #[test]
    fn flow_matrices_reject_noncommuting_pair() {
        let mut rng = RngStream::new(6).rng();
        let sf = generate::random_spd(3, 0.5, 2.0, &mut rng);
        let sg = generate::random_spd(3, 0.5, 2.0, &mut rng);
        assert!(matches!(
            flow_matrices(&sf, &sg, 1.0),
            Err(GhmcError::NonCommutingCovariances { .. })
        ));
    }

    #[test]
    fn flow_matrices_flags_degenerate_angle() {
        let id = SpdMatrix::identity(2);
        let flow = flow_matrices(&id, &id, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(flow.degenerate_angle());
        let flow = flow_matrices(&id, &id, 0.8).unwrap();
        assert!(!flow.degenerate_angle());
    }

    #[test]
    fn reversed_flow_negates_sine_only() {
        let mut rng = RngStream::new(7).rng();
        let (sf, sg) = generate::random_commuting_pair(2, 0.5, 2.0, &mut rng);
        let flow = flow_matrices(&sf, &sg, 0.6).unwrap();
        let rev = flow.reversed();
        assert!((flow.c() - rev.c()).norm() < 1e-15);
        assert!((flow.s() + rev.s()).norm() < 1e-15);
    }

    #[test]
    fn cosine_derivative_matches_sine() {
        // d/dt cos(Mt) = -M sin(Mt), checked by a forward difference.
        let mut rng = RngStream::new(8).rng();
        let m = generate::random_spd(3, 0.5, 2.0, &mut rng);
        let t = 0.8;
        let h = 1e-5;
        let cos_at = |tt: f64| m.map_spectrum(|x| (x * tt).cos());
        let sin_t = m.map_spectrum(|x| (x * t).sin());
        let diff = (cos_at(t + h) - cos_at(t)) / h;
        let residual = (diff + m.entries() * sin_t).norm();
        let bound = h * m.spectral_norm().powi(2) * (m.dim() as f64);
        assert!(
            residual < bound,
            "residual {residual:.3e} bound {bound:.3e}"
        );
    }

    #[test]
    fn spectral_function_matches_entrywise_on_diagonals() {
        let m = SpdMatrix::from_diagonal(&[0.5, 1.5, 4.0]).unwrap();
        for (tag, f) in [
            (MatrixFn::Inverse, (|x: f64| 1.0 / x) as fn(f64) -> f64),
            (MatrixFn::Sqrt, f64::sqrt),
            (MatrixFn::Cos, f64::cos),
            (MatrixFn::Sin, f64::sin),
            (MatrixFn::Log, f64::ln),
        ] {
            let dense = spd_function(&m, tag);
            for i in 0..3 {
                assert!((dense[(i, i)] - f(m.eigenvalues()[i])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn commuting_family_members_commute() {
        let mut rng = RngStream::new(9).rng();
        let basis = generate::random_orthonormal(4, &mut rng);
        let family = CommutingFamily::new(
            basis,
            vec![
                DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0]),
                DVector::from_row_slice(&[0.5, 0.5, 2.0, 8.0]),
                DVector::from_row_slice(&[2.0, 1.0, 1.0, 1.0]),
            ],
        )
        .unwrap();
        assert!(family.max_pairwise_commutator() < COMMUTE_TOL);
    }
}
