//! The exact one-step operator on Gaussian parameters.
//!
//! For a Gaussian target `f ~ N(μf, Σf)`, Gaussian auxiliary `g ~ N(μg, Σg)`
//! with commuting covariances, and flow duration `t`, one step maps a Gaussian
//! input `h ~ N(μh, Σh)` to another Gaussian with moments
//!
//! ```text
//!     μ̂ − μf = C (μh − μf)          Σ̂ − Σf = C (Σh − Σf) C
//! ```
//!
//! equivalently `μ̂ = (I−C) μf + C μh` and `Σ̂ = C Σh C + S Σf S`, where
//! `C = cos(D)`, `S = sin(D)`, `D = t sqrt(Σf⁻¹ Σg⁻¹)`. Both covariance forms
//! are evaluated on every step and must agree within `IDENTITY_TOL`.
//!
//! The quadratic split underlying the momentum integration writes, for
//! pairwise commuting SPD `F, A, C, S` with `C² + S² = I` and an arbitrary SPD
//! `H` (no commutation required),
//!
//! ```text
//!     (Cq̃ + ASp̃ − h̃)ᵀ H (Cq̃ + ASp̃ − h̃) + (Sq̃ − ACp̃)ᵀ F (Sq̃ − ACp̃)
//!         = (p̃ + Xq̃ − x)ᵀ K (p̃ + Xq̃ − x) + (q̃ − y)ᵀ Y (q̃ − y) + ζ
//! ```
//!
//! with
//!
//! ```text
//!     K = A (SHS + CFC) A             Y = (C H⁻¹ C + S F⁻¹ S)⁻¹
//!     X = −A⁻¹ (SHS + CFC)⁻¹ S (F−H) C
//!     x =  A⁻¹ (SHS + CFC)⁻¹ S H h̃    y = C h̃        ζ = 0.
//! ```
//!
//! The first quadratic form on the left is the target form evaluated along the
//! flow; the second is the auxiliary (momentum) form, since
//! `(Sq̃ − ACp̃)ᵀ F (Sq̃ − ACp̃) = (−A⁻¹Sq̃ + Cp̃)ᵀ G (−A⁻¹Sq̃ + Cp̃)` with
//! `G = A²F`. Signs above are the ones that make the identity hold pointwise;
//! the p̃-reflected variant integrates to the same Gaussian.

use nalgebra::{DMatrix, DVector};

use crate::error::{GhmcError, Result};
use crate::integrate::adaptive_simpson;
use crate::spd::{
    commutator_residual, flow_matrices, symmetrize, FlowMatrices, SpdMatrix, COMMUTE_TOL,
    IDENTITY_TOL,
};

/// Relative tolerance on the scalar remainder ζ of the quadratic split.
pub const ZETA_TOL: f64 = 1e-10;
/// Absolute pointwise tolerance for the momentum-integration oracle.
pub const QUAD_TOL: f64 = 1e-10;
/// Half-width of the momentum integration window in standard deviations of
/// the integrand's own Gaussian bump.
const QUAD_WINDOW_SDS: f64 = 30.0;

/// Mean vector and covariance of a multivariate Gaussian.
#[derive(Clone, Debug)]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(GhmcError::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(GhmcError::NonFinite);
        }
        Ok(Self { mean, cov })
    }

    /// Univariate Gaussian from scalar mean and variance.
    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), SpdMatrix::scalar(variance)?)
    }

    /// Standard Gaussian `N(0, I_d)`.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: SpdMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// Normalizing constant `(2π)^(−d/2) Det(Σ)^(−1/2)`.
    pub fn normalizing_constant(&self) -> f64 {
        let d = self.dim() as f64;
        (2.0 * std::f64::consts::PI).powf(-0.5 * d) * self.cov.determinant().powf(-0.5)
    }

    /// Density at `x`.
    pub fn density(&self, x: &DVector<f64>) -> f64 {
        let centered = x - &self.mean;
        self.normalizing_constant() * (-0.5 * self.cov.inv_quadratic_form(&centered)).exp()
    }

    /// Density at a scalar point (univariate case).
    pub fn density_1d(&self, x: f64) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        let var = self.cov.entries()[(0, 0)];
        let z = x - self.mean[0];
        (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }
}

/// One configured step: target, auxiliary, duration, and the cached flow.
///
/// Construction runs the commuting-covariance check once and caches
/// `(A, C, S)`; repeated applications of the same step reuse them.
#[derive(Clone, Debug)]
pub struct GhmcStep {
    target: GaussianParams,
    auxiliary: GaussianParams,
    time: f64,
    flow: FlowMatrices,
}

impl GhmcStep {
    pub fn new(target: GaussianParams, auxiliary: GaussianParams, time: f64) -> Result<Self> {
        if target.dim() != auxiliary.dim() {
            return Err(GhmcError::DimensionMismatch {
                expected: target.dim(),
                got: auxiliary.dim(),
            });
        }
        let flow = flow_matrices(target.cov(), auxiliary.cov(), time)?;
        Ok(Self {
            target,
            auxiliary,
            time,
            flow,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn target(&self) -> &GaussianParams {
        &self.target
    }

    pub fn auxiliary(&self) -> &GaussianParams {
        &self.auxiliary
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn flow(&self) -> &FlowMatrices {
        &self.flow
    }

    /// The contraction matrix `C`.
    pub fn contraction(&self) -> &DMatrix<f64> {
        self.flow.c()
    }

    /// True when `0 < C`, the regime in which contraction statements apply.
    /// A step with some non-positive cosine eigenvalue is still a valid map.
    pub fn contraction_is_positive(&self) -> bool {
        self.flow.c_min_eigenvalue() > 0.0
    }

    /// Spectral norm of `C`.
    pub fn contraction_norm(&self) -> f64 {
        self.flow.c_spectral_norm()
    }

    /// Applies the moment map to a Gaussian input.
    ///
    /// Both algebraic forms of the output covariance are evaluated and must
    /// agree within `IDENTITY_TOL`; the difference form is returned, which
    /// makes the target an exact fixed point.
    pub fn apply(&self, h: &GaussianParams) -> Result<GaussianParams> {
        if h.dim() != self.dim() {
            return Err(GhmcError::DimensionMismatch {
                expected: self.dim(),
                got: h.dim(),
            });
        }
        let c = self.flow.c();
        let s = self.flow.s();
        let mu_f = self.target.mean();
        let sigma_f = self.target.cov().entries();

        let mean = mu_f + c * (h.mean() - mu_f);

        let delta = h.cov().entries() - sigma_f;
        let cov_primary = symmetrize(&(sigma_f + c * delta * c));
        let cov_alt = symmetrize(&(c * h.cov().entries() * c + s * sigma_f * s));
        let residual = (&cov_primary - &cov_alt).norm();
        let tol = IDENTITY_TOL * cov_primary.norm().max(1.0);
        if residual > tol {
            return Err(GhmcError::IdentityViolation {
                what: "two forms of the output covariance",
                residual,
                tol,
            });
        }

        GaussianParams::new(mean, SpdMatrix::new(cov_primary)?)
    }
}

/// The factored form of the target-plus-auxiliary quadratic form.
///
/// Field roles: `momentum_precision` is `K`, `position_precision` is `Y`,
/// `coupling` is `X`, `momentum_center` is `x`, `position_center` is `y`, and
/// `residual` is ζ. `Y⁻¹` equals the one-step output covariance and
/// `position_center` equals `μ̂ − μf`.
#[derive(Clone, Debug)]
pub struct QuadraticSplit {
    pub momentum_precision: SpdMatrix,
    pub position_precision: SpdMatrix,
    pub coupling: DMatrix<f64>,
    pub momentum_center: DVector<f64>,
    pub position_center: DVector<f64>,
    pub residual: f64,
}

/// Splits the sum of the transported target form and the auxiliary form into
/// a momentum-only and a position-only quadratic term.
///
/// `f_prec`, `scale`, `cosine`, `sine` (that is, `F`, `A`, `C`, `S`) must be
/// pairwise commuting SPD matrices with `C² + S² = I`; `h_prec` (`H`) is any
/// SPD matrix and `h_shift` is `h̃ = μh − μf`.
pub fn quadratic_decomposition(
    f_prec: &SpdMatrix,
    scale: &SpdMatrix,
    cosine: &SpdMatrix,
    sine: &SpdMatrix,
    h_prec: &SpdMatrix,
    h_shift: &DVector<f64>,
) -> Result<QuadraticSplit> {
    let d = f_prec.dim();
    for m in [scale, cosine, sine] {
        if m.dim() != d {
            return Err(GhmcError::DimensionMismatch {
                expected: d,
                got: m.dim(),
            });
        }
    }
    if h_prec.dim() != d || h_shift.len() != d {
        return Err(GhmcError::DimensionMismatch {
            expected: d,
            got: h_prec.dim().min(h_shift.len()),
        });
    }

    let family = [f_prec, scale, cosine, sine];
    for i in 0..family.len() {
        for j in (i + 1)..family.len() {
            let residual = commutator_residual(family[i].entries(), family[j].entries());
            if residual > COMMUTE_TOL {
                return Err(GhmcError::CommutativityViolation {
                    what: "quadratic split inputs",
                    residual,
                    tol: COMMUTE_TOL,
                });
            }
        }
    }
    let trig = (cosine.entries() * cosine.entries() + sine.entries() * sine.entries()
        - DMatrix::identity(d, d))
    .norm();
    if trig > IDENTITY_TOL {
        return Err(GhmcError::CommutativityViolation {
            what: "C^2 + S^2 = I",
            residual: trig,
            tol: IDENTITY_TOL,
        });
    }

    let (f, a, c, s, h) = (
        f_prec.entries(),
        scale.entries(),
        cosine.entries(),
        sine.entries(),
        h_prec.entries(),
    );

    // W = SHS + CFC, the precision of the momentum block before scaling by A.
    let w = SpdMatrix::new(symmetrize(&(s * h * s + c * f * c)))?;
    let momentum_precision = SpdMatrix::new(symmetrize(&(a * w.entries() * a)))?;

    let y_inv =
        symmetrize(&(c * h_prec.inverse().entries() * c + s * f_prec.inverse().entries() * s));
    let position_precision = SpdMatrix::new(y_inv)?.inverse();

    let a_inv = scale.inverse();
    let w_inv = w.inverse();
    let coupling = -(a_inv.entries() * w_inv.entries() * s * (f - h) * c);
    let momentum_center = a_inv.entries() * w_inv.entries() * s * h * h_shift;
    let position_center = c * h_shift;

    let residual = {
        let lhs = (h * h_shift).dot(h_shift);
        let kx = momentum_precision.entries() * &momentum_center;
        let yy = position_precision.entries() * &position_center;
        lhs - kx.dot(&momentum_center) - yy.dot(&position_center)
    };
    let zeta_scale = h_shift.norm_squared() * h_prec.spectral_norm();
    let zeta_tol = ZETA_TOL * zeta_scale.max(f64::MIN_POSITIVE);
    if residual.abs() > zeta_tol {
        return Err(GhmcError::IdentityViolation {
            what: "scalar remainder of the quadratic split",
            residual: residual.abs(),
            tol: zeta_tol,
        });
    }

    Ok(QuadraticSplit {
        momentum_precision,
        position_precision,
        coupling,
        momentum_center,
        position_center,
        residual,
    })
}

/// Relative residual of `Det(K) Det(Y) = Det(H) Det(G)`.
///
/// Determinants are taken from the cached spectra.
pub fn determinant_identity_check(
    k: &SpdMatrix,
    y: &SpdMatrix,
    h: &SpdMatrix,
    g: &SpdMatrix,
) -> f64 {
    let lhs = k.determinant() * y.determinant();
    let rhs = h.determinant() * g.determinant();
    (lhs - rhs).abs() / rhs
}

/// Ground-truth evaluation of one step by direct momentum integration
/// (univariate only).
///
/// For each grid point `q` this integrates `h(Q(q,p)) g(P(q,p)) dp` with
/// adaptive Simpson quadrature to `QUAD_TOL` per point. Both factors are
/// Gaussians in `p`, so their product is a single Gaussian bump whose center
/// and width follow from the precision-weighted combination of the factor
/// quadratics; the window is that bump padded by `QUAD_WINDOW_SDS` of its
/// standard deviations. A fixed window around the auxiliary mean would miss
/// the bump whenever the cosine is small and the integrand's mass drifts far
/// from it.
pub fn quadrature_oracle_1d(
    step: &GhmcStep,
    h: &GaussianParams,
    q_grid: &[f64],
) -> Result<Vec<f64>> {
    if step.dim() != 1 {
        return Err(GhmcError::DimensionMismatch {
            expected: 1,
            got: step.dim(),
        });
    }
    if h.dim() != 1 {
        return Err(GhmcError::DimensionMismatch {
            expected: 1,
            got: h.dim(),
        });
    }
    if q_grid.iter().any(|q| !q.is_finite()) {
        return Err(GhmcError::NonFinite);
    }

    let c = step.flow().c()[(0, 0)];
    let s = step.flow().s()[(0, 0)];
    let a = step.flow().a()[(0, 0)];
    let mu_f = step.target().mean()[0];
    let mu_g = step.auxiliary().mean()[0];
    let sigma_g = step.auxiliary().cov().entries()[(0, 0)].sqrt();
    let mu_h = h.mean()[0];
    let sigma_h = h.cov().entries()[(0, 0)].sqrt();

    let mut out = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let q_shift = q - mu_f;

        // The target factor reads a Gaussian at Q = μf + c q̃ + a s p̃, the
        // auxiliary one at P = μg − (s/a) q̃ + c p̃; in p̃ each contributes a
        // quadratic with precision (slope/σ)². Combining them locates the
        // product bump. At least one slope is bounded away from zero since
        // c² + s² = 1.
        let mut precision = 0.0;
        let mut weighted_center = 0.0;
        let slope_h = a * s;
        if slope_h.abs() > 1e-150 {
            let tau = (slope_h / sigma_h).powi(2);
            precision += tau;
            weighted_center += tau * (mu_h - mu_f - c * q_shift) / slope_h;
        }
        if c.abs() > 1e-150 {
            let tau = (c / sigma_g).powi(2);
            precision += tau;
            weighted_center += tau * (s / a) * q_shift / c;
        }
        let bump_center = mu_g + weighted_center / precision;
        let bump_width = precision.sqrt().recip();
        let lo = bump_center - QUAD_WINDOW_SDS * bump_width;
        let hi = bump_center + QUAD_WINDOW_SDS * bump_width;

        let integrand = |p: f64| {
            let p_shift = p - mu_g;
            let q_new = mu_f + c * q_shift + a * s * p_shift;
            let p_new = mu_g - (s / a) * q_shift + c * p_shift;
            h.density_1d(q_new) * step.auxiliary().density_1d(p_new)
        };
        out.push(adaptive_simpson(integrand, lo, hi, QUAD_TOL)?);
    }
    Ok(out)
}
