//! Univariate limit theory and the half-plane geometry of parameter space.
//!
//! When every step contracts by the same scalar `α`, the parameter recursion
//!
//! ```text
//!     μ_{k+1} = α μ_k + (1−α) M_{k+1}        σ²_{k+1} = α² σ²_k + (1−α²) S²_{k+1}
//! ```
//!
//! telescopes into weighted i.i.d. series with weights `a_j = (1−α) α^j` and
//! `b_j = (1−α²) α^{2j}`. Writing `Φ(ψ, ζ) = E[exp(i(ψM + ζS²))]` for the
//! mixture, the limiting parameter pair has characteristic function
//!
//! ```text
//!     Ψ(ψ, ζ) = ∏_{j≥0} Φ(a_j ψ, b_j ζ),
//! ```
//!
//! and the chain output converges in distribution to a Gaussian with random
//! parameters whose characteristic function is `Ψ(ξ, iξ²/2)`. Its moments are
//! closed-form:
//!
//! ```text
//!     E[X] = E[M]
//!     Var[X] = E[S²] + ((1−α)/(1+α)) Var[M].
//! ```
//!
//! A univariate Gaussian is a point `(μ, Σ)` on a half plane with the
//! variance as second coordinate. Iterating a fixed step moves the point
//! along a parabola toward the target, which induces the parabolic arclength
//! norm `N_H` and distance `d_H`; the alternative distance
//! `d_R = sqrt(Δμ² + |ΔΣ|)` makes the step an exact contraction by `C`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GhmcError, Result};
use crate::rng::RngStream;
use crate::sampler::{BatchMeta, SampleBatch};

/// A point on the mean–variance half plane (`sigma` is the variance).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlanePoint {
    pub mu: f64,
    pub sigma: f64,
}

impl HalfPlanePoint {
    /// `sigma >= 0`; zero is allowed for geometry, though it is no Gaussian.
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(GhmcError::InvalidParameter(
                "half-plane point needs finite mu and sigma >= 0".into(),
            ));
        }
        Ok(Self { mu, sigma })
    }
}

/// One mixture entry `(p_j, m_j, s_j²)`.
#[derive(Clone, Copy, Debug)]
pub struct MixtureComponent1d {
    pub prob: f64,
    pub mean: f64,
    pub variance: f64,
}

/// A univariate target mixture with its fixed per-step contraction `α`.
#[derive(Clone, Debug)]
pub struct UnivariateMixture {
    components: Vec<MixtureComponent1d>,
    alpha: f64,
    cumulative: Vec<f64>,
}

/// Closed-form moments of the limiting output variable.
#[derive(Clone, Copy, Debug)]
pub struct LimitMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

impl UnivariateMixture {
    /// Components are `(prob, mean, variance)` triples; probabilities must sum
    /// to one and `alpha` must lie in `(0, 1)`.
    pub fn new(components: &[(f64, f64, f64)], alpha: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(GhmcError::InvalidMixture("no components".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GhmcError::InvalidMixture(format!(
                "contraction {alpha} outside (0, 1)"
            )));
        }
        let mut total = 0.0;
        let mut comps = Vec::with_capacity(components.len());
        for &(prob, mean, variance) in components {
            let prob_ok = prob > 0.0 && prob <= 1.0;
            let variance_ok = variance > 0.0;
            if !prob_ok || !mean.is_finite() || !variance_ok {
                return Err(GhmcError::InvalidMixture(format!(
                    "bad component ({prob}, {mean}, {variance})"
                )));
            }
            total += prob;
            comps.push(MixtureComponent1d {
                prob,
                mean,
                variance,
            });
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(GhmcError::InvalidMixture(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(comps.len());
        let mut acc = 0.0;
        for c in &comps {
            acc += c.prob;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(Self {
            components: comps,
            alpha,
            cumulative,
        })
    }

    pub fn components(&self) -> &[MixtureComponent1d] {
        &self.components
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `m = E[M] = Σ p_j m_j`.
    pub fn mean_of_means(&self) -> f64 {
        self.components.iter().map(|c| c.prob * c.mean).sum()
    }

    /// `s² = E[S²] = Σ p_j s_j²`.
    pub fn mean_of_variances(&self) -> f64 {
        self.components.iter().map(|c| c.prob * c.variance).sum()
    }

    /// `E[M²]`.
    pub fn second_moment_of_means(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.prob * c.mean * c.mean)
            .sum()
    }

    /// `Var[M]`.
    pub fn variance_of_means(&self) -> f64 {
        let m = self.mean_of_means();
        self.second_moment_of_means() - m * m
    }

    pub fn max_abs_mean(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.mean.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_variance(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.variance)
            .fold(0.0, f64::max)
    }

    /// `a_j = (1−α) α^j`.
    pub fn weight_mean(&self, j: u32) -> f64 {
        (1.0 - self.alpha) * self.alpha.powi(j as i32)
    }

    /// `b_j = (1−α²) α^{2j}`.
    pub fn weight_variance(&self, j: u32) -> f64 {
        (1.0 - self.alpha * self.alpha) * self.alpha.powi(2 * j as i32)
    }

    /// `Φ(ψ, ζ) = Σ p_j exp(i(ψ m_j + ζ s_j²))`, exact finite sum.
    pub fn phi(&self, psi: f64, zeta: Complex64) -> Complex64 {
        let i = Complex64::i();
        self.components
            .iter()
            .map(|c| c.prob * (i * (psi * c.mean + zeta * c.variance)).exp())
            .sum()
    }

    /// The j-th per-factor logarithm `log Φ(a_j ξ, (i/2) b_j ξ²)` on the
    /// principal branch. Intended for moment derivations near ξ = 0, where
    /// every factor sits near 1 and the branch is unambiguous.
    pub fn log_phi_factor(&self, j: u32, xi: f64) -> Complex64 {
        let a = self.weight_mean(j);
        let b = self.weight_variance(j);
        self.phi(a * xi, Complex64::new(0.0, 0.5 * b * xi * xi))
            .ln()
    }

    /// The limiting characteristic function `Ψ(ψ, ζ) = ∏ Φ(a_j ψ, b_j ζ)`,
    /// truncated once the tail bound `α^J |ψ| max|m| + α^{2J} |ζ| max s²`
    /// drops below `tol`.
    pub fn psi_limit(&self, psi: f64, zeta: Complex64, tol: f64) -> Result<Complex64> {
        if tol <= 0.0 || tol.is_nan() {
            return Err(GhmcError::InvalidParameter(
                "truncation tolerance must be positive".into(),
            ));
        }
        let m_scale = psi.abs() * self.max_abs_mean();
        let v_scale = zeta.norm() * self.max_variance();
        let mut terms = 0u32;
        loop {
            let a_tail = self.alpha.powi(terms as i32);
            if a_tail * m_scale + a_tail * a_tail * v_scale < tol || terms > 100_000 {
                break;
            }
            terms += 1;
        }
        let mut product = Complex64::new(1.0, 0.0);
        for j in 0..terms {
            product *= self.phi(self.weight_mean(j) * psi, self.weight_variance(j) * zeta);
        }
        Ok(product)
    }

    /// The output-variable characteristic function `Ψ(ξ, iξ²/2)`.
    pub fn limit_cf(&self, xi: f64, tol: f64) -> Result<Complex64> {
        self.psi_limit(xi, Complex64::new(0.0, 0.5 * xi * xi), tol)
    }

    /// Closed-form limit moments.
    pub fn limit_moments(&self) -> LimitMoments {
        let m = self.mean_of_means();
        let s2 = self.mean_of_variances();
        let shrink = (1.0 - self.alpha) / (1.0 + self.alpha);
        let variance = s2 + shrink * self.variance_of_means();
        LimitMoments {
            mean: m,
            second_moment: m * m + variance,
            variance,
        }
    }

    /// Expected parameters after `k` steps from `(μ₀, σ₀²)`:
    /// `E[μ_k] = α^k μ₀ + (1−α^k) m` and `E[σ²_k] = α^{2k} σ₀² + (1−α^{2k}) s²`.
    pub fn transient_moments(&self, mu0: f64, sigma0_sq: f64, k: u32) -> (f64, f64) {
        let ak = self.alpha.powi(k as i32);
        let a2k = ak * ak;
        (
            ak * mu0 + (1.0 - ak) * self.mean_of_means(),
            a2k * sigma0_sq + (1.0 - a2k) * self.mean_of_variances(),
        )
    }

    /// Smallest truncation length with
    /// `α^J max|m| + α^{2J} max s² < 1e-12`, keeping the series bias below the
    /// Monte Carlo noise floor.
    pub fn default_truncation(&self) -> u32 {
        let mut j = 0u32;
        loop {
            let a = self.alpha.powi(j as i32);
            if a * self.max_abs_mean() + a * a * self.max_variance() < 1e-12 || j > 100_000 {
                return j;
            }
            j += 1;
        }
    }

    pub fn draw_component(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.components.len() - 1)
    }

    /// Samples the limiting output variable: per replica, form the truncated
    /// weighted series for `(μ, σ²)` and draw `X ~ N(μ, σ²)`.
    pub fn sample_x_infty(
        &self,
        n: usize,
        truncation: u32,
        stream: &RngStream,
    ) -> Result<SampleBatch> {
        if n == 0 {
            return Err(GhmcError::InvalidParameter("need n >= 1 samples".into()));
        }
        let a: Vec<f64> = (0..truncation).map(|j| self.weight_mean(j)).collect();
        let b: Vec<f64> = (0..truncation).map(|j| self.weight_variance(j)).collect();
        let mut rng = stream.rng();
        let mut draws = DMatrix::zeros(n, 1);
        for r in 0..n {
            let mut mu = 0.0;
            let mut var = 0.0;
            for j in 0..truncation as usize {
                let c = &self.components[self.draw_component(&mut rng)];
                mu += a[j] * c.mean;
                var += b[j] * c.variance;
            }
            let z: f64 = rng.sample(StandardNormal);
            draws[(r, 0)] = mu + var.sqrt() * z;
        }
        SampleBatch::new(
            draws,
            BatchMeta {
                label: format!("limit-law(J={truncation})"),
                seed: stream.seed(),
                stream: stream.stream(),
            },
        )
    }

    /// Simulates the parameter recursion for `k` steps and returns `(μ_k, σ²_k)`.
    pub fn simulate_parameter_chain(
        &self,
        mu0: f64,
        sigma0_sq: f64,
        k: u32,
        rng: &mut impl Rng,
    ) -> (f64, f64) {
        let alpha = self.alpha;
        let a2 = alpha * alpha;
        let mut mu = mu0;
        let mut var = sigma0_sq;
        for _ in 0..k {
            let c = &self.components[self.draw_component(rng)];
            mu = alpha * mu + (1.0 - alpha) * c.mean;
            var = a2 * var + (1.0 - a2) * c.variance;
        }
        (mu, var)
    }
}

/// Parabolic arclength norm
/// `N_H(m, Σ) = ∫₀¹ sqrt(m² + (2wΣ)²) dw`, by the elementary antiderivative
/// of `sqrt(a² + c²w²)` rather than quadrature.
pub fn n_h(m: f64, sigma: f64) -> f64 {
    let a = m.abs();
    let c = 2.0 * sigma.abs();
    if c == 0.0 {
        return a;
    }
    if a == 0.0 {
        return 0.5 * c;
    }
    let root = (a * a + c * c).sqrt();
    0.5 * root + (a * a / (2.0 * c)) * ((c + root) / a).ln()
}

/// Distance along the connecting parabola, `d_H(P₀, P₁) = N_H(P₁ − P₀)`.
pub fn d_h(p0: &HalfPlanePoint, p1: &HalfPlanePoint) -> f64 {
    n_h(p1.mu - p0.mu, p1.sigma - p0.sigma)
}

/// The alternative distance `d_R(P₀, P₁) = sqrt(Δμ² + |ΔΣ|)`, under which one
/// step contracts the distance to the target by exactly `C`.
pub fn d_r(p0: &HalfPlanePoint, p1: &HalfPlanePoint) -> f64 {
    let dm = p0.mu - p1.mu;
    (dm * dm + (p0.sigma - p1.sigma).abs()).sqrt()
}

/// The continuous motion through `start` toward `target` with per-unit-time
/// contraction `c`:
///
/// ```text
///     μ(t) = (1 − c^t) μ_f + c^t μ₀        Σ(t) = (1 − c^{2t}) Σ_f + c^{2t} Σ₀
/// ```
///
/// so `t = 1` is one discrete step and `t → ∞` reaches the target. The path
/// follows `Σ = Σ_f + (Σ₀ − Σ_f) (μ − μ_f)²/(μ₀ − μ_f)²` whenever `μ₀ ≠ μ_f`
/// (a vertical segment otherwise).
pub fn geodesic(
    start: &HalfPlanePoint,
    target: &HalfPlanePoint,
    c: f64,
    t: f64,
) -> Result<HalfPlanePoint> {
    if !(c > 0.0 && c < 1.0) {
        return Err(GhmcError::InvalidParameter(format!(
            "contraction {c} outside (0, 1)"
        )));
    }
    if t < 0.0 || t.is_nan() {
        return Err(GhmcError::InvalidParameter(format!(
            "geodesic time {t} must be nonnegative"
        )));
    }
    let ct = c.powf(t);
    let c2t = ct * ct;
    HalfPlanePoint::new(
        target.mu + ct * (start.mu - target.mu),
        target.sigma + c2t * (start.sigma - target.sigma),
    )
}
