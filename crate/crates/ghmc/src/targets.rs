//! Random targets: mixtures of Gaussian potentials, the stochastic parameter
//! recursion they drive, and its contraction diagnostics.
//!
//! Each step draws a target `(M, S²)` from a finite mixture and applies the
//! one-step moment map with contraction `C`, so the parameters follow the
//! random affine recursion
//!
//! ```text
//!     μ_{k+1} = C μ_k + (I − C) M_{k+1}
//!     Σ_{k+1} = C Σ_k C + (S² − C S² C)_{k+1}
//! ```
//!
//! On vectorized covariances the multiplier is the d²×d² matrix with entries
//! `C_{mj} C_{nℓ}`. Convergence in distribution is governed by the Lyapunov
//! exponent `lim n⁻¹ log‖∏ A_j‖` of the multiplier products, estimated here
//! with periodically renormalized products. The first two moments of any
//! trajectory approach the convex hulls of the mixture means and covariances
//! at rates `‖C‖` and `‖C‖²` per step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{GhmcError, Result};
use crate::operator::{GaussianParams, GhmcStep};
use crate::rng::RngStream;
use crate::spd::{commutator_residual, spectral_norm, symmetrize, SpdMatrix, COMMUTE_TOL};

/// How the flow duration is chosen for each mixture component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeRule {
    /// One fixed duration for every component.
    FixedTime(f64),
    /// Univariate only: per-component duration `t_j = s_j σg arccos(α)` so
    /// that the scalar contraction equals `α` on every step.
    FixedAlpha(f64),
}

/// One mixture component: selection probability, target mean, target covariance.
#[derive(Clone, Debug)]
pub struct TargetComponent {
    pub prob: f64,
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

/// A finite family of Gaussian targets with selection probabilities, a shared
/// auxiliary, and a duration rule. Per-component steps are built once at
/// construction and reused by every iteration.
#[derive(Clone, Debug)]
pub struct TargetMixture {
    components: Vec<TargetComponent>,
    auxiliary: GaussianParams,
    time_rule: TimeRule,
    steps: Vec<GhmcStep>,
    cumulative: Vec<f64>,
}

impl TargetMixture {
    pub fn new(
        components: Vec<TargetComponent>,
        auxiliary: GaussianParams,
        time_rule: TimeRule,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(GhmcError::InvalidMixture("no components".into()));
        }
        let dim = auxiliary.dim();
        let mut total = 0.0;
        for (j, comp) in components.iter().enumerate() {
            if !(comp.prob > 0.0 && comp.prob <= 1.0) {
                return Err(GhmcError::InvalidMixture(format!(
                    "component {j}: probability {} outside (0, 1]",
                    comp.prob
                )));
            }
            if comp.mean.len() != dim || comp.cov.dim() != dim {
                return Err(GhmcError::InvalidMixture(format!(
                    "component {j}: dimension mismatch"
                )));
            }
            let residual = commutator_residual(comp.cov.entries(), auxiliary.cov().entries());
            if residual > COMMUTE_TOL {
                return Err(GhmcError::InvalidMixture(format!(
                    "component {j}: covariance does not commute with the auxiliary \
                     (residual {residual:.3e})"
                )));
            }
            total += comp.prob;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(GhmcError::InvalidMixture(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }

        let times: Vec<f64> = match time_rule {
            TimeRule::FixedTime(t) => {
                if !(t.is_finite()) {
                    return Err(GhmcError::InvalidMixture("non-finite duration".into()));
                }
                vec![t; components.len()]
            }
            TimeRule::FixedAlpha(alpha) => {
                if dim != 1 {
                    return Err(GhmcError::InvalidMixture(
                        "the fixed-contraction rule applies to univariate mixtures only".into(),
                    ));
                }
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(GhmcError::InvalidMixture(format!(
                        "contraction {alpha} outside (0, 1)"
                    )));
                }
                let sigma_g = auxiliary.cov().entries()[(0, 0)].sqrt();
                components
                    .iter()
                    .map(|comp| {
                        let s_j = comp.cov.entries()[(0, 0)].sqrt();
                        s_j * sigma_g * alpha.acos()
                    })
                    .collect()
            }
        };

        let steps = components
            .iter()
            .zip(&times)
            .map(|(comp, &t)| {
                GhmcStep::new(
                    GaussianParams::new(comp.mean.clone(), comp.cov.clone())?,
                    auxiliary.clone(),
                    t,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let mut cumulative = Vec::with_capacity(components.len());
        let mut acc = 0.0;
        for comp in &components {
            acc += comp.prob;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("nonempty") = 1.0;

        Ok(Self {
            components,
            auxiliary,
            time_rule,
            steps,
            cumulative,
        })
    }

    pub fn dim(&self) -> usize {
        self.auxiliary.dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[TargetComponent] {
        &self.components
    }

    pub fn auxiliary(&self) -> &GaussianParams {
        &self.auxiliary
    }

    pub fn time_rule(&self) -> TimeRule {
        self.time_rule
    }

    /// The precomputed step for component `j`.
    pub fn step(&self, j: usize) -> &GhmcStep {
        &self.steps[j]
    }

    /// Draws a component index according to the selection probabilities.
    pub fn draw_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.components.len() - 1)
    }

    /// `‖C‖`: the supremum of the contraction spectral norms over components.
    pub fn contraction_norm_sup(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.contraction_norm())
            .fold(0.0, f64::max)
    }

    /// The convex hulls spanned by the component means and covariances.
    pub fn hull_spec(&self) -> ConvexHullSpec {
        ConvexHullSpec::new(
            self.components.iter().map(|c| c.mean.clone()).collect(),
            self.components.iter().map(|c| c.cov.clone()).collect(),
        )
        .expect("mixture components are a valid hull")
    }
}

/// The states, drawn component indices, and contraction matrices of one
/// iteration run. `states` holds one more entry than the other two lists.
#[derive(Clone, Debug)]
pub struct IterationTrace {
    states: Vec<GaussianParams>,
    chosen: Vec<usize>,
    contraction_mats: Vec<DMatrix<f64>>,
}

impl IterationTrace {
    pub fn new(
        states: Vec<GaussianParams>,
        chosen: Vec<usize>,
        contraction_mats: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if states.len() != chosen.len() + 1 || chosen.len() != contraction_mats.len() {
            return Err(GhmcError::InvalidParameter(
                "trace lengths are inconsistent".into(),
            ));
        }
        Ok(Self {
            states,
            chosen,
            contraction_mats,
        })
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn states(&self) -> &[GaussianParams] {
        &self.states
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    pub fn contraction_mats(&self) -> &[DMatrix<f64>] {
        &self.contraction_mats
    }

    pub fn initial(&self) -> &GaussianParams {
        &self.states[0]
    }

    pub fn last(&self) -> &GaussianParams {
        self.states.last().expect("trace holds the initial state")
    }
}

/// Runs `k` steps with independently drawn targets.
///
/// The initial covariance must commute with the auxiliary and with every
/// component covariance; that keeps each step inside the commuting class the
/// closed-form map is valid for.
pub fn iterate_random(
    mix: &TargetMixture,
    initial: &GaussianParams,
    k: usize,
    stream: &RngStream,
) -> Result<IterationTrace> {
    if initial.dim() != mix.dim() {
        return Err(GhmcError::DimensionMismatch {
            expected: mix.dim(),
            got: initial.dim(),
        });
    }
    let aux_residual =
        commutator_residual(initial.cov().entries(), mix.auxiliary().cov().entries());
    if aux_residual > COMMUTE_TOL {
        return Err(GhmcError::NonCommutingCovariances {
            residual: aux_residual,
            tol: COMMUTE_TOL,
        });
    }
    for comp in mix.components() {
        let residual = commutator_residual(initial.cov().entries(), comp.cov.entries());
        if residual > COMMUTE_TOL {
            return Err(GhmcError::NonCommutingCovariances {
                residual,
                tol: COMMUTE_TOL,
            });
        }
    }

    let mut rng = stream.rng();
    let mut states = Vec::with_capacity(k + 1);
    let mut chosen = Vec::with_capacity(k);
    let mut contraction_mats = Vec::with_capacity(k);
    states.push(initial.clone());
    for _ in 0..k {
        let j = mix.draw_index(&mut rng);
        let step = mix.step(j);
        let next = step.apply(states.last().expect("nonempty"))?;
        states.push(next);
        chosen.push(j);
        contraction_mats.push(step.contraction().clone());
    }
    IterationTrace::new(states, chosen, contraction_mats)
}

/// The affine form of one step: multipliers and shifts acting on the mean and
/// on the vectorized covariance.
#[derive(Clone, Debug)]
pub struct AffineCoefficients {
    /// `C`, multiplying the mean.
    pub mean_mult: DMatrix<f64>,
    /// `(I − C) M`, added to the mean.
    pub mean_shift: DVector<f64>,
    /// d²×d² multiplier with entries `C_{mj} C_{nℓ}` acting on `vec(Σ)`.
    pub cov_mult: DMatrix<f64>,
    /// `vec(S² − C S² C)`, added to the vectorized covariance.
    pub cov_shift: DVector<f64>,
}

/// Row-major vectorization: `vec(M)[j d + ℓ] = M[(j, ℓ)]`.
pub fn vectorize(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    DVector::from_fn(d * d, |idx, _| m[(idx / d, idx % d)])
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |j, l| v[j * d + l])
}

/// The affine-map coefficients of the step driven by component `j`.
pub fn affine_coefficients(mix: &TargetMixture, j: usize) -> AffineCoefficients {
    let step = mix.step(j);
    let comp = &mix.components()[j];
    let d = mix.dim();
    let c = step.contraction();

    let mean_mult = c.clone();
    let mean_shift = (DMatrix::identity(d, d) - c) * &comp.mean;

    let mut cov_mult = DMatrix::zeros(d * d, d * d);
    for jj in 0..d {
        for ll in 0..d {
            for m in 0..d {
                for n in 0..d {
                    cov_mult[(jj * d + ll, m * d + n)] = c[(m, jj)] * c[(n, ll)];
                }
            }
        }
    }
    let target_cov = comp.cov.entries();
    let cov_shift = vectorize(&(target_cov - c * target_cov * c));

    AffineCoefficients {
        mean_mult,
        mean_shift,
        cov_mult,
        cov_shift,
    }
}

/// Which parameter block the random products act on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterationSpace {
    Mean,
    Covariance,
}

/// Result of a Lyapunov-exponent estimation run.
#[derive(Clone, Copy, Debug)]
pub struct LyapunovEstimate {
    /// `n⁻¹ log‖A_n ⋯ A_1‖` for the drawn sequence.
    pub exponent: f64,
    /// Empirical `E[log⁺‖A‖]`, the finiteness diagnostic for convergence.
    pub log_plus_norm_mean: f64,
}

/// Estimates the Lyapunov exponent of the random multiplier products.
///
/// The running product is rescaled by its Frobenius norm every 32 factors;
/// scalar rescaling leaves the accumulated log-norm exact while preventing
/// underflow over long products. The final norm is the spectral norm.
pub fn lyapunov_estimate(
    mix: &TargetMixture,
    n: usize,
    stream: &RngStream,
    space: IterationSpace,
) -> Result<LyapunovEstimate> {
    if n == 0 {
        return Err(GhmcError::InvalidParameter(
            "lyapunov estimation needs n >= 1".into(),
        ));
    }
    let multipliers: Vec<DMatrix<f64>> = (0..mix.len())
        .map(|j| match space {
            IterationSpace::Mean => mix.step(j).contraction().clone(),
            IterationSpace::Covariance => affine_coefficients(mix, j).cov_mult,
        })
        .collect();
    let norms: Vec<f64> = multipliers.iter().map(spectral_norm).collect();

    let side = multipliers[0].nrows();
    let mut rng = stream.rng();
    let mut product = DMatrix::<f64>::identity(side, side);
    let mut log_scale = 0.0_f64;
    let mut log_plus_sum = 0.0_f64;
    for i in 0..n {
        let j = mix.draw_index(&mut rng);
        product = &multipliers[j] * product;
        log_plus_sum += norms[j].ln().max(0.0);
        if (i + 1) % 32 == 0 {
            let scale = product.norm();
            log_scale += scale.ln();
            product /= scale;
        }
    }
    let exponent = (log_scale + spectral_norm(&product).ln()) / n as f64;
    Ok(LyapunovEstimate {
        exponent,
        log_plus_norm_mean: log_plus_sum / n as f64,
    })
}

/// The convex hulls spanned by a family of mean vectors and covariances.
#[derive(Clone, Debug)]
pub struct ConvexHullSpec {
    means: Vec<DVector<f64>>,
    covs: Vec<SpdMatrix>,
    dim: usize,
}

/// Distances from a Gaussian state to the mean hull and the covariance hull.
///
/// In one dimension both are exact interval distances. In higher dimensions
/// `mean_dist` is the Euclidean distance to the polytope of component means
/// and `cov_dist` is a certified upper bound (the hull of matrix-weighted
/// combinations contains everything the bound searches over).
#[derive(Clone, Copy, Debug)]
pub struct HullDistances {
    pub mean_dist: f64,
    pub cov_dist: f64,
}

impl ConvexHullSpec {
    pub fn new(means: Vec<DVector<f64>>, covs: Vec<SpdMatrix>) -> Result<Self> {
        if means.is_empty() || covs.is_empty() {
            return Err(GhmcError::InvalidParameter("empty hull".into()));
        }
        let dim = means[0].len();
        if means.iter().any(|m| m.len() != dim) || covs.iter().any(|c| c.dim() != dim) {
            return Err(GhmcError::DimensionMismatch {
                expected: dim,
                got: 0,
            });
        }
        Ok(Self { means, covs, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covs(&self) -> &[SpdMatrix] {
        &self.covs
    }

    /// Euclidean distance from a point to the convex hull of the means.
    pub fn mean_distance(&self, point: &DVector<f64>) -> f64 {
        if self.dim == 1 {
            let lo = self
                .means
                .iter()
                .map(|m| m[0])
                .fold(f64::INFINITY, f64::min);
            let hi = self
                .means
                .iter()
                .map(|m| m[0])
                .fold(f64::NEG_INFINITY, f64::max);
            let x = point[0];
            return (lo - x).max(x - hi).max(0.0);
        }
        min_distance_to_convex_combination(&self.means, point)
    }

    /// Distance from a covariance to the covariance hull (Frobenius norm).
    ///
    /// Exact interval distance in one dimension; in higher dimensions the
    /// minimum over scalar-weighted combinations, which is an upper bound on
    /// the matrix-weighted hull distance.
    pub fn cov_distance(&self, cov: &SpdMatrix) -> f64 {
        if self.dim == 1 {
            let lo = self
                .covs
                .iter()
                .map(|c| c.entries()[(0, 0)])
                .fold(f64::INFINITY, f64::min);
            let hi = self
                .covs
                .iter()
                .map(|c| c.entries()[(0, 0)])
                .fold(f64::NEG_INFINITY, f64::max);
            let x = cov.entries()[(0, 0)];
            return (lo - x).max(x - hi).max(0.0);
        }
        let vecs: Vec<DVector<f64>> = self.covs.iter().map(|c| vectorize(c.entries())).collect();
        min_distance_to_convex_combination(&vecs, &vectorize(cov.entries()))
    }

    /// Refines the covariance bound by sampling admissible matrix-weight
    /// families `{V_j}` with `Σ V_jᵀ V_j = I` and projecting onto the members
    /// they generate. Returns the smallest distance found.
    pub fn cov_distance_sampled(&self, cov: &SpdMatrix, samples: usize, stream: &RngStream) -> f64 {
        let mut best = self.cov_distance(cov);
        if self.dim == 1 {
            return best;
        }
        let mut rng = stream.rng();
        let d = self.dim;
        for _ in 0..samples {
            let weights: Vec<DMatrix<f64>> = (0..self.covs.len())
                .map(|_| {
                    DMatrix::from_fn(d, d, |_, _| {
                        rng.sample::<f64, _>(rand_distr::StandardNormal)
                    })
                })
                .collect();
            let gram: DMatrix<f64> = weights
                .iter()
                .fold(DMatrix::zeros(d, d), |acc, w| acc + w.transpose() * w);
            let gram_spd = match SpdMatrix::new(symmetrize(&gram)) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let normalizer = gram_spd.inverse().sqrt();
            let member =
                weights
                    .iter()
                    .zip(&self.covs)
                    .fold(DMatrix::zeros(d, d), |acc, (w, sigma)| {
                        let v = w * normalizer.entries();
                        acc + v.transpose() * sigma.entries() * &v
                    });
            best = best.min((symmetrize(&member) - cov.entries()).norm());
        }
        best
    }

    /// Mean and covariance hull distances of a Gaussian state.
    pub fn distances(&self, state: &GaussianParams) -> HullDistances {
        HullDistances {
            mean_dist: self.mean_distance(state.mean()),
            cov_dist: self.cov_distance(state.cov()),
        }
    }
}

/// Pushes a covariance-hull member through one step: `C w C + S Σf S`.
///
/// If `w` lies in the hull, so does the image, and its distance to the step
/// output shrinks by at least `‖C‖²`; tracking a witness along a trajectory
/// therefore certifies the per-step covariance bound.
pub fn push_cov_witness(witness: &DMatrix<f64>, step: &GhmcStep) -> DMatrix<f64> {
    let c = step.contraction();
    let s = step.flow().s();
    symmetrize(&(c * witness * c + s * step.target().cov().entries() * s))
}

/// Euclidean projection of `v` onto the probability simplex.
fn simplex_project(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut sorted: Vec<f64> = v.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut acc = 0.0;
    let mut threshold = 0.0;
    for (i, &val) in sorted.iter().enumerate() {
        acc += val;
        let candidate = (acc - 1.0) / (i + 1) as f64;
        if val - candidate > 0.0 {
            threshold = candidate;
        }
    }
    DVector::from_fn(n, |i, _| (v[i] - threshold).max(0.0))
}

/// Distance from `x` to the convex hull of `points`, by accelerated projected
/// gradient on the simplex of combination weights.
fn min_distance_to_convex_combination(points: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    let n = points.len();
    if n == 1 {
        return (x - &points[0]).norm();
    }
    let dim = x.len();
    let mut basis = DMatrix::zeros(dim, n);
    for (j, p) in points.iter().enumerate() {
        basis.set_column(j, p);
    }
    let gram = basis.transpose() * &basis;
    let lipschitz = spectral_norm(&gram).max(f64::MIN_POSITIVE);
    let target = basis.transpose() * x;

    let mut weights = DVector::from_element(n, 1.0 / n as f64);
    let mut momentum = weights.clone();
    let mut t_acc = 1.0_f64;
    for _ in 0..20_000 {
        let grad = &gram * &momentum - &target;
        let next = simplex_project(&(&momentum - grad / lipschitz));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        momentum = &next + (&next - &weights) * ((t_acc - 1.0) / t_next);
        let delta = (&next - &weights).norm();
        weights = next;
        t_acc = t_next;
        if delta < 1e-15 {
            break;
        }
    }
    (basis * weights - x).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    fn two_point_mixture(alpha: f64) -> TargetMixture {
        TargetMixture::new(
            vec![
                TargetComponent {
                    prob: 0.5,
                    mean: DVector::from_element(1, -1.0),
                    cov: SpdMatrix::scalar(1.0).unwrap(),
                },
                TargetComponent {
                    prob: 0.5,
                    mean: DVector::from_element(1, 1.0),
                    cov: SpdMatrix::scalar(1.0).unwrap(),
                },
            ],
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            TimeRule::FixedAlpha(alpha),
        )
        .unwrap()
    }

    #[test]
    fn mixture_rejects_unnormalized_probabilities() {
        let out = TargetMixture::new(
            vec![TargetComponent {
                prob: 0.7,
                mean: DVector::zeros(1),
                cov: SpdMatrix::scalar(1.0).unwrap(),
            }],
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            TimeRule::FixedTime(0.5),
        );
        assert!(matches!(out, Err(GhmcError::InvalidMixture(_))));
    }

    #[test]
    fn mixture_rejects_noncommuting_component() {
        let mut rng = RngStream::new(41).rng();
        let aux_cov = generate::random_spd(3, 0.5, 2.0, &mut rng);
        let comp_cov = generate::random_spd(3, 0.5, 2.0, &mut rng);
        let out = TargetMixture::new(
            vec![TargetComponent {
                prob: 1.0,
                mean: DVector::zeros(3),
                cov: comp_cov,
            }],
            GaussianParams::new(DVector::zeros(3), aux_cov).unwrap(),
            TimeRule::FixedTime(0.5),
        );
        assert!(matches!(out, Err(GhmcError::InvalidMixture(_))));
    }

    #[test]
    fn fixed_alpha_requires_univariate() {
        let out = TargetMixture::new(
            vec![TargetComponent {
                prob: 1.0,
                mean: DVector::zeros(2),
                cov: SpdMatrix::identity(2),
            }],
            GaussianParams::standard(2),
            TimeRule::FixedAlpha(0.5),
        );
        assert!(matches!(out, Err(GhmcError::InvalidMixture(_))));
    }

    #[test]
    fn fixed_alpha_gives_constant_contraction() {
        let mix = TargetMixture::new(
            vec![
                TargetComponent {
                    prob: 0.5,
                    mean: DVector::from_element(1, -1.0),
                    cov: SpdMatrix::scalar(0.5).unwrap(),
                },
                TargetComponent {
                    prob: 0.5,
                    mean: DVector::from_element(1, 2.0),
                    cov: SpdMatrix::scalar(3.0).unwrap(),
                },
            ],
            GaussianParams::univariate(0.0, 1.5).unwrap(),
            TimeRule::FixedAlpha(0.35),
        )
        .unwrap();
        for j in 0..mix.len() {
            assert!((mix.step(j).contraction()[(0, 0)] - 0.35).abs() < 1e-14);
        }
    }

    #[test]
    fn single_component_contracts_deterministically() {
        let mix = TargetMixture::new(
            vec![TargetComponent {
                prob: 1.0,
                mean: DVector::from_element(1, 3.0),
                cov: SpdMatrix::scalar(2.0).unwrap(),
            }],
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            TimeRule::FixedTime(0.4),
        )
        .unwrap();
        let initial = GaussianParams::univariate(-5.0, 4.0).unwrap();
        let trace = iterate_random(&mix, &initial, 40, &RngStream::new(1)).unwrap();
        let c = mix.step(0).contraction()[(0, 0)];
        let final_gap = (trace.last().mean()[0] - 3.0).abs();
        let expected = c.powi(40) * 8.0;
        assert!((final_gap - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn zero_steps_trace_is_initial_only() {
        let mix = two_point_mixture(0.5);
        let initial = GaussianParams::univariate(2.0, 1.0).unwrap();
        let trace = iterate_random(&mix, &initial, 0, &RngStream::new(2)).unwrap();
        assert_eq!(trace.len(), 0);
        assert_eq!(trace.states().len(), 1);
    }

    #[test]
    fn iterate_rejects_noncommuting_initial() {
        let mut rng = RngStream::new(42).rng();
        let (sf, sg) = generate::random_commuting_pair(3, 0.5, 2.0, &mut rng);
        let mix = TargetMixture::new(
            vec![TargetComponent {
                prob: 1.0,
                mean: DVector::zeros(3),
                cov: sf,
            }],
            GaussianParams::new(DVector::zeros(3), sg).unwrap(),
            TimeRule::FixedTime(0.5),
        )
        .unwrap();
        let rogue = generate::random_spd(3, 0.5, 2.0, &mut rng);
        let initial = GaussianParams::new(DVector::zeros(3), rogue).unwrap();
        assert!(matches!(
            iterate_random(&mix, &initial, 5, &RngStream::new(3)),
            Err(GhmcError::NonCommutingCovariances { .. })
        ));
    }

    #[test]
    fn affine_form_reproduces_the_step() {
        let mut rng = RngStream::new(43).rng();
        let basis = generate::random_orthonormal(2, &mut rng);
        let aux_cov =
            SpdMatrix::from_spectrum(&basis, &generate::random_eigenvalues(2, 0.5, 2.0, &mut rng))
                .unwrap();
        let comp_cov =
            SpdMatrix::from_spectrum(&basis, &generate::random_eigenvalues(2, 0.5, 2.0, &mut rng))
                .unwrap();
        let init_cov =
            SpdMatrix::from_spectrum(&basis, &generate::random_eigenvalues(2, 0.5, 2.0, &mut rng))
                .unwrap();
        let mix = TargetMixture::new(
            vec![TargetComponent {
                prob: 1.0,
                mean: DVector::from_row_slice(&[1.0, -2.0]),
                cov: comp_cov,
            }],
            GaussianParams::new(DVector::zeros(2), aux_cov).unwrap(),
            TimeRule::FixedTime(0.6),
        )
        .unwrap();
        let state = GaussianParams::new(DVector::from_row_slice(&[0.5, 0.7]), init_cov).unwrap();

        let direct = mix.step(0).apply(&state).unwrap();
        let coeffs = affine_coefficients(&mix, 0);
        let mean_affine = &coeffs.mean_mult * state.mean() + &coeffs.mean_shift;
        let cov_affine = unvectorize(
            &(&coeffs.cov_mult * vectorize(state.cov().entries()) + &coeffs.cov_shift),
            2,
        );
        assert!((direct.mean() - mean_affine).norm() < 1e-12);
        assert!((direct.cov().entries() - cov_affine).norm() < 1e-12);
    }

    #[test]
    fn identity_step_has_identity_affine_form() {
        let mix = TargetMixture::new(
            vec![TargetComponent {
                prob: 1.0,
                mean: DVector::from_element(1, 2.0),
                cov: SpdMatrix::scalar(1.0).unwrap(),
            }],
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            TimeRule::FixedTime(0.0),
        )
        .unwrap();
        let coeffs = affine_coefficients(&mix, 0);
        assert!((coeffs.mean_mult[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(coeffs.mean_shift[0].abs() < 1e-15);
        assert!((coeffs.cov_mult[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(coeffs.cov_shift[0].abs() < 1e-15);
    }

    #[test]
    fn univariate_affine_form_matches_scalar_recursion() {
        let mix = two_point_mixture(0.5);
        for j in 0..2 {
            let coeffs = affine_coefficients(&mix, j);
            let m = mix.components()[j].mean[0];
            let s2 = mix.components()[j].cov.entries()[(0, 0)];
            assert!((coeffs.mean_mult[(0, 0)] - 0.5).abs() < 1e-14);
            assert!((coeffs.mean_shift[0] - 0.5 * m).abs() < 1e-14);
            assert!((coeffs.cov_mult[(0, 0)] - 0.25).abs() < 1e-14);
            assert!((coeffs.cov_shift[0] - 0.75 * s2).abs() < 1e-14);
        }
    }

    #[test]
    fn lyapunov_univariate_fixed_contraction_is_exact() {
        let alpha = 0.5_f64;
        let mix = two_point_mixture(alpha);
        let mean_est =
            lyapunov_estimate(&mix, 500, &RngStream::new(4), IterationSpace::Mean).unwrap();
        assert!((mean_est.exponent - alpha.ln()).abs() < 1e-12);
        let cov_est =
            lyapunov_estimate(&mix, 500, &RngStream::new(4), IterationSpace::Covariance).unwrap();
        assert!((cov_est.exponent - 2.0 * alpha.ln()).abs() < 1e-12);
        assert_eq!(mean_est.log_plus_norm_mean, 0.0);
    }

    #[test]
    fn lyapunov_commuting_bivariate_matches_eigenvalue_oracle() {
        // All contractions share an eigenbasis, so the product norm is the
        // max over axes of the product of per-axis factors; the estimate must
        // match the averaged log-eigenvalues of the drawn sequence.
        let basis = generate::random_orthonormal(2, &mut RngStream::new(44).rng());
        let covs = [
            SpdMatrix::from_spectrum(&basis, &DVector::from_row_slice(&[0.8, 1.6])).unwrap(),
            SpdMatrix::from_spectrum(&basis, &DVector::from_row_slice(&[1.2, 0.9])).unwrap(),
        ];
        let aux = SpdMatrix::from_spectrum(&basis, &DVector::from_row_slice(&[1.0, 1.3])).unwrap();
        let mix = TargetMixture::new(
            vec![
                TargetComponent {
                    prob: 0.4,
                    mean: DVector::zeros(2),
                    cov: covs[0].clone(),
                },
                TargetComponent {
                    prob: 0.6,
                    mean: DVector::zeros(2),
                    cov: covs[1].clone(),
                },
            ],
            GaussianParams::new(DVector::zeros(2), aux).unwrap(),
            TimeRule::FixedTime(0.5),
        )
        .unwrap();

        let n = 10_000;
        let stream = RngStream::new(5);
        let est = lyapunov_estimate(&mix, n, &stream, IterationSpace::Mean).unwrap();

        // Oracle: average log-eigenvalues over the same drawn sequence.
        let mut rng = stream.rng();
        let log_eigs: Vec<DVector<f64>> = (0..2)
            .map(|j| {
                let c = mix.step(j).contraction();
                let vals = SpdMatrix::new(symmetrize(c)).unwrap().eigenvalues().clone();
                vals.map(f64::ln)
            })
            .collect();
        let mut sums = DVector::zeros(2);
        for _ in 0..n {
            let j = mix.draw_index(&mut rng);
            sums += &log_eigs[j];
        }
        let oracle = (sums / n as f64).max();
        assert!(
            (est.exponent - oracle).abs() < 0.01,
            "estimate {} oracle {}",
            est.exponent,
            oracle
        );

        // Convergence: doubling the product length moves the estimate little.
        let doubled = lyapunov_estimate(&mix, 2 * n, &stream, IterationSpace::Mean).unwrap();
        assert!(
            (est.exponent - doubled.exponent).abs() < 0.02,
            "estimate {} at n, {} at 2n",
            est.exponent,
            doubled.exponent
        );
    }

    #[test]
    fn hull_distance_interior_point_is_zero() {
        let mix = two_point_mixture(0.5);
        let hull = mix.hull_spec();
        let state = GaussianParams::univariate(0.3, 1.0).unwrap();
        let d = hull.distances(&state);
        assert_eq!(d.mean_dist, 0.0);
        assert_eq!(d.cov_dist, 0.0);
    }

    #[test]
    fn hull_distance_univariate_intervals() {
        let hull = ConvexHullSpec::new(
            vec![DVector::from_element(1, 0.0), DVector::from_element(1, 2.0)],
            vec![
                SpdMatrix::scalar(1.0).unwrap(),
                SpdMatrix::scalar(4.0).unwrap(),
            ],
        )
        .unwrap();
        let state = GaussianParams::univariate(5.0, 9.0).unwrap();
        let d = hull.distances(&state);
        assert!((d.mean_dist - 3.0).abs() < 1e-15);
        assert!((d.cov_dist - 5.0).abs() < 1e-15);
    }

    #[test]
    fn hull_contraction_inequality_along_univariate_steps() {
        let mix = two_point_mixture(0.5);
        let hull = mix.hull_spec();
        let norm_c = mix.contraction_norm_sup();
        let mut state = GaussianParams::univariate(6.0, 9.0).unwrap();
        let mut rng = RngStream::new(6).rng();
        for _ in 0..60 {
            let before = hull.distances(&state);
            let j = mix.draw_index(&mut rng);
            state = mix.step(j).apply(&state).unwrap();
            let after = hull.distances(&state);
            assert!(after.mean_dist <= norm_c * before.mean_dist + 1e-10);
            assert!(after.cov_dist <= norm_c * norm_c * before.cov_dist + 1e-10);
        }
    }

    #[test]
    fn multivariate_mean_distance_matches_projection() {
        // Triangle in the plane; distance from a point straight above an edge.
        let hull = ConvexHullSpec::new(
            vec![
                DVector::from_row_slice(&[0.0, 0.0]),
                DVector::from_row_slice(&[2.0, 0.0]),
                DVector::from_row_slice(&[0.0, 2.0]),
            ],
            vec![SpdMatrix::identity(2)],
        )
        .unwrap();
        let d = hull.mean_distance(&DVector::from_row_slice(&[1.0, -1.5]));
        assert!((d - 1.5).abs() < 1e-9, "distance {d}");
        let inside = hull.mean_distance(&DVector::from_row_slice(&[0.5, 0.5]));
        assert!(inside < 1e-9);
    }

    #[test]
    fn witness_tracking_certifies_multivariate_cov_bound() {
        let mut rng = RngStream::new(45).rng();
        let basis = generate::random_orthonormal(3, &mut rng);
        let mk = |vals: &[f64]| {
            SpdMatrix::from_spectrum(&basis, &DVector::from_row_slice(vals)).unwrap()
        };
        let mix = TargetMixture::new(
            vec![
                TargetComponent {
                    prob: 0.5,
                    mean: DVector::zeros(3),
                    cov: mk(&[0.8, 1.1, 1.4]),
                },
                TargetComponent {
                    prob: 0.5,
                    mean: DVector::zeros(3),
                    cov: mk(&[1.3, 0.9, 1.0]),
                },
            ],
            GaussianParams::new(DVector::zeros(3), mk(&[1.0, 1.0, 1.2])).unwrap(),
            TimeRule::FixedTime(0.5),
        )
        .unwrap();

        let mut state = GaussianParams::new(DVector::zeros(3), mk(&[4.0, 5.0, 6.0])).unwrap();
        // Start the witness at the first vertex of the hull.
        let mut witness = mix.components()[0].cov.entries().clone();
        let norm_c = mix.contraction_norm_sup();
        let mut bound = (state.cov().entries() - &witness).norm();
        let mut rng2 = RngStream::new(7).rng();
        for _ in 0..40 {
            let j = mix.draw_index(&mut rng2);
            let step = mix.step(j);
            state = step.apply(&state).unwrap();
            witness = push_cov_witness(&witness, step);
            let new_bound = (state.cov().entries() - &witness).norm();
            assert!(new_bound <= norm_c * norm_c * bound + 1e-10);
            // Sampling admissible weight families can only tighten the
            // deterministic scalar-combination bound.
            let hull = mix.hull_spec();
            let refined = hull.cov_distance_sampled(state.cov(), 8, &RngStream::new(8));
            assert!(refined <= hull.cov_distance(state.cov()) + 1e-12);
            bound = new_bound;
        }
    }

    #[test]
    fn simplex_projection_basics() {
        let p = simplex_project(&DVector::from_row_slice(&[0.4, 0.4, 0.2]));
        assert!((p.sum() - 1.0).abs() < 1e-14);
        let p = simplex_project(&DVector::from_row_slice(&[2.0, -1.0]));
        assert!((p[0] - 1.0).abs() < 1e-14 && p[1].abs() < 1e-14);
    }
}
