//! The exact phase-space motion.
//!
//! With `F = Σf⁻¹`, `G = Σg⁻¹`, q̃ = q − μf and p̃ = p − μg, the quadratic
//! energy `½ q̃ᵀFq̃ + ½ p̃ᵀGp̃` generates the linear motion
//!
//! ```text
//!     Q(t) = μf + C q̃ + A S p̃         P(t) = μg − A⁻¹ S q̃ + C p̃
//! ```
//!
//! which conserves the energy and preserves phase-space volume exactly. A
//! fixed-step Runge–Kutta integrator of the underlying equations
//! `q̇ = G p̃`, `ṗ = −F q̃` serves as an independent oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{GhmcError, Result};
use crate::operator::GaussianParams;
use crate::spd::{flow_matrices, FlowMatrices};

/// A position–momentum pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(GhmcError::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Target, auxiliary, and the cached flow of a fixed duration.
#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    target: GaussianParams,
    auxiliary: GaussianParams,
    time: f64,
    flow: FlowMatrices,
    f_prec: DMatrix<f64>,
    g_prec: DMatrix<f64>,
}

impl HamiltonianSpec {
    pub fn new(target: GaussianParams, auxiliary: GaussianParams, time: f64) -> Result<Self> {
        if target.dim() != auxiliary.dim() {
            return Err(GhmcError::DimensionMismatch {
                expected: target.dim(),
                got: auxiliary.dim(),
            });
        }
        let flow = flow_matrices(target.cov(), auxiliary.cov(), time)?;
        let f_prec = target.cov().inverse().entries().clone();
        let g_prec = auxiliary.cov().inverse().entries().clone();
        Ok(Self {
            target,
            auxiliary,
            time,
            flow,
            f_prec,
            g_prec,
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

    fn check_dim(&self, z: &PhasePoint) -> Result<()> {
        if z.dim() != self.dim() {
            return Err(GhmcError::DimensionMismatch {
                expected: self.dim(),
                got: z.dim(),
            });
        }
        Ok(())
    }

    /// The closed-form motion over the configured duration.
    pub fn flow_map(&self, z: &PhasePoint) -> Result<PhasePoint> {
        self.check_dim(z)?;
        let q_shift = &z.q - self.target.mean();
        let p_shift = &z.p - self.auxiliary.mean();
        let (a, a_inv, c, s) = (
            self.flow.a(),
            self.flow.a_inv(),
            self.flow.c(),
            self.flow.s(),
        );
        let q_new = self.target.mean() + c * &q_shift + a * s * &p_shift;
        let p_new = self.auxiliary.mean() - a_inv * s * &q_shift + c * &p_shift;
        PhasePoint::new(q_new, p_new)
    }

    /// The quadratic energy `½ q̃ᵀFq̃ + ½ p̃ᵀGp̃` (additive constant dropped).
    pub fn energy(&self, z: &PhasePoint) -> Result<f64> {
        self.check_dim(z)?;
        let q_shift = &z.q - self.target.mean();
        let p_shift = &z.p - self.auxiliary.mean();
        Ok(0.5 * (&self.f_prec * &q_shift).dot(&q_shift)
            + 0.5 * (&self.g_prec * &p_shift).dot(&p_shift))
    }

    /// Determinant of the full phase-space linearization
    /// `[[C, AS], [−A⁻¹S, C]]`; equals 1 for a volume-preserving map.
    pub fn jacobian_determinant(&self) -> f64 {
        let d = self.dim();
        let (a, a_inv, c, s) = (
            self.flow.a(),
            self.flow.a_inv(),
            self.flow.c(),
            self.flow.s(),
        );
        let upper_right = a * s;
        let lower_left = -(a_inv * s);
        let mut jac = DMatrix::zeros(2 * d, 2 * d);
        jac.view_mut((0, 0), (d, d)).copy_from(c);
        jac.view_mut((0, d), (d, d)).copy_from(&upper_right);
        jac.view_mut((d, 0), (d, d)).copy_from(&lower_left);
        jac.view_mut((d, d), (d, d)).copy_from(c);
        jac.determinant()
    }

    /// The same motion run backwards in time.
    pub fn reversed(&self) -> Self {
        Self {
            target: self.target.clone(),
            auxiliary: self.auxiliary.clone(),
            time: -self.time,
            flow: self.flow.reversed(),
            f_prec: self.f_prec.clone(),
            g_prec: self.g_prec.clone(),
        }
    }
}

/// Fixed-step fourth-order Runge–Kutta integration of `q̇ = G p̃`, `ṗ = −F q̃`
/// over `duration`, independent of the closed-form flow. `dt` is an upper
/// bound on the step size; the actual step divides the duration evenly.
pub fn ode_oracle(
    spec: &HamiltonianSpec,
    z: &PhasePoint,
    duration: f64,
    dt: f64,
) -> Result<PhasePoint> {
    if z.dim() != spec.dim() {
        return Err(GhmcError::DimensionMismatch {
            expected: spec.dim(),
            got: z.dim(),
        });
    }
    if dt <= 0.0 || dt.is_nan() || !duration.is_finite() {
        return Err(GhmcError::InvalidParameter(
            "ode oracle needs dt > 0 and a finite duration".into(),
        ));
    }
    if duration == 0.0 {
        return Ok(z.clone());
    }

    let steps = (duration.abs() / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mu_f = spec.target.mean();
    let mu_g = spec.auxiliary.mean();

    let deriv = |q: &DVector<f64>, p: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        (&spec.g_prec * (p - mu_g), -(&spec.f_prec * (q - mu_f)))
    };

    let mut q = z.q.clone();
    let mut p = z.p.clone();
    for _ in 0..steps {
        let (k1q, k1p) = deriv(&q, &p);
        let (k2q, k2p) = deriv(&(&q + &k1q * (h / 2.0)), &(&p + &k1p * (h / 2.0)));
        let (k3q, k3p) = deriv(&(&q + &k2q * (h / 2.0)), &(&p + &k2p * (h / 2.0)));
        let (k4q, k4p) = deriv(&(&q + &k3q * h), &(&p + &k3p * h));
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
        p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    }
    PhasePoint::new(q, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::rng::RngStream;

    fn unit_spec_1d(time: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            time,
        )
        .unwrap()
    }

    fn random_spec(dim: usize, time: f64, seed: u64) -> HamiltonianSpec {
        let mut rng = RngStream::new(seed).rng();
        let (sf, sg) = generate::random_commuting_pair(dim, 0.5, 2.0, &mut rng);
        HamiltonianSpec::new(
            generate::gaussian_with_cov(sf, 1.5, &mut rng),
            generate::gaussian_with_cov(sg, 1.5, &mut rng),
            time,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_stays_fixed() {
        let spec = random_spec(3, 0.9, 31);
        let z = PhasePoint::new(
            spec.target().mean().clone(),
            spec.auxiliary().mean().clone(),
        )
        .unwrap();
        let out = spec.flow_map(&z).unwrap();
        assert!((out.q - &z.q).norm() < 1e-13);
        assert!((out.p - &z.p).norm() < 1e-13);
        assert!(spec.energy(&z).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_time_flow_is_identity() {
        let spec = random_spec(2, 0.0, 32);
        let z = PhasePoint::new(
            DVector::from_row_slice(&[0.3, -0.8]),
            DVector::from_row_slice(&[1.1, 0.2]),
        )
        .unwrap();
        let out = spec.flow_map(&z).unwrap();
        assert!((out.q - &z.q).norm() < 1e-13);
        assert!((out.p - &z.p).norm() < 1e-13);
    }

    #[test]
    fn quarter_period_rotation() {
        // Unit oscillator at t = π/2 sends (1, 0) to (0, -1).
        let spec = unit_spec_1d(std::f64::consts::FRAC_PI_2);
        let z =
            PhasePoint::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)).unwrap();
        let out = spec.flow_map(&z).unwrap();
        assert!(out.q[0].abs() < 1e-15);
        assert!((out.p[0] + 1.0).abs() < 1e-15);
        // Cross-check against the integrator.
        let oracle = ode_oracle(&spec, &z, spec.time(), 1e-5).unwrap();
        assert!((oracle.q[0] - out.q[0]).abs() < 1e-10);
        assert!((oracle.p[0] - out.p[0]).abs() < 1e-10);
    }

    #[test]
    fn unit_energy_value() {
        let spec = unit_spec_1d(1.0);
        let z =
            PhasePoint::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)).unwrap();
        assert!((spec.energy(&z).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn energy_is_conserved_on_random_flows() {
        let mut rng = RngStream::new(33).rng();
        for seed in 0..20u64 {
            let spec = random_spec(3, 0.4 + 0.1 * seed as f64, 100 + seed);
            let z = PhasePoint::new(
                generate::random_mean(3, 2.0, &mut rng),
                generate::random_mean(3, 2.0, &mut rng),
            )
            .unwrap();
            let before = spec.energy(&z).unwrap();
            let after = spec.energy(&spec.flow_map(&z).unwrap()).unwrap();
            assert!(
                (after - before).abs() <= 1e-10 * before.max(1.0),
                "drift {:.3e}",
                (after - before).abs()
            );
        }
    }

    #[test]
    fn jacobian_determinant_is_one() {
        for seed in 0..5u64 {
            let spec = random_spec(4, 0.7, 200 + seed);
            let det = spec.jacobian_determinant();
            assert!((det - 1.0).abs() < 1e-10, "det {det}");
        }
        assert!((unit_spec_1d(0.0).jacobian_determinant() - 1.0).abs() < 1e-14);
        assert!((unit_spec_1d(1.3).jacobian_determinant() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_flow_inverts_the_motion() {
        let mut rng = RngStream::new(34).rng();
        let spec = random_spec(3, 0.8, 35);
        let rev = spec.reversed();
        let z = PhasePoint::new(
            generate::random_mean(3, 2.0, &mut rng),
            generate::random_mean(3, 2.0, &mut rng),
        )
        .unwrap();
        let back = rev.flow_map(&spec.flow_map(&z).unwrap()).unwrap();
        assert!((back.q - &z.q).norm() < 1e-10);
        assert!((back.p - &z.p).norm() < 1e-10);
    }

    #[test]
    fn oracle_zero_duration_returns_input() {
        let spec = unit_spec_1d(1.0);
        let z = PhasePoint::new(
            DVector::from_element(1, 0.4),
            DVector::from_element(1, -0.3),
        )
        .unwrap();
        let out = ode_oracle(&spec, &z, 0.0, 1e-3).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn oracle_keeps_equilibrium_fixed() {
        let spec = random_spec(2, 1.1, 36);
        let z = PhasePoint::new(
            spec.target().mean().clone(),
            spec.auxiliary().mean().clone(),
        )
        .unwrap();
        let out = ode_oracle(&spec, &z, spec.time(), 1e-3).unwrap();
        assert!((out.q - &z.q).norm() < 1e-12);
        assert!((out.p - &z.p).norm() < 1e-12);
    }

    #[test]
    fn oracle_agrees_with_flow_at_fine_steps() {
        let spec = unit_spec_1d(1.0);
        let z =
            PhasePoint::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.5)).unwrap();
        let exact = spec.flow_map(&z).unwrap();
        let oracle = ode_oracle(&spec, &z, spec.time(), 1e-4).unwrap();
        let err = (&oracle.q - &exact.q).norm() + (&oracle.p - &exact.p).norm();
        assert!(err < 1e-12, "err {err:.3e}");
    }

    #[test]
    fn oracle_error_decays_at_fourth_order() {
        let spec = random_spec(2, 1.0, 37);
        let mut rng = RngStream::new(38).rng();
        let z = PhasePoint::new(
            generate::random_mean(2, 1.5, &mut rng),
            generate::random_mean(2, 1.5, &mut rng),
        )
        .unwrap();
        let exact = spec.flow_map(&z).unwrap();
        let err_at = |dt: f64| {
            let o = ode_oracle(&spec, &z, spec.time(), dt).unwrap();
            ((&o.q - &exact.q).norm_squared() + (&o.p - &exact.p).norm_squared()).sqrt()
        };
        let (e1, e2) = (err_at(1e-2), err_at(1e-3));
        let slope = (e1 / e2).log10();
        assert!((slope - 4.0).abs() < 0.2, "slope {slope}");
    }
}
