//! Exact Gaussian Hamiltonian Monte Carlo dynamics.
//!
//! For Gaussian targets and auxiliaries with commuting covariances the full
//! dynamics is closed-form: the phase flow is an explicit rotation, one step
//! of the operator is an affine moment map on `(mean, covariance)`, iterating
//! it contracts geometrically toward the target, and when the target itself is
//! redrawn randomly each step the parameters follow an iterated random affine
//! map with an explicit limit law in the univariate case.
//!
//! The crate implements both the closed forms and the independent numerical
//! oracles that verify them at desk scale: an adaptive-quadrature evaluation
//! of the operator integral, a Runge–Kutta integration of the flow equations,
//! Monte Carlo realizations of every sampled quantity, Lyapunov-exponent
//! estimation for the random recursion, and the half-plane geometry in which
//! the iteration follows parabolic geodesics.

pub mod error;
pub mod flow;
pub mod generate;
pub mod integrate;
pub mod operator;
pub mod rng;
pub mod sampler;
pub mod spd;
pub mod targets;
pub mod univariate;

pub use error::{GhmcError, Result};
pub use flow::{ode_oracle, HamiltonianSpec, PhasePoint};
pub use operator::{
    determinant_identity_check, quadratic_decomposition, quadrature_oracle_1d, GaussianParams,
    GhmcStep, QuadraticSplit,
};
pub use rng::RngStream;
pub use sampler::{ghmc_sample_step, run_chain, run_random_chain, sample_gaussian, SampleBatch};
pub use spd::{
    build_commuting_pair, flow_matrices, spd_function, CommutingFamily, FlowMatrices, MatrixFn,
    SpdMatrix,
};
pub use targets::{
    affine_coefficients, iterate_random, lyapunov_estimate, push_cov_witness, ConvexHullSpec,
    HullDistances, IterationSpace, IterationTrace, LyapunovEstimate, TargetComponent,
    TargetMixture, TimeRule,
};
pub use univariate::{
    d_h, d_r, geodesic, n_h, HalfPlanePoint, LimitMoments, MixtureComponent1d, UnivariateMixture,
};

#[cfg(test)]
mod tests {
    // Everything is immutable after construction and shareable across
    // threads; keep that a compile-time fact.
    #[test]
    fn public_types_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<crate::SpdMatrix>();
        assert_send_sync::<crate::CommutingFamily>();
        assert_send_sync::<crate::FlowMatrices>();
        assert_send_sync::<crate::GaussianParams>();
        assert_send_sync::<crate::GhmcStep>();
        assert_send_sync::<crate::QuadraticSplit>();
        assert_send_sync::<crate::PhasePoint>();
        assert_send_sync::<crate::HamiltonianSpec>();
        assert_send_sync::<crate::RngStream>();
        assert_send_sync::<crate::SampleBatch>();
        assert_send_sync::<crate::TargetMixture>();
        assert_send_sync::<crate::IterationTrace>();
        assert_send_sync::<crate::ConvexHullSpec>();
        assert_send_sync::<crate::UnivariateMixture>();
        assert_send_sync::<crate::HalfPlanePoint>();
    }
}
