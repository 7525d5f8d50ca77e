//! Random fixture generators for tests and experiment harnesses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::operator::GaussianParams;
use crate::spd::SpdMatrix;

/// Random orthonormal basis from the QR factor of a Gaussian matrix.
pub fn random_orthonormal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    raw.qr().q()
}

/// Eigenvalues drawn log-uniformly from `[lo, hi]`.
pub fn random_eigenvalues(dim: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DVector<f64> {
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    DVector::from_fn(dim, |_, _| {
        (ln_lo + (ln_hi - ln_lo) * rng.gen::<f64>()).exp()
    })
}

/// Random SPD matrix with spectrum in `[lo, hi]`.
pub fn random_spd(dim: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> SpdMatrix {
    let basis = random_orthonormal(dim, rng);
    let vals = random_eigenvalues(dim, lo, hi, rng);
    SpdMatrix::from_spectrum(&basis, &vals).expect("generated spectrum is positive")
}

/// Commuting SPD pair sharing one random eigenbasis, spectra in `[lo, hi]`.
pub fn random_commuting_pair(
    dim: usize,
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> (SpdMatrix, SpdMatrix) {
    let basis = random_orthonormal(dim, rng);
    let first = SpdMatrix::from_spectrum(&basis, &random_eigenvalues(dim, lo, hi, rng))
        .expect("generated spectrum is positive");
    let second = SpdMatrix::from_spectrum(&basis, &random_eigenvalues(dim, lo, hi, rng))
        .expect("generated spectrum is positive");
    (first, second)
}

/// Random mean vector with i.i.d. entries uniform in `[-span, span]`.
pub fn random_mean(dim: usize, span: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| span * (2.0 * rng.gen::<f64>() - 1.0))
}

/// Gaussian parameters with a random mean and the given covariance.
pub fn gaussian_with_cov(cov: SpdMatrix, mean_span: f64, rng: &mut impl Rng) -> GaussianParams {
    let mean = random_mean(cov.dim(), mean_span, rng);
    GaussianParams::new(mean, cov).expect("dimensions agree by construction")
}
