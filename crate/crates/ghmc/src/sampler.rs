//! Sample-based realization of the dynamics.
//!
//! One sampled step draws a momentum `p ~ N(μg, Σg)` for each position and
//! transports the position along the flow; the empirical law of the output
//! converges to the Gaussian the analytic moment map predicts, which is what
//! the chain runners verify. Gaussian draws use the spectral factor
//! `L = V diag(√λ)` of the covariance, and all randomness flows through
//! [`RngStream`] so runs are reproducible.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::error::{GhmcError, Result};
use crate::operator::{GaussianParams, GhmcStep};
use crate::rng::RngStream;
use crate::targets::{IterationTrace, TargetMixture};

use rand::Rng;

/// Provenance of a batch: a label plus the stream that generated it.
#[derive(Clone, Debug)]
pub struct BatchMeta {
    pub label: String,
    pub seed: u64,
    pub stream: u64,
}

/// A matrix of draws, one row per sample.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    draws: DMatrix<f64>,
    meta: BatchMeta,
}

impl SampleBatch {
    pub fn new(draws: DMatrix<f64>, meta: BatchMeta) -> Result<Self> {
        if draws.nrows() == 0 {
            return Err(GhmcError::InvalidParameter("empty sample batch".into()));
        }
        if draws.iter().any(|x| !x.is_finite()) {
            return Err(GhmcError::NonFinite);
        }
        Ok(Self { draws, meta })
    }

    pub fn n(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    pub fn meta(&self) -> &BatchMeta {
        &self.meta
    }

    /// Per-coordinate sample means.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_fn(self.dim(), |j, _| self.draws.column(j).sum() / n)
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.n();
        let d = self.dim();
        let mean = self.mean();
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let centered = self.draws.row(i).transpose() - &mean;
            cov += &centered * centered.transpose();
        }
        cov / (n as f64 - 1.0)
    }

    /// Standard error of each coordinate mean, `σ̂_j / √n`.
    pub fn mean_standard_errors(&self) -> DVector<f64> {
        let cov = self.covariance();
        let n = self.n() as f64;
        DVector::from_fn(self.dim(), |j, _| (cov[(j, j)] / n).sqrt())
    }

    /// Standard error of each coordinate variance, `σ̂_j² √(2/(n−1))`.
    pub fn variance_standard_errors(&self) -> DVector<f64> {
        let cov = self.covariance();
        let n = self.n() as f64;
        DVector::from_fn(self.dim(), |j, _| cov[(j, j)] * (2.0 / (n - 1.0)).sqrt())
    }
}

/// Draws `n` i.i.d. samples from a Gaussian through the spectral factor of
/// its covariance.
pub fn sample_gaussian(
    params: &GaussianParams,
    n: usize,
    stream: &RngStream,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(GhmcError::InvalidParameter("need n >= 1 samples".into()));
    }
    let d = params.dim();
    let factor = params.cov().sqrt_factor();
    let mut rng = stream.rng();
    let mut draws = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let x = params.mean() + &factor * &z;
        draws.row_mut(i).copy_from(&x.transpose());
    }
    SampleBatch::new(
        draws,
        BatchMeta {
            label: format!("gaussian(d={d})"),
            seed: stream.seed(),
            stream: stream.stream(),
        },
    )
}

/// One sampled step: for every position row `q`, draw `p ~ N(μg, Σg)` and
/// return `Q = μf + C q̃ + A S p̃`.
pub fn ghmc_sample_step(
    step: &GhmcStep,
    q_batch: &SampleBatch,
    stream: &RngStream,
) -> Result<SampleBatch> {
    if q_batch.dim() != step.dim() {
        return Err(GhmcError::DimensionMismatch {
            expected: step.dim(),
            got: q_batch.dim(),
        });
    }
    let d = step.dim();
    let n = q_batch.n();
    let c = step.flow().c();
    let transport = step.flow().a() * step.flow().s();
    let factor = step.auxiliary().cov().sqrt_factor();
    let mu_f = step.target().mean();

    let mut rng = stream.rng();
    let mut draws = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let p_shift = &factor * &z;
        let q_shift = q_batch.draws().row(i).transpose() - mu_f;
        let q_new = mu_f + c * q_shift + &transport * p_shift;
        draws.row_mut(i).copy_from(&q_new.transpose());
    }
    SampleBatch::new(
        draws,
        BatchMeta {
            label: format!("step(d={d})"),
            seed: stream.seed(),
            stream: stream.stream(),
        },
    )
}

/// Runs a chain of given steps on `n` samples drawn from `initial`, advancing
/// the analytic parameter trace alongside for comparison.
///
/// The returned batches hold the state after each step; the trace records the
/// matching analytic parameters with `chosen[k] = k`.
pub fn run_chain(
    initial: &GaussianParams,
    steps: &[GhmcStep],
    n: usize,
    stream: &RngStream,
) -> Result<(Vec<SampleBatch>, IterationTrace)> {
    if steps.is_empty() {
        return Err(GhmcError::InvalidParameter("empty step list".into()));
    }
    let mut batches = Vec::with_capacity(steps.len());
    let mut states = Vec::with_capacity(steps.len() + 1);
    let mut contraction_mats = Vec::with_capacity(steps.len());
    states.push(initial.clone());

    let mut batch = sample_gaussian(initial, n, &stream.substream(0))?;
    for (k, step) in steps.iter().enumerate() {
        batch = ghmc_sample_step(step, &batch, &stream.substream(k as u64 + 1))?;
        let next = step.apply(states.last().expect("nonempty"))?;
        states.push(next);
        contraction_mats.push(step.contraction().clone());
        batches.push(batch.clone());
    }
    let chosen = (0..steps.len()).collect();
    Ok((
        batches,
        IterationTrace::new(states, chosen, contraction_mats)?,
    ))
}

/// Runs a random-target chain: component indices are drawn from the mixture
/// with one substream, momenta with another, so the trace is reproducible.
pub fn run_random_chain(
    mix: &TargetMixture,
    initial: &GaussianParams,
    k: usize,
    n: usize,
    stream: &RngStream,
) -> Result<(Vec<SampleBatch>, IterationTrace)> {
    let mut index_rng = stream.substream(0).rng();
    let mut batches = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k + 1);
    let mut chosen = Vec::with_capacity(k);
    let mut contraction_mats = Vec::with_capacity(k);
    states.push(initial.clone());

    let mut batch = sample_gaussian(initial, n, &stream.substream(1))?;
    for step_idx in 0..k {
        let j = mix.draw_index(&mut index_rng);
        let step = mix.step(j);
        batch = ghmc_sample_step(step, &batch, &stream.substream(step_idx as u64 + 2))?;
        let next = step.apply(states.last().expect("nonempty"))?;
        states.push(next);
        chosen.push(j);
        contraction_mats.push(step.contraction().clone());
        batches.push(batch.clone());
    }
    Ok((
        batches,
        IterationTrace::new(states, chosen, contraction_mats)?,
    ))
}
