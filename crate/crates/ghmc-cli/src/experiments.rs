//! Experiment runners: one function per kind, each producing a
//! [`ResultRecord`] whose checks decide the process exit code.

use ghmc::generate;
use ghmc::{
    d_r, determinant_identity_check, geodesic, iterate_random, lyapunov_estimate, n_h, ode_oracle,
    quadratic_decomposition, quadrature_oracle_1d, sample_gaussian, GaussianParams, GhmcStep,
    HalfPlanePoint, HamiltonianSpec, IterationSpace, PhasePoint, RngStream, SpdMatrix,
    TargetComponent, TargetMixture, TimeRule, UnivariateMixture,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::config::{
    ChainParams, ExperimentConfig, FlowCheckParams, HullTrackParams, KindParams, LemmaCheckMode,
    LemmaCheckParams, LimitLawMode, LimitLawParams, LyapunovParams, MetricsParams,
    RandomChainParams, StepCheckMode, StepCheckParams,
};
use crate::record::ResultRecord;

/// Runs the configured experiment and stamps the wall clock.
pub fn run(config: &ExperimentConfig, dump_samples: bool) -> ResultRecord {
    let started = std::time::Instant::now();
    let seed = config.seed;
    let mut record = ResultRecord::new(&config.kind, seed, config.echo.clone());
    match &config.params {
        KindParams::FlowCheck(p) => flow_check(&mut record, p, seed),
        KindParams::StepCheck(p) => step_check(&mut record, p, seed, dump_samples),
        KindParams::LemmaCheck(p) => lemma_check(&mut record, p, seed),
        KindParams::Chain(p) => chain(&mut record, p, seed),
        KindParams::RandomChain(p) => random_chain(&mut record, p, seed),
        KindParams::LimitLaw(p) => limit_law(&mut record, p, seed, dump_samples),
        KindParams::HullTrack(p) => hull_track(&mut record, p, seed),
        KindParams::Lyapunov(p) => lyapunov(&mut record, p, seed),
        KindParams::Metrics(p) => metrics(&mut record, p, seed),
    }
    record.wall_clock_ms = started.elapsed().as_secs_f64() * 1e3;
    record
}

fn flow_check(record: &mut ResultRecord, p: &FlowCheckParams, seed: u64) {
    let mut rng = RngStream::new(seed).rng();
    let mut worst_drift = 0.0_f64;
    let mut worst_det = 0.0_f64;
    let mut worst_reversal = 0.0_f64;
    for trial in 0..p.trials {
        let dim = p.dims[trial % p.dims.len()];
        let (sf, sg) = generate::random_commuting_pair(dim, 0.3, 3.0, &mut rng);
        let spec = HamiltonianSpec::new(
            generate::gaussian_with_cov(sf, 1.5, &mut rng),
            generate::gaussian_with_cov(sg, 1.5, &mut rng),
            0.1 + 2.9 * rng.gen::<f64>(),
        )
        .expect("commuting pair");
        let z = PhasePoint::new(
            generate::random_mean(dim, 2.5, &mut rng),
            generate::random_mean(dim, 2.5, &mut rng),
        )
        .expect("matching dims");
        let before = spec.energy(&z).expect("dims");
        let moved = spec.flow_map(&z).expect("dims");
        let after = spec.energy(&moved).expect("dims");
        worst_drift = worst_drift.max((after - before).abs() / before.max(1.0));
        worst_det = worst_det.max((spec.jacobian_determinant() - 1.0).abs());
        let back = spec.reversed().flow_map(&moved).expect("dims");
        worst_reversal = worst_reversal
            .max(((back.q - &z.q).norm_squared() + (back.p - &z.p).norm_squared()).sqrt());
    }
    record.quantity(
        None,
        "max_energy_drift",
        worst_drift,
        "max relative energy drift over trials",
    );
    record.quantity(
        None,
        "max_det_gap",
        worst_det,
        "max |det J - 1| over trials",
    );
    record.quantity(
        None,
        "max_reversal_gap",
        worst_reversal,
        "max distance after forward+reverse flow",
    );
    record.check_le("energy_conservation", worst_drift, p.energy_tolerance);
    record.check_le("volume_preservation", worst_det, p.determinant_tolerance);
    record.check_le("reversibility", worst_reversal, p.energy_tolerance);

    // Fourth-order decay of the integrator against the closed form.
    let variance = 1.0 / p.slope_frequency;
    let spec = HamiltonianSpec::new(
        GaussianParams::univariate(0.0, variance).expect("positive variance"),
        GaussianParams::univariate(0.0, variance).expect("positive variance"),
        1.0,
    )
    .expect("scalar pair");
    let z = PhasePoint::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.7))
        .expect("matching dims");
    let exact = spec.flow_map(&z).expect("dims");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &dt in &p.slope_dts {
        let o = ode_oracle(&spec, &z, spec.time(), dt).expect("valid dt");
        let err = ((o.q[0] - exact.q[0]).powi(2) + (o.p[0] - exact.p[0]).powi(2)).sqrt();
        record.quantity(
            None,
            "integrator_error",
            err,
            &format!("flow vs integrator at dt={dt}"),
        );
        xs.push(dt.log10());
        ys.push(err.log10());
    }
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
    record.quantity(
        None,
        "integrator_slope",
        slope,
        "log-log slope of integrator error vs dt",
    );
    record.check(
        "fourth_order_decay",
        (slope - 4.0).abs() <= p.slope_window,
        format!("slope {slope:.3} within 4 ± {}", p.slope_window),
    );
}

fn step_check(record: &mut ResultRecord, p: &StepCheckParams, seed: u64, dump_samples: bool) {
    let mut rng = RngStream::new(seed).rng();
    match p.mode {
        StepCheckMode::FixedPoint => {
            let mut worst = 0.0_f64;
            for trial in 0..p.trials {
                let dim = p.dims[trial % p.dims.len()];
                let (sf, sg) = generate::random_commuting_pair(dim, 0.3, 3.0, &mut rng);
                let target = generate::gaussian_with_cov(sf, 2.0, &mut rng);
                let auxiliary = generate::gaussian_with_cov(sg, 2.0, &mut rng);
                let t = 0.1 + 2.5 * rng.gen::<f64>();
                let step = GhmcStep::new(target.clone(), auxiliary, t).expect("commuting pair");
                let image = step.apply(&target).expect("dims");
                for i in 0..dim {
                    worst = worst.max(
                        (image.mean()[i] - target.mean()[i]).abs()
                            / target.mean()[i].abs().max(1.0),
                    );
                    for j in 0..dim {
                        let (a, b) = (
                            image.cov().entries()[(i, j)],
                            target.cov().entries()[(i, j)],
                        );
                        worst = worst.max((a - b).abs() / b.abs().max(1.0));
                    }
                }
            }
            record.quantity(
                None,
                "max_componentwise_error",
                worst,
                "fixed-point deviation",
            );
            record.check_le("fixed_point", worst, p.fixed_point_tolerance);
        }
        StepCheckMode::Quadrature => {
            let mut worst = 0.0_f64;
            for _ in 0..p.trials {
                let var_f = 0.5 + 1.5 * rng.gen::<f64>();
                let var_g = 0.5 + 1.5 * rng.gen::<f64>();
                let target = GaussianParams::univariate(4.0 * rng.gen::<f64>() - 2.0, var_f)
                    .expect("scalar");
                let auxiliary = GaussianParams::univariate(4.0 * rng.gen::<f64>() - 2.0, var_g)
                    .expect("scalar");
                let angle = 0.2 + 1.15 * rng.gen::<f64>();
                let step = GhmcStep::new(target, auxiliary, angle * (var_f * var_g).sqrt())
                    .expect("scalars commute");
                let h = GaussianParams::univariate(
                    4.0 * rng.gen::<f64>() - 2.0,
                    0.5 + 2.5 * rng.gen::<f64>(),
                )
                .expect("scalar");
                let image = step.apply(&h).expect("dims");
                let (mu, sd) = (image.mean()[0], image.cov().entries()[(0, 0)].sqrt());
                let grid: Vec<f64> = (0..p.grid_points)
                    .map(|i| {
                        mu - 4.0 * sd + 8.0 * sd * i as f64 / (p.grid_points - 1).max(1) as f64
                    })
                    .collect();
                let numeric = quadrature_oracle_1d(&step, &h, &grid).expect("quadrature converges");
                let sup = grid
                    .iter()
                    .zip(&numeric)
                    .map(|(&q, &v)| (v - image.density_1d(q)).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(sup);
            }
            record.quantity(
                None,
                "sup_density_gap",
                worst,
                "sup |quadrature - analytic density|",
            );
            record.check_le("quadrature_oracle", worst, p.quadrature_tolerance);
        }
        StepCheckMode::MonteCarlo => {
            let mut worst = 0.0_f64;
            for trial in 0..p.trials {
                let dim = p.dims[trial % p.dims.len()];
                let (sf, sg) = generate::random_commuting_pair(dim, 0.5, 2.0, &mut rng);
                let target = generate::gaussian_with_cov(sf, 1.5, &mut rng);
                let auxiliary = generate::gaussian_with_cov(sg, 1.5, &mut rng);
                let step = GhmcStep::new(target, auxiliary, 0.3 + rng.gen::<f64>())
                    .expect("commuting pair");
                let basis = step.target().cov().eigenvectors().clone();
                let h_cov = SpdMatrix::from_spectrum(
                    &basis,
                    &generate::random_eigenvalues(dim, 0.5, 2.0, &mut rng),
                )
                .expect("positive spectrum");
                let h = generate::gaussian_with_cov(h_cov, 2.0, &mut rng);
                let image = step.apply(&h).expect("dims");

                let stream = RngStream::new(seed).substream(1000 + trial as u64);
                let batch = sample_gaussian(&h, p.n_samples, &stream.substream(0)).expect("n >= 1");
                let out =
                    ghmc::ghmc_sample_step(&step, &batch, &stream.substream(1)).expect("dims");
                let emp_mean = out.mean();
                let emp_cov = out.covariance();
                let nf = p.n_samples as f64;
                for i in 0..dim {
                    let se = (image.cov().entries()[(i, i)] / nf).sqrt();
                    worst = worst.max((emp_mean[i] - image.mean()[i]).abs() / se);
                    for j in 0..=i {
                        let (sii, sjj, sij) = (
                            image.cov().entries()[(i, i)],
                            image.cov().entries()[(j, j)],
                            image.cov().entries()[(i, j)],
                        );
                        let se = ((sii * sjj + sij * sij) / (nf - 1.0)).sqrt();
                        worst = worst.max((emp_cov[(i, j)] - sij).abs() / se);
                    }
                }
                if dump_samples && trial == 0 {
                    for (row, x) in out.draws().column(0).iter().enumerate().take(p.n_samples) {
                        record.quantity(Some(row as u64), "sample", *x, "first coordinate draw");
                    }
                }
            }
            record.quantity(
                None,
                "worst_se_deviation",
                worst,
                "worst moment deviation in standard errors",
            );
            record.check_le("monte_carlo_moments", worst, p.se_factor);
        }
    }
}

struct SplitInstance {
    f: SpdMatrix,
    a: SpdMatrix,
    c: SpdMatrix,
    s: SpdMatrix,
    h: SpdMatrix,
    h_shift: DVector<f64>,
    g: SpdMatrix,
}

fn lemma_check(record: &mut ResultRecord, p: &LemmaCheckParams, seed: u64) {
    let mut rng = RngStream::new(seed).rng();
    let mut worst_rel = 0.0_f64;
    let mut worst_zeta = 0.0_f64;
    let mut worst_det = 0.0_f64;
    for trial in 0..p.trials {
        let dim = trial % p.max_dim + 1;
        let basis = generate::random_orthonormal(dim, &mut rng);
        let lf = generate::random_eigenvalues(dim, 0.4, 2.5, &mut rng);
        let la = generate::random_eigenvalues(dim, 0.4, 2.5, &mut rng);
        let angles = generate::random_eigenvalues(dim, 0.3, 1.2, &mut rng);
        let lg = DVector::from_fn(dim, |i, _| la[i] * la[i] * lf[i]);
        let inst = SplitInstance {
            f: SpdMatrix::from_spectrum(&basis, &lf).expect("positive"),
            a: SpdMatrix::from_spectrum(&basis, &la).expect("positive"),
            c: SpdMatrix::from_spectrum(&basis, &angles.map(f64::cos)).expect("positive"),
            s: SpdMatrix::from_spectrum(&basis, &angles.map(f64::sin)).expect("positive"),
            h: generate::random_spd(dim, 0.4, 2.5, &mut rng),
            h_shift: generate::random_mean(dim, 2.0, &mut rng),
            g: SpdMatrix::from_spectrum(&basis, &lg).expect("positive"),
        };
        let split =
            quadratic_decomposition(&inst.f, &inst.a, &inst.c, &inst.s, &inst.h, &inst.h_shift)
                .expect("commuting family");
        let zeta_scale =
            (inst.h_shift.norm_squared() * inst.h.spectral_norm()).max(f64::MIN_POSITIVE);
        worst_zeta = worst_zeta.max(split.residual.abs() / zeta_scale);

        if p.mode != LemmaCheckMode::Determinant {
            for _ in 0..p.points_per_trial {
                let q = generate::random_mean(dim, 3.0, &mut rng);
                let pp = generate::random_mean(dim, 3.0, &mut rng);
                let u = inst.c.entries() * &q + inst.a.entries() * inst.s.entries() * &pp
                    - &inst.h_shift;
                let v = inst.s.entries() * &q - inst.a.entries() * inst.c.entries() * &pp;
                let lhs = (inst.h.entries() * &u).dot(&u) + (inst.f.entries() * &v).dot(&v);
                let w = &pp + &split.coupling * &q - &split.momentum_center;
                let z = &q - &split.position_center;
                let rhs = (split.momentum_precision.entries() * &w).dot(&w)
                    + (split.position_precision.entries() * &z).dot(&z)
                    + split.residual;
                worst_rel = worst_rel.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
            }
        }
        if p.mode != LemmaCheckMode::QuadraticForm {
            worst_det = worst_det.max(determinant_identity_check(
                &split.momentum_precision,
                &split.position_precision,
                &inst.h,
                &inst.g,
            ));
        }
    }
    record.quantity(
        None,
        "max_zeta_scaled",
        worst_zeta,
        "scalar remainder relative to form scale",
    );
    record.check_le("zeta_vanishes", worst_zeta, p.zeta_tolerance);
    if p.mode != LemmaCheckMode::Determinant {
        record.quantity(
            None,
            "max_relative_gap",
            worst_rel,
            "quadratic-form split vs direct evaluation",
        );
        record.check_le("quadratic_form_identity", worst_rel, p.identity_tolerance);
    }
    if p.mode != LemmaCheckMode::QuadraticForm {
        record.quantity(
            None,
            "max_det_residual",
            worst_det,
            "relative determinant identity residual",
        );
        record.check_le("determinant_identity", worst_det, p.determinant_tolerance);
    }
}

fn chain(record: &mut ResultRecord, p: &ChainParams, seed: u64) {
    let mut rng = RngStream::new(seed).rng();
    let (sf, sg) = generate::random_commuting_pair(p.dim, 0.5, 2.0, &mut rng);
    let target = generate::gaussian_with_cov(sf, 1.5, &mut rng);
    let auxiliary = generate::gaussian_with_cov(sg, 1.5, &mut rng);
    let step = GhmcStep::new(target.clone(), auxiliary, p.time).expect("commuting pair");
    let init_cov = SpdMatrix::from_spectrum(
        target.cov().eigenvectors(),
        &generate::random_eigenvalues(p.dim, 0.5, 2.0, &mut rng),
    )
    .expect("positive spectrum");
    let initial = generate::gaussian_with_cov(init_cov, 2.0, &mut rng);

    let mut state = initial.clone();
    let mut c_pow = DMatrix::<f64>::identity(p.dim, p.dim);
    let mut worst = 0.0_f64;
    for k in 1..=p.steps {
        state = step.apply(&state).expect("dims");
        c_pow = step.contraction() * c_pow;
        let direct = (state.mean() - target.mean()).norm();
        let predicted = (&c_pow * (initial.mean() - target.mean())).norm();
        record.quantity(Some(k as u64), "mean_gap", direct, "‖mean_k − target mean‖");
        record.quantity(
            Some(k as u64),
            "mean_gap_predicted",
            predicted,
            "‖C^k (mean_0 − target mean)‖",
        );
        worst = worst.max((direct - predicted).abs());
    }
    record.quantity(
        None,
        "max_norm_gap",
        worst,
        "max |direct − predicted| over steps",
    );
    record.check_le("contraction_power", worst, p.norm_tolerance);

    if p.univariate_check {
        let target_1d = GaussianParams::univariate(1.0, 2.0).expect("scalar");
        let step_1d = GhmcStep::new(
            target_1d,
            GaussianParams::univariate(0.0, 1.0).expect("scalar"),
            0.8,
        )
        .expect("scalars commute");
        let c = step_1d.contraction()[(0, 0)];
        let target_pt = HalfPlanePoint::new(1.0, 2.0).expect("valid point");
        let mut h = GaussianParams::univariate(6.0, 9.0).expect("scalar");
        let mut dist = d_r(&HalfPlanePoint::new(6.0, 9.0).expect("valid"), &target_pt);
        let mut worst_ratio = 0.0_f64;
        for k in 1..=p.steps {
            h = step_1d.apply(&h).expect("dims");
            let new_dist = d_r(
                &HalfPlanePoint::new(h.mean()[0], h.cov().entries()[(0, 0)]).expect("valid"),
                &target_pt,
            );
            record.quantity(
                Some(k as u64),
                "dr_to_target",
                new_dist,
                "alternative distance to the target",
            );
            worst_ratio = worst_ratio.max((new_dist - c * dist).abs());
            dist = new_dist;
        }
        record.quantity(None, "max_ratio_gap", worst_ratio, "max |d_{k+1} − C d_k|");
        record.check_le("exact_dr_contraction", worst_ratio, p.ratio_tolerance);
    }
}

fn build_univariate_pair(mixture: &[[f64; 3]], alpha: f64) -> (TargetMixture, UnivariateMixture) {
    let components = mixture
        .iter()
        .map(|c| TargetComponent {
            prob: c[0],
            mean: DVector::from_element(1, c[1]),
            cov: SpdMatrix::scalar(c[2]).expect("variance > 0"),
        })
        .collect();
    let mix = TargetMixture::new(
        components,
        GaussianParams::univariate(0.0, 1.0).expect("scalar"),
        TimeRule::FixedAlpha(alpha),
    )
    .expect("validated in config");
    let triples: Vec<(f64, f64, f64)> = mixture.iter().map(|c| (c[0], c[1], c[2])).collect();
    let uni = UnivariateMixture::new(&triples, alpha).expect("validated in config");
    (mix, uni)
}

fn random_chain(record: &mut ResultRecord, p: &RandomChainParams, seed: u64) {
    let (mix, uni) = build_univariate_pair(&p.mixture, p.alpha);
    let initial = GaussianParams::univariate(p.mu0, p.sigma0_sq).expect("scalar");
    let max_k = *p.checkpoints.iter().max().expect("nonempty");

    let mut samples: Vec<Vec<(f64, f64)>> = (0..p.checkpoints.len())
        .map(|_| Vec::with_capacity(p.replicas))
        .collect();
    for r in 0..p.replicas {
        let trace = iterate_random(
            &mix,
            &initial,
            max_k,
            &RngStream::new(seed).substream(r as u64),
        )
        .expect("valid mixture");
        for (slot, &k) in p.checkpoints.iter().enumerate() {
            let state = &trace.states()[k];
            samples[slot].push((state.mean()[0], state.cov().entries()[(0, 0)]));
        }
    }
    let mut worst = 0.0_f64;
    for (slot, &k) in p.checkpoints.iter().enumerate() {
        let (expected_mu, expected_var) = uni.transient_moments(p.mu0, p.sigma0_sq, k as u32);
        let nf = p.replicas as f64;
        let mean_mu = samples[slot].iter().map(|s| s.0).sum::<f64>() / nf;
        let mean_var = samples[slot].iter().map(|s| s.1).sum::<f64>() / nf;
        let sd = |vals: &[(f64, f64)], pick: fn(&(f64, f64)) -> f64, mean: f64| {
            (vals.iter().map(|s| (pick(s) - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
        };
        let se_mu = (sd(&samples[slot], |s| s.0, mean_mu) / nf.sqrt()).max(1e-12);
        let se_var = (sd(&samples[slot], |s| s.1, mean_var) / nf.sqrt()).max(1e-12);
        let dev_mu = (mean_mu - expected_mu).abs() / se_mu;
        let dev_var = (mean_var - expected_var).abs() / se_var;
        record.quantity(
            Some(k as u64),
            "mean_replica_average",
            mean_mu,
            "replica average of mean_k",
        );
        record.quantity(
            Some(k as u64),
            "mean_expected",
            expected_mu,
            "closed-form E[mean_k]",
        );
        record.quantity(
            Some(k as u64),
            "variance_replica_average",
            mean_var,
            "replica average of var_k",
        );
        record.quantity(
            Some(k as u64),
            "variance_expected",
            expected_var,
            "closed-form E[var_k]",
        );
        worst = worst.max(dev_mu).max(dev_var);
    }
    record.quantity(
        None,
        "worst_se_deviation",
        worst,
        "worst transient-moment deviation in standard errors",
    );
    record.check_le("transient_moments", worst, p.se_factor);
}

fn limit_law(record: &mut ResultRecord, p: &LimitLawParams, seed: u64, dump_samples: bool) {
    let (_, uni) = build_univariate_pair(&p.mixture, p.alpha);
    match p.mode {
        LimitLawMode::Moments => {
            let moments = uni.limit_moments();
            record.quantity(None, "limit_mean", moments.mean, "closed-form limit mean");
            record.quantity(
                None,
                "limit_variance",
                moments.variance,
                "closed-form limit variance",
            );

            let batch = uni
                .sample_x_infty(
                    p.n_samples,
                    uni.default_truncation(),
                    &RngStream::new(seed).substream(0),
                )
                .expect("n >= 1");
            let mean_dev = (batch.mean()[0] - moments.mean).abs() / batch.mean_standard_errors()[0];
            let var_dev = (batch.covariance()[(0, 0)] - moments.variance).abs()
                / batch.variance_standard_errors()[0];
            record.quantity(
                None,
                "sampled_mean",
                batch.mean()[0],
                "empirical mean of the sampled limit",
            );
            record.quantity(
                None,
                "sampled_variance",
                batch.covariance()[(0, 0)],
                "empirical variance of the sampled limit",
            );
            record.check_le("sampled_mean_matches", mean_dev, p.se_factor);
            record.check_le("sampled_variance_matches", var_dev, p.se_factor);
            if dump_samples {
                for (row, x) in batch.draws().column(0).iter().enumerate() {
                    record.quantity(Some(row as u64), "sample", *x, "limit-variable draw");
                }
            }

            let h = p.derivative_step;
            let tol = 1e-13;
            let g_p = uni.limit_cf(h, tol).expect("tol > 0");
            let g_0 = uni.limit_cf(0.0, tol).expect("tol > 0");
            let g_m = uni.limit_cf(-h, tol).expect("tol > 0");
            let mean_est = ((g_p - g_m) / (2.0 * h * Complex64::i())).re;
            let second_est = -((g_p - 2.0 * g_0 + g_m) / (h * h)).re;
            record.quantity(
                None,
                "cf_mean_estimate",
                mean_est,
                "first cf derivative at 0",
            );
            record.quantity(
                None,
                "cf_second_moment_estimate",
                second_est,
                "second cf derivative at 0",
            );
            record.check_le(
                "cf_mean_matches",
                (mean_est - moments.mean).abs() / moments.mean.abs().max(1.0),
                p.derivative_tolerance,
            );
            record.check_le(
                "cf_second_moment_matches",
                (second_est - moments.second_moment).abs() / moments.second_moment,
                p.derivative_tolerance,
            );
        }
        LimitLawMode::CfConvergence => {
            let mut rng = RngStream::new(seed).substream(0).rng();
            let mut draws = Vec::with_capacity(p.replicas);
            for _ in 0..p.replicas {
                let (mu, var) = uni.simulate_parameter_chain(
                    p.mu0,
                    p.sigma0_sq,
                    p.chain_length as u32,
                    &mut rng,
                );
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                draws.push(mu + var.sqrt() * z);
            }
            let mut worst = 0.0_f64;
            for &xi in &p.cf_points {
                let nf = p.replicas as f64;
                let (mut sum_re, mut sum_im) = (0.0, 0.0);
                for &x in &draws {
                    sum_re += (xi * x).cos();
                    sum_im += (xi * x).sin();
                }
                let emp = Complex64::new(sum_re / nf, sum_im / nf);
                let (mut var_re, mut var_im) = (0.0, 0.0);
                for &x in &draws {
                    var_re += ((xi * x).cos() - emp.re).powi(2);
                    var_im += ((xi * x).sin() - emp.im).powi(2);
                }
                let se_re = (var_re / (nf - 1.0) / nf).sqrt();
                let se_im = (var_im / (nf - 1.0) / nf).sqrt();
                let exact = uni.limit_cf(xi, 1e-13).expect("tol > 0");

                let modulus = emp.norm();
                let se_mod = (((emp.re / modulus) * se_re).powi(2)
                    + ((emp.im / modulus) * se_im).powi(2))
                .sqrt();
                let se_arg = (((emp.im / (modulus * modulus)) * se_re).powi(2)
                    + ((emp.re / (modulus * modulus)) * se_im).powi(2))
                .sqrt();
                let mod_dev = (modulus - exact.norm()).abs() / se_mod;
                let mut arg_gap = emp.arg() - exact.arg();
                while arg_gap > std::f64::consts::PI {
                    arg_gap -= 2.0 * std::f64::consts::PI;
                }
                while arg_gap < -std::f64::consts::PI {
                    arg_gap += 2.0 * std::f64::consts::PI;
                }
                let arg_dev = arg_gap.abs() / se_arg;
                record.quantity(
                    None,
                    "cf_modulus_empirical",
                    modulus,
                    &format!("empirical |cf| at xi={xi}"),
                );
                record.quantity(
                    None,
                    "cf_modulus_exact",
                    exact.norm(),
                    &format!("limiting |cf| at xi={xi}"),
                );
                worst = worst.max(mod_dev).max(arg_dev);
            }
            record.quantity(
                None,
                "worst_se_deviation",
                worst,
                "worst cf deviation in standard errors",
            );
            record.check_le("cf_convergence", worst, p.se_factor);
        }
    }
}

fn hull_track(record: &mut ResultRecord, p: &HullTrackParams, seed: u64) {
    let mut rng = RngStream::new(seed).rng();
    let mut worst_mu = f64::NEG_INFINITY;
    let mut worst_sigma = f64::NEG_INFINITY;
    let mut worst_bound = f64::NEG_INFINITY;
    for mixture_idx in 0..p.mixtures {
        let mix = random_univariate_fixed_time_mixture(&mut rng);
        let hull = mix.hull_spec();
        let norm_c = mix.contraction_norm_sup();
        for seed_idx in 0..p.seeds_per_mixture {
            let initial = GaussianParams::univariate(
                12.0 * rng.gen::<f64>() - 6.0,
                8.0 + 6.0 * rng.gen::<f64>(),
            )
            .expect("scalar");
            let stream = RngStream::new(seed)
                .substream((mixture_idx * p.seeds_per_mixture + seed_idx) as u64 + 1);
            let trace = iterate_random(&mix, &initial, p.steps, &stream).expect("valid mixture");
            let d0 = hull.distances(&initial);
            for (k, pair) in trace.states().windows(2).enumerate() {
                let before = hull.distances(&pair[0]);
                let after = hull.distances(&pair[1]);
                worst_mu = worst_mu.max(after.mean_dist - norm_c * before.mean_dist);
                worst_sigma = worst_sigma.max(after.cov_dist - norm_c * norm_c * before.cov_dist);
                worst_bound =
                    worst_bound.max(after.cov_dist - norm_c.powi(2 * (k as i32 + 1)) * d0.cov_dist);
                if mixture_idx == 0 && seed_idx == 0 {
                    record.quantity(
                        Some(k as u64 + 1),
                        "mean_hull_distance",
                        after.mean_dist,
                        "distance of mean_k to the mean hull",
                    );
                    record.quantity(
                        Some(k as u64 + 1),
                        "cov_hull_distance",
                        after.cov_dist,
                        "distance of var_k to the covariance hull",
                    );
                }
            }
        }
    }
    record.quantity(
        None,
        "worst_mean_slack",
        worst_mu,
        "max violation of the per-step mean bound",
    );
    record.quantity(
        None,
        "worst_cov_slack",
        worst_sigma,
        "max violation of the per-step covariance bound",
    );
    record.quantity(
        None,
        "worst_trajectory_slack",
        worst_bound,
        "max violation of the trajectory covariance bound",
    );
    record.check_le("mean_hull_contraction", worst_mu, p.tolerance);
    record.check_le("cov_hull_contraction", worst_sigma, p.tolerance);
    record.check_le("trajectory_bound", worst_bound, p.tolerance);
}

fn random_univariate_fixed_time_mixture(rng: &mut impl Rng) -> TargetMixture {
    let count = 2 + (rng.gen::<f64>() * 4.0) as usize;
    let mut probs: Vec<f64> = (0..count).map(|_| 0.2 + rng.gen::<f64>()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let components: Vec<TargetComponent> = probs
        .iter()
        .map(|&prob| TargetComponent {
            prob,
            mean: DVector::from_element(1, 6.0 * rng.gen::<f64>() - 3.0),
            cov: SpdMatrix::scalar(0.5 + 2.5 * rng.gen::<f64>()).expect("variance > 0"),
        })
        .collect();
    let var_g = 0.5 + 1.5 * rng.gen::<f64>();
    let auxiliary = GaussianParams::univariate(0.0, var_g).expect("scalar");
    let min_scale = components
        .iter()
        .map(|c| (c.cov.entries()[(0, 0)] * var_g).sqrt())
        .fold(f64::INFINITY, f64::min);
    let t = (0.2 + 0.7 * rng.gen::<f64>()) * std::f64::consts::FRAC_PI_2 * min_scale;
    TargetMixture::new(components, auxiliary, TimeRule::FixedTime(t)).expect("valid mixture")
}

fn lyapunov(record: &mut ResultRecord, p: &LyapunovParams, seed: u64) {
    let (mix, uni) = build_univariate_pair(&p.mixture, p.alpha);

    let est = lyapunov_estimate(
        &mix,
        p.n,
        &RngStream::new(seed).substream(0),
        IterationSpace::Mean,
    )
    .expect("n >= 1");
    let est_cov = lyapunov_estimate(
        &mix,
        p.n,
        &RngStream::new(seed).substream(0),
        IterationSpace::Covariance,
    )
    .expect("n >= 1");
    record.quantity(
        None,
        "mean_space_exponent",
        est.exponent,
        "Lyapunov exponent of the mean recursion",
    );
    record.quantity(
        None,
        "cov_space_exponent",
        est_cov.exponent,
        "Lyapunov exponent of the vectorized covariance recursion",
    );
    record.quantity(
        None,
        "log_plus_norm_mean",
        est.log_plus_norm_mean,
        "empirical E[log+ ‖C‖]",
    );
    record.check_le(
        "mean_space_exact",
        (est.exponent - p.alpha.ln()).abs(),
        p.exact_tolerance,
    );
    record.check_le(
        "cov_space_exact",
        (est_cov.exponent - 2.0 * p.alpha.ln()).abs(),
        p.exact_tolerance,
    );
    record.check(
        "negative_exponent",
        est.exponent < 0.0,
        format!("exponent {}", est.exponent),
    );

    if p.bivariate_check {
        let basis = generate::random_orthonormal(2, &mut RngStream::new(seed).substream(1).rng());
        let mk = |vals: &[f64]| {
            SpdMatrix::from_spectrum(&basis, &DVector::from_row_slice(vals)).expect("positive")
        };
        let mix2 = TargetMixture::new(
            vec![
                TargetComponent {
                    prob: 0.4,
                    mean: DVector::zeros(2),
                    cov: mk(&[0.8, 1.6]),
                },
                TargetComponent {
                    prob: 0.6,
                    mean: DVector::zeros(2),
                    cov: mk(&[1.2, 0.9]),
                },
            ],
            GaussianParams::new(DVector::zeros(2), mk(&[1.0, 1.3])).expect("dims"),
            TimeRule::FixedTime(0.5),
        )
        .expect("commuting mixture");
        let stream = RngStream::new(seed).substream(2);
        let est2 =
            lyapunov_estimate(&mix2, p.bivariate_n, &stream, IterationSpace::Mean).expect("n >= 1");
        let mut rng = stream.rng();
        let log_eigs: Vec<DVector<f64>> = (0..2)
            .map(|j| {
                let c = mix2.step(j).contraction();
                SpdMatrix::new(c.clone())
                    .expect("positive contraction")
                    .eigenvalues()
                    .map(f64::ln)
            })
            .collect();
        let mut sums = DVector::zeros(2);
        for _ in 0..p.bivariate_n {
            sums += &log_eigs[mix2.draw_index(&mut rng)];
        }
        let oracle = (sums / p.bivariate_n as f64).max();
        record.quantity(
            None,
            "bivariate_exponent",
            est2.exponent,
            "estimate for the commuting bivariate mixture",
        );
        record.quantity(
            None,
            "bivariate_oracle",
            oracle,
            "averaged log-eigenvalues of the drawn sequence",
        );
        record.check_le(
            "bivariate_oracle_agreement",
            (est2.exponent - oracle).abs(),
            p.bivariate_tolerance,
        );
    }

    let mut at_k = Vec::with_capacity(p.ks_replicas);
    let mut at_2k = Vec::with_capacity(p.ks_replicas);
    let mut rng = RngStream::new(seed).substream(3).rng();
    for _ in 0..p.ks_replicas {
        let (mu_k, var_k) = uni.simulate_parameter_chain(4.0, 9.0, p.ks_k as u32, &mut rng);
        let (mu_2k, _) = uni.simulate_parameter_chain(mu_k, var_k, p.ks_k as u32, &mut rng);
        at_k.push(mu_k);
        at_2k.push(mu_2k);
    }
    let ks = two_sample_ks(&mut at_k, &mut at_2k);
    record.quantity(
        None,
        "ks_distance",
        ks,
        "two-sample KS distance between mean_k and mean_2k",
    );
    record.check_le("ks_stationarity", ks, p.ks_tolerance);
}

fn two_sample_ks(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite draws"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite draws"));
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut ks = 0.0_f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        ks = ks.max((i as f64 / na - j as f64 / nb).abs());
    }
    ks
}

fn metrics(record: &mut ResultRecord, p: &MetricsParams, seed: u64) {
    let mut rng = RngStream::new(seed).rng();
    let mut worst_dh = f64::NEG_INFINITY;
    let mut worst_dr = f64::NEG_INFINITY;
    for _ in 0..p.triples {
        let mut pt = || {
            HalfPlanePoint::new(20.0 * rng.gen::<f64>() - 10.0, 20.0 * rng.gen::<f64>())
                .expect("valid point")
        };
        let (a, b, c) = (pt(), pt(), pt());
        worst_dh = worst_dh.max(ghmc::d_h(&a, &c) - ghmc::d_h(&a, &b) - ghmc::d_h(&b, &c));
        worst_dr = worst_dr.max(d_r(&a, &c) - d_r(&a, &b) - d_r(&b, &c));
    }
    record.quantity(
        None,
        "worst_parabolic_triangle_slack",
        worst_dh,
        "max d(a,c) − d(a,b) − d(b,c) for the arclength distance",
    );
    record.quantity(
        None,
        "worst_alternative_triangle_slack",
        worst_dr,
        "same for the alternative distance",
    );
    record.check_le("parabolic_triangle", worst_dh, p.triangle_slack);
    record.check_le("alternative_triangle", worst_dr, p.triangle_slack);

    let mut degenerate_exact = true;
    for &m in &[0.0, 0.3, -2.5, 7.0] {
        degenerate_exact &= n_h(m, 0.0) == m.abs() && n_h(0.0, m) == m.abs();
    }
    record.check(
        "degenerate_norm_values",
        degenerate_exact,
        "N(m, 0) = |m| and N(0, s) = |s| exactly".into(),
    );

    let step = GhmcStep::new(
        GaussianParams::univariate(1.0, 2.0).expect("scalar"),
        GaussianParams::univariate(0.0, 1.0).expect("scalar"),
        0.8,
    )
    .expect("scalars commute");
    let c = step.contraction()[(0, 0)];
    let image = step
        .apply(&GaussianParams::univariate(4.0, 7.0).expect("scalar"))
        .expect("dims");
    let moved = geodesic(
        &HalfPlanePoint::new(4.0, 7.0).expect("valid"),
        &HalfPlanePoint::new(1.0, 2.0).expect("valid"),
        c,
        1.0,
    )
    .expect("valid contraction");
    let gap = (moved.mu - image.mean()[0])
        .abs()
        .max((moved.sigma - image.cov().entries()[(0, 0)]).abs());
    record.quantity(
        None,
        "geodesic_step_gap",
        gap,
        "geodesic at t = 1 vs one discrete step",
    );
    record.check_le("geodesic_endpoint", gap, p.geodesic_tolerance);
}
