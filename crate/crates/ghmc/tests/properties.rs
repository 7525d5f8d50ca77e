//! Property tests: algebraic invariants that must hold for every well-formed
//! input, driven by seeded random instances.

use ghmc::generate;
use ghmc::spd::COMMUTE_TOL;
use ghmc::{
    d_h, d_r, flow_matrices, geodesic, n_h, quadratic_decomposition, GaussianParams, GhmcStep,
    HalfPlanePoint, RngStream, SpdMatrix,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spd_from_seed(seed: u64, dim: usize, lo: f64, hi: f64) -> SpdMatrix {
    let mut rng = RngStream::new(seed).rng();
    generate::random_spd(dim, lo, hi, &mut rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sqrt_squares_to_input(seed in 0u64..1_000_000, dim in 1usize..6) {
        let m = spd_from_seed(seed, dim, 1e-3, 1e3); // condition number up to 1e6
        let r = m.sqrt();
        let residual = (r.entries() * r.entries() - m.entries()).norm();
        prop_assert!(residual <= 1e-10 * m.entries().norm());
    }

    #[test]
    fn inverse_multiplies_to_identity(seed in 0u64..1_000_000, dim in 1usize..6) {
        let m = spd_from_seed(seed, dim, 1e-3, 1e3);
        // The product residual grows like eps * cond(M); 1e-10 * cond keeps
        // six orders of headroom up to condition 1e6.
        let residual =
            (m.inverse().entries() * m.entries() - DMatrix::<f64>::identity(dim, dim)).norm();
        prop_assert!(residual <= 1e-10 * m.condition_number().max(1.0));
    }

    #[test]
    fn flow_family_identities(seed in 0u64..1_000_000, dim in 1usize..6, t in 0.05f64..3.0) {
        let mut rng = RngStream::new(seed).rng();
        let (sf, sg) = generate::random_commuting_pair(dim, 0.3, 3.0, &mut rng);
        let flow = flow_matrices(&sf, &sg, t).unwrap();
        prop_assert!(flow.identity_residual() < 1e-12);
        let f = sf.inverse();
        let fa = f.entries() * flow.a();
        let af = flow.a() * f.entries();
        prop_assert!((fa - af).norm() <= COMMUTE_TOL * f.entries().norm() * flow.a().norm());
    }

    #[test]
    fn moment_map_fixed_point_and_form_agreement(
        seed in 0u64..1_000_000,
        dim in 1usize..6,
        t in 0.05f64..3.0,
    ) {
        let mut rng = RngStream::new(seed).rng();
        let (sf, sg) = generate::random_commuting_pair(dim, 0.3, 3.0, &mut rng);
        let target = generate::gaussian_with_cov(sf, 2.0, &mut rng);
        let auxiliary = generate::gaussian_with_cov(sg, 2.0, &mut rng);
        let step = GhmcStep::new(target.clone(), auxiliary, t).unwrap();

        // apply() internally cross-checks the two covariance forms.
        let image = step.apply(&target).unwrap();
        prop_assert_eq!(image.mean(), target.mean());
        prop_assert_eq!(image.cov().entries(), target.cov().entries());

        let basis = target.cov().eigenvectors().clone();
        let other = SpdMatrix::from_spectrum(
            &basis,
            &generate::random_eigenvalues(dim, 0.3, 3.0, &mut rng),
        ).unwrap();
        let h = generate::gaussian_with_cov(other, 2.0, &mut rng);
        prop_assert!(step.apply(&h).is_ok());
    }

    #[test]
    fn quadratic_split_zeta_vanishes_and_dets_agree(
        seed in 0u64..1_000_000,
        dim in 1usize..6,
    ) {
        let mut rng = RngStream::new(seed).rng();
        let basis = generate::random_orthonormal(dim, &mut rng);
        let lf = generate::random_eigenvalues(dim, 0.4, 2.5, &mut rng);
        let la = generate::random_eigenvalues(dim, 0.4, 2.5, &mut rng);
        let f = SpdMatrix::from_spectrum(&basis, &lf).unwrap();
        let a = SpdMatrix::from_spectrum(&basis, &la).unwrap();
        let angles = generate::random_eigenvalues(dim, 0.3, 1.2, &mut rng);
        let c = SpdMatrix::from_spectrum(&basis, &angles.map(f64::cos)).unwrap();
        let s = SpdMatrix::from_spectrum(&basis, &angles.map(f64::sin)).unwrap();
        let h = generate::random_spd(dim, 0.4, 2.5, &mut rng);
        let h_shift = generate::random_mean(dim, 2.0, &mut rng);

        // Construction enforces |ζ| <= ZETA_TOL * scale internally.
        let split = quadratic_decomposition(&f, &a, &c, &s, &h, &h_shift).unwrap();

        let lg = DVector::from_fn(dim, |i, _| la[i] * la[i] * lf[i]);
        let g = SpdMatrix::from_spectrum(&basis, &lg).unwrap();
        let det_residual = ghmc::determinant_identity_check(
            &split.momentum_precision,
            &split.position_precision,
            &h,
            &g,
        );
        prop_assert!(det_residual <= 1e-10);
    }

    #[test]
    fn quadratic_split_identity_at_random_phase_points(
        seed in 0u64..1_000_000,
        dim in 1usize..6,
    ) {
        let mut rng = RngStream::new(seed).rng();
        let basis = generate::random_orthonormal(dim, &mut rng);
        let f = SpdMatrix::from_spectrum(&basis, &generate::random_eigenvalues(dim, 0.4, 2.5, &mut rng)).unwrap();
        let a = SpdMatrix::from_spectrum(&basis, &generate::random_eigenvalues(dim, 0.4, 2.5, &mut rng)).unwrap();
        let angles = generate::random_eigenvalues(dim, 0.3, 1.2, &mut rng);
        let c = SpdMatrix::from_spectrum(&basis, &angles.map(f64::cos)).unwrap();
        let s = SpdMatrix::from_spectrum(&basis, &angles.map(f64::sin)).unwrap();
        let h = generate::random_spd(dim, 0.4, 2.5, &mut rng);
        let h_shift = generate::random_mean(dim, 2.0, &mut rng);
        let split = quadratic_decomposition(&f, &a, &c, &s, &h, &h_shift).unwrap();

        for _ in 0..32 {
            let q = generate::random_mean(dim, 3.0, &mut rng);
            let p = generate::random_mean(dim, 3.0, &mut rng);
            let u = c.entries() * &q + a.entries() * s.entries() * &p - &h_shift;
            let v = s.entries() * &q - a.entries() * c.entries() * &p;
            let lhs = (h.entries() * &u).dot(&u) + (f.entries() * &v).dot(&v);
            let w = &p + &split.coupling * &q - &split.momentum_center;
            let z = &q - &split.position_center;
            let rhs = (split.momentum_precision.entries() * &w).dot(&w)
                + (split.position_precision.entries() * &z).dot(&z)
                + split.residual;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn half_plane_triangle_inequalities(
        mu in prop::array::uniform3(-10.0f64..10.0),
        sigma in prop::array::uniform3(0.0f64..20.0),
    ) {
        let pts: Vec<HalfPlanePoint> = (0..3)
            .map(|i| HalfPlanePoint::new(mu[i], sigma[i]).unwrap())
            .collect();
        let slack = 1e-12;
        prop_assert!(d_h(&pts[0], &pts[2]) <= d_h(&pts[0], &pts[1]) + d_h(&pts[1], &pts[2]) + slack);
        prop_assert!(d_r(&pts[0], &pts[2]) <= d_r(&pts[0], &pts[1]) + d_r(&pts[1], &pts[2]) + slack);
        // Symmetry and identity.
        prop_assert!((d_h(&pts[0], &pts[1]) - d_h(&pts[1], &pts[0])).abs() < 1e-14);
        prop_assert_eq!(d_r(&pts[0], &pts[0]), 0.0);
    }

    #[test]
    fn arclength_norm_homogeneity(
        m in -5.0f64..5.0,
        sigma in -5.0f64..5.0,
        lambda in 0.01f64..100.0,
    ) {
        let scaled = n_h(lambda * m, lambda * sigma);
        let direct = lambda * n_h(m, sigma);
        prop_assert!((scaled - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn geodesic_endpoint_and_additivity(
        mu0 in -5.0f64..5.0,
        sigma0 in 0.1f64..10.0,
        mu1 in -5.0f64..5.0,
        sigma1 in 0.1f64..10.0,
        c in 0.05f64..0.95,
        t in 0.0f64..4.0,
        s in 0.0f64..4.0,
    ) {
        let start = HalfPlanePoint::new(mu0, sigma0).unwrap();
        let target = HalfPlanePoint::new(mu1, sigma1).unwrap();
        let direct = geodesic(&start, &target, c, t + s).unwrap();
        let mid = geodesic(&start, &target, c, t).unwrap();
        let stepped = geodesic(&mid, &target, c, s).unwrap();
        prop_assert!((direct.mu - stepped.mu).abs() < 1e-12);
        prop_assert!((direct.sigma - stepped.sigma).abs() < 1e-12);
    }

    #[test]
    fn sampled_batches_are_deterministic(seed in 0u64..1_000_000, n in 1usize..64) {
        let params = GaussianParams::standard(2);
        let stream = RngStream::new(seed);
        let a = ghmc::sample_gaussian(&params, n, &stream).unwrap();
        let b = ghmc::sample_gaussian(&params, n, &stream).unwrap();
        prop_assert_eq!(a.draws(), b.draws());
    }
}
