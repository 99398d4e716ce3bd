use loft_core::analysis::{reconstruction_errors, select_dim_from_eigenvalues};
use loft_core::dataio::{decode_fcov, decode_fmat, encode_fcov, encode_fmat, FeatureMatrix};
use loft_core::evaluator::{absorb, accuracy, LinearHead};
use loft_core::matcore::{covariance, Centering, CovarianceAccumulator, CovarianceSummary, Matrix, SymmetricMatrix};
use loft_core::objective::{eval_objective, ObjectiveInputs};
use loft_core::stiefel::{random_stiefel, retract_qr, tangent_project, StiefelPoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn psd(d: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let g = gaussian(d, d + 2, rng);
    SymmetricMatrix::from_matrix(&g.matmul_t(&g).unwrap()).unwrap()
}

fn dims() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=8).prop_flat_map(|d| (Just(d), 1..=d, any::<u64>()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_is_right_invariant((d, s, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = ObjectiveInputs::new(psd(d, &mut rng), psd(d, &mut rng)).unwrap();
        let u = random_stiefel(d, s, seed).unwrap();
        let r = random_stiefel(s, s, seed ^ 1).unwrap();
        let a = eval_objective(&u, &inputs).unwrap();
        let b = eval_objective(&u.right_multiply(r.matrix()).unwrap(), &inputs).unwrap();
        prop_assert!(close(a.total, b.total, 1e-10));
        prop_assert!(close(a.forget, b.forget, 1e-10));
    }

    #[test]
    fn objective_ignores_covariance_scale((d, s, seed) in dims(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fg = psd(d, &mut rng);
        let rm = psd(d, &mut rng);
        let u = random_stiefel(d, s, seed).unwrap();
        let a = eval_objective(&u, &ObjectiveInputs::new(fg.clone(), rm.clone()).unwrap()).unwrap();
        let b = eval_objective(&u, &ObjectiveInputs::new(fg.scaled(c), rm.scaled(c)).unwrap()).unwrap();
        prop_assert!(close(a.total, b.total, 1e-10));
    }

    #[test]
    fn objective_is_rotation_equivariant((d, s, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fg = psd(d, &mut rng);
        let rm = psd(d, &mut rng);
        let u = random_stiefel(d, s, seed).unwrap();
        let q = random_stiefel(d, d, seed ^ 2).unwrap();
        let a = eval_objective(&u, &ObjectiveInputs::new(fg.clone(), rm.clone()).unwrap()).unwrap();
        let qu = StiefelPoint::new(q.matrix().matmul(u.matrix()).unwrap()).unwrap();
        let rotated = ObjectiveInputs::new(fg.congruence(q.matrix()).unwrap(), rm.congruence(q.matrix()).unwrap()).unwrap();
        let b = eval_objective(&qu, &rotated).unwrap();
        prop_assert!(close(a.total, b.total, 1e-10));
    }

    #[test]
    fn objective_terms_are_bounded((d, s, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = ObjectiveInputs::new(psd(d, &mut rng), psd(d, &mut rng)).unwrap();
        let v = eval_objective(&random_stiefel(d, s, seed).unwrap(), &inputs).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.forget));
        prop_assert!((0.0..=1.0).contains(&v.remain));
    }

    #[test]
    fn projection_is_linear_and_idempotent((d, s, seed) in dims(), alpha in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_stiefel(d, s, seed).unwrap();
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + b).collect();
        let px = u.project_vec(&x).unwrap();
        let py = u.project_vec(&y).unwrap();
        let pc = u.project_vec(&combo).unwrap();
        let ppx = u.project_vec(&px).unwrap();
        for i in 0..d {
            prop_assert!((pc[i] - (alpha * px[i] + py[i])).abs() < 1e-12 * (1.0 + alpha.abs()) * 10.0);
            prop_assert!((ppx[i] - px[i]).abs() < 1e-12 * 10.0);
        }
    }

    #[test]
    fn retraction_stays_on_the_manifold((d, s, seed) in dims(), t in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_stiefel(d, s, seed).unwrap();
        let xi = tangent_project(&u, &gaussian(d, s, &mut rng)).unwrap();
        prop_assert!(xi.tangency_error(&u) < 1e-12);
        let next = retract_qr(&u, &xi.scaled(t)).unwrap();
        prop_assert!(next.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn merged_covariance_equals_union(seed in any::<u64>(), n1 in 1usize..20, n2 in 1usize..20, centered in any::<bool>()) {
        let centering = if centered { Centering::Centered } else { Centering::Uncentered };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(n1, 4, &mut rng);
        let b = gaussian(n2, 4, &mut rng).map(|v| 3.0 * v + 1.0);
        let mut union = a.as_slice().to_vec();
        union.extend_from_slice(b.as_slice());
        let whole = covariance(&Matrix::from_vec(n1 + n2, 4, union).unwrap(), centering).unwrap();
        let parts = [covariance(&a, centering).unwrap(), covariance(&b, centering).unwrap()];
        let merged = CovarianceSummary::merge(&parts, centering).unwrap();
        prop_assert_eq!(merged.count(), whole.count());
        let diff = merged.matrix().as_matrix().sub(whole.matrix().as_matrix()).unwrap().max_abs();
        prop_assert!(diff < 1e-10);

        let mut acc = CovarianceAccumulator::new(4, centering);
        for i in 0..n1 {
            acc.push(a.row(i)).unwrap();
        }
        let mut other = CovarianceAccumulator::new(4, centering);
        for i in 0..n2 {
            other.push(b.row(i)).unwrap();
        }
        acc.merge(&other).unwrap();
        let streamed = acc.finish().unwrap();
        prop_assert!(streamed.matrix().as_matrix().sub(whole.matrix().as_matrix()).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn covariance_is_psd(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = covariance(&gaussian(n, 5, &mut rng), Centering::Centered).unwrap();
        let eig = loft_core::matcore::sym_eig(cov.matrix()).unwrap();
        prop_assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-10 * (1.0 + cov.trace())));
    }

    #[test]
    fn select_dim_is_monotone(values in prop::collection::vec(0.0f64..10.0, 1..12), f1 in 0.01f64..=1.0, f2 in 0.01f64..=1.0) {
        let mut values = values;
        values.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(values[0] > 0.0);
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let a = select_dim_from_eigenvalues(&values, lo).unwrap();
        let b = select_dim_from_eigenvalues(&values, hi).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn reconstruction_is_pythagorean((d, s, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_stiefel(d, s, seed).unwrap();
        let z = gaussian(10, d, &mut rng);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = reconstruction_errors(&u, &z, &mean).unwrap();
        for i in 0..10 {
            let norm2: f64 = z.row(i).iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum();
            prop_assert!(r.errors[i] >= 0.0);
            prop_assert!((r.errors[i].powi(2) + r.projected_norms[i].powi(2) - norm2).abs() < 1e-10 * (1.0 + norm2));
        }
    }

    #[test]
    fn absorbed_head_matches_projected_path((d, s, seed) in dims(), c in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = LinearHead::new(gaussian(c, d, &mut rng), (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let u = random_stiefel(d, s, seed).unwrap();
        let z = gaussian(25, d, &mut rng);
        let a = absorb(&head, &u).unwrap().logits(None, &z).unwrap();
        let b = head.logits(Some(&u), &z).unwrap();
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn accuracy_depends_only_on_the_projector((d, s, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = LinearHead::new(gaussian(3, d, &mut rng), vec![0.0; 3]).unwrap();
        let u = random_stiefel(d, s, seed).unwrap();
        let r = random_stiefel(s, s, seed ^ 3).unwrap();
        let z = gaussian(30, d, &mut rng);
        let labels: Vec<u32> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let a = accuracy(&head, Some(&u), &z, &labels).unwrap();
        let b = accuracy(&head, Some(&u.right_multiply(r.matrix()).unwrap()), &z, &labels).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fmat_round_trip(seed in any::<u64>(), n in 1usize..10, d in 1usize..10, labelled in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(n, d, &mut rng).map(|v| 100.0 * v);
        let labels = labelled.then(|| (0..n).map(|_| rng.random_range(0..1000)).collect::<Vec<u32>>());
        let f = FeatureMatrix::new(m.clone(), labels).unwrap();
        let back = decode_fmat(&encode_fmat(&f).unwrap()).unwrap();
        prop_assert_eq!(back.values().shape(), (n, d));
        prop_assert_eq!(back.labels(), f.labels());
        for (a, b) in back.values().as_slice().iter().zip(m.as_slice()) {
            prop_assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn fcov_round_trip_is_exact(seed in any::<u64>(), n in 1usize..20, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = covariance(&gaussian(n, d, &mut rng), Centering::Uncentered).unwrap();
        prop_assert_eq!(decode_fcov(&encode_fcov(&cov).unwrap()).unwrap(), cov);
    }
}
