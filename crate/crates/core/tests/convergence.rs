use loft_core::matcore::{Matrix, SymmetricMatrix};
use loft_core::objective::{eval_objective, trace_minimizer, Ablation, ObjectiveInputs};
use loft_core::optimizer::{fit, Init, OptimizerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_psd(d: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    SymmetricMatrix::from_matrix(&g.matmul_t(&g).unwrap()).unwrap()
}

#[test]
fn forget_only_run_reaches_the_closed_form_minimum() {
    for seed in 0..10u64 {
        let d = 6 + seed as usize;
        let s = 1 + (seed as usize % 3);
        let forget = random_psd(d, seed);
        let (_, smallest) = trace_minimizer(&forget, s).unwrap();
        let target = (smallest / forget.trace()).powi(2);
        let inputs = ObjectiveInputs::new(forget, random_psd(d, seed + 100))
            .unwrap()
            .with_ablation(Ablation::DropRemain);
        for init in [Init::Pca, Init::Random] {
            let config = OptimizerConfig {
                steps: 300,
                init,
                seed,
                ..Default::default()
            };
            let out = fit(&inputs, &config, s).unwrap();
            let gap = out.value.forget - target;
            assert!(gap > -1e-12, "seed {seed}: below the minimum by {gap:e}");
            assert!(gap <= 1e-5, "seed {seed} {init:?}: gap {gap:e}");
        }
    }
}

#[test]
fn random_starts_improve() {
    for seed in 0..20u64 {
        let d = 8 + 3 * seed as usize;
        let s = 2 + seed as usize % 5;
        let inputs = ObjectiveInputs::new(random_psd(d, seed), random_psd(d, seed + 1000)).unwrap();
        let config = OptimizerConfig {
            init: Init::Random,
            seed,
            ..Default::default()
        };
        let out = fit(&inputs, &config, s).unwrap();
        let initial = out.trace.initial().unwrap().objective.total;
        assert!(out.value.total < initial, "seed {seed}: {initial} -> {}", out.value.total);
        assert_eq!(eval_objective(&out.point, &inputs).unwrap(), out.value);
        for r in &out.trace.records {
            assert!(r.orthonormality_error <= 1e-6);
        }
    }
}
