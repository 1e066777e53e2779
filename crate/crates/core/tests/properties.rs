use num_complex::Complex64;
use proptest::prelude::*;

use sparsespec::dictionary::{build_grid, FrequencyDictionary};
use sparsespec::fourier::{bin_axis, dtft2, fft2_padded};
use sparsespec::lasso::{coordinate_descent, kkt_violation};
use sparsespec::metrics::{match_components, rmse_damping, rmse_frequency, TrialOutcome};
use sparsespec::model::{make_uniform_grid, subsample_random, synthesize, Component, ComponentSet, SampledSignal};

fn component() -> impl Strategy<Value = Component> {
    (0.0..3.0f64, 0.0..3.0f64, 0.0..0.05f64, 0.0..0.05f64, -2.0..2.0f64, -2.0..2.0f64)
        .prop_map(|(w1, w2, b1, b2, re, im)| Component::new(w1, w2, b1, b2, Complex64::new(re, im)))
}

fn scene(max: usize) -> impl Strategy<Value = Vec<Component>> {
    prop::collection::vec(component(), 1..=max)
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn synthesis_is_linear(a in scene(3), b in scene(3), n1 in 2usize..12, n2 in 2usize..12) {
        let grid = make_uniform_grid(n1, n2, 1.0, 0.5).unwrap();
        let both: Vec<Component> = a.iter().chain(&b).copied().collect();
        let xa = synthesize(&ComponentSet::new(a), &grid);
        let xb = synthesize(&ComponentSet::new(b), &grid);
        let xab = synthesize(&ComponentSet::new(both), &grid);
        for i in 0..xab.len() {
            prop_assert!(close(xab.values[i], xa.values[i] + xb.values[i], 1e-13));
        }
    }

    #[test]
    fn modulation_shifts_frequencies(c in component(), d1 in -1.0..1.0f64, d2 in -1.0..1.0f64) {
        let grid = make_uniform_grid(9, 7, 1.0, 1.0).unwrap();
        let x = synthesize(&ComponentSet::new(vec![c]), &grid);
        let shifted = Component { omega1: c.omega1 + d1, omega2: c.omega2 + d2, ..c };
        let y = synthesize(&ComponentSet::new(vec![shifted]), &grid);
        for (p, (a, b)) in grid.points().iter().zip(x.values.iter().zip(&y.values)) {
            let m = Complex64::from_polar(1.0, d1 * p.t1 + d2 * p.t2);
            prop_assert!(close(a * m, *b, 1e-12));
        }
    }

    #[test]
    fn negated_frequencies_conjugate_real_amplitude_signals(cs in scene(4)) {
        let grid = make_uniform_grid(8, 8, 1.0, 1.0).unwrap();
        let real: Vec<Component> = cs.iter().map(|c| Component { amplitude: Complex64::new(c.amplitude.re, 0.0), ..*c }).collect();
        let neg: Vec<Component> = real.iter().map(|c| Component { omega1: -c.omega1, omega2: -c.omega2, ..*c }).collect();
        let x = synthesize(&ComponentSet::new(real), &grid);
        let y = synthesize(&ComponentSet::new(neg), &grid);
        for (a, b) in x.values.iter().zip(&y.values) {
            prop_assert!(close(a.conj(), *b, 1e-13));
        }
    }

    #[test]
    fn subsampling_stays_inside_the_parent(n1 in 1usize..20, n2 in 1usize..20, frac in 0.0..1.0f64, seed: u64, corner in proptest::option::of((1usize..20, 1usize..20))) {
        let grid = make_uniform_grid(n1, n2, 1.0, 1.0).unwrap();
        let corner = corner.map(|(a, b)| (a.min(n1), b.min(n2)));
        let eligible = corner.map_or(n1 * n2, |(a, b)| a * b);
        let count = ((frac * eligible as f64) as usize).min(eligible);
        let sub = subsample_random(&grid, count, corner, seed).unwrap();
        prop_assert_eq!(sub.len(), count);
        for p in sub.points() {
            prop_assert!(grid.points().contains(p));
            if let Some((a, b)) = corner {
                prop_assert!(p.i1 < a && p.i2 < b);
            }
        }
    }

    #[test]
    fn dtft_of_a_subset_equals_zero_filled_dtft(cs in scene(2), count in 1usize..30, seed: u64) {
        let grid = make_uniform_grid(6, 5, 1.0, 1.0).unwrap();
        let full = synthesize(&ComponentSet::new(cs), &grid);
        let sub = subsample_random(&grid, count, None, seed).unwrap();
        let part = full.restrict(&sub).unwrap();
        let zeroed: Vec<Complex64> = grid
            .points()
            .iter()
            .zip(&full.values)
            .map(|(p, v)| if sub.points().contains(p) { *v } else { Complex64::new(0.0, 0.0) })
            .collect();
        let zeroed = SampledSignal::new(grid.clone(), zeroed).unwrap();
        let ax1 = [0.0, 0.3, 1.7, 4.0];
        let ax2 = [0.1, 2.2, 5.9];
        let a = dtft2(&part, &ax1, &ax2).unwrap();
        let b = dtft2(&zeroed, &ax1, &ax2).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn parseval_holds_on_full_grids(cs in scene(3), n1 in 2usize..12, n2 in 2usize..12) {
        let grid = make_uniform_grid(n1, n2, 1.0, 1.0).unwrap();
        let x = synthesize(&ComponentSet::new(cs), &grid);
        let spec = fft2_padded(&x, n1, n2).unwrap();
        let time: f64 = x.values.iter().map(|v| v.norm_sqr()).sum();
        let freq: f64 = spec.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / (n1 * n2) as f64;
        prop_assert!((time - freq).abs() <= 1e-10 * time.max(1e-300));
    }

    #[test]
    fn bin_modulation_rolls_the_spectrum(c in component(), s1 in 0usize..8, s2 in 0usize..8) {
        let (n1, n2) = (8, 8);
        let grid = make_uniform_grid(n1, n2, 1.0, 1.0).unwrap();
        let x = synthesize(&ComponentSet::new(vec![c]), &grid);
        let d1 = bin_axis(n1, 1.0)[s1];
        let d2 = bin_axis(n2, 1.0)[s2];
        let y = synthesize(&ComponentSet::new(vec![Component { omega1: c.omega1 + d1, omega2: c.omega2 + d2, ..c }]), &grid);
        let a = fft2_padded(&x, n1, n2).unwrap();
        let b = fft2_padded(&y, n1, n2).unwrap();
        for i in 0..n1 {
            for j in 0..n2 {
                let pa = a.power(i, j);
                let pb = b.power((i + s1) % n1, (j + s2) % n2);
                prop_assert!((pa - pb).abs() <= 1e-9 * (1.0 + pa));
            }
        }
    }
}

fn random_problem(seed: u64, samples: usize) -> (FrequencyDictionary, Vec<Complex64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = make_uniform_grid(12, 12, 1.0, 1.0).unwrap();
    let scheme = subsample_random(&grid, samples, None, seed).unwrap();
    let dict_grid = build_grid(24, 24, (0.1, 0.97), None).unwrap();
    let dict = FrequencyDictionary::new(&dict_grid, &scheme).unwrap();
    let data = (0..samples)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    (dict, data)
}

#[test]
fn objective_never_increases_across_sweeps() {
    for seed in 0..100u64 {
        let (dict, data) = random_problem(seed, 20 + (seed as usize % 60));
        let lambda = 0.05 + 0.01 * (seed % 40) as f64;
        let res = coordinate_descent(&dict, &data, lambda, 5_000, 1e-12);
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "seed {seed}: {} -> {}", w[0], w[1]);
        }
        assert!(res.kkt_violation <= 1e-6 * lambda, "seed {seed}: kkt {}", res.kkt_violation);
    }
}

#[test]
fn zero_data_gives_zero_solution() {
    let (dict, data) = random_problem(3, 40);
    let zero = vec![Complex64::new(0.0, 0.0); data.len()];
    for lambda in [1e-6, 0.4, 10.0] {
        let res = coordinate_descent(&dict, &zero, lambda, 100, 1e-12);
        assert!(res.coefficients.iter().all(|g| g.norm() == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaling_data_and_lambda_scales_the_solution(seed in 0u64..1000, c in 0.1..20.0f64) {
        let (dict, data) = random_problem(seed, 50);
        let lambda = 0.3;
        let a = coordinate_descent(&dict, &data, lambda, 20_000, 1e-14);
        let scaled: Vec<Complex64> = data.iter().map(|v| v * c).collect();
        let b = coordinate_descent(&dict, &scaled, lambda * c, 20_000, 1e-14);
        let norm = a.coefficients.iter().map(|g| g.norm()).fold(0.0, f64::max).max(1e-12);
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x * c - y).norm() <= 1e-5 * c * norm, "{x} vs {y}");
        }
        let corr = dict.correlate(&b.residual);
        prop_assert!(kkt_violation(&corr, &b.coefficients, lambda * c) <= 1e-6 * lambda * c);
    }

    #[test]
    fn rmse_ignores_component_order(truth in scene(4), noise in prop::collection::vec((-0.01..0.01f64, -0.01..0.01f64), 4), perm in Just([3usize, 0, 2, 1]).prop_shuffle()) {
        let truth: Vec<Component> = truth.into_iter().map(|c| Component { omega1: c.omega1 + 0.5, omega2: c.omega2 + 0.5, beta1: c.beta1 + 0.01, beta2: c.beta2 + 0.01, ..c }).collect();
        let est: Vec<Component> = truth.iter().zip(&noise).map(|(c, (a, b))| Component { omega1: c.omega1 + a, omega2: c.omega2 + b, beta1: c.beta1 * 1.1, ..*c }).collect();
        let shuffled: Vec<Component> = perm.iter().filter(|&&i| i < est.len()).map(|&i| est[i]).collect();
        let a = TrialOutcome::new(ComponentSet::new(truth.clone()), ComponentSet::new(est)).unwrap();
        let b = TrialOutcome::new(ComponentSet::new(truth), ComponentSet::new(shuffled)).unwrap();
        let (fa, fb) = (rmse_frequency(std::slice::from_ref(&a)).unwrap(), rmse_frequency(std::slice::from_ref(&b)).unwrap());
        prop_assert!((fa - fb).abs() <= 1e-15 && fa >= 0.0);
        prop_assert!((rmse_damping(&[a]).unwrap() - rmse_damping(&[b]).unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn matching_cost_is_translation_invariant(truth in scene(4), est in scene(4), d1 in -1.0..1.0f64, d2 in -1.0..1.0f64) {
        let shift = |v: &[Component]| ComponentSet::new(v.iter().map(|c| Component { omega1: c.omega1 + d1, omega2: c.omega2 + d2, ..*c }).collect());
        let a = match_components(&ComponentSet::new(truth.clone()), &ComponentSet::new(est.clone())).unwrap();
        let b = match_components(&shift(&truth), &shift(&est)).unwrap();
        prop_assert!((a.cost - b.cost).abs() <= 1e-9 * (1.0 + a.cost));
    }
}

#[test]
fn rmse_is_zero_only_for_exact_estimates() {
    let truth = ComponentSet::new(vec![
        Component::new(0.3, 0.4, 0.02, 0.03, Complex64::new(1.0, 0.0)),
        Component::new(0.7, 0.2, 0.025, 0.021, Complex64::new(1.0, 0.0)),
    ]);
    let exact = TrialOutcome::new(truth.clone(), truth.clone()).unwrap();
    assert_eq!(rmse_frequency(std::slice::from_ref(&exact)).unwrap(), 0.0);
    assert_eq!(rmse_damping(&[exact]).unwrap(), 0.0);
    let mut off = truth.clone().into_inner();
    off[1].omega2 += 1e-9;
    let o = TrialOutcome::new(truth, ComponentSet::new(off)).unwrap();
    assert!(rmse_frequency(&[o]).unwrap() > 0.0);
}
