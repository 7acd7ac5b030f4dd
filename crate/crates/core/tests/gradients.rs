use c2p_core::gradcheck::GradProblem;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..5 {
        for alpha in [0.2, 0.7] {
            let errors = GradProblem::reduced(seed, alpha).unwrap().check(1e-6).unwrap();
            for e in &errors {
                assert!(e.relative <= 1e-4, "seed {seed} alpha {alpha}: {} off by {:.2e}", e.name, e.relative);
            }
        }
    }
}
