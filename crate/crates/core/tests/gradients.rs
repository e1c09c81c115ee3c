mod common;

use common::{fd_relative_error, random_grad_case};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reverse_mode_matches_central_differences(seed in any::<u64>()) {
        let case = random_grad_case(seed);
        let err = fd_relative_error(&case, 1e-6);
        prop_assert!(err < 1e-5, "relative error {err:e} for seed {seed}");
    }

    #[test]
    fn forward_is_bitwise_deterministic(seed in any::<u64>()) {
        let case = random_grad_case(seed);
        let a = case.model.forward(&case.params, &case.input).unwrap();
        let b = case.model.forward(&case.params, &case.input).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn predictions_are_a_simplex(seed in any::<u64>()) {
        let case = random_grad_case(seed);
        let probs = case.model.predict(&case.params, &case.input).unwrap();
        let c = probs.last_dim();
        for row in probs.data().chunks(c) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
