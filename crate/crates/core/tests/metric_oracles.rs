mod common;

use common::{brute_lambda, brute_miou, brute_pseudo_error, random_maps, random_probs};
use fst_lab::metrics::{miou, pseudo_error_rate};
use fst_lab::selftrain::pseudo_labels_from_probs;
use fst_lab::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PIXELS: usize = 64;
const CLASSES: usize = 3;

#[test]
fn metrics_match_counting_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..256 {
        let images = rng.random_range(1..=3);
        let (pred, truth) = random_maps(&mut rng, images * PIXELS, CLASSES);
        assert_eq!(
            pseudo_error_rate(&pred, &truth, PIXELS, CLASSES).unwrap(),
            brute_pseudo_error(&pred, &truth, PIXELS, CLASSES)
        );
        assert_eq!(miou(&pred, &truth, CLASSES).unwrap(), brute_miou(&pred, &truth, CLASSES));

        let probs = random_probs(&mut rng, PIXELS, CLASSES);
        let tensor = Tensor::new(vec![PIXELS, CLASSES], probs.clone()).unwrap();
        let pl = pseudo_labels_from_probs(&tensor, 0.968);
        assert_eq!(pl.lambda, brute_lambda(&probs, CLASSES, 0.968));
    }
}

#[test]
fn sparse_images_skip_absent_classes() {
    // class 2 absent everywhere; class 1 only in the second image
    let mut truth = vec![0; 2 * PIXELS];
    truth[PIXELS..PIXELS + 8].fill(1);
    let pred = vec![0; 2 * PIXELS];
    let eps = pseudo_error_rate(&pred, &truth, PIXELS, CLASSES).unwrap();
    assert_eq!(eps, brute_pseudo_error(&pred, &truth, PIXELS, CLASSES));
    assert_eq!(eps, 0.25);
}

fn shuffled(seed: u64, pred: &[usize], truth: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pred.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    (order.iter().map(|&i| pred[i]).collect(), order.iter().map(|&i| truth[i]).collect())
}

proptest! {
    #[test]
    fn metrics_ignore_pixel_order(seed in any::<u64>(), perm in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pred, truth) = random_maps(&mut rng, PIXELS, CLASSES);
        let (p2, t2) = shuffled(perm, &pred, &truth);
        let a = pseudo_error_rate(&pred, &truth, PIXELS, CLASSES).unwrap();
        let b = pseudo_error_rate(&p2, &t2, PIXELS, CLASSES).unwrap();
        prop_assert!((a - b).abs() <= 1e-15);
        prop_assert_eq!(miou(&pred, &truth, CLASSES).unwrap(), miou(&p2, &t2, CLASSES).unwrap());
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pred, truth) = random_maps(&mut rng, 2 * PIXELS, CLASSES);
        let eps = pseudo_error_rate(&pred, &truth, PIXELS, CLASSES).unwrap();
        let m = miou(&pred, &truth, CLASSES).unwrap();
        prop_assert!((0.0..=1.0).contains(&eps) && (0.0..=1.0).contains(&m));
    }
}
