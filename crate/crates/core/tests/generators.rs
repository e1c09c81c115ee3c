use fst_lab::graph::Graph;
use fst_lab::params::Layout;
use fst_lab::tasks::{class_mix, read_dataset, select_classes, write_dataset};
use fst_lab::{BatchSampler, ParamVector, TaskSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn foreground_pixel_shares_follow_class_weights() {
    let spec = TaskSpec {
        n_labeled: 1000,
        n_unlabeled: 1,
        n_eval: 1,
        noise: 0.0,
        shift: 0.0,
        num_classes: 4,
        class_weights: vec![1.0, 2.0, 5.0],
        ..TaskSpec::grid_seg()
    };
    let data = spec.generate(77).unwrap();
    let mut counts = [0usize; 4];
    for &l in &data.labeled.labels {
        counts[l] += 1;
    }
    let fg: usize = counts[1..].iter().sum();
    for (c, w) in [(1, 1.0), (2, 2.0), (3, 5.0)] {
        let share = counts[c] as f64 / fg as f64;
        assert!((share - w / 8.0).abs() < 0.02, "class {c}: {share}");
    }
}

#[test]
fn class_mix_pastes_exactly_the_selected_classes() {
    let data = TaskSpec::grid_seg().generate(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for i in 0..data.labeled.len() {
        let src_l = data.labeled.item_labels(i);
        let src_x = data.labeled.item_inputs(i);
        let tgt_x = data.unlabeled.item_inputs(i);
        let pseudo: Vec<usize> = data.unlabeled.item_labels(i).iter().map(|&l| (l + 1) % 3).collect();
        let mut replay = rng.clone();
        let mixed = class_mix(src_x, src_l, tgt_x, &pseudo, &mut rng);
        let selected = select_classes(src_l, &mut replay);
        let mut present = src_l.to_vec();
        present.sort_unstable();
        present.dedup();
        assert_eq!(selected.len(), present.len().div_ceil(2));
        for p in 0..src_l.len() {
            let on = selected.iter().any(|&c| c == src_l[p]);
            assert_eq!(mixed.pasted[p], on);
            assert_eq!(mixed.input[p], if on { src_x[p] } else { tgt_x[p] });
            assert_eq!(mixed.labels[p], if on { src_l[p] } else { pseudo[p] });
            assert!(mixed.labels[p] < 3);
        }
        checked += usize::from(present.len() == 3);
    }
    assert!(checked > 0, "no three-class source image in the sample");
}

#[test]
fn replayed_batches_are_identical() {
    let data = TaskSpec::grid_seg().generate(1).unwrap();
    let sampler = BatchSampler::new(&data, 8, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut aug = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let b = sampler.draw(&mut rng, &mut aug).unwrap();
        let mut ids = b.labeled.indices.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 8);
        let again = sampler
            .replay(&b.labeled.indices, &b.unlabeled.indices, b.mix.clone())
            .unwrap();
        assert_eq!(again, b);
    }
}

#[test]
fn datasets_survive_the_binary_layout() {
    let data = TaskSpec::two_moons().generate(12).unwrap();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data.eval).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), data.eval);
}

/// Logistic regression by full-batch gradient descent; returns the
/// training error rate.
fn probe_error(features: &[Vec<f64>], labels: &[usize], iters: usize, lr: f64) -> f64 {
    let d = features[0].len();
    let mut layout = Layout::new();
    let w = layout.push("w", vec![d, 2]);
    let b = layout.push("b", vec![2]);
    let mut params = ParamVector::zeros(Arc::new(layout));
    let x = Tensor::new(vec![features.len(), d], features.concat()).unwrap();
    let mask = vec![true; labels.len()];
    let mut logits_out = None;
    for _ in 0..=iters {
        let mut g = Graph::new(&params);
        let xi = g.input(x.clone());
        let wi = g.param(w).unwrap();
        let bi = g.param(b).unwrap();
        let z = g.matmul(xi, wi).unwrap();
        let logits = g.add_bias(z, bi).unwrap();
        let loss = g.softmax_cross_entropy(logits, labels, &mask).unwrap();
        logits_out = Some(g.value(logits).clone());
        let grad = g.backward(loss).unwrap();
        params = params.descend(&grad, lr).unwrap();
    }
    let pred = logits_out.unwrap().argmax_rows();
    pred.iter().zip(labels).filter(|(p, t)| p != t).count() as f64 / labels.len() as f64
}

fn noiseless_moons() -> (Vec<[f64; 2]>, Vec<usize>) {
    let spec = TaskSpec {
        n_labeled: 500,
        noise: 0.0,
        ..TaskSpec::two_moons()
    };
    let data = spec.generate(0).unwrap();
    let points = data.labeled.inputs.chunks(2).map(|p| [p[0], p[1]]).collect();
    (points, data.labeled.labels.clone())
}

fn standardise(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        rows.iter_mut().for_each(|r| r[j] = (r[j] - mean) / sd);
    }
    rows
}

#[test]
fn cubic_feature_probe_separates_noiseless_moons() {
    let (points, labels) = noiseless_moons();
    let features = standardise(
        points
            .iter()
            .map(|&[x, y]| vec![x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y])
            .collect(),
    );
    let err = probe_error(&features, &labels, 3000, 0.5);
    assert!(err < 0.05, "cubic probe error {err}");
}

#[test]
fn raw_linear_probe_is_not_enough() {
    // The two arcs interleave, so no straight line gets below ~10% error.
    let (points, labels) = noiseless_moons();
    let features = standardise(points.iter().map(|p| p.to_vec()).collect());
    let err = probe_error(&features, &labels, 3000, 0.5);
    assert!(err > 0.05 && err < 0.2, "linear probe error {err}");
}
