use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use super::{item_rng, DataSet, Domain, TaskData, TaskKind, TaskSpec};
use crate::error::{Error, Result};

/// Contrast loss per unit of shift in the target domain.
const CONTRAST_DROP: f64 = 0.3;
/// Brightness offset per unit of shift.
const OFFSET: f64 = 0.2;

/// Noise-free intensity of `class` in a domain shifted by `shift`.
///
/// Source intensities are evenly spaced in `[0, 1]`. The target domain
/// compresses contrast and raises brightness, which moves the background
/// toward the source's background/foreground boundary while keeping the
/// classes separated by a gap.
pub fn target_intensity(class: usize, num_classes: usize, shift: f64) -> f64 {
    let level = class as f64 / (num_classes - 1) as f64;
    if shift == 0.0 {
        return level;
    }
    (1.0 - CONTRAST_DROP * shift) * level + OFFSET * shift
}

/// Images of random rectangles and discs over background class 0.
pub fn gen_grid_seg(spec: &TaskSpec, split_seed: u64) -> Result<TaskData> {
    if spec.kind != TaskKind::GridSeg {
        return Err(Error::InvalidTask("expected a grid-seg spec".into()));
    }
    spec.validate()?;
    let classes = WeightedIndex::new(&spec.class_weights)
        .map_err(|e| Error::InvalidTask(format!("class weights: {e}")))?;
    let mut next_id = 0;
    let mut split = |n: usize, domain: Domain| {
        let mut set = DataSet::new(spec.input_shape(), spec.num_classes, next_id);
        for id in next_id..next_id + n {
            let (x, y) = render(spec, &classes, split_seed, id, domain);
            set.push(&x, &y);
        }
        next_id += n;
        set
    };
    let labeled = split(spec.n_labeled, Domain::Source);
    let unlabeled = split(spec.n_unlabeled, Domain::Target);
    let eval = split(spec.n_eval, Domain::Target);
    Ok(TaskData {
        spec: spec.clone(),
        labeled,
        unlabeled,
        eval,
    })
}

fn render(
    spec: &TaskSpec,
    classes: &WeightedIndex<f64>,
    seed: u64,
    id: usize,
    domain: Domain,
) -> (Vec<f64>, Vec<usize>) {
    let (h, w) = (spec.height, spec.width);
    let mut rng = item_rng(seed, id);
    let mut labels = vec![0usize; h * w];
    for _ in 0..spec.shapes_per_image {
        let class = 1 + classes.sample(&mut rng);
        if rng.random_bool(0.5) {
            let sh = rng.random_range(spec.min_size..=spec.max_size);
            let sw = rng.random_range(spec.min_size..=spec.max_size);
            let top = rng.random_range(0..=h - sh);
            let left = rng.random_range(0..=w - sw);
            for r in top..top + sh {
                labels[r * w + left..r * w + left + sw].fill(class);
            }
        } else {
            let d = rng.random_range(spec.min_size..=spec.max_size);
            let top = rng.random_range(0..=h - d);
            let left = rng.random_range(0..=w - d);
            let centre = (d as f64 - 1.0) / 2.0;
            let radius2 = (d as f64 / 2.0).powi(2);
            for r in 0..d {
                for c in 0..d {
                    let (dy, dx) = (r as f64 - centre, c as f64 - centre);
                    if dy * dy + dx * dx <= radius2 {
                        labels[(top + r) * w + left + c] = class;
                    }
                }
            }
        }
    }
    let shift = match domain {
        Domain::Source => 0.0,
        Domain::Target => spec.shift,
    };
    let inputs = labels
        .iter()
        .map(|&class| {
            let base = target_intensity(class, spec.num_classes, shift);
            if spec.noise > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                base + spec.noise * n
            } else {
                base
            }
        })
        .collect();
    (inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_shapes_means_all_background() {
        let spec = TaskSpec {
            shapes_per_image: 0,
            ..TaskSpec::grid_seg()
        };
        let data = gen_grid_seg(&spec, 2).unwrap();
        assert!(data.labeled.labels.iter().all(|&l| l == 0));
        assert!(data.eval.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn oversized_shapes_rejected() {
        let spec = TaskSpec {
            max_size: 11,
            ..TaskSpec::grid_seg()
        };
        assert!(matches!(gen_grid_seg(&spec, 0), Err(Error::InvalidTask(_))));
    }

    #[test]
    fn zero_shift_target_matches_source_process() {
        let spec = TaskSpec {
            shift: 0.0,
            noise: 0.0,
            ..TaskSpec::grid_seg()
        };
        let data = gen_grid_seg(&spec, 5).unwrap();
        // without noise or shift, intensity is a pure function of the label
        for set in [&data.labeled, &data.unlabeled] {
            for (x, &y) in set.inputs.iter().zip(&set.labels) {
                assert_eq!(*x, y as f64 / 2.0);
            }
        }
        assert_eq!(gen_grid_seg(&spec, 5).unwrap(), data);
    }

    #[test]
    fn target_levels() {
        assert_eq!(target_intensity(1, 3, 0.0), 0.5);
        assert!((target_intensity(0, 3, 1.0) - 0.2).abs() < 1e-15);
        assert!((target_intensity(1, 3, 1.0) - 0.55).abs() < 1e-15);
        assert!((target_intensity(2, 3, 1.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn labels_are_valid_and_exact() {
        let spec = TaskSpec {
            noise: 0.0,
            shift: 0.0,
            num_classes: 4,
            class_weights: vec![1.0, 2.0, 3.0],
            ..TaskSpec::grid_seg()
        };
        let data = gen_grid_seg(&spec, 8).unwrap();
        assert!(data.labeled.labels.iter().all(|&l| l < 4));
        for (x, &y) in data.labeled.inputs.iter().zip(&data.labeled.labels) {
            assert_eq!(*x, y as f64 / 3.0);
        }
    }
}
