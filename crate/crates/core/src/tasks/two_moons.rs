use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{item_rng, DataSet, Domain, TaskData, TaskKind, TaskSpec};
use crate::error::{Error, Result};

/// Centre of rotation for the shifted (target) moons.
const PIVOT: (f64, f64) = (0.5, 0.25);

/// Two interleaving unit half-circles: class 0 is the upper arc centred at
/// the origin, class 1 the lower arc centred at `(1, 0.5)`. Target-domain
/// points are rotated by `shift` radians about the middle of the pair.
pub fn gen_two_moons(spec: &TaskSpec, split_seed: u64) -> Result<TaskData> {
    if spec.kind != TaskKind::TwoMoons {
        return Err(Error::InvalidTask("expected a two-moons spec".into()));
    }
    spec.validate()?;
    let mut next_id = 0;
    let mut split = |n: usize, domain: Domain| {
        let mut set = DataSet::new(spec.input_shape(), 2, next_id);
        for i in 0..n {
            let id = next_id + i;
            let class = i % 2;
            let (x, y) = moon_point(spec, split_seed, id, class, domain);
            set.push(&[x, y], &[class]);
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

fn moon_point(spec: &TaskSpec, seed: u64, id: usize, class: usize, domain: Domain) -> (f64, f64) {
    let mut rng = item_rng(seed, id);
    let t = rng.random_range(0.0..=PI);
    let (mut x, mut y) = if class == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    };
    if spec.noise > 0.0 {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        x += spec.noise * nx;
        y += spec.noise * ny;
    }
    if domain == Domain::Target && spec.shift > 0.0 {
        let (s, c) = spec.shift.sin_cos();
        let (dx, dy) = (x - PIVOT.0, y - PIVOT.1);
        x = PIVOT.0 + c * dx - s * dy;
        y = PIVOT.1 + s * dx + c * dy;
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_points_lie_on_the_arcs() {
        let spec = TaskSpec {
            noise: 0.0,
            ..TaskSpec::two_moons()
        };
        let data = gen_two_moons(&spec, 4).unwrap();
        for set in [&data.labeled, &data.unlabeled, &data.eval] {
            for i in 0..set.len() {
                let p = set.item_inputs(i);
                let (cx, cy, upper) = if set.item_labels(i)[0] == 0 {
                    (0.0, 0.0, true)
                } else {
                    (1.0, 0.5, false)
                };
                let r = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
                assert!((r - 1.0).abs() < 1e-12);
                if upper {
                    assert!(p[1] >= cy - 1e-12);
                } else {
                    assert!(p[1] <= cy + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = TaskSpec::two_moons();
        assert_eq!(gen_two_moons(&spec, 9).unwrap(), gen_two_moons(&spec, 9).unwrap());
        assert_ne!(gen_two_moons(&spec, 9).unwrap(), gen_two_moons(&spec, 10).unwrap());
    }

    #[test]
    fn too_few_labeled_rejected() {
        let spec = TaskSpec {
            n_labeled: 3,
            ..TaskSpec::two_moons()
        };
        assert!(gen_two_moons(&spec, 0).is_err());
    }

    #[test]
    fn shift_rotates_only_the_target() {
        let base = TaskSpec::two_moons();
        let shifted = TaskSpec {
            shift: 0.7,
            ..base.clone()
        };
        let a = gen_two_moons(&base, 1).unwrap();
        let b = gen_two_moons(&shifted, 1).unwrap();
        assert_eq!(a.labeled, b.labeled);
        assert_ne!(a.unlabeled.inputs, b.unlabeled.inputs);
    }
}
