use rand::seq::index;
use rand::Rng;

/// Per-pair ClassMix selections for one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixPlan {
    /// `selected[i]` lists the source classes pasted from labeled item `i`
    /// onto unlabeled item `i`, sorted ascending.
    pub selected: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedItem {
    pub input: Vec<f64>,
    pub labels: Vec<usize>,
    pub pasted: Vec<bool>,
}

/// Picks `ceil(n / 2)` of the `n` classes present in `src_labels`,
/// uniformly without replacement.
pub fn select_classes<R: Rng + ?Sized>(src_labels: &[usize], rng: &mut R) -> Vec<usize> {
    let mut present = src_labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.is_empty() {
        return present;
    }
    let take = present.len().div_ceil(2);
    let mut chosen: Vec<usize> = index::sample(rng, present.len(), take)
        .into_iter()
        .map(|i| present[i])
        .collect();
    chosen.sort_unstable();
    chosen
}

/// Pixels whose source class is in `selected`.
pub fn paste_mask(src_labels: &[usize], selected: &[usize]) -> Vec<bool> {
    src_labels.iter().map(|l| selected.contains(l)).collect()
}

/// Pastes source pixels flagged in `pasted` onto the target item.
///
/// Pasted pixels take the source input and ground truth; the rest keep the
/// target input and the target (pseudo-)labels.
pub fn mix_item(
    src_input: &[f64],
    src_labels: &[usize],
    tgt_input: &[f64],
    tgt_labels: &[usize],
    pasted: &[bool],
) -> MixedItem {
    let channels = src_input.len() / src_labels.len().max(1);
    let mut input = tgt_input.to_vec();
    let mut labels = tgt_labels.to_vec();
    for (p, &on) in pasted.iter().enumerate() {
        if on {
            input[p * channels..(p + 1) * channels]
                .copy_from_slice(&src_input[p * channels..(p + 1) * channels]);
            labels[p] = src_labels[p];
        }
    }
    MixedItem {
        input,
        labels,
        pasted: pasted.to_vec(),
    }
}

/// ClassMix of one source/target pair with a fresh random class selection.
pub fn class_mix<R: Rng + ?Sized>(
    src_input: &[f64],
    src_labels: &[usize],
    tgt_input: &[f64],
    tgt_pseudo: &[usize],
    rng: &mut R,
) -> MixedItem {
    let selected = select_classes(src_labels, rng);
    let pasted = paste_mask(src_labels, &selected);
    mix_item(src_input, src_labels, tgt_input, tgt_pseudo, &pasted)
}
