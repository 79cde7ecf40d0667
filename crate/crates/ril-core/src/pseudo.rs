//! Pseudo-label selection: pick the most-confident negatives from a
//! candidate batch.
//!
//! Candidates scoring below zero are kept, sorted ascending (most negative
//! first), and the first `k` become the pseudo-labeled batch. In the
//! co-training arrangement the scorer is always the *opposite* classifier
//! from the one that will consume the batch; the self-labeled variant
//! exists for the ablation.

use crate::demo::Minibatch;
use crate::error::{Error, Result};
use crate::risk::Classifier;

/// Which dataset half the pseudo batch was drawn from, or `SelfLabeled`
/// for the naive single-classifier variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoSource {
    FromD1,
    FromD2,
    SelfLabeled,
}

/// Samples selected as negatives, with the scores that selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoBatch {
    pub samples: Vec<(usize, usize)>,
    /// Dataset indices of the selected samples (evaluation-only use).
    pub indices: Vec<usize>,
    pub source: PseudoSource,
    /// Scores at selection time, ascending.
    pub scores_at_selection: Vec<f64>,
}

impl PseudoBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Cross-labeling selection: `scorer` must be the opposite classifier from
/// the consumer of the batch (the trainer enforces that data flow).
pub fn co_pseudo_label(
    scorer: &Classifier,
    candidates: &Minibatch,
    k: usize,
    source: PseudoSource,
) -> Result<PseudoBatch> {
    select(scorer, candidates, k, source, false)
}

/// Naive variant: the scorer is also the consumer.
pub fn self_pseudo_label(scorer: &Classifier, candidates: &Minibatch, k: usize) -> Result<PseudoBatch> {
    select(scorer, candidates, k, PseudoSource::SelfLabeled, false)
}

/// Relaxed ablation mode: take the `k` smallest scores regardless of sign.
pub fn pseudo_label_relaxed(
    scorer: &Classifier,
    candidates: &Minibatch,
    k: usize,
    source: PseudoSource,
) -> Result<PseudoBatch> {
    select(scorer, candidates, k, source, true)
}

fn select(
    scorer: &Classifier,
    candidates: &Minibatch,
    k: usize,
    source: PseudoSource,
    relaxed: bool,
) -> Result<PseudoBatch> {
    if k == 0 {
        return Err(Error::domain("pseudo-label budget k must be at least 1"));
    }
    if candidates.pairs.is_empty() {
        return Err(Error::domain("candidate batch must not be empty"));
    }
    let mut scored: Vec<(f64, usize)> = candidates
        .pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, a))| (scorer.score(s, a), i))
        .collect();
    if !relaxed {
        scored.retain(|&(score, _)| score < 0.0);
    }
    // ascending by score; ties broken by candidate position for determinism
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);

    let samples = scored.iter().map(|&(_, i)| candidates.pairs[i]).collect();
    let indices = scored.iter().map(|&(_, i)| candidates.indices[i]).collect();
    let scores_at_selection = scored.iter().map(|&(s, _)| s).collect();
    Ok(PseudoBatch { samples, indices, source, scores_at_selection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{LossKind, LossSpec};

    fn scorer_with(scores: Vec<f64>, n: usize) -> Classifier {
        Classifier::new(n, 1, scores, LossSpec::new(LossKind::Ap)).unwrap()
    }

    fn batch_of(states: &[usize]) -> Minibatch {
        Minibatch {
            pairs: states.iter().map(|&s| (s, 0)).collect(),
            indices: (0..states.len()).collect(),
        }
    }

    #[test]
    fn picks_most_negative_first() {
        // scores -3, -1, 2, -0.5 on states 0..4
        let g = scorer_with(vec![-3.0, -1.0, 2.0, -0.5], 4);
        let cands = batch_of(&[0, 1, 2, 3]);
        let p = co_pseudo_label(&g, &cands, 2, PseudoSource::FromD2).unwrap();
        assert_eq!(p.samples, vec![(0, 0), (1, 0)]);
        assert_eq!(p.scores_at_selection, vec![-3.0, -1.0]);
    }

    #[test]
    fn all_positive_scores_yield_empty_batch() {
        let g = scorer_with(vec![0.2, 1.0, 3.0], 3);
        let cands = batch_of(&[0, 1, 2]);
        let p = co_pseudo_label(&g, &cands, 128, PseudoSource::FromD2).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn all_negative_with_large_budget_returns_everything_sorted() {
        let g = scorer_with(vec![-0.5, -2.0, -1.0], 3);
        let cands = batch_of(&[0, 1, 2]);
        let p = co_pseudo_label(&g, &cands, 3, PseudoSource::FromD1).unwrap();
        assert_eq!(p.samples, vec![(1, 0), (2, 0), (0, 0)]);
        let mut sorted = p.scores_at_selection.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, p.scores_at_selection);
    }

    #[test]
    fn zero_scores_are_not_negatives() {
        let g = scorer_with(vec![0.0, -0.1], 2);
        let cands = batch_of(&[0, 1]);
        let p = co_pseudo_label(&g, &cands, 5, PseudoSource::FromD2).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.scores_at_selection.iter().all(|&s| s < 0.0));
    }

    #[test]
    fn ties_break_by_candidate_position() {
        let g = scorer_with(vec![-1.0], 1);
        let cands = Minibatch {
            pairs: vec![(0, 0), (0, 0), (0, 0)],
            indices: vec![7, 8, 9],
        };
        let p = co_pseudo_label(&g, &cands, 2, PseudoSource::FromD2).unwrap();
        assert_eq!(p.indices, vec![7, 8]);
    }

    #[test]
    fn self_labeling_shares_the_selection_rule() {
        let g = scorer_with(vec![-3.0, -1.0, 2.0, -0.5], 4);
        let cands = batch_of(&[0, 1, 2, 3]);
        let co = co_pseudo_label(&g, &cands, 2, PseudoSource::FromD2).unwrap();
        let own = self_pseudo_label(&g, &cands, 2).unwrap();
        assert_eq!(co.samples, own.samples);
        assert_eq!(own.source, PseudoSource::SelfLabeled);
    }

    #[test]
    fn relaxed_mode_ignores_the_sign_filter() {
        let g = scorer_with(vec![0.5, 1.5, 2.5], 3);
        let cands = batch_of(&[0, 1, 2]);
        let strict = co_pseudo_label(&g, &cands, 2, PseudoSource::FromD2).unwrap();
        assert!(strict.is_empty());
        let relaxed = pseudo_label_relaxed(&g, &cands, 2, PseudoSource::FromD2).unwrap();
        assert_eq!(relaxed.samples, vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn shortfall_is_returned_unpadded() {
        let g = scorer_with(vec![-1.0, 1.0, 1.0, 1.0], 4);
        let cands = batch_of(&[0, 1, 2, 3]);
        let p = co_pseudo_label(&g, &cands, 3, PseudoSource::FromD2).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn empty_candidates_rejected() {
        let g = scorer_with(vec![0.0], 1);
        let empty = Minibatch { pairs: vec![], indices: vec![] };
        assert!(self_pseudo_label(&g, &empty, 4).is_err());
        assert!(co_pseudo_label(&g, &empty, 4, PseudoSource::FromD1).is_err());
    }

    #[test]
    fn selection_is_permutation_invariant_as_a_set() {
        let g = scorer_with(vec![-3.0, -2.0, -1.0, 4.0], 4);
        let a = co_pseudo_label(&g, &batch_of(&[0, 1, 2, 3]), 2, PseudoSource::FromD2).unwrap();
        let b = co_pseudo_label(&g, &batch_of(&[3, 2, 1, 0]), 2, PseudoSource::FromD2).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.scores_at_selection, b.scores_at_selection);
    }
}
