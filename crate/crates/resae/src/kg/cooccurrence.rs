//! Relation co-occurrence counting and normalization.
//!
//! For one direction type, `N(i, j)` counts how often relation `j` occurs in
//! the qualifier list of a fact whose main relation is `i` (once per
//! occurrence, so repeated qualifier relations in a single fact count each
//! time). The normalized matrix divides every count by one global scalar: the
//! mean row sum taken over all relation rows, zero rows included. When at
//! least one co-occurrence exists this makes the entries sum to exactly the
//! number of relation rows; with no qualifiers anywhere the matrix is zero.

use super::fact::{Direction, HyperFact, Vocabulary};
use crate::autodiff::Tensor;

/// Normalized co-occurrence matrix for one direction type.
#[derive(Clone, Debug)]
pub struct CooMatrix {
    pub direction: Direction,
    /// Dense `[n_relations, n_relations]` matrix over the full relation vocabulary.
    pub values: Tensor,
}

/// Raw counts over an `n x n` relation index space.
pub fn cooccurrence_counts(
    facts: impl IntoIterator<Item = (usize, Vec<usize>)>,
    n_relations: usize,
) -> Vec<u64> {
    let mut counts = vec![0u64; n_relations * n_relations];
    for (main, quals) in facts {
        assert!(main < n_relations, "coo: relation {} out of range", main);
        for q in quals {
            assert!(q < n_relations, "coo: qualifier relation {} out of range", q);
            counts[main * n_relations + q] += 1;
        }
    }
    counts
}

/// Divide counts by the mean row sum (over all `n` rows); all-zero counts
/// yield an all-zero matrix.
pub fn normalize_counts(counts: &[u64], n_relations: usize) -> Tensor {
    assert_eq!(counts.len(), n_relations * n_relations);
    let total: u64 = counts.iter().sum();
    if total == 0 || n_relations == 0 {
        return Tensor::zeros(&[n_relations, n_relations]);
    }
    let mean_rowsum = total as f64 / n_relations as f64;
    let data = counts.iter().map(|&c| c as f64 / mean_rowsum).collect();
    Tensor::new(vec![n_relations, n_relations], data)
}

/// Build the normalized matrix for `direction` from an already
/// direction-filtered fact list. Loop facts never carry qualifiers, so the
/// loop matrix is always zero.
pub fn compute_cooccurrence(
    facts: &[HyperFact],
    vocab: &Vocabulary,
    direction: Direction,
) -> CooMatrix {
    let n = vocab.n_relations();
    for fact in facts {
        assert_eq!(
            vocab.direction_of(fact.relation),
            direction,
            "coo: fact with main relation {:?} passed for direction {:?}",
            vocab.relation_label(fact.relation),
            direction,
        );
    }
    let counts = cooccurrence_counts(
        facts
            .iter()
            .map(|f| (f.relation, f.qualifiers.iter().map(|(qr, _)| *qr).collect())),
        n,
    );
    CooMatrix {
        direction,
        values: normalize_counts(&counts, n),
    }
}
