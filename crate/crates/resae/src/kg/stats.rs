//! Corpus statistics.

use serde::Serialize;

use super::fact::Dataset;

#[derive(Clone, Debug, Serialize)]
pub struct DatasetStats {
    pub num_facts: usize,
    pub num_with_qualifiers: usize,
    pub pct_with_qualifiers: f64,
    pub num_entities: usize,
    pub num_relations: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
}

impl DatasetStats {
    /// Short human-readable form of the qualifier share, e.g. `4 (40.0%)`.
    pub fn qualified_summary(&self) -> String {
        format!("{} ({:.1}%)", self.num_with_qualifiers, self.pct_with_qualifiers)
    }
}

/// Counts over all splits; entity/relation counts exclude the synthetic
/// inverse/loop/pad symbols.
pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let num_facts = dataset.train.len() + dataset.valid.len() + dataset.test.len();
    let num_with_qualifiers = dataset
        .all_facts()
        .filter(|f| !f.qualifiers.is_empty())
        .count();
    let pct = if num_facts == 0 {
        0.0
    } else {
        100.0 * num_with_qualifiers as f64 / num_facts as f64
    };
    DatasetStats {
        num_facts,
        num_with_qualifiers,
        pct_with_qualifiers: pct,
        num_entities: dataset.vocab.n_real_entities(),
        num_relations: dataset.vocab.n_real_relations(),
        train_size: dataset.train.len(),
        valid_size: dataset.valid.len(),
        test_size: dataset.test.len(),
    }
}
