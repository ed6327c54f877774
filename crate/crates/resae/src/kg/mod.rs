//! Hyper-relational statement ingestion, vocabularies, co-occurrence
//! statistics, and toy corpus generation.

mod cooccurrence;
mod fact;
mod stats;
mod toy;

pub use cooccurrence::{compute_cooccurrence, cooccurrence_counts, normalize_counts, CooMatrix};
pub use fact::{
    add_inverse_facts, parse_statements, serialize_statements, Dataset, Direction, HyperFact,
    RawStatement, Vocabulary, INVERSE_PREFIX, LOOP_RELATION_LABEL, PAD_ENTITY_LABEL,
    PAD_RELATION_LABEL,
};
pub use stats::{dataset_stats, DatasetStats};
pub use toy::{generate_toy_kg, generate_toy_statements, ToyConfig};
