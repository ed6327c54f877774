//! Generate a deterministic toy hyper-relational corpus, write it as
//! statement files, and print its statistics.
//!
//! ```bash
//! cargo run -p resae --example generate_dataset
//! ```

use resae::kg::{
    dataset_stats, generate_toy_kg, generate_toy_statements, serialize_statements, ToyConfig,
};

fn main() {
    let cfg = ToyConfig {
        seed: 7,
        n_entities: 50,
        n_relations: 8,
        n_facts: 200,
        qualifier_ratio: 0.4,
        max_qualifiers: 2,
    };

    let (train, valid, test) = generate_toy_statements(&cfg).expect("toy generation");
    let dir = std::env::temp_dir().join("resae_toy_example");
    std::fs::create_dir_all(&dir).expect("create output dir");
    for (name, statements) in [("train.txt", &train), ("valid.txt", &valid), ("test.txt", &test)] {
        let path = dir.join(name);
        std::fs::write(&path, serialize_statements(statements, ',')).expect("write split");
        println!("wrote {} facts to {}", statements.len(), path.display());
    }
    println!("sample line: {}", serialize_statements(&train[..1], ',').trim_end());

    let dataset = generate_toy_kg(&cfg).expect("toy dataset");
    let stats = dataset_stats(&dataset);
    println!(
        "stats: {}",
        serde_json::to_string_pretty(&stats).expect("stats json")
    );
    println!("facts with qualifiers: {}", stats.qualified_summary());
}
