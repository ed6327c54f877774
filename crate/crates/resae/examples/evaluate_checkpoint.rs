//! Save a checkpoint, reload it bit-exactly, and run the filtered-ranking
//! protocol on the test split.
//!
//! ```bash
//! cargo run -p resae --example evaluate_checkpoint
//! ```

use resae::autodiff::ParamStore;
use resae::decoder::DecoderConfig;
use resae::encoder::EncoderConfig;
use resae::kg::{generate_toy_kg, ToyConfig};
use resae::model::ResaeModel;
use resae::train::{evaluate, train, FilterIndex, TrainConfig};

fn main() {
    let dataset = generate_toy_kg(&ToyConfig {
        n_facts: 120,
        ..Default::default()
    })
    .expect("toy dataset");
    let enc = EncoderConfig {
        dim: 16,
        dropout: 0.0,
        ..Default::default()
    };
    let dec = DecoderConfig {
        n_heads: 2,
        hidden_dim: 32,
        dropout: 0.0,
        max_qualifiers: 0,
        ..Default::default()
    };
    let model = ResaeModel::new(&dataset, enc, dec).expect("model");
    let mut params = model.init_params(11);
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 64,
        lr: 1e-3,
        label_smoothing: 0.0,
        seed: 11,
        eval_every: 0,
    };
    train(&model, &mut params, &dataset, &cfg, None, &mut |_| {}).expect("training");

    let path = std::env::temp_dir().join("resae_example.ckpt");
    params.save(&path).expect("save checkpoint");
    println!("saved checkpoint to {}", path.display());

    let restored = ParamStore::load(&path).expect("load checkpoint");
    model.check_params(&restored).expect("layout check");
    for (name, tensor) in params.iter() {
        let other = restored.get(name);
        assert!(
            tensor.data().iter().zip(other.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "{} did not round-trip bit-exactly",
            name
        );
    }
    println!("checkpoint round trip is bit exact ({} parameters)", restored.len());

    let filter = FilterIndex::build(dataset.all_facts(), &model.vocab);
    let report = evaluate(&model, &restored, &dataset.test, &filter, 64).expect("evaluation");
    println!(
        "test: MRR {:.4}  hits@1 {:.4}  hits@10 {:.4}  ({} queries)",
        report.mrr, report.hits1, report.hits10, report.queries
    );
    println!(
        "  head side: MRR {:.4} over {} queries",
        report.head.mrr, report.head.queries
    );
    println!(
        "  tail side: MRR {:.4} over {} queries",
        report.tail.mrr, report.tail.queries
    );
}
