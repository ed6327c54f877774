//! Train on a generated toy corpus until the model memorizes it, streaming
//! validation metrics, then report train/test MRR.
//!
//! Takes about a minute. For the config-file driven equivalent see the
//! `resae train` subcommand.
//!
//! ```bash
//! cargo run --release -p resae --example train_toy_model
//! ```

use resae::decoder::DecoderConfig;
use resae::encoder::EncoderConfig;
use resae::kg::{generate_toy_kg, ToyConfig};
use resae::model::ResaeModel;
use resae::train::{evaluate, train, FilterIndex, TrainConfig};

fn main() {
    let dataset = generate_toy_kg(&ToyConfig::default()).expect("toy dataset");
    println!(
        "toy corpus: {} train / {} valid / {} test facts",
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len()
    );

    let enc = EncoderConfig {
        dim: 32,
        n_layers: 2,
        dropout: 0.0, // memorization run; no regularization
        ..Default::default()
    };
    let dec = DecoderConfig {
        hidden_dim: 64,
        dropout: 0.0,
        max_qualifiers: 0, // auto-size to the corpus
        ..Default::default()
    };
    let model = ResaeModel::new(&dataset, enc, dec).expect("model");
    let mut params = model.init_params(7);

    let cfg = TrainConfig {
        epochs: 600,
        batch_size: 64,
        lr: 1e-3,
        label_smoothing: 0.0,
        seed: 7,
        eval_every: 100,
    };
    train(&model, &mut params, &dataset, &cfg, None, &mut |event| {
        println!(
            "epoch {:4}  valid MRR {:.4}  hits@1 {:.4}  hits@10 {:.4}",
            event.epoch, event.mrr, event.hits1, event.hits10
        );
    })
    .expect("training");

    let filter = FilterIndex::build(dataset.all_facts(), &model.vocab);
    let on_train = evaluate(&model, &params, &dataset.train, &filter, 64).expect("train eval");
    let on_test = evaluate(&model, &params, &dataset.test, &filter, 64).expect("test eval");
    println!(
        "final: train MRR {:.4} (head {:.4} / tail {:.4}), test MRR {:.4}",
        on_train.mrr, on_train.head.mrr, on_train.tail.mrr, on_test.mrr
    );
}
