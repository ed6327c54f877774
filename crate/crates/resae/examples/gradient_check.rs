//! Verify the full training-loss gradient against central finite differences,
//! parameter group by parameter group.
//!
//! ```bash
//! cargo run --release -p resae --example gradient_check
//! ```

use resae::autodiff::{grad_check, GradCheckOpts, Tape};
use resae::decoder::{DecoderConfig, LinkQuery, Side};
use resae::encoder::EncoderConfig;
use resae::kg::{generate_toy_kg, ToyConfig};
use resae::model::ResaeModel;

fn main() {
    let dataset = generate_toy_kg(&ToyConfig {
        seed: 21,
        n_entities: 20,
        n_relations: 6,
        n_facts: 30,
        qualifier_ratio: 0.5,
        max_qualifiers: 2,
    })
    .expect("toy dataset");
    let enc = EncoderConfig {
        dim: 8,
        n_layers: 2,
        dropout: 0.0, // the checker requires a deterministic objective
        ..Default::default()
    };
    let dec = DecoderConfig {
        n_heads: 2,
        hidden_dim: 16,
        dropout: 0.0,
        max_qualifiers: 0,
        ..Default::default()
    };
    let model = ResaeModel::new(&dataset, enc, dec).expect("model");
    let params = model.init_params(33);

    let queries: Vec<LinkQuery> = dataset
        .train
        .iter()
        .take(4)
        .flat_map(|f| {
            [
                LinkQuery::from_fact(f, &model.vocab, Side::Tail),
                LinkQuery::from_fact(f, &model.vocab, Side::Head),
            ]
        })
        .collect();
    let golds: Vec<usize> = queries.iter().map(|q| q.gold).collect();
    let batch = model.batch_from_queries(&queries).expect("batch");

    let report = grad_check(
        &params,
        Tape::new,
        |tape, pv| model.forward_loss(tape, pv, &batch, &golds, 0.1),
        &GradCheckOpts {
            eps: 1e-5,
            tol: 1e-4,
            max_coords_per_param: 64,
            seed: 0,
        },
    )
    .expect("grad check");

    println!("{:<28} {:>7} {:>14} {:>6}", "parameter", "coords", "max rel err", "pass");
    for group in &report.per_param {
        println!(
            "{:<28} {:>7} {:>14.3e} {:>6}",
            group.name,
            group.coords_checked,
            group.max_rel_err,
            if group.pass { "yes" } else { "NO" }
        );
    }
    println!(
        "overall: max rel err {:.3e} -> {}",
        report.max_rel_err,
        if report.pass { "PASS" } else { "FAIL" }
    );
}
