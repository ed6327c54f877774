//! Peek inside the encoder on a hand-written graph: the relation attention
//! matrix and the normalized co-occurrence matrix that drive the updates.
//!
//! ```bash
//! cargo run -p resae --example relation_attention_inspection
//! ```

use resae::autodiff::Tape;
use resae::decoder::DecoderConfig;
use resae::encoder::EncoderConfig;
use resae::kg::{compute_cooccurrence, Dataset, Direction, RawStatement, Vocabulary};
use resae::model::ResaeModel;

fn main() {
    // an awards-flavored micro graph where one relation is decorated by two
    // qualifier relations with different frequencies
    let raws = vec![
        RawStatement {
            subject: "miller".into(),
            relation: "nominated_for".into(),
            object: "best_animated".into(),
            qualifiers: vec![
                ("for_work".into(), "happy_feet".into()),
                ("subject_of".into(), "ceremony_79".into()),
            ],
        },
        RawStatement {
            subject: "miller".into(),
            relation: "nominated_for".into(),
            object: "best_picture".into(),
            qualifiers: vec![("for_work".into(), "babe".into())],
        },
        RawStatement {
            subject: "babe".into(),
            relation: "subject_of".into(),
            object: "ceremony_68".into(),
            qualifiers: vec![],
        },
    ];
    let vocab = Vocabulary::build(&raws).expect("vocabulary");
    let facts = vocab.resolve_all(&raws).expect("resolve");

    println!("relations ({} real, {} total with synthetic):", vocab.n_real_relations(), vocab.n_relations());
    for r in 0..vocab.n_real_relations() {
        println!("  {} = {}", r, vocab.relation_label(r));
    }

    let coo = compute_cooccurrence(&facts, &vocab, Direction::Forward);
    println!("\nforward co-occurrence (nonzero entries):");
    for i in 0..vocab.n_relations() {
        for j in 0..vocab.n_relations() {
            let v = coo.values.at2(i, j);
            if v != 0.0 {
                println!(
                    "  coo[{} -> {}] = {:.3}",
                    vocab.relation_label(i),
                    vocab.relation_label(j),
                    v
                );
            }
        }
    }
    let sum: f64 = coo.values.data().iter().sum();
    println!("entry sum {} (= relation row count)", sum);

    let dataset = Dataset {
        train: facts,
        valid: vec![],
        test: vec![],
        vocab: vocab.clone(),
    };
    let enc = EncoderConfig {
        dim: 8,
        n_layers: 1,
        dropout: 0.0,
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
    let params = model.init_params(3);

    let tape = Tape::new();
    let pv = tape.register_params(&params);
    let att = tape.value(
        model
            .encoder
            .relation_attention(&tape, pv.get("encoder.relation_emb")),
    );
    println!("\nrelation attention rows over the real relations (untrained):");
    for i in 0..vocab.n_real_relations() {
        let row: Vec<String> = (0..vocab.n_real_relations())
            .map(|j| format!("{:.3}", att.at2(i, j)))
            .collect();
        let total: f64 = (0..vocab.n_relations()).map(|j| att.at2(i, j)).sum();
        println!(
            "  {:<14} [{}]  (full row sums to {:.12})",
            vocab.relation_label(i),
            row.join(", "),
            total
        );
    }
    println!("\nloop and pad columns are masked out of every row.");
}
