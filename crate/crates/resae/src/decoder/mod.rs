//! Position-free transformer decoder with a type-wise pooling readout.
//!
//! A link-prediction query becomes a token sequence
//! `[known entity, relation, qr1, qv1, ..., pad...]` with no positional
//! encoding anywhere. Tokens carry one of five types (subject entity,
//! relation, qualifier value, qualifier relation, pad); after the transformer
//! layers the outputs are pooled per type and concatenated, so any
//! permutation of a statement's qualifier pairs leaves the readout unchanged.
//! Pad tokens are attention-masked, enter as frozen zero vectors, and are
//! zeroed again before pooling, which keeps the pad slot a constant zero.

use crate::autodiff::{scaled_dot_attention, Activation, ParamStore, ParamVars, PoolKind, Tape, Tensor, Var};
use crate::error::{ResaeError, Result};
use crate::kg::{HyperFact, Vocabulary};

/// Which side of the main triple a query hides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

/// A single prediction instance: the visible entity, the relation seen from
/// it (inverse for head prediction), the qualifier pairs, and the answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkQuery {
    pub known: usize,
    pub relation: usize,
    pub qualifiers: Vec<(usize, usize)>,
    pub gold: usize,
    pub side: Side,
}

impl LinkQuery {
    /// Tail queries keep the forward relation; head queries flip to the
    /// inverse relation with the object as the known entity.
    pub fn from_fact(fact: &HyperFact, vocab: &Vocabulary, side: Side) -> Self {
        match side {
            Side::Tail => LinkQuery {
                known: fact.subject,
                relation: fact.relation,
                qualifiers: fact.qualifiers.clone(),
                gold: fact.object,
                side,
            },
            Side::Head => LinkQuery {
                known: fact.object,
                relation: vocab.inverse(fact.relation).expect("forward relation"),
                qualifiers: fact.qualifiers.clone(),
                gold: fact.subject,
                side,
            },
        }
    }
}

/// Token roles; the numeric value fixes the readout slot order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenType {
    SubjectEntity = 0,
    Relation = 1,
    QualifierValue = 2,
    QualifierRelation = 3,
    Pad = 4,
}

pub const N_TOKEN_TYPES: usize = 5;

/// Where a token's embedding comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenSource {
    Entity(usize),
    Relation(usize),
    Pad,
}

/// One tokenized statement: sources, types, and the attention mask. The
/// masked target entity is never placed in the sequence.
#[derive(Clone, Debug)]
pub struct StatementSequence {
    pub tokens: Vec<TokenSource>,
    pub types: Vec<TokenType>,
    pub mask: Vec<bool>,
}

impl StatementSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokenize a query into a sequence of length `2 + 2 * max_qualifiers`.
pub fn build_sequence(query: &LinkQuery, max_qualifiers: usize) -> Result<StatementSequence> {
    if query.qualifiers.len() > max_qualifiers {
        return Err(ResaeError::Data(format!(
            "statement has {} qualifier pairs; raise max_qualifiers to at least {}",
            query.qualifiers.len(),
            query.qualifiers.len()
        )));
    }
    let len = 2 + 2 * max_qualifiers;
    let mut tokens = Vec::with_capacity(len);
    let mut types = Vec::with_capacity(len);
    tokens.push(TokenSource::Entity(query.known));
    types.push(TokenType::SubjectEntity);
    tokens.push(TokenSource::Relation(query.relation));
    types.push(TokenType::Relation);
    for (qr, qv) in &query.qualifiers {
        tokens.push(TokenSource::Relation(*qr));
        types.push(TokenType::QualifierRelation);
        tokens.push(TokenSource::Entity(*qv));
        types.push(TokenType::QualifierValue);
    }
    while tokens.len() < len {
        tokens.push(TokenSource::Pad);
        types.push(TokenType::Pad);
    }
    let mask = types.iter().map(|t| *t != TokenType::Pad).collect();
    Ok(StatementSequence { tokens, types, mask })
}

/// Entity-scoring rule on top of the readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scorer {
    Dot,
    /// Cosine similarity scaled by a trainable temperature (init 10).
    CosineTemperature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    Typewise,
    /// Ablation: plain mean over non-pad transformer outputs.
    MeanPool,
}

#[derive(Clone, Debug)]
pub struct DecoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub pool: PoolKind,
    pub scorer: Scorer,
    pub readout: Readout,
    pub max_qualifiers: usize,
    pub head_activation: Activation,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            n_layers: 2,
            n_heads: 4,
            hidden_dim: 512,
            dropout: 0.1,
            pool: PoolKind::Mean,
            scorer: Scorer::Dot,
            readout: Readout::Typewise,
            max_qualifiers: 2,
            head_activation: Activation::Tanh,
        }
    }
}

pub const TAU_INIT: f64 = 10.0;

/// Precomputed index structure for a batch of sequences of equal length.
pub struct DecoderBatch {
    pub n_statements: usize,
    pub seq_len: usize,
    entity_ids: Vec<usize>,
    entity_pos: Vec<usize>,
    relation_ids: Vec<usize>,
    relation_pos: Vec<usize>,
    type_seg: Vec<usize>,
    key_mask: Vec<bool>,
    pad_zero_weights: Vec<f64>,
    real_counts: Vec<f64>,
}

impl DecoderBatch {
    pub fn new(sequences: &[StatementSequence]) -> Self {
        assert!(!sequences.is_empty(), "decoder batch: no sequences");
        let seq_len = sequences[0].len();
        let n = sequences.len();
        let mut batch = DecoderBatch {
            n_statements: n,
            seq_len,
            entity_ids: Vec::new(),
            entity_pos: Vec::new(),
            relation_ids: Vec::new(),
            relation_pos: Vec::new(),
            type_seg: Vec::with_capacity(n * seq_len),
            key_mask: Vec::with_capacity(n * seq_len),
            pad_zero_weights: Vec::with_capacity(n * seq_len),
            real_counts: Vec::with_capacity(n),
        };
        for (b, seq) in sequences.iter().enumerate() {
            assert_eq!(seq.len(), seq_len, "decoder batch: ragged sequence lengths");
            let mut real = 0.0;
            for (l, token) in seq.tokens.iter().enumerate() {
                let flat = b * seq_len + l;
                match token {
                    TokenSource::Entity(id) => {
                        batch.entity_ids.push(*id);
                        batch.entity_pos.push(flat);
                    }
                    TokenSource::Relation(id) => {
                        batch.relation_ids.push(*id);
                        batch.relation_pos.push(flat);
                    }
                    TokenSource::Pad => {}
                }
                batch.type_seg.push(b * N_TOKEN_TYPES + seq.types[l] as usize);
                batch.key_mask.push(seq.mask[l]);
                batch.pad_zero_weights.push(if seq.mask[l] { 1.0 } else { 0.0 });
                if seq.mask[l] {
                    real += 1.0;
                }
            }
            batch.real_counts.push(real);
        }
        batch
    }
}

pub struct Decoder {
    pub cfg: DecoderConfig,
    dim: usize,
}

impl Decoder {
    pub fn new(dim: usize, cfg: DecoderConfig) -> Self {
        assert!(
            dim.is_multiple_of(cfg.n_heads),
            "decoder: dim {} not divisible by {} heads",
            dim,
            cfg.n_heads
        );
        assert!(
            (0.0..1.0).contains(&cfg.dropout),
            "decoder: dropout {} outside [0,1)",
            cfg.dropout
        );
        Decoder { cfg, dim }
    }

    pub fn init_params(&self, params: &mut ParamStore, rng: &mut impl rand::Rng) {
        let d = self.dim;
        let bound = 1.0 / (d as f64).sqrt();
        for layer in 0..self.cfg.n_layers {
            for w in ["wq", "wk", "wv", "wo"] {
                params.insert(
                    format!("decoder.layer{}.attn.{}", layer, w),
                    Tensor::uniform(&[d, d], -bound, bound, rng),
                );
            }
            for b in ["bq", "bk", "bv", "bo"] {
                params.insert(format!("decoder.layer{}.attn.{}", layer, b), Tensor::zeros(&[d]));
            }
            for ln in ["ln1", "ln2"] {
                params.insert(format!("decoder.layer{}.{}.gain", layer, ln), Tensor::filled(&[d], 1.0));
                params.insert(format!("decoder.layer{}.{}.bias", layer, ln), Tensor::zeros(&[d]));
            }
            let h = self.cfg.hidden_dim;
            params.insert(
                format!("decoder.layer{}.ffn.w1", layer),
                Tensor::uniform(&[d, h], -bound, bound, rng),
            );
            params.insert(format!("decoder.layer{}.ffn.b1", layer), Tensor::zeros(&[h]));
            let h_bound = 1.0 / (h as f64).sqrt();
            params.insert(
                format!("decoder.layer{}.ffn.w2", layer),
                Tensor::uniform(&[h, d], -h_bound, h_bound, rng),
            );
            params.insert(format!("decoder.layer{}.ffn.b2", layer), Tensor::zeros(&[d]));
        }
        let head_in = match self.cfg.readout {
            Readout::Typewise => N_TOKEN_TYPES * d,
            Readout::MeanPool => d,
        };
        let head_bound = 1.0 / (head_in as f64).sqrt();
        params.insert(
            "decoder.head.w",
            Tensor::uniform(&[head_in, d], -head_bound, head_bound, rng),
        );
        params.insert("decoder.head.b", Tensor::zeros(&[d]));
        if self.cfg.scorer == Scorer::CosineTemperature {
            params.insert("decoder.tau", Tensor::scalar(TAU_INIT));
        }
    }

    /// Run the transformer and readout; returns the `[B, d]` hidden states.
    pub fn decode(
        &self,
        tape: &Tape,
        pv: &ParamVars,
        batch: &DecoderBatch,
        ent: Var,
        rel: Var,
    ) -> Var {
        let d = self.dim;
        let (b, l) = (batch.n_statements, batch.seq_len);
        // assemble token matrix; pad positions stay exactly zero
        let ent_tokens = tape.gather_rows(ent, &batch.entity_ids);
        let rel_tokens = tape.gather_rows(rel, &batch.relation_ids);
        let from_entities = tape.scatter_add_rows(ent_tokens, &batch.entity_pos, b * l);
        let from_relations = tape.scatter_add_rows(rel_tokens, &batch.relation_pos, b * l);
        let mut x = tape.reshape(tape.add(from_entities, from_relations), &[b, l, d]);
        for layer in 0..self.cfg.n_layers {
            x = self.transformer_layer(tape, pv, x, batch, layer);
        }
        // zero out pad rows so the pad pool is a constant zero slot
        let flat = tape.reshape(x, &[b * l, d]);
        let flat = tape.scale_rows_const(flat, &batch.pad_zero_weights);
        let readout = match self.cfg.readout {
            Readout::Typewise => {
                let pooled = tape.segment_pool(flat, &batch.type_seg, b * N_TOKEN_TYPES, self.cfg.pool);
                tape.reshape(pooled, &[b, N_TOKEN_TYPES * d])
            }
            Readout::MeanPool => {
                let seg: Vec<usize> = (0..b * l).map(|i| i / l).collect();
                let summed = tape.segment_pool(flat, &seg, b, PoolKind::Sum);
                let inv: Vec<f64> = batch.real_counts.iter().map(|c| 1.0 / c.max(1.0)).collect();
                tape.scale_rows_const(summed, &inv)
            }
        };
        let hidden = tape.add_bias(tape.matmul(readout, pv.get("decoder.head.w")), pv.get("decoder.head.b"));
        let hidden = tape.activation(hidden, self.cfg.head_activation);
        tape.dropout(hidden, self.cfg.dropout)
    }

    fn transformer_layer(
        &self,
        tape: &Tape,
        pv: &ParamVars,
        x: Var,
        batch: &DecoderBatch,
        layer: usize,
    ) -> Var {
        let d = self.dim;
        let heads = self.cfg.n_heads;
        let dh = d / heads;
        let (b, l) = (batch.n_statements, batch.seq_len);
        let p = |suffix: &str| pv.get(&format!("decoder.layer{}.{}", layer, suffix));

        let split_heads = |v: Var| {
            let reshaped = tape.reshape(v, &[b, l, heads, dh]);
            tape.swap_axes(reshaped, 1, 2)
        };
        let q = split_heads(tape.add_bias(tape.matmul(x, p("attn.wq")), p("attn.bq")));
        let k = split_heads(tape.add_bias(tape.matmul(x, p("attn.wk")), p("attn.bk")));
        let v = split_heads(tape.add_bias(tape.matmul(x, p("attn.wv")), p("attn.bv")));
        let context = scaled_dot_attention(tape, q, k, v, &batch.key_mask, self.cfg.dropout);
        let merged = tape.reshape(tape.swap_axes(context, 1, 2), &[b, l, d]);
        let attn_out = tape.add_bias(tape.matmul(merged, p("attn.wo")), p("attn.bo"));
        let attn_out = tape.dropout(attn_out, self.cfg.dropout);
        let x = tape.layer_norm(tape.add(x, attn_out), p("ln1.gain"), p("ln1.bias"), 1e-5);

        let ff = tape.add_bias(tape.matmul(x, p("ffn.w1")), p("ffn.b1"));
        let ff = tape.gelu(ff);
        let ff = tape.add_bias(tape.matmul(ff, p("ffn.w2")), p("ffn.b2"));
        let ff = tape.dropout(ff, self.cfg.dropout);
        tape.layer_norm(tape.add(x, ff), p("ln2.gain"), p("ln2.bias"), 1e-5)
    }

    /// Score hidden states against every entity. The pad entity is pushed to
    /// an effective minus infinity so it can never rank.
    pub fn score(&self, tape: &Tape, pv: &ParamVars, hidden: Var, ent: Var, pad_entity: usize) -> Var {
        let scores = match self.cfg.scorer {
            Scorer::Dot => tape.matmul(hidden, tape.swap_axes(ent, 0, 1)),
            Scorer::CosineTemperature => {
                let hn = tape.normalize_last(hidden);
                let en = tape.normalize_last(ent);
                let cos = tape.matmul(hn, tape.swap_axes(en, 0, 1));
                tape.scale(cos, pv.get("decoder.tau"))
            }
        };
        let shape = tape.shape(scores);
        let mut mask = Tensor::zeros(&shape);
        let v = shape[1];
        for row in 0..shape[0] {
            mask.data_mut()[row * v + pad_entity] = -1e9;
        }
        tape.add_const(scores, &mask)
    }
}

/// Type-wise pooled readout of transformer outputs (pad rows must already be
/// zeroed): pools each of the five token types separately per statement and
/// concatenates them in slot order.
pub fn typewise_readout(
    tape: &Tape,
    outputs: Var,
    types: &[TokenType],
    pool: PoolKind,
) -> Var {
    let shape = tape.shape(outputs);
    assert_eq!(shape.len(), 3, "typewise_readout: need [B, L, d], got {:?}", shape);
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    assert_eq!(types.len(), b * l, "typewise_readout: {} types for {} tokens", types.len(), b * l);
    let seg: Vec<usize> = types
        .iter()
        .enumerate()
        .map(|(i, t)| (i / l) * N_TOKEN_TYPES + *t as usize)
        .collect();
    let flat = tape.reshape(outputs, &[b * l, d]);
    let pooled = tape.segment_pool(flat, &seg, b * N_TOKEN_TYPES, pool);
    tape.reshape(pooled, &[b, N_TOKEN_TYPES * d])
}
