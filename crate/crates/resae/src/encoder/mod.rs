//! Message-passing encoder with relation self-attention and
//! co-occurrence-driven relation updates.
//!
//! One layer does two things, in order:
//!
//! 1. **Node update.** Every directed fact (forward, inverse-mirrored, and a
//!    self-loop per entity) is assembled into a hyper-feature that
//!    concatenates the subject embedding, the main relation embedding,
//!    pooled qualifier relations, pooled qualifier values, and an
//!    attention-weighted qualifier pool. The attention weights come from a
//!    row-softmaxed similarity matrix over the whole relation table. The
//!    feature is projected through a per-direction weight, dropped out in
//!    train mode, summed into each fact's object entity, and blended with
//!    the previous entity state through trainable scalars alpha and beta.
//!
//! 2. **Relation update.** Per direction, relation embeddings are mixed
//!    through that direction's normalized co-occurrence matrix and a linear
//!    map, blended with the previous state (same alpha/beta), and reassembled
//!    row-wise; the pad row passes through untouched.
//!
//! Qualifier pooling is order-insensitive throughout, which is what makes the
//! model's qualifier-permutation invariance hold exactly.

use crate::autodiff::{Activation, ParamStore, ParamVars, PoolKind, Tape, Tensor, Var};
use crate::kg::{
    add_inverse_facts, compute_cooccurrence, Direction, HyperFact, Vocabulary,
};

/// Which hyper-feature layout a layer assembles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureVariant {
    /// `[h_u, h_r, pooled qual rel, pooled qual val, attention pool]` (5 slots).
    Eq3,
    /// `[h_u, h_r, pooled qual val, pool2(pooled qual rel, attention pool)]` (4 slots).
    Eq4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborNorm {
    None,
    InDegreeMean,
}

#[derive(Clone, Debug)]
pub struct EncoderConfig {
    pub dim: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub feature_variant: FeatureVariant,
    pub pool_phi_q: PoolKind,
    pub pool_gamma_r: PoolKind,
    pub pool_gamma_v: PoolKind,
    pub pool_phi_q2: PoolKind,
    pub activation: Activation,
    pub relation_activation: Activation,
    pub use_attention: bool,
    pub use_coo: bool,
    pub neighbor_norm: NeighborNorm,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 200,
            n_layers: 2,
            dropout: 0.3,
            feature_variant: FeatureVariant::Eq3,
            pool_phi_q: PoolKind::Mean,
            pool_gamma_r: PoolKind::Mean,
            pool_gamma_v: PoolKind::Mean,
            pool_phi_q2: PoolKind::Mean,
            activation: Activation::Tanh,
            relation_activation: Activation::Identity,
            use_attention: true,
            use_coo: true,
            neighbor_norm: NeighborNorm::None,
        }
    }
}

impl EncoderConfig {
    /// Number of concatenated feature slots.
    pub fn feature_slots(&self) -> usize {
        match self.feature_variant {
            FeatureVariant::Eq3 => 5,
            FeatureVariant::Eq4 => 4,
        }
    }
}

pub const ALPHA_INIT: f64 = 0.8;
pub const BETA_INIT: f64 = 0.2;

/// Flattened index arrays over the directed training graph.
#[derive(Clone, Debug, Default)]
struct GraphIndex {
    subj: Vec<usize>,
    rel: Vec<usize>,
    obj: Vec<usize>,
    /// One entry per qualifier occurrence, in fact order.
    qual_rel: Vec<usize>,
    qual_val: Vec<usize>,
    qual_fact: Vec<usize>,
    /// Main relation of the fact each qualifier occurrence belongs to.
    qual_main_rel: Vec<usize>,
    /// Fact rows per direction.
    fwd_rows: Vec<usize>,
    inv_rows: Vec<usize>,
    loop_rows: Vec<usize>,
    /// Incoming fact count per entity (self-loops included).
    in_degree: Vec<f64>,
    n_facts: usize,
}

impl GraphIndex {
    fn build(directed: &[HyperFact], vocab: &Vocabulary) -> Self {
        let mut index = GraphIndex {
            in_degree: vec![0.0; vocab.n_entities()],
            n_facts: directed.len(),
            ..Default::default()
        };
        for (f, fact) in directed.iter().enumerate() {
            index.subj.push(fact.subject);
            index.rel.push(fact.relation);
            index.obj.push(fact.object);
            index.in_degree[fact.object] += 1.0;
            for (qr, qv) in &fact.qualifiers {
                index.qual_rel.push(*qr);
                index.qual_val.push(*qv);
                index.qual_fact.push(f);
                index.qual_main_rel.push(fact.relation);
            }
            match vocab.direction_of(fact.relation) {
                Direction::Forward => index.fwd_rows.push(f),
                Direction::Inverse => index.inv_rows.push(f),
                Direction::Loop => index.loop_rows.push(f),
            }
        }
        index
    }
}

/// The encoder: static graph structure, per-direction co-occurrence
/// constants, and the layer computation.
pub struct Encoder {
    pub cfg: EncoderConfig,
    n_entities: usize,
    n_relations: usize,
    graph: GraphIndex,
    coo_forward: Tensor,
    coo_inverse: Tensor,
    attention_mask_bias: Tensor,
    participating: Vec<usize>,
    pad_relation: usize,
}

impl Encoder {
    /// Build from forward training facts; mirrors them with inverse relations
    /// and appends one self-loop pseudo-fact per entity.
    pub fn new(train_facts: &[HyperFact], vocab: &Vocabulary, cfg: EncoderConfig) -> crate::error::Result<Self> {
        assert!(cfg.dim > 0, "encoder: dim must be positive");
        assert!((0.0..1.0).contains(&cfg.dropout), "encoder: dropout {} outside [0,1)", cfg.dropout);
        let mut directed = add_inverse_facts(train_facts, vocab)?;
        for entity in 0..vocab.n_entities() {
            directed.push(HyperFact {
                subject: entity,
                relation: vocab.loop_relation(),
                object: entity,
                qualifiers: Vec::new(),
            });
        }
        let fwd: Vec<HyperFact> = directed
            .iter()
            .filter(|f| vocab.direction_of(f.relation) == Direction::Forward)
            .cloned()
            .collect();
        let inv: Vec<HyperFact> = directed
            .iter()
            .filter(|f| vocab.direction_of(f.relation) == Direction::Inverse)
            .cloned()
            .collect();
        let coo_forward = compute_cooccurrence(&fwd, vocab, Direction::Forward).values;
        let coo_inverse = compute_cooccurrence(&inv, vocab, Direction::Inverse).values;
        let graph = GraphIndex::build(&directed, vocab);
        let n_relations = vocab.n_relations();
        let attention_mask_bias =
            attention_column_bias(n_relations, &[vocab.loop_relation(), vocab.pad_relation()]);
        Ok(Encoder {
            cfg,
            n_entities: vocab.n_entities(),
            n_relations,
            graph,
            coo_forward,
            coo_inverse,
            attention_mask_bias,
            participating: vocab.participating_relations(),
            pad_relation: vocab.pad_relation(),
        })
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    /// Register this module's parameters.
    pub fn init_params(&self, params: &mut ParamStore, rng: &mut impl rand::Rng) {
        let d = self.cfg.dim;
        let bound = 1.0 / (d as f64).sqrt();
        params.insert(
            "encoder.entity_emb",
            Tensor::uniform(&[self.n_entities, d], -bound, bound, rng),
        );
        params.insert(
            "encoder.relation_emb",
            Tensor::uniform(&[self.n_relations, d], -bound, bound, rng),
        );
        params.insert("encoder.alpha", Tensor::scalar(ALPHA_INIT));
        params.insert("encoder.beta", Tensor::scalar(BETA_INIT));
        let kd = self.cfg.feature_slots() * d;
        let w_bound = 1.0 / (kd as f64).sqrt();
        for dir in ["forward", "inverse", "loop"] {
            params.insert(
                format!("encoder.w_dir.{}", dir),
                Tensor::uniform(&[kd, d], -w_bound, w_bound, rng),
            );
        }
        for dir in ["forward", "inverse", "loop"] {
            params.insert(
                format!("encoder.w_coo.{}", dir),
                Tensor::uniform(&[d, d], -bound, bound, rng),
            );
        }
    }

    /// Relation self-attention over the current relation table with the
    /// loop/pad columns masked out.
    pub fn relation_attention(&self, tape: &Tape, rel: Var) -> Var {
        relation_attention(tape, rel, &self.attention_mask_bias)
    }

    /// One node update over the whole directed graph.
    pub fn node_update(&self, tape: &Tape, pv: &ParamVars, ent: Var, rel: Var) -> Var {
        let cfg = &self.cfg;
        let g = &self.graph;
        let att = if cfg.use_attention {
            Some(self.relation_attention(tape, rel))
        } else {
            None
        };
        let features = hyper_features(
            tape,
            cfg,
            ent,
            rel,
            att,
            &g.subj,
            &g.rel,
            &QualIndex {
                rel: &g.qual_rel,
                val: &g.qual_val,
                fact: &g.qual_fact,
                main_rel: &g.qual_main_rel,
            },
            g.n_facts,
        );
        // per-direction projection, reassembled in fact order
        let mut message_parts = Vec::new();
        for (rows, name) in [
            (&g.fwd_rows, "encoder.w_dir.forward"),
            (&g.inv_rows, "encoder.w_dir.inverse"),
            (&g.loop_rows, "encoder.w_dir.loop"),
        ] {
            if rows.is_empty() {
                continue;
            }
            let slice = tape.gather_rows(features, rows);
            let projected = tape.matmul(slice, pv.get(name));
            message_parts.push(tape.scatter_add_rows(projected, rows, g.n_facts));
        }
        let mut messages = message_parts[0];
        for part in &message_parts[1..] {
            messages = tape.add(messages, *part);
        }
        let messages = tape.dropout(messages, cfg.dropout);
        let mut aggregated = tape.scatter_add_rows(messages, &g.obj, self.n_entities);
        if cfg.neighbor_norm == NeighborNorm::InDegreeMean {
            let inv_deg: Vec<f64> = g.in_degree.iter().map(|d| 1.0 / d.max(1.0)).collect();
            aggregated = tape.scale_rows_const(aggregated, &inv_deg);
        }
        let blended = tape.add(
            tape.scale(aggregated, pv.get("encoder.alpha")),
            tape.scale(ent, pv.get("encoder.beta")),
        );
        tape.activation(blended, cfg.activation)
    }

    /// One relation update: per-direction co-occurrence mixing, alpha/beta
    /// blend, direction-wise reassembly; the pad row passes through unchanged.
    pub fn relation_update(&self, tape: &Tape, pv: &ParamVars, rel: Var) -> Var {
        let alpha = pv.get("encoder.alpha");
        let beta = pv.get("encoder.beta");
        let updated = if self.cfg.use_coo {
            let coo_f = tape.constant(self.coo_forward.clone());
            let coo_i = tape.constant(self.coo_inverse.clone());
            let mixed_f = tape.matmul(tape.matmul(coo_f, rel), pv.get("encoder.w_coo.forward"));
            let mixed_i = tape.matmul(tape.matmul(coo_i, rel), pv.get("encoder.w_coo.inverse"));
            // the loop direction's co-occurrence is identically zero, so its
            // mixed term vanishes and only the alpha part reaches the loop row
            let delta = tape.add(mixed_f, mixed_i);
            tape.add(tape.scale(rel, alpha), tape.scale(delta, beta))
        } else {
            tape.scale(rel, alpha)
        };
        let activated = tape.activation(updated, self.cfg.relation_activation);
        let part = tape.gather_rows(activated, &self.participating);
        let part = tape.scatter_add_rows(part, &self.participating, self.n_relations);
        let pad = tape.gather_rows(rel, &[self.pad_relation]);
        let pad = tape.scatter_add_rows(pad, &[self.pad_relation], self.n_relations);
        tape.add(part, pad)
    }

    /// Apply `n_layers` of node update followed by relation update.
    pub fn encode(&self, tape: &Tape, pv: &ParamVars) -> (Var, Var) {
        let mut ent = pv.get("encoder.entity_emb");
        let mut rel = pv.get("encoder.relation_emb");
        for _ in 0..self.cfg.n_layers {
            ent = self.node_update(tape, pv, ent, rel);
            rel = self.relation_update(tape, pv, rel);
        }
        (ent, rel)
    }
}

/// Additive column mask: `-1e9` in every masked column.
fn attention_column_bias(n: usize, masked_cols: &[usize]) -> Tensor {
    let mut bias = Tensor::zeros(&[n, n]);
    for row in 0..n {
        for &col in masked_cols {
            bias.data_mut()[row * n + col] = -1e9;
        }
    }
    bias
}

/// Row-softmaxed `(H H^T) / sqrt(d)` with an additive column mask and no
/// learned projection.
pub fn relation_attention(tape: &Tape, rel: Var, mask_bias: &Tensor) -> Var {
    let shape = tape.shape(rel);
    assert_eq!(shape.len(), 2, "relation_attention: need [R, d], got {:?}", shape);
    let d = shape[1];
    assert!(d > 0, "relation_attention: zero embedding dimension");
    let rel_t = tape.swap_axes(rel, 0, 1);
    let logits = tape.mul_scalar(tape.matmul(rel, rel_t), 1.0 / (d as f64).sqrt());
    let masked = tape.add_const(logits, mask_bias);
    tape.softmax(masked, 1)
}

/// Borrowed view of the flattened qualifier arrays for a batch of facts.
pub struct QualIndex<'a> {
    pub rel: &'a [usize],
    pub val: &'a [usize],
    pub fact: &'a [usize],
    pub main_rel: &'a [usize],
}

/// Pool qualifier relations three ways for a batch of facts: plain relation
/// pool, plain value pool, and the attention-weighted relation pool. Facts
/// without qualifiers get zero rows.
fn qualifier_pools(
    tape: &Tape,
    cfg: &EncoderConfig,
    ent: Var,
    rel: Var,
    att: Option<Var>,
    quals: &QualIndex,
    n_facts: usize,
) -> (Var, Var, Var) {
    let hq_rel = tape.gather_rows(rel, quals.rel);
    let hq_val = tape.gather_rows(ent, quals.val);
    let gamma_r = tape.segment_pool(hq_rel, quals.fact, n_facts, cfg.pool_gamma_r);
    let gamma_v = tape.segment_pool(hq_val, quals.fact, n_facts, cfg.pool_gamma_v);
    let att_pool = match att {
        Some(att) => {
            let weights = tape.gather_elems2(att, quals.main_rel, quals.rel);
            let weighted = tape.scale_rows(hq_rel, weights);
            tape.segment_pool(weighted, quals.fact, n_facts, cfg.pool_phi_q)
        }
        // ablated attention: the attention slot falls back to the plain pool
        None => gamma_r,
    };
    (gamma_r, gamma_v, att_pool)
}

/// Assemble per-fact hyper-features `[n_facts, slots * d]`.
#[allow(clippy::too_many_arguments)]
fn hyper_features(
    tape: &Tape,
    cfg: &EncoderConfig,
    ent: Var,
    rel: Var,
    att: Option<Var>,
    subj: &[usize],
    main_rel: &[usize],
    quals: &QualIndex,
    n_facts: usize,
) -> Var {
    let h_u = tape.gather_rows(ent, subj);
    let h_r = tape.gather_rows(rel, main_rel);
    let (gamma_r, gamma_v, att_pool) = qualifier_pools(tape, cfg, ent, rel, att, quals, n_facts);
    match cfg.feature_variant {
        FeatureVariant::Eq3 => tape.concat(&[h_u, h_r, gamma_r, gamma_v, att_pool], 1),
        FeatureVariant::Eq4 => {
            let slot = pool_pair(tape, gamma_r, att_pool, cfg.pool_phi_q2);
            tape.concat(&[h_u, h_r, gamma_v, slot], 1)
        }
    }
}

fn pool_pair(tape: &Tape, a: Var, b: Var, kind: PoolKind) -> Var {
    match kind {
        PoolKind::Mean => tape.mul_scalar(tape.add(a, b), 0.5),
        PoolKind::Sum => tape.add(a, b),
        PoolKind::Max => tape.max2(a, b),
    }
}

/// Attention-weighted qualifier pool for a single fact: each qualifier
/// relation embedding is scaled by the attention entry between the fact's
/// main relation and that qualifier relation, then pooled. An empty qualifier
/// list yields the zero vector.
pub fn qualifier_attention_pool(
    tape: &Tape,
    att: Var,
    fact: &HyperFact,
    rel: Var,
    pool: PoolKind,
) -> Var {
    let quals = fact_qual_index(fact);
    let hq_rel = tape.gather_rows(rel, &quals.0);
    let weights = tape.gather_elems2(att, &quals.3, &quals.0);
    let weighted = tape.scale_rows(hq_rel, weights);
    let pooled = tape.segment_pool(weighted, &quals.2, 1, pool);
    let d = tape.shape(rel)[1];
    tape.reshape(pooled, &[d])
}

/// Hyper-feature of a single fact, as a flat `[slots * d]` vector.
pub fn assemble_hyper_feature(
    tape: &Tape,
    cfg: &EncoderConfig,
    fact: &HyperFact,
    ent: Var,
    rel: Var,
    att: Option<Var>,
) -> Var {
    let d = tape.shape(rel)[1];
    assert_eq!(
        tape.shape(ent)[1],
        d,
        "assemble_hyper_feature: entity dim {} != relation dim {}",
        tape.shape(ent)[1],
        d
    );
    let quals = fact_qual_index(fact);
    let features = hyper_features(
        tape,
        cfg,
        ent,
        rel,
        att,
        &[fact.subject],
        &[fact.relation],
        &QualIndex {
            rel: &quals.0,
            val: &quals.1,
            fact: &quals.2,
            main_rel: &quals.3,
        },
        1,
    );
    tape.reshape(features, &[cfg.feature_slots() * d])
}

fn fact_qual_index(fact: &HyperFact) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
    let rel: Vec<usize> = fact.qualifiers.iter().map(|(qr, _)| *qr).collect();
    let val: Vec<usize> = fact.qualifiers.iter().map(|(_, qv)| *qv).collect();
    let seg = vec![0usize; rel.len()];
    let main = vec![fact.relation; rel.len()];
    (rel, val, seg, main)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // dense oracles mirror subscript math
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg(dim: usize) -> EncoderConfig {
        EncoderConfig {
            dim,
            n_layers: 1,
            dropout: 0.0,
            ..Default::default()
        }
    }

    /// A 3-entity vocabulary with 2 real relations, one fact carrying
    /// qualifiers.
    fn tiny_world() -> (Vec<HyperFact>, Vocabulary) {
        let raws = vec![
            crate::kg::RawStatement {
                subject: "a".into(),
                relation: "r0".into(),
                object: "b".into(),
                qualifiers: vec![("r1".into(), "c".into())],
            },
            crate::kg::RawStatement {
                subject: "b".into(),
                relation: "r1".into(),
                object: "c".into(),
                qualifiers: vec![],
            },
        ];
        let vocab = Vocabulary::build(&raws).unwrap();
        let facts = vocab.resolve_all(&raws).unwrap();
        (facts, vocab)
    }

    #[test]
    fn identical_relation_rows_attend_uniformly() {
        let tape = Tape::new();
        let rel = tape.leaf(Tensor::new(vec![2, 2], vec![0.3, -0.4, 0.3, -0.4]));
        let att = relation_attention(&tape, rel, &Tensor::zeros(&[2, 2]));
        let a = tape.value(att);
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dim_identity_table_matches_scalar_softmax() {
        // logits row 0: [1/sqrt(2), 0]; softmax = [0.6698, 0.3302]
        let tape = Tape::new();
        let rel = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let att = tape.value(relation_attention(&tape, rel, &Tensor::zeros(&[2, 2])));
        let z = (1.0f64 / 2.0f64.sqrt()).exp();
        let expected = z / (z + 1.0);
        assert!((att.at2(0, 0) - expected).abs() < 1e-4, "{} vs {}", att.at2(0, 0), expected);
        assert!((att.at2(0, 0) - 0.6698).abs() < 1e-4);
        assert!((att.at2(0, 1) - 0.3302).abs() < 1e-4);
    }

    #[test]
    fn attention_rows_sum_to_one_with_masked_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tape = Tape::new();
        let rel = tape.leaf(Tensor::uniform(&[6, 4], -2.0, 2.0, &mut rng));
        let att = tape.value(relation_attention(&tape, rel, &attention_column_bias(6, &[4, 5])));
        for r in 0..6 {
            let sum: f64 = att.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(att.at2(r, 4) < 1e-12 && att.at2(r, 5) < 1e-12, "masked column leaked");
        }
    }

    #[test]
    fn attention_depends_only_on_the_relation_table() {
        let (facts, vocab) = tiny_world();
        let encoder = Encoder::new(&facts, &vocab, tiny_cfg(4)).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        encoder.init_params(&mut params, &mut rng);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let rel = pv.get("encoder.relation_emb");
        let first = tape.value(encoder.relation_attention(&tape, rel));
        // a no-op change elsewhere (fresh leaf for entities) cannot move it
        let _ = tape.leaf(Tensor::filled(&[vocab.n_entities(), 4], 9.0));
        let second = tape.value(encoder.relation_attention(&tape, rel));
        assert_eq!(first.data(), second.data());
    }

    #[test]
    fn attention_is_scale_invariant_in_normalization_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = Tensor::uniform(&[5, 3], -1.0, 1.0, &mut rng);
        let scaled = Tensor::new(
            base.shape().to_vec(),
            base.data().iter().map(|v| v * 3.0).collect(),
        );
        for table in [base, scaled] {
            let tape = Tape::new();
            let rel = tape.leaf(table);
            let att = tape.value(relation_attention(&tape, rel, &Tensor::zeros(&[5, 5])));
            for r in 0..5 {
                let sum: f64 = att.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                for c in 0..5 {
                    let v = att.at2(r, c);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn single_qualifier_pool_is_weight_times_embedding() {
        let (facts, _) = tiny_world();
        let tape = Tape::new();
        let d = 3;
        let rel = tape.leaf(Tensor::new(
            vec![6, d],
            (0..18).map(|v| v as f64 * 0.1).collect(),
        ));
        // uniform attention substitute with a recognizable weight
        let mut att_t = Tensor::zeros(&[6, 6]);
        att_t.data_mut()[1] = 0.7; // entry (r0, r1)
        let att = tape.leaf(att_t);
        let pooled = qualifier_attention_pool(&tape, att, &facts[0], rel, PoolKind::Mean);
        let pv = tape.value(pooled);
        let h_r1 = [0.3, 0.4, 0.5];
        for (got, want) in pv.data().iter().zip(h_r1.iter().map(|v| v * 0.7)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_qualifier_pool_is_zero() {
        let (facts, _) = tiny_world();
        let tape = Tape::new();
        let rel = tape.leaf(Tensor::filled(&[6, 3], 1.0));
        let att = tape.leaf(Tensor::filled(&[6, 6], 0.5));
        let pooled = qualifier_attention_pool(&tape, att, &facts[1], rel, PoolKind::Mean);
        assert_eq!(tape.value(pooled).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_uniform_weighted_qualifiers_mean_pool() {
        // two qualifiers with weights 0.5 and mean pooling -> 0.25 (h1 + h2)
        let fact = HyperFact {
            subject: 0,
            relation: 0,
            object: 1,
            qualifiers: vec![(1, 2), (2, 0)],
        };
        let tape = Tape::new();
        let rel = tape.leaf(Tensor::new(
            vec![3, 2],
            vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0],
        ));
        let att = tape.leaf(Tensor::filled(&[3, 3], 0.5));
        let pooled = tape.value(qualifier_attention_pool(&tape, att, &fact, rel, PoolKind::Mean));
        let expected = [0.25 * (1.0 + 3.0), 0.25 * (2.0 + 4.0)];
        for (g, w) in pooled.data().iter().zip(expected) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn eq3_feature_has_five_slots() {
        let (facts, vocab) = tiny_world();
        let cfg = tiny_cfg(4);
        let tape = Tape::new();
        let ent = tape.leaf(Tensor::filled(&[vocab.n_entities(), 4], 0.1));
        let rel = tape.leaf(Tensor::filled(&[vocab.n_relations(), 4], 0.2));
        let att = tape.leaf(Tensor::filled(
            &[vocab.n_relations(), vocab.n_relations()],
            0.1,
        ));
        let feat = assemble_hyper_feature(&tape, &cfg, &facts[0], ent, rel, Some(att));
        assert_eq!(tape.shape(feat), vec![20]);
    }

    #[test]
    fn qualifier_permutation_leaves_feature_unchanged() {
        let cfg = tiny_cfg(3);
        let fact = HyperFact {
            subject: 0,
            relation: 0,
            object: 1,
            qualifiers: vec![(1, 2), (2, 1), (1, 0)],
        };
        let mut permuted = fact.clone();
        permuted.qualifiers.reverse();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ent_t = Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng);
        let rel_t = Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng);
        let att_t = Tensor::uniform(&[3, 3], 0.0, 1.0, &mut rng);
        let run = |f: &HyperFact| {
            let tape = Tape::new();
            let ent = tape.leaf(ent_t.clone());
            let rel = tape.leaf(rel_t.clone());
            let att = tape.leaf(att_t.clone());
            tape.value(assemble_hyper_feature(&tape, &cfg, f, ent, rel, Some(att)))
                .data()
                .to_vec()
        };
        let (a, b) = (run(&fact), run(&permuted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eq4_with_attention_off_reduces_to_plain_pool() {
        let mut cfg = tiny_cfg(2);
        cfg.feature_variant = FeatureVariant::Eq4;
        cfg.use_attention = false;
        let fact = HyperFact {
            subject: 0,
            relation: 0,
            object: 1,
            qualifiers: vec![(1, 1)],
        };
        let tape = Tape::new();
        let ent = tape.leaf(Tensor::zeros(&[2, 2]));
        let rel = tape.leaf(Tensor::new(vec![2, 2], vec![0.0, 0.0, 5.0, -3.0]));
        let feat = tape.value(assemble_hyper_feature(&tape, &cfg, &fact, ent, rel, None));
        // slots: h_u (2) | h_r (2) | gamma_v (2) | phi_q2(gamma_r, gamma_r) (2)
        assert_eq!(&feat.data()[6..8], &[5.0, -3.0]);
    }

    /// Independent dense-loop forward for a one-layer node update.
    fn reference_node_update(
        facts: &[HyperFact],
        vocab: &Vocabulary,
        cfg: &EncoderConfig,
        params: &ParamStore,
    ) -> Vec<Vec<f64>> {
        let d = cfg.dim;
        let ent = params.get("encoder.entity_emb");
        let rel = params.get("encoder.relation_emb");
        let alpha = params.get("encoder.alpha").item();
        let beta = params.get("encoder.beta").item();
        let n_rel = vocab.n_relations();
        // attention: softmax over (H H^T)/sqrt(d) with loop+pad columns at -1e9
        let mut att = vec![vec![0.0; n_rel]; n_rel];
        for i in 0..n_rel {
            let mut logits = vec![0.0; n_rel];
            for (j, logit) in logits.iter_mut().enumerate() {
                let mut dot = 0.0;
                for c in 0..d {
                    dot += rel.at2(i, c) * rel.at2(j, c);
                }
                *logit = dot / (d as f64).sqrt();
                if j == vocab.loop_relation() || j == vocab.pad_relation() {
                    *logit = -1e9;
                }
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for j in 0..n_rel {
                att[i][j] = exps[j] / sum;
            }
        }
        // directed graph: forward + inverses + loops
        let mut directed = add_inverse_facts(facts, vocab).unwrap();
        for e in 0..vocab.n_entities() {
            directed.push(HyperFact {
                subject: e,
                relation: vocab.loop_relation(),
                object: e,
                qualifiers: vec![],
            });
        }
        let mut agg = vec![vec![0.0; d]; vocab.n_entities()];
        for fact in &directed {
            // mean pools over qualifiers
            let nq = fact.qualifiers.len();
            let mut gamma_r = vec![0.0; d];
            let mut gamma_v = vec![0.0; d];
            let mut att_pool = vec![0.0; d];
            for (qr, qv) in &fact.qualifiers {
                let w = att[fact.relation][*qr];
                for c in 0..d {
                    gamma_r[c] += rel.at2(*qr, c) / nq as f64;
                    gamma_v[c] += ent.at2(*qv, c) / nq as f64;
                    att_pool[c] += w * rel.at2(*qr, c) / nq as f64;
                }
            }
            let mut feature = Vec::with_capacity(5 * d);
            feature.extend((0..d).map(|c| ent.at2(fact.subject, c)));
            feature.extend((0..d).map(|c| rel.at2(fact.relation, c)));
            feature.extend(gamma_r.iter());
            feature.extend(gamma_v.iter());
            feature.extend(att_pool.iter());
            let w_name = match vocab.direction_of(fact.relation) {
                Direction::Forward => "encoder.w_dir.forward",
                Direction::Inverse => "encoder.w_dir.inverse",
                Direction::Loop => "encoder.w_dir.loop",
            };
            let w = params.get(w_name);
            for c in 0..d {
                let mut m = 0.0;
                for (k, f) in feature.iter().enumerate() {
                    m += f * w.at2(k, c);
                }
                agg[fact.object][c] += m;
            }
        }
        let mut out = vec![vec![0.0; d]; vocab.n_entities()];
        for v in 0..vocab.n_entities() {
            for c in 0..d {
                out[v][c] = (alpha * agg[v][c] + beta * ent.at2(v, c)).tanh();
            }
        }
        out
    }

    #[test]
    fn node_update_matches_dense_reference() {
        let (facts, vocab) = tiny_world();
        let cfg = tiny_cfg(4);
        let encoder = Encoder::new(&facts, &vocab, cfg.clone()).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        encoder.init_params(&mut params, &mut rng);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let updated = encoder.node_update(
            &tape,
            &pv,
            pv.get("encoder.entity_emb"),
            pv.get("encoder.relation_emb"),
        );
        let got = tape.value(updated);
        let want = reference_node_update(&facts, &vocab, &cfg, &params);
        for v in 0..vocab.n_entities() {
            for c in 0..cfg.dim {
                assert!(
                    (got.at2(v, c) - want[v][c]).abs() < 1e-12,
                    "entity {} dim {}: {} vs {}",
                    v,
                    c,
                    got.at2(v, c),
                    want[v][c]
                );
            }
        }
    }

    #[test]
    fn node_update_alpha_zero_beta_one_identity_keeps_entities() {
        let (facts, vocab) = tiny_world();
        let mut cfg = tiny_cfg(4);
        cfg.activation = Activation::Identity;
        let encoder = Encoder::new(&facts, &vocab, cfg).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        encoder.init_params(&mut params, &mut rng);
        *params.get_mut("encoder.alpha") = Tensor::scalar(0.0);
        *params.get_mut("encoder.beta") = Tensor::scalar(1.0);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let ent = pv.get("encoder.entity_emb");
        let updated = encoder.node_update(&tape, &pv, ent, pv.get("encoder.relation_emb"));
        assert_eq!(tape.value(updated).data(), tape.value(ent).data());
    }

    #[test]
    fn node_update_single_message_with_unit_alpha() {
        // one fact, no qualifiers, alpha=1 beta=0, identity activation:
        // the object's update equals the projected hyper-feature message
        let raws = vec![crate::kg::RawStatement {
            subject: "a".into(),
            relation: "r".into(),
            object: "b".into(),
            qualifiers: vec![],
        }];
        let vocab = Vocabulary::build(&raws).unwrap();
        let facts = vocab.resolve_all(&raws).unwrap();
        let mut cfg = tiny_cfg(2);
        cfg.activation = Activation::Identity;
        let encoder = Encoder::new(&facts, &vocab, cfg.clone()).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        encoder.init_params(&mut params, &mut rng);
        *params.get_mut("encoder.alpha") = Tensor::scalar(1.0);
        *params.get_mut("encoder.beta") = Tensor::scalar(0.0);
        // zero the loop projection so self-loop messages vanish
        *params.get_mut("encoder.w_dir.loop") = Tensor::zeros(&[10, 2]);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let updated = encoder.node_update(
            &tape,
            &pv,
            pv.get("encoder.entity_emb"),
            pv.get("encoder.relation_emb"),
        );
        // reference: message = [h_a, h_r, 0, 0, 0] . w_forward
        let ent = params.get("encoder.entity_emb");
        let rel = params.get("encoder.relation_emb");
        let w = params.get("encoder.w_dir.forward");
        let b = vocab.entity_id("b").unwrap();
        for c in 0..2 {
            let mut m = 0.0;
            for k in 0..2 {
                m += ent.at2(0, k) * w.at2(k, c);
                m += rel.at2(0, k) * w.at2(2 + k, c);
            }
            assert!((tape.value(updated).at2(b, c) - m).abs() < 1e-12);
        }
    }

    #[test]
    fn relation_update_matches_dense_reference() {
        let (facts, vocab) = tiny_world();
        let cfg = tiny_cfg(3);
        let encoder = Encoder::new(&facts, &vocab, cfg.clone()).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        encoder.init_params(&mut params, &mut rng);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let updated = encoder.relation_update(&tape, &pv, pv.get("encoder.relation_emb"));
        let got = tape.value(updated);

        // independent dense computation: alpha*h + beta*(coo . h) . w per direction
        let rel = params.get("encoder.relation_emb");
        let alpha = params.get("encoder.alpha").item();
        let beta = params.get("encoder.beta").item();
        let n = vocab.n_relations();
        let d = cfg.dim;
        let mut expected = vec![vec![0.0; d]; n];
        for (coo, w_name) in [
            (&encoder.coo_forward, "encoder.w_coo.forward"),
            (&encoder.coo_inverse, "encoder.w_coo.inverse"),
        ] {
            let w = params.get(w_name);
            for i in 0..n {
                for c in 0..d {
                    let mut mixed = 0.0;
                    for j in 0..n {
                        if coo.at2(i, j) == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            mixed += coo.at2(i, j) * rel.at2(j, k) * w.at2(k, c);
                        }
                    }
                    expected[i][c] += beta * mixed;
                }
            }
        }
        for i in 0..n {
            for c in 0..d {
                let base = if i == vocab.pad_relation() {
                    rel.at2(i, c)
                } else {
                    alpha * rel.at2(i, c) + expected[i][c]
                };
                assert!(
                    (got.at2(i, c) - base).abs() < 1e-12,
                    "relation {} dim {}: {} vs {}",
                    i,
                    c,
                    got.at2(i, c),
                    base
                );
            }
        }
    }

    #[test]
    fn relation_update_with_beta_zero_scales_by_alpha() {
        let (facts, vocab) = tiny_world();
        let encoder = Encoder::new(&facts, &vocab, tiny_cfg(3)).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        encoder.init_params(&mut params, &mut rng);
        *params.get_mut("encoder.beta") = Tensor::scalar(0.0);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let rel = pv.get("encoder.relation_emb");
        let updated = tape.value(encoder.relation_update(&tape, &pv, rel));
        let orig = params.get("encoder.relation_emb");
        let alpha = params.get("encoder.alpha").item();
        for i in 0..vocab.n_relations() {
            for c in 0..3 {
                let want = if i == vocab.pad_relation() {
                    orig.at2(i, c)
                } else {
                    alpha * orig.at2(i, c)
                };
                assert!((updated.at2(i, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relation_update_without_coo_drops_the_beta_term() {
        let (facts, vocab) = tiny_world();
        let mut cfg = tiny_cfg(3);
        cfg.use_coo = false;
        let encoder = Encoder::new(&facts, &vocab, cfg).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        encoder.init_params(&mut params, &mut rng);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let updated = tape.value(encoder.relation_update(&tape, &pv, pv.get("encoder.relation_emb")));
        let orig = params.get("encoder.relation_emb");
        let alpha = params.get("encoder.alpha").item();
        for i in 0..vocab.n_relations() {
            if i == vocab.pad_relation() {
                continue;
            }
            for c in 0..3 {
                assert!((updated.at2(i, c) - alpha * orig.at2(i, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_layer_encode_is_the_identity() {
        let (facts, vocab) = tiny_world();
        let mut cfg = tiny_cfg(3);
        cfg.n_layers = 0;
        let encoder = Encoder::new(&facts, &vocab, cfg).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        encoder.init_params(&mut params, &mut rng);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let (ent, rel) = encoder.encode(&tape, &pv);
        assert_eq!(tape.value(ent).data(), params.get("encoder.entity_emb").data());
        assert_eq!(tape.value(rel).data(), params.get("encoder.relation_emb").data());
    }

    #[test]
    fn two_layers_equal_two_manual_single_layer_calls() {
        let (facts, vocab) = tiny_world();
        let mut cfg = tiny_cfg(3);
        cfg.n_layers = 2;
        let encoder = Encoder::new(&facts, &vocab, cfg).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        encoder.init_params(&mut params, &mut rng);

        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let (ent2, rel2) = encoder.encode(&tape, &pv);

        let mut ent = pv.get("encoder.entity_emb");
        let mut rel = pv.get("encoder.relation_emb");
        for _ in 0..2 {
            ent = encoder.node_update(&tape, &pv, ent, rel);
            rel = encoder.relation_update(&tape, &pv, rel);
        }
        assert_eq!(tape.value(ent2).data(), tape.value(ent).data());
        assert_eq!(tape.value(rel2).data(), tape.value(rel).data());
    }

    #[test]
    fn eval_mode_encode_is_bitwise_deterministic() {
        let (facts, vocab) = tiny_world();
        let encoder = Encoder::new(&facts, &vocab, tiny_cfg(4)).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        encoder.init_params(&mut params, &mut rng);
        let run = || {
            let tape = Tape::new();
            let pv = tape.register_params(&params);
            let (ent, rel) = encoder.encode(&tape, &pv);
            (tape.value(ent).data().to_vec(), tape.value(rel).data().to_vec())
        };
        let (e1, r1) = run();
        let (e2, r2) = run();
        assert!(e1.iter().zip(&e2).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(r1.iter().zip(&r2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn ablated_layer_reduces_to_plain_concat_update() {
        // use_attention=false, use_coo=false, no qualifiers anywhere: the
        // layer must match a minimal concat[h_u, h_r] message-passing update
        // computed with plain loops on a 5-entity graph.
        let raws = vec![
            crate::kg::RawStatement { subject: "a".into(), relation: "p".into(), object: "b".into(), qualifiers: vec![] },
            crate::kg::RawStatement { subject: "b".into(), relation: "q".into(), object: "c".into(), qualifiers: vec![] },
            crate::kg::RawStatement { subject: "c".into(), relation: "p".into(), object: "d".into(), qualifiers: vec![] },
            crate::kg::RawStatement { subject: "d".into(), relation: "q".into(), object: "e".into(), qualifiers: vec![] },
        ];
        let vocab = Vocabulary::build(&raws).unwrap();
        let facts = vocab.resolve_all(&raws).unwrap();
        let mut cfg = tiny_cfg(3);
        cfg.use_attention = false;
        cfg.use_coo = false;
        let encoder = Encoder::new(&facts, &vocab, cfg.clone()).unwrap();
        let mut params = ParamStore::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        encoder.init_params(&mut params, &mut rng);
        let tape = Tape::new();
        let pv = tape.register_params(&params);
        let (got_ent, got_rel) = encoder.encode(&tape, &pv);

        // minimal reference: one layer, messages concat[h_u, h_r] (qualifier
        // slots zero) through the direction weight, summed into objects
        let d = cfg.dim;
        let ent0 = params.get("encoder.entity_emb");
        let rel0 = params.get("encoder.relation_emb");
        let alpha = params.get("encoder.alpha").item();
        let beta = params.get("encoder.beta").item();
        let mut directed = add_inverse_facts(&facts, &vocab).unwrap();
        for e in 0..vocab.n_entities() {
            directed.push(HyperFact { subject: e, relation: vocab.loop_relation(), object: e, qualifiers: vec![] });
        }
        let mut agg = vec![vec![0.0; d]; vocab.n_entities()];
        for fact in &directed {
            let w = match vocab.direction_of(fact.relation) {
                Direction::Forward => params.get("encoder.w_dir.forward"),
                Direction::Inverse => params.get("encoder.w_dir.inverse"),
                Direction::Loop => params.get("encoder.w_dir.loop"),
            };
            for c in 0..d {
                let mut m = 0.0;
                for k in 0..d {
                    m += ent0.at2(fact.subject, k) * w.at2(k, c);
                    m += rel0.at2(fact.relation, k) * w.at2(d + k, c);
                }
                agg[fact.object][c] += m;
            }
        }
        let want_ent: Vec<Vec<f64>> = (0..vocab.n_entities())
            .map(|v| (0..d).map(|c| (alpha * agg[v][c] + beta * ent0.at2(v, c)).tanh()).collect())
            .collect();
        let got = tape.value(got_ent);
        for v in 0..vocab.n_entities() {
            for c in 0..d {
                assert!(
                    (got.at2(v, c) - want_ent[v][c]).abs() < 1e-12,
                    "entity {} dim {}",
                    v,
                    c
                );
            }
        }
        // relation table: participating rows scale by alpha, pad unchanged
        let got_r = tape.value(got_rel);
        for i in 0..vocab.n_relations() {
            for c in 0..d {
                let want = if i == vocab.pad_relation() {
                    rel0.at2(i, c)
                } else {
                    alpha * rel0.at2(i, c)
                };
                assert!((got_r.at2(i, c) - want).abs() < 1e-12);
            }
        }
    }
}
