//! Full model assembly: encoder, decoder, loss, and batched scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, ParamVars, Tape, Tensor, Var};
use crate::decoder::{build_sequence, Decoder, DecoderBatch, DecoderConfig, LinkQuery};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::Result;
use crate::kg::{Dataset, Vocabulary};

pub struct ResaeModel {
    pub vocab: Vocabulary,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl ResaeModel {
    /// Build the model over a dataset's training graph. A zero
    /// `max_qualifiers` budget auto-sizes to the longest qualifier list in
    /// the corpus.
    pub fn new(dataset: &Dataset, enc_cfg: EncoderConfig, mut dec_cfg: DecoderConfig) -> Result<Self> {
        let longest = dataset
            .all_facts()
            .map(|f| f.qualifiers.len())
            .max()
            .unwrap_or(0);
        if dec_cfg.max_qualifiers == 0 {
            dec_cfg.max_qualifiers = longest.max(1);
        }
        let encoder = Encoder::new(&dataset.train, &dataset.vocab, enc_cfg)?;
        let dim = encoder.cfg.dim;
        let decoder = Decoder::new(dim, dec_cfg);
        Ok(ResaeModel {
            vocab: dataset.vocab.clone(),
            encoder,
            decoder,
        })
    }

    /// Fresh parameters drawn from the given seed.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new(seed);
        self.encoder.init_params(&mut params, &mut rng);
        self.decoder.init_params(&mut params, &mut rng);
        params
    }

    /// Verify a checkpoint matches this model's parameter layout.
    pub fn check_params(&self, params: &ParamStore) -> Result<()> {
        let expected = self.init_params(params.seed);
        for (name, tensor) in expected.iter() {
            if !params.contains(name) {
                return Err(crate::error::ResaeError::Checkpoint(format!(
                    "missing parameter {}",
                    name
                )));
            }
            let got = params.get(name);
            if got.shape() != tensor.shape() {
                return Err(crate::error::ResaeError::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    name,
                    got.shape(),
                    tensor.shape()
                )));
            }
        }
        for name in params.names() {
            if !expected.contains(name) {
                return Err(crate::error::ResaeError::Checkpoint(format!(
                    "unexpected parameter {}",
                    name
                )));
            }
        }
        Ok(())
    }

    pub fn batch_from_queries(&self, queries: &[LinkQuery]) -> Result<DecoderBatch> {
        let sequences = queries
            .iter()
            .map(|q| build_sequence(q, self.decoder.cfg.max_qualifiers))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderBatch::new(&sequences))
    }

    /// Encode the graph and score a batch of queries against all entities;
    /// returns `[B, V]` with the pad entity already pushed to -1e9.
    pub fn forward_scores(&self, tape: &Tape, pv: &ParamVars, batch: &DecoderBatch) -> Var {
        let (ent, rel) = self.encoder.encode(tape, pv);
        let hidden = self.decoder.decode(tape, pv, batch, ent, rel);
        self.decoder
            .score(tape, pv, hidden, ent, self.vocab.pad_entity())
    }

    /// Full training loss for a batch: one-vs-all binary cross-entropy over
    /// the real entities with label smoothing.
    pub fn forward_loss(
        &self,
        tape: &Tape,
        pv: &ParamVars,
        batch: &DecoderBatch,
        golds: &[usize],
        label_smoothing: f64,
    ) -> Var {
        let scores = self.forward_scores(tape, pv, batch);
        let v_real = self.vocab.n_real_entities();
        let real = tape.narrow(scores, 1, 0, v_real);
        let targets = smoothed_targets(golds, v_real, label_smoothing);
        tape.bce_with_logits_mean(real, &targets)
    }
}

/// `(1 - eps) * onehot(gold) + eps / V` rows.
pub fn smoothed_targets(golds: &[usize], n_entities: usize, eps: f64) -> Tensor {
    assert!((0.0..1.0).contains(&eps) || eps == 1.0, "label smoothing {} outside [0,1]", eps);
    let mut t = Tensor::filled(&[golds.len(), n_entities], eps / n_entities as f64);
    for (row, &gold) in golds.iter().enumerate() {
        assert!(gold < n_entities, "gold entity {} out of range 0..{}", gold, n_entities);
        t.data_mut()[row * n_entities + gold] += 1.0 - eps;
    }
    t
}
