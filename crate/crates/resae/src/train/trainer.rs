//! Seeded training loop with periodic filtered evaluation and best-checkpoint
//! retention.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::eval::{evaluate, FilterIndex, SideReport};
use crate::autodiff::{Adam, ParamStore, Tape, Tensor};
use crate::decoder::{LinkQuery, Side};
use crate::error::{ResaeError, Result};
use crate::kg::Dataset;
use crate::model::ResaeModel;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub label_smoothing: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 128,
            lr: 1e-4,
            label_smoothing: 0.1,
            seed: 42,
            eval_every: 25,
        }
    }
}

/// One evaluation event in the metrics trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEvent {
    pub epoch: usize,
    pub split: String,
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub head: SideReport,
    pub tail: SideReport,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_valid_mrr: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub epochs_run: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, epoch: u64, batch: u64) -> u64 {
    splitmix64(seed ^ splitmix64(epoch ^ splitmix64(batch)))
}

fn param_norms(params: &ParamStore) -> String {
    params
        .iter()
        .map(|(name, t)| {
            let norm = t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            format!("{}={:.3e}", name, norm)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Both-direction training queries for every fact.
pub fn training_queries(dataset: &Dataset) -> Vec<LinkQuery> {
    let mut queries = Vec::with_capacity(dataset.train.len() * 2);
    for fact in &dataset.train {
        queries.push(LinkQuery::from_fact(fact, &dataset.vocab, Side::Head));
        queries.push(LinkQuery::from_fact(fact, &dataset.vocab, Side::Tail));
    }
    queries
}

/// Run the training loop. Evaluation events (on the validation split, every
/// `eval_every` epochs and after the final epoch) stream through `sink`; the
/// checkpoint with the best validation MRR lands in `run_dir/best.ckpt` when
/// a run directory is given, falling back to the final parameters when no
/// evaluation ever ran.
pub fn train(
    model: &ResaeModel,
    params: &mut ParamStore,
    dataset: &Dataset,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
    sink: &mut dyn FnMut(&TraceEvent),
) -> Result<TrainOutcome> {
    assert!(cfg.batch_size >= 1, "train: batch_size must be >= 1");
    assert!(
        (0.0..1.0).contains(&cfg.label_smoothing),
        "train: label smoothing {} outside [0,1)",
        cfg.label_smoothing
    );
    let queries = training_queries(dataset);
    if queries.is_empty() {
        return Err(ResaeError::Train("no training facts".into()));
    }
    let filter = FilterIndex::build(dataset.all_facts(), &model.vocab);
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..queries.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed));
    let started = Instant::now();
    let checkpoint_path = run_dir.map(|d| d.join("best.ckpt"));
    let mut best_valid: Option<f64> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_queries: Vec<LinkQuery> =
                chunk.iter().map(|i| queries[*i].clone()).collect();
            let golds: Vec<usize> = batch_queries.iter().map(|q| q.gold).collect();
            let tape = Tape::train(derive_seed(cfg.seed, epoch as u64, batch_idx as u64));
            let pv = tape.register_params(params);
            let batch = model.batch_from_queries(&batch_queries)?;
            let loss = model.forward_loss(&tape, &pv, &batch, &golds, cfg.label_smoothing);
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(ResaeError::Train(format!(
                    "non-finite loss {} at epoch {} batch {}; parameter norms: {}",
                    loss_value,
                    epoch,
                    batch_idx,
                    param_norms(params)
                )));
            }
            let mut grads = tape.backward(loss);
            let mut grad_map: BTreeMap<String, Tensor> = BTreeMap::new();
            for (name, var) in pv.iter() {
                if let Some(g) = grads.take(*var) {
                    grad_map.insert(name.clone(), g);
                }
            }
            adam.step(params, &grad_map);
        }
        let is_eval_epoch =
            cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
        if is_eval_epoch && !dataset.valid.is_empty() {
            let report = evaluate(model, params, &dataset.valid, &filter, cfg.batch_size)?;
            let event = TraceEvent {
                epoch: epoch + 1,
                split: "valid".into(),
                mrr: report.mrr,
                hits1: report.hits1,
                hits10: report.hits10,
                head: report.head,
                tail: report.tail,
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            sink(&event);
            if best_valid.is_none_or(|b| report.mrr > b) {
                best_valid = Some(report.mrr);
                if let Some(path) = &checkpoint_path {
                    params.save(path)?;
                }
            }
        }
    }
    if let Some(path) = &checkpoint_path {
        if best_valid.is_none() {
            params.save(path)?;
        }
    }
    Ok(TrainOutcome {
        best_valid_mrr: best_valid,
        checkpoint: checkpoint_path,
        epochs_run: cfg.epochs,
    })
}
