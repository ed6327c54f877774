//! Filtered-ranking evaluation: MRR and Hits@K over head and tail queries.

use std::collections::HashMap;

use serde::Serialize;

use crate::autodiff::{ParamStore, Tape};
use crate::decoder::{LinkQuery, Side};
use crate::error::{ResaeError, Result};
use crate::kg::{HyperFact, Vocabulary};
use crate::model::ResaeModel;

/// Metrics over one query side.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct SideReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub queries: usize,
}

/// Macro-averaged metrics over all queries plus the per-side breakdown.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub head: SideReport,
    pub tail: SideReport,
    pub queries: usize,
}

/// `(known entity, relation, canonical qualifier multiset)`.
type QueryKey = (usize, usize, Vec<(usize, usize)>);

/// Lookup from a query key to every entity known to complete that statement
/// across all splits.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    map: HashMap<QueryKey, Vec<usize>>,
}

fn canonical_qualifiers(qualifiers: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut q = qualifiers.to_vec();
    q.sort_unstable();
    q
}

impl FilterIndex {
    /// Index both query directions of every fact.
    pub fn build<'a>(facts: impl IntoIterator<Item = &'a HyperFact>, vocab: &Vocabulary) -> Self {
        let mut map: HashMap<QueryKey, Vec<usize>> = HashMap::new();
        for fact in facts {
            let quals = canonical_qualifiers(&fact.qualifiers);
            let inverse = vocab.inverse(fact.relation).expect("forward relation");
            map.entry((fact.subject, fact.relation, quals.clone()))
                .or_default()
                .push(fact.object);
            map.entry((fact.object, inverse, quals))
                .or_default()
                .push(fact.subject);
        }
        for targets in map.values_mut() {
            targets.sort_unstable();
            targets.dedup();
        }
        FilterIndex { map }
    }

    /// All true targets of a query (always contains the query's own gold).
    pub fn targets(&self, query: &LinkQuery) -> &[usize] {
        self.map
            .get(&(
                query.known,
                query.relation,
                canonical_qualifiers(&query.qualifiers),
            ))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Pessimistic gold rank after filtering: known-true competitors (other than
/// the gold itself) are removed, and equal scores count against the gold.
pub fn filtered_rank(scores: &[f64], gold: usize, filter_targets: &[usize]) -> usize {
    let gold_score = scores[gold];
    let mut rank = 1;
    for (i, &s) in scores.iter().enumerate() {
        if i == gold || filter_targets.binary_search(&i).is_ok() {
            continue;
        }
        if s >= gold_score {
            rank += 1;
        }
    }
    rank
}

fn summarize(ranks: &[usize]) -> SideReport {
    if ranks.is_empty() {
        return SideReport::default();
    }
    let n = ranks.len() as f64;
    SideReport {
        mrr: ranks.iter().map(|r| 1.0 / *r as f64).sum::<f64>() / n,
        hits1: ranks.iter().filter(|r| **r <= 1).count() as f64 / n,
        hits10: ranks.iter().filter(|r| **r <= 10).count() as f64 / n,
        queries: ranks.len(),
    }
}

/// Evaluate facts with both head and tail queries per fact, macro-averaged
/// over the pooled queries.
pub fn evaluate(
    model: &ResaeModel,
    params: &ParamStore,
    facts: &[HyperFact],
    filter: &FilterIndex,
    batch_size: usize,
) -> Result<EvalReport> {
    let mut queries = Vec::with_capacity(facts.len() * 2);
    for fact in facts {
        queries.push(LinkQuery::from_fact(fact, &model.vocab, Side::Head));
        queries.push(LinkQuery::from_fact(fact, &model.vocab, Side::Tail));
    }
    evaluate_queries(model, params, &queries, filter, batch_size)
}

pub fn evaluate_queries(
    model: &ResaeModel,
    params: &ParamStore,
    queries: &[LinkQuery],
    filter: &FilterIndex,
    batch_size: usize,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(ResaeError::Eval("no queries".into()));
    }
    let n_real = model.vocab.n_real_entities();
    for q in queries {
        if q.gold >= n_real {
            return Err(ResaeError::Eval(format!(
                "gold entity id {} is not a real vocabulary entity",
                q.gold
            )));
        }
    }
    let mut head_ranks = Vec::new();
    let mut tail_ranks = Vec::new();
    for chunk in queries.chunks(batch_size.max(1)) {
        let tape = Tape::new();
        let pv = tape.register_params(params);
        let batch = model.batch_from_queries(chunk)?;
        let scores = model.forward_scores(&tape, &pv, &batch);
        let scores = tape.value(scores);
        for (row, query) in chunk.iter().enumerate() {
            let mut row_scores = scores.row(row).to_vec();
            row_scores[model.vocab.pad_entity()] = f64::NEG_INFINITY;
            let rank = filtered_rank(&row_scores, query.gold, filter.targets(query));
            match query.side {
                Side::Head => head_ranks.push(rank),
                Side::Tail => tail_ranks.push(rank),
            }
        }
    }
    let mut all = head_ranks.clone();
    all.extend_from_slice(&tail_ranks);
    let overall = summarize(&all);
    Ok(EvalReport {
        mrr: overall.mrr,
        hits1: overall.hits1,
        hits10: overall.hits10,
        head: summarize(&head_ranks),
        tail: summarize(&tail_ranks),
        queries: all.len(),
    })
}
