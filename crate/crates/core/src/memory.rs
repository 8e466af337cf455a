//! The per-session memory bank and top-K retrieval.
//!
//! A bank is an append-only, time-ordered store of (scene graph, pooled
//! embedding, timestamp) entries. Retrieval is an exact linear scan: bank
//! sizes are stream-length, so no approximate index is needed. Ranking is
//! by cosine similarity descending with ties broken toward recency (larger
//! `seq_id` first); entries whose embedding has zero norm rank last instead
//! of failing the whole retrieval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, GraphEmbedding};
use crate::scene_graph::SceneGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("embedding dimension {got} does not match the bank's dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("timestamp {got} regresses behind the last entry at {last}")]
    TimestampRegression { last: f64, got: f64 },
    #[error("memory bank is empty")]
    EmptyBank,
    #[error("top-K retrieval requires k >= 1")]
    InvalidTopK,
}

/// One stored observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub graph: SceneGraph,
    pub embedding: GraphEmbedding,
    pub timestamp_s: f64,
    pub seq_id: u64,
}

/// Append-only store for one stream session. The first append fixes the
/// embedding dimension. An optional entry cap (off by default) evicts
/// oldest-first for bounded-memory deployments; `seq_id` remains strictly
/// increasing either way.
#[derive(Debug, Clone, Default)]
pub struct MemoryBank {
    entries: Vec<MemoryEntry>,
    next_seq: u64,
    dim: Option<usize>,
    max_entries: Option<usize>,
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_entries(max_entries: usize) -> Self {
        Self {
            max_entries: Some(max_entries.max(1)),
            ..Self::default()
        }
    }

    pub fn append(
        &mut self,
        graph: SceneGraph,
        embedding: GraphEmbedding,
    ) -> Result<u64, MemoryError> {
        if let Some(dim) = self.dim {
            if embedding.dim() != dim {
                return Err(MemoryError::DimensionMismatch {
                    expected: dim,
                    got: embedding.dim(),
                });
            }
        } else {
            self.dim = Some(embedding.dim());
        }
        if let Some(last) = self.entries.last() {
            if graph.timestamp_s < last.timestamp_s {
                return Err(MemoryError::TimestampRegression {
                    last: last.timestamp_s,
                    got: graph.timestamp_s,
                });
            }
        }
        let seq_id = self.next_seq;
        self.next_seq += 1;
        let timestamp_s = graph.timestamp_s;
        self.entries.push(MemoryEntry {
            graph,
            embedding,
            timestamp_s,
            seq_id,
        });
        if let Some(cap) = self.max_entries {
            if self.entries.len() > cap {
                let overflow = self.entries.len() - cap;
                self.entries.drain(..overflow);
            }
        }
        Ok(seq_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn entry_by_seq(&self, seq_id: u64) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.seq_id == seq_id)
    }
}

/// One retrieval hit. `similarity` is `None` when the stored embedding had
/// zero norm (ranked below every finite similarity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub seq_id: u64,
    pub timestamp_s: f64,
    pub similarity: Option<f64>,
}

/// Ranked retrieval output: `min(k_requested, bank size)` hits, similarity
/// non-increasing, ties broken by larger `seq_id` first.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub k_requested: usize,
    pub hits: Vec<RetrievalHit>,
}

/// Rank the whole bank against the query embedding and keep the top `k`.
///
/// A query embedding with zero norm degrades every similarity to `None`
/// rather than erroring: the stream stays alive on degenerate input, and
/// recency ordering takes over.
pub fn retrieve_top_k(
    bank: &MemoryBank,
    query: &GraphEmbedding,
    k: usize,
) -> Result<RetrievalResult, MemoryError> {
    if k == 0 {
        return Err(MemoryError::InvalidTopK);
    }
    if bank.is_empty() {
        return Err(MemoryError::EmptyBank);
    }
    if let Some(dim) = bank.dim() {
        if query.dim() != dim {
            return Err(MemoryError::DimensionMismatch {
                expected: dim,
                got: query.dim(),
            });
        }
    }
    let mut hits: Vec<RetrievalHit> = bank
        .entries()
        .iter()
        .map(|entry| RetrievalHit {
            seq_id: entry.seq_id,
            timestamp_s: entry.timestamp_s,
            similarity: match cosine_similarity(&entry.embedding, query) {
                Ok(sim) => Some(sim),
                Err(EmbeddingError::ZeroVector) => None,
                Err(other) => unreachable!("dimensions checked above: {other}"),
            },
        })
        .collect();
    hits.sort_by(rank_order);
    hits.truncate(k);
    Ok(RetrievalResult {
        k_requested: k,
        hits,
    })
}

/// Similarity descending, `None` last, ties by larger `seq_id` first.
pub fn rank_order(a: &RetrievalHit, b: &RetrievalHit) -> std::cmp::Ordering {
    match (a.similarity, b.similarity) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(b.seq_id.cmp(&a.seq_id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => b.seq_id.cmp(&a.seq_id),
    }
}
