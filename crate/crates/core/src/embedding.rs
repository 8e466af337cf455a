//! Text embeddings: token matrices, mean pooling, cosine similarity, and a
//! deterministic hashing embedder.
//!
//! Pooling sums each column with an exactly rounded accumulator (Shewchuk
//! partials, the `fsum` algorithm), so the pooled vector depends only on the
//! multiset of token rows, not their order. The hashing embedder maps each
//! whitespace token to a unit-norm vector derived from FNV-1a + SplitMix64
//! (see [`crate::rng`]), giving bit-identical embeddings across runs and
//! platforms; it stands in for a model text encoder in tests and scripted
//! replays. Its mean pool is a bag-of-tokens representation: permuting
//! tokens does not change it. That is a documented limitation, not a bug.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

/// Default dimension of the hashing embedder: small enough for fast
/// property tests, large enough that random collisions are negligible.
pub const DEFAULT_HASHING_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("embedding matrix data length {got} does not match {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        got: usize,
    },
    #[error("embedding values must be finite")]
    NonFiniteValue,
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroVector,
    #[error("cannot embed empty text")]
    EmptyText,
}

/// Per-token embeddings for one text: `n_tokens x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenEmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, EmbeddingError> {
        if rows == 0 || cols == 0 {
            return Err(EmbeddingError::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(EmbeddingError::ShapeMismatch {
                rows,
                cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, EmbeddingError> {
        let n = rows.len();
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(EmbeddingError::ShapeMismatch {
                rows: n,
                cols: d,
                got: rows.iter().map(Vec::len).sum(),
            });
        }
        Self::new(n, d, rows.into_iter().flatten().collect())
    }

    pub fn n_tokens(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// A pooled, fixed-length embedding for one graph or query text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding(Vec<f64>);

impl GraphEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::EmptyMatrix);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Exactly rounded sum of a sequence of finite f64 values (Shewchuk
/// partials as in CPython's `math.fsum`). The result is the correctly
/// rounded value of the exact real sum, so it is independent of input
/// order.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Halfway-case correction: round to even using the sign of the next
    // lower-order partial.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Mean over the token dimension: component `j` of the output is the mean
/// of column `j`. Uses [`exact_sum`], so the result does not depend on
/// token order.
pub fn mean_pool(matrix: &TokenEmbeddingMatrix) -> GraphEmbedding {
    let n = matrix.n_tokens() as f64;
    let values = (0..matrix.dim())
        .map(|j| exact_sum((0..matrix.n_tokens()).map(|i| matrix.row(i)[j])) / n)
        .collect();
    GraphEmbedding::new(values).expect("pooled embedding of a valid matrix is valid")
}

/// Cosine similarity `(a . b) / (|a| |b|)`, in `[-1, 1]` up to floating
/// error. A zero-norm side is reported as [`EmbeddingError::ZeroVector`];
/// retrieval ranks such entries last rather than failing.
pub fn cosine_similarity(a: &GraphEmbedding, b: &GraphEmbedding) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Deterministic test embedder: whitespace tokens map to unit-norm vectors
/// seeded by FNV-1a of the token bytes and filled from SplitMix64 draws in
/// `[-1, 1)`, then normalized. Identical text yields byte-identical
/// matrices on every platform.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASHING_DIM)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedder dimension must be at least 1");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-token vector; pure function of `(dim, token)`.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = SplitMix64::from_bytes(token.as_bytes());
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.next_signed()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Unreachable for continuous draws; keep the contract anyway.
            v[0] = 1.0;
        } else {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }

    pub fn embed(&self, text: &str) -> Result<TokenEmbeddingMatrix, EmbeddingError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        TokenEmbeddingMatrix::from_rows(tokens.iter().map(|t| self.token_vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: &[f64]) -> GraphEmbedding {
        GraphEmbedding::new(values.to_vec()).unwrap()
    }

    #[test]
    fn mean_pool_basic() {
        let m = TokenEmbeddingMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(mean_pool(&m).as_slice(), &[2.0, 3.0]);

        let m = TokenEmbeddingMatrix::from_rows(vec![vec![5.0, 6.0, 7.0]]).unwrap();
        assert_eq!(mean_pool(&m).as_slice(), &[5.0, 6.0, 7.0]);
    }

    #[test]
    fn mean_pool_matches_naive_double_loop() {
        let mut rng = SplitMix64::new(99);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..16).map(|_| rng.next_signed()).collect())
            .collect();
        let m = TokenEmbeddingMatrix::from_rows(rows.clone()).unwrap();
        let pooled = mean_pool(&m);
        for j in 0..16 {
            let mut sum = 0.0;
            for row in &rows {
                sum += row[j];
            }
            assert!((pooled.as_slice()[j] - sum / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_sum_is_order_independent() {
        let mut rng = SplitMix64::new(3);
        let values: Vec<f64> = (0..257).map(|_| rng.next_signed() * 1e6).collect();
        let forward = exact_sum(values.iter().copied());
        let backward = exact_sum(values.iter().rev().copied());
        assert_eq!(forward.to_bits(), backward.to_bits());
        // Classic cancellation case a naive sum gets wrong in one order.
        assert_eq!(exact_sum([1e16, 1.0, -1e16]), 1.0);
        assert_eq!(exact_sum([]), 0.0);
    }

    #[test]
    fn cosine_worked_values() {
        let a = emb(&[3.0, 4.0]);
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(
            cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(),
            0.0
        );
        let sim = cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[1.0, 1.0])).unwrap();
        assert!((sim - 1.0 / 2.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn cosine_errors() {
        let zero = emb(&[0.0, 0.0]);
        let one = emb(&[1.0, 0.0]);
        assert_eq!(
            cosine_similarity(&zero, &one).unwrap_err(),
            EmbeddingError::ZeroVector
        );
        assert!(matches!(
            cosine_similarity(&one, &emb(&[1.0, 2.0, 3.0])).unwrap_err(),
            EmbeddingError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn hashing_embedder_shape_and_determinism() {
        let e = HashingEmbedder::default();
        let m = e.embed("woman in red").unwrap();
        assert_eq!(m.n_tokens(), 3);
        assert_eq!(m.dim(), 64);
        let m2 = e.embed("woman in red").unwrap();
        assert_eq!(m, m2);
        assert_eq!(e.embed("  ").unwrap_err(), EmbeddingError::EmptyText);
    }

    #[test]
    fn hashing_embedder_token_vectors_are_unit_norm() {
        let e = HashingEmbedder::default();
        for token in ["woman", "in", "red", "x"] {
            let v = e.token_vector(token);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bag_of_tokens_pooling_is_exactly_order_free() {
        let e = HashingEmbedder::default();
        let a = mean_pool(&e.embed("woman in red").unwrap());
        let b = mean_pool(&e.embed("red in woman").unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_validation() {
        assert_eq!(
            TokenEmbeddingMatrix::new(0, 4, vec![]).unwrap_err(),
            EmbeddingError::EmptyMatrix
        );
        assert!(matches!(
            TokenEmbeddingMatrix::new(2, 2, vec![1.0; 3]).unwrap_err(),
            EmbeddingError::ShapeMismatch { .. }
        ));
        assert_eq!(
            TokenEmbeddingMatrix::new(1, 1, vec![f64::NAN]).unwrap_err(),
            EmbeddingError::NonFiniteValue
        );
    }
}
