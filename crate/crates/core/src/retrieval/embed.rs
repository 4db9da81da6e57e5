//! Deterministic text embeddings.
//!
//! The default embedder hashes each token into one of `d` signed buckets and
//! L2-normalizes the bag. It is dependency-free, stable across runs and
//! platforms, and preserves lexical overlap, which is the signal the desk
//! corpora are built on. Real encoders can be plugged in through
//! [`Embedder::External`] as a text-to-vector lookup table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a, fixed here so embeddings never depend on the std hasher.
fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Embedder {
    /// Signed feature hashing over tokens, unit L2 norm.
    HashedBagOfTokens { dim: usize },
    /// Exact-text lookup of externally supplied vectors (normalized on
    /// construction). Unknown texts embed to the zero vector, like empty
    /// input.
    External { dim: usize, table: BTreeMap<String, Vec<f64>> },
}

impl Embedder {
    pub fn hashed(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Embedder::HashedBagOfTokens { dim }
    }

    pub fn external(dim: usize, table: BTreeMap<String, Vec<f64>>) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let table = table
            .into_iter()
            .map(|(k, v)| {
                assert_eq!(v.len(), dim, "external vector for {k:?} has wrong length");
                (k, l2_normalize(v))
            })
            .collect();
        Embedder::External { dim, table }
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::HashedBagOfTokens { dim } | Embedder::External { dim, .. } => *dim,
        }
    }

    /// Embed a text. Deterministic; empty input yields the zero vector, any
    /// other input a unit vector.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        match self {
            Embedder::HashedBagOfTokens { dim } => {
                let mut v = vec![0.0; *dim];
                for token in tokenize(text) {
                    let bucket = (fnv1a(token.as_bytes(), 0) % *dim as u64) as usize;
                    let sign = if fnv1a(token.as_bytes(), 1) & 1 == 0 { 1.0 } else { -1.0 };
                    v[bucket] += sign;
                }
                l2_normalize(v)
            }
            Embedder::External { dim, table } => {
                table.get(text).cloned().unwrap_or_else(|| vec![0.0; *dim])
            }
        }
    }
}

fn l2_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_is_zero_vector() {
        let e = Embedder::hashed(16);
        let v = e.embed("");
        assert_eq!(v, vec![0.0; 16]);
        // Punctuation-only input tokenizes to nothing too.
        assert_eq!(e.embed("!!! ..."), vec![0.0; 16]);
    }

    #[test]
    fn nonempty_input_is_unit_norm() {
        let e = Embedder::hashed(64);
        for text in ["prime suspect", "a", "1987 88 season opener premiere"] {
            let v = e.embed(text);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "norm {norm} for {text:?}");
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let e = Embedder::hashed(32);
        assert_eq!(e.embed("lynda la plante"), e.embed("lynda la plante"));
    }

    #[test]
    fn token_order_does_not_matter() {
        let e = Embedder::hashed(32);
        assert_eq!(e.embed("alpha beta gamma"), e.embed("gamma alpha beta"));
    }

    #[test]
    fn external_lookup_normalizes_and_defaults_to_zero() {
        let mut table = BTreeMap::new();
        table.insert("q".to_string(), vec![3.0, 4.0]);
        let e = Embedder::external(2, table);
        let v = e.embed("q");
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);
        assert_eq!(e.embed("unknown"), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn dot_products_obey_cauchy_schwarz(
            x in "[a-z ]{1,40}",
            y in "[a-z ]{1,40}",
        ) {
            let e = Embedder::hashed(64);
            let vx = e.embed(&x);
            let vy = e.embed(&y);
            let dxx = dot(&vx, &vx);
            prop_assert!(dxx <= 1.0 + 1e-9);
            if vx.iter().any(|&v| v != 0.0) {
                prop_assert!((dxx - 1.0).abs() < 1e-9);
            }
            prop_assert!(dot(&vx, &vy) <= 1.0 + 1e-9);
        }
    }
}
