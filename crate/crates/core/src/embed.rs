//! Embedding port and the deterministic hashing embedder.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::text::{fnv1a64, tokenize, SplitMix64};
use crate::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 64;
pub const DETERMINISTIC_TAG: &str = "fnv-splitmix-v1";

/// Maps text to a unit vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    /// Identifies the embedding space. Vectors with different tags are never compared.
    fn tag(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Hash-seeded embedder: every token seeds a splitmix64 stream that yields an
/// approximately standard-normal vector (sum of 12 uniforms minus 6); token
/// vectors are summed and the sum is L2-normalized.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dimension: usize,
    tag: String,
}

impl DeterministicEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, tag: DETERMINISTIC_TAG.into() }
    }
}

impl Default for DeterministicEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl Embedder for DeterministicEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn tag(&self) -> &str {
        &self.tag
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        embed_deterministic(text, self.dimension)
    }
}

pub fn token_vector(token: &str, d: usize, out: &mut [f64]) {
    let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()));
    for slot in out.iter_mut().take(d) {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += rng.next_f64();
        }
        *slot += acc - 6.0;
    }
}

pub fn embed_deterministic(text: &str, d: usize) -> Result<Vec<f64>> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyTokenStream);
    }
    let mut acc = vec![0.0; d];
    for token in &tokens {
        token_vector(token, d, &mut acc);
    }
    normalize(&mut acc)?;
    Ok(acc)
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

pub fn normalize(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`, clamped to [-1, 1] against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    if u == v {
        return Ok(1.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
