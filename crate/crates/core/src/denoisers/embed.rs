use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::DenoiseError;

pub const DEFAULT_EMBED_DIM: usize = 16;
const EMBED_DOMAIN: &[u8] = b"rpg-embed/v1";

/// A conditioning token: the normalized prompt text and a unit vector derived
/// from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CondEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Lowercases and collapses whitespace. This is the identity used to match
/// prompts against world definitions.
pub fn normalize_prompt(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn embed_prompt(text: &str) -> Result<CondEmbedding, DenoiseError> {
    embed_prompt_with_dim(text, DEFAULT_EMBED_DIM)
}

/// Stand-in text encoder: the normalized text is hashed with SHA-256, the
/// digest seeds a ChaCha generator, and `dim` standard normal draws are
/// scaled to unit length.
pub fn embed_prompt_with_dim(text: &str, dim: usize) -> Result<CondEmbedding, DenoiseError> {
    let id = normalize_prompt(text);
    if id.is_empty() {
        return Err(DenoiseError::EmptyText);
    }
    assert!(dim > 0, "embedding dimension must be positive");
    let mut hasher = Sha256::new();
    hasher.update(EMBED_DOMAIN);
    hasher.update((dim as u64).to_le_bytes());
    hasher.update(id.as_bytes());
    let seed: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let vector = raw.into_iter().map(|v| v / norm).collect();
    Ok(CondEmbedding { id, vector })
}
