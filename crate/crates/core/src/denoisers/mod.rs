//! Desk-scale denoisers.
//!
//! [`GmmDenoiser`] returns the exact posterior mean `E[x0 | z_t]` for a world
//! where every conditioning token denotes a Gaussian mixture per latent cell,
//! which makes it a statistical oracle for the samplers. [`AttnDenoiser`] is a
//! small untrained cross-attention block with an analytic backward pass.

mod attn;
mod caption;
mod embed;
mod gmm;

pub use attn::{AttnConfig, AttnDenoiser, AttnGrads, AttnParams};
pub use caption::oracle_caption;
pub use embed::{embed_prompt, embed_prompt_with_dim, normalize_prompt, CondEmbedding, DEFAULT_EMBED_DIM};
pub use gmm::{gmm_posterior_x0, Component, CondMixture, GmmDenoiser, GmmWorld, Mixture1d, FALLBACK_ID};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiseError {
    #[error("prompt text is empty")]
    EmptyText,
    #[error("conditioning `{0}` is not defined in the world")]
    UnknownCond(String),
    #[error("`{cond}` defines {defined} channels but the latent has {latent}")]
    ChannelMismatch { cond: String, defined: usize, latent: usize },
    #[error("embedding has dimension {got}, denoiser expects {expected}")]
    EmbeddingDim { expected: usize, got: usize },
    #[error("world definition line {line}: {reason}")]
    BadWorld { line: usize, reason: String },
    #[error("invalid parameters: {0}")]
    BadParams(String),
}
