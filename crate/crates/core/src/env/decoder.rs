use sha2::{Digest, Sha256};

use super::ACTION_BOUND;
use crate::error::{check_dim, FpoError, Result};
use crate::numkit::Mlp;

/// Frozen base policy mapping `(s, x)` to `H` low-level actions.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseDecoder {
    /// `x` reshaped to `H x d_a` and clipped.
    Identity { chunk_len: usize, action_dim: usize },
    /// Frozen network on `[s, x]`, output reshaped and clipped.
    Frozen {
        net: Mlp,
        state_dim: usize,
        chunk_len: usize,
        action_dim: usize,
    },
}

impl BaseDecoder {
    pub fn identity(chunk_len: usize, action_dim: usize) -> Self {
        BaseDecoder::Identity {
            chunk_len,
            action_dim,
        }
    }

    pub fn frozen(net: Mlp, state_dim: usize, chunk_len: usize, action_dim: usize) -> Result<Self> {
        let latent = chunk_len * action_dim;
        check_dim("decoder input", state_dim + latent, net.input_dim())?;
        check_dim("decoder output", latent, net.output_dim())?;
        Ok(BaseDecoder::Frozen {
            net,
            state_dim,
            chunk_len,
            action_dim,
        })
    }

    pub fn chunk_len(&self) -> usize {
        match self {
            BaseDecoder::Identity { chunk_len, .. } | BaseDecoder::Frozen { chunk_len, .. } => *chunk_len,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            BaseDecoder::Identity { action_dim, .. } | BaseDecoder::Frozen { action_dim, .. } => *action_dim,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.chunk_len() * self.action_dim()
    }

    pub fn net(&self) -> Option<&Mlp> {
        match self {
            BaseDecoder::Identity { .. } => None,
            BaseDecoder::Frozen { net, .. } => Some(net),
        }
    }

    pub fn decode(&self, s: &[f64], x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim("decoder latent", self.latent_dim(), x.len())?;
        let flat = match self {
            BaseDecoder::Identity { .. } => x.to_vec(),
            BaseDecoder::Frozen { net, state_dim, .. } => {
                check_dim("decoder state", *state_dim, s.len())?;
                let mut input = Vec::with_capacity(s.len() + x.len());
                input.extend_from_slice(s);
                input.extend_from_slice(x);
                net.forward(&input)?
            }
        };
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(FpoError::NonFinite("decoded action".into()));
        }
        Ok(flat
            .chunks(self.action_dim())
            .map(|c| c.iter().map(|v| v.clamp(-ACTION_BOUND, ACTION_BOUND)).collect())
            .collect())
    }

    /// Hex SHA-256 of the frozen parameters (`"identity"` for identity mode).
    pub fn param_hash(&self) -> String {
        match self {
            BaseDecoder::Identity { .. } => "identity".to_string(),
            BaseDecoder::Frozen { net, .. } => {
                let mut h = Sha256::new();
                for s in net.sizes() {
                    h.update((*s as u64).to_le_bytes());
                }
                for p in net.params() {
                    h.update(p.to_le_bytes());
                }
                h.finalize().iter().map(|b| format!("{b:02x}")).collect()
            }
        }
    }
}
