use serde::{Deserialize, Serialize};

use super::attention::{AttentionCache, AttentionParams};
use super::mask::{token_mask, token_mask_backward, MaskingConfig};
use super::yat_dense::{YatCache, YatDenseParams};
use super::{visit_prefixed, visit_prefixed_mut, Grads, Params};
use crate::error::Result;
use crate::linalg::{Matrix, RngState};

/// Encoder block without normalisation:
/// `H = M + attn(M)`, `Y = H + ffn_out(ffn_in(H))` where `M` is the masked input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub masking: MaskingConfig,
    pub attention: AttentionParams,
    pub ffn_in: YatDenseParams,
    pub ffn_out: YatDenseParams,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    mask: Vec<bool>,
    attention: AttentionCache,
    ffn_in: YatCache,
    ffn_out: YatCache,
}

impl BlockCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attention
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

impl EncoderBlock {
    pub fn new(width: usize, mlp_width: usize, heads: usize, mask_ratio: f64, state: RngState) -> (Self, RngState) {
        let (attention, state) = AttentionParams::new(width, heads, state);
        let (ffn_in, state) = YatDenseParams::new(width, mlp_width, false, state);
        let (ffn_out, state) = YatDenseParams::new(mlp_width, width, false, state);
        (
            EncoderBlock {
                masking: MaskingConfig::new(mask_ratio, width),
                attention,
                ffn_in,
                ffn_out,
            },
            state,
        )
    }

    pub fn forward_cached(
        &self,
        x: &Matrix,
        seq_len: usize,
        state: RngState,
        training: bool,
    ) -> Result<(Matrix, BlockCache, RngState)> {
        let (masked, mask, state) = token_mask(x, &self.masking, state, training)?;
        let (a, attention) = self.attention.forward_cached(&masked, seq_len)?;
        let h = masked.add(&a)?;
        let (f1, ffn_in) = self.ffn_in.forward_cached(&h)?;
        let (f2, ffn_out) = self.ffn_out.forward_cached(&f1)?;
        let y = h.add(&f2)?;
        Ok((
            y,
            BlockCache {
                mask,
                attention,
                ffn_in,
                ffn_out,
            },
            state,
        ))
    }

    /// Parameter gradients in [`Params`] order and the input gradient.
    pub fn backward(&self, cache: &BlockCache, upstream: &Matrix) -> Result<(Grads, Matrix)> {
        let g_out = self.ffn_out.backward(&cache.ffn_out, upstream)?;
        let g_in = self.ffn_in.backward(&cache.ffn_in, &g_out.input)?;
        let mut dh = upstream.clone();
        dh.add_assign(&g_in.input)?;
        let g_attn = self.attention.backward(&cache.attention, &dh)?;
        let mut dm = dh;
        dm.add_assign(&g_attn.input)?;
        let (dx, d_token) = token_mask_backward(&cache.mask, &dm);
        let mut grads = vec![d_token];
        grads.extend(g_attn.params);
        grads.extend(g_in.into_param_grads());
        grads.extend(g_out.into_param_grads());
        Ok((grads, dx))
    }
}

impl Params for EncoderBlock {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.masking.visit(f);
        visit_prefixed("attn", &self.attention, f);
        visit_prefixed("ffn_in", &self.ffn_in, f);
        visit_prefixed("ffn_out", &self.ffn_out, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.masking.visit_mut(f);
        visit_prefixed_mut("attn", &mut self.attention, f);
        visit_prefixed_mut("ffn_in", &mut self.ffn_in, f);
        visit_prefixed_mut("ffn_out", &mut self.ffn_out, f);
    }
}
