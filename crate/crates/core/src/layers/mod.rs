//! Layers with analytic backward passes.
//!
//! Every layer exposes its trainable tensors through [`Params`] as an ordered
//! list of named flat buffers. Gradients come back as [`Grads`] in the same
//! order, which is what the optimizer, the gradient checker and the checkpoint
//! writer all iterate over.

mod attention;
mod block;
mod dense;
mod dropout;
mod mask;
mod patch;
mod pool;
mod yat_dense;

pub use attention::{e_mha, head_weights, AttentionCache, AttentionGrads, AttentionParams};
pub use block::{BlockCache, EncoderBlock};
pub use dense::{dense_forward, Activation, DenseCache, DenseGrads, DenseParams};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use mask::{token_mask, token_mask_backward, MaskingConfig};
pub use patch::{
    extract_patches, patch_embed, scatter_patches, ImageShape, PatchCache, Projection,
};
pub use pool::{global_avg_pool, global_avg_pool_backward};
pub use yat_dense::{
    yat_dense_backward, yat_dense_forward, YatCache, YatDenseGrads, YatDenseParams,
};

/// Gradients for a parameter set, one flat buffer per tensor in visit order.
pub type Grads = Vec<Vec<f64>>;

/// Ordered access to a layer's trainable tensors.
pub trait Params {
    /// Calls `f(name, shape, data)` for each tensor in declaration order.
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, p| n += p.len());
        n
    }

    /// Zero-filled gradient buffers matching the parameter layout.
    fn zero_grads(&self) -> Grads {
        let mut out = Vec::new();
        self.visit(&mut |_, _, p| out.push(vec![0.0; p.len()]));
        out
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |_, _, p| out.extend_from_slice(p));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |_, p| {
            p.copy_from_slice(&flat[at..at + p.len()]);
            at += p.len();
        });
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |n, _, _| out.push(n.to_string()));
        out
    }
}

/// Visits each child with its name prefixed by `prefix.`.
pub(crate) fn visit_prefixed(
    prefix: &str,
    child: &dyn Params,
    f: &mut dyn FnMut(&str, &[usize], &[f64]),
) {
    child.visit(&mut |n, s, p| f(&format!("{prefix}.{n}"), s, p));
}

pub(crate) fn visit_prefixed_mut(
    prefix: &str,
    child: &mut dyn Params,
    f: &mut dyn FnMut(&str, &mut [f64]),
) {
    child.visit_mut(&mut |n, p| f(&format!("{prefix}.{n}"), p));
}

/// Adds `src` into `dst` entry by entry.
pub fn accumulate(dst: &mut Grads, src: &Grads) {
    for (d, s) in dst.iter_mut().zip(src) {
        for (a, b) in d.iter_mut().zip(s) {
            *a += b;
        }
    }
}
