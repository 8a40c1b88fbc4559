use serde::{Deserialize, Serialize};

use super::yat_dense::{YatCache, YatDenseParams};
use super::{visit_prefixed, visit_prefixed_mut, Grads, Params};
use crate::error::{shape_err, Result};
use crate::linalg::{Matrix, RngState};
use crate::yat::{softermax, softermax_backward, ScaleMode, SoftermaxPolicy};

/// Multi-head attention with yat projections and softermax normalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub proj_q: YatDenseParams,
    pub proj_k: YatDenseParams,
    pub proj_v: YatDenseParams,
    pub proj_out: YatDenseParams,
    pub heads: usize,
    pub attn_alpha: f64,
    pub softermax_policy: SoftermaxPolicy,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    q_cache: YatCache,
    k_cache: YatCache,
    v_cache: YatCache,
    o_cache: YatCache,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    seq_len: usize,
    theta: f64,
    ln_base: f64,
    /// Per sequence, per head: raw `QKᵀ` before scaling.
    raw: Vec<Matrix>,
    /// Per sequence, per head: normalised attention weights.
    weights: Vec<Matrix>,
}

impl AttentionCache {
    /// Attention weights for sequence `seq`, head `head` (`t×t`, rows sum to 1).
    pub fn weights(&self, seq: usize, head: usize, heads: usize) -> &Matrix {
        &self.weights[seq * heads + head]
    }
}

#[derive(Clone, Debug)]
pub struct AttentionGrads {
    /// Parameter gradients in [`Params`] order.
    pub params: Grads,
    pub input: Matrix,
}

impl AttentionParams {
    pub fn new(width: usize, heads: usize, state: RngState) -> (Self, RngState) {
        let (proj_q, state) = YatDenseParams::new(width, width, false, state);
        let (proj_k, state) = YatDenseParams::new(width, width, false, state);
        let (proj_v, state) = YatDenseParams::new(width, width, false, state);
        let (proj_out, state) = YatDenseParams::new(width, width, false, state);
        (
            AttentionParams {
                proj_q,
                proj_k,
                proj_v,
                proj_out,
                heads,
                attn_alpha: 1.0,
                softermax_policy: SoftermaxPolicy::ClampShift,
            },
            state,
        )
    }

    pub fn width(&self) -> usize {
        self.proj_q.inputs()
    }

    pub fn head_dim(&self) -> usize {
        self.width() / self.heads.max(1)
    }

    fn attn_base(&self) -> f64 {
        ScaleMode::MainText
            .base(self.head_dim().max(1))
            .expect("head dimension is at least 1")
    }

    /// `Θ_attn`, computed from the per-head key width.
    pub fn attn_theta(&self) -> f64 {
        self.attn_base().powf(self.attn_alpha)
    }

    fn validate(&self, x: &Matrix, seq_len: usize) -> Result<()> {
        let w = self.width();
        if self.heads == 0 || w % self.heads != 0 {
            return Err(shape_err!("width {w} is not divisible by {} heads", self.heads));
        }
        for p in [&self.proj_q, &self.proj_k, &self.proj_v, &self.proj_out] {
            if p.kernel.shape() != (w, w) {
                return Err(shape_err!("attention projection is {:?}, expected {w}x{w}", p.kernel.shape()));
            }
        }
        if x.cols() != w {
            return Err(shape_err!("attention expects width {w}, got {}", x.cols()));
        }
        if seq_len == 0 || x.rows() % seq_len != 0 {
            return Err(shape_err!("{} rows do not split into sequences of {seq_len}", x.rows()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_cached(x, x.rows()).map(|(y, _)| y)
    }

    /// `x` stacks `x.rows() / seq_len` independent sequences of `seq_len` tokens.
    pub fn forward_cached(&self, x: &Matrix, seq_len: usize) -> Result<(Matrix, AttentionCache)> {
        self.validate(x, seq_len)?;
        let (q, q_cache) = self.proj_q.forward_cached(x)?;
        let (k, k_cache) = self.proj_k.forward_cached(x)?;
        let (v, v_cache) = self.proj_v.forward_cached(x)?;
        let theta = self.attn_theta();
        let dh = self.head_dim();
        let t = seq_len;
        let mut mixed = Matrix::zeros(x.rows(), x.cols());
        let mut raw = Vec::new();
        let mut weights = Vec::new();
        for s in 0..x.rows() / t {
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = block(&q, s * t, t, cols.clone());
                let kh = block(&k, s * t, t, cols.clone());
                let (r, p) = head_weights(&qh, &kh, theta, self.softermax_policy)?;
                for i in 0..t {
                    let out = &mut mixed.row_mut(s * t + i)[cols.clone()];
                    for j in 0..t {
                        let pij = p.get(i, j);
                        for (o, vv) in out.iter_mut().zip(&v.row(s * t + j)[cols.clone()]) {
                            *o += pij * vv;
                        }
                    }
                }
                raw.push(r);
                weights.push(p);
            }
        }
        let (y, o_cache) = self.proj_out.forward_cached(&mixed)?;
        Ok((
            y,
            AttentionCache {
                q_cache,
                k_cache,
                v_cache,
                o_cache,
                q,
                k,
                v,
                seq_len: t,
                theta,
                ln_base: self.attn_base().ln(),
                raw,
                weights,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, upstream: &Matrix) -> Result<AttentionGrads> {
        let go = self.proj_out.backward(&cache.o_cache, upstream)?;
        let d_mixed = &go.input;
        let t = cache.seq_len;
        let dh = self.head_dim();
        let (n, w) = cache.q.shape();
        let mut dq = Matrix::zeros(n, w);
        let mut dk = Matrix::zeros(n, w);
        let mut dv = Matrix::zeros(n, w);
        let mut d_alpha = 0.0;
        for s in 0..n / t {
            for h in 0..self.heads {
                let idx = s * self.heads + h;
                let p = &cache.weights[idx];
                let r = &cache.raw[idx];
                let cols = h * dh..(h + 1) * dh;
                for i in 0..t {
                    let gi = &d_mixed.row(s * t + i)[cols.clone()];
                    // dP_ij = dO_i · V_j ; dV_j += P_ij dO_i
                    let dp: Vec<f64> = (0..t)
                        .map(|j| crate::linalg::dot(gi, &cache.v.row(s * t + j)[cols.clone()]))
                        .collect();
                    for j in 0..t {
                        let pij = p.get(i, j);
                        for (d, g) in dv.row_mut(s * t + j)[cols.clone()].iter_mut().zip(gi) {
                            *d += pij * g;
                        }
                    }
                    let logits: Vec<f64> = r.row(i).iter().map(|v| cache.theta * v).collect();
                    let ds = softermax_backward(&logits, p.row(i), &dp, self.softermax_policy);
                    for j in 0..t {
                        d_alpha += ds[j] * logits[j];
                        let dr = cache.theta * ds[j];
                        if dr == 0.0 {
                            continue;
                        }
                        let kj = &cache.k.row(s * t + j)[cols.clone()];
                        let qi = &cache.q.row(s * t + i)[cols.clone()];
                        for (d, kv) in dq.row_mut(s * t + i)[cols.clone()].iter_mut().zip(kj) {
                            *d += dr * kv;
                        }
                        for (d, qv) in dk.row_mut(s * t + j)[cols.clone()].iter_mut().zip(qi) {
                            *d += dr * qv;
                        }
                    }
                }
            }
        }
        d_alpha *= cache.ln_base;
        let gq = self.proj_q.backward(&cache.q_cache, &dq)?;
        let gk = self.proj_k.backward(&cache.k_cache, &dk)?;
        let gv = self.proj_v.backward(&cache.v_cache, &dv)?;
        let mut input = gq.input.clone();
        input.add_assign(&gk.input)?;
        input.add_assign(&gv.input)?;
        let mut params = Vec::new();
        params.extend(gq.into_param_grads());
        params.extend(gk.into_param_grads());
        params.extend(gv.into_param_grads());
        params.extend(go.into_param_grads());
        params.push(vec![d_alpha]);
        Ok(AttentionGrads { params, input })
    }
}

impl Params for AttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_prefixed("q", &self.proj_q, f);
        visit_prefixed("k", &self.proj_k, f);
        visit_prefixed("v", &self.proj_v, f);
        visit_prefixed("out", &self.proj_out, f);
        f("attn_alpha", &[1], std::slice::from_ref(&self.attn_alpha));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_prefixed_mut("q", &mut self.proj_q, f);
        visit_prefixed_mut("k", &mut self.proj_k, f);
        visit_prefixed_mut("v", &mut self.proj_v, f);
        visit_prefixed_mut("out", &mut self.proj_out, f);
        f("attn_alpha", std::slice::from_mut(&mut self.attn_alpha));
    }
}

fn block(m: &Matrix, row0: usize, rows: usize, cols: std::ops::Range<usize>) -> Matrix {
    let mut out = Matrix::zeros(rows, cols.len());
    for i in 0..rows {
        out.row_mut(i).copy_from_slice(&m.row(row0 + i)[cols.clone()]);
    }
    out
}

/// Raw scores `QKᵀ` and the softermax-normalised rows of `Θ·QKᵀ` for one head.
pub fn head_weights(
    q: &Matrix,
    k: &Matrix,
    theta: f64,
    policy: SoftermaxPolicy,
) -> Result<(Matrix, Matrix)> {
    let r = q.matmul_t(k)?;
    let mut p = Matrix::zeros(r.rows(), r.cols());
    for i in 0..r.rows() {
        let logits: Vec<f64> = r.row(i).iter().map(|v| theta * v).collect();
        p.row_mut(i).copy_from_slice(&softermax(&logits, policy)?);
    }
    Ok((r, p))
}

/// Attention over a single sequence `x` (`t×width`).
pub fn e_mha(x: &Matrix, params: &AttentionParams) -> Result<Matrix> {
    params.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DrawKind;

    fn random_tokens(t: usize, w: usize, seed: u64) -> Matrix {
        let (v, _) = RngState::new(seed).draw(DrawKind::StandardNormal, t * w).unwrap();
        Matrix::from_vec(t, w, v).unwrap()
    }

    #[test]
    fn single_token_outputs_projected_value() {
        let (p, _) = AttentionParams::new(4, 2, RngState::new(0));
        let x = random_tokens(1, 4, 1);
        let (y, cache) = p.forward_cached(&x, 1).unwrap();
        for h in 0..2 {
            assert_eq!(cache.weights(0, h, 2).as_slice(), &[1.0]);
        }
        let v = p.proj_v.forward(&x).unwrap();
        let want = p.proj_out.forward(&v).unwrap();
        assert!(y.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn rows_are_probability_vectors() {
        let (p, _) = AttentionParams::new(6, 3, RngState::new(2));
        let x = random_tokens(10, 6, 3);
        let (_, cache) = p.forward_cached(&x, 5).unwrap();
        for s in 0..2 {
            for h in 0..3 {
                for row in cache.weights(s, h, 3).row_iter() {
                    assert!(row.iter().all(|&v| v >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hand_set_weights() {
        let (mut p, _) = AttentionParams::new(2, 1, RngState::new(0));
        p.attn_alpha = 0.0;
        let q = Matrix::identity(2);
        let (_, w) = head_weights(&q, &q, p.attn_theta(), SoftermaxPolicy::Strict).unwrap();
        let want = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((w.get(i, j) - want[i][j]).abs() < 1e-15);
            }
        }
        assert!(head_weights(&q, &q.scale(-1.0), 1.0, SoftermaxPolicy::Strict).is_err());
        p.softermax_policy = SoftermaxPolicy::Strict;
        // bias-free yat projections keep the logits non-negative
        assert!(p.forward(&random_tokens(3, 2, 8)).is_ok());
    }

    #[test]
    fn indivisible_width_rejected() {
        let (mut p, _) = AttentionParams::new(6, 2, RngState::new(0));
        p.heads = 4;
        assert!(p.forward(&random_tokens(2, 6, 0)).is_err());
        p.heads = 2;
        assert!(p.forward(&random_tokens(2, 5, 0)).is_err());
    }
}
