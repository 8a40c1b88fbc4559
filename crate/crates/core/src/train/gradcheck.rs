use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, cross_entropy_grad};
use super::model::{HeadKind, Model, ModelSpec};
use super::regularizer::{e_regularizer_grad, e_regularizer_penalty};
use crate::error::Result;
use crate::layers::{
    extract_patches, global_avg_pool, global_avg_pool_backward, scatter_patches, Activation,
    AttentionParams, DenseParams, EncoderBlock, ImageShape, Params, Projection, YatDenseParams,
};
use crate::linalg::{dot, DrawKind, Matrix, RngState};
use crate::yat::{softermax, softermax_backward, SoftermaxPolicy};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    /// Affine layer without activation.
    LinearDense,
    /// Affine layer with the GeLU activation.
    GeluDense,
    YatDense,
    SoftermaxHead,
    Pooling,
    PatchEmbed,
    EMha,
    Regularizer,
    EncoderBlock,
    /// E-MLP, softermax head, cross-entropy and the weighted regularizer.
    EMlpComposite,
    /// Small E-ViT with cross-entropy.
    EVitComposite,
}

impl GradTarget {
    pub const ALL: [GradTarget; 11] = [
        GradTarget::LinearDense,
        GradTarget::GeluDense,
        GradTarget::YatDense,
        GradTarget::SoftermaxHead,
        GradTarget::Pooling,
        GradTarget::PatchEmbed,
        GradTarget::EMha,
        GradTarget::Regularizer,
        GradTarget::EncoderBlock,
        GradTarget::EMlpComposite,
        GradTarget::EVitComposite,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub target: GradTarget,
    pub trials: usize,
    /// Scalar entries compared.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Entries whose error exceeded the tolerance.
    pub failures: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// `|a − fd| / max(1e-8, |a|, |fd|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between `analytic` and central differences of `f`
/// at `x`, over the listed coordinates, and how many exceed `tol`.
pub fn fd_max_rel_err(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    tol: f64,
) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut p = x.to_vec();
    for &i in coords {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = f(&p);
        p[i] = orig - FD_STEP;
        let down = f(&p);
        p[i] = orig;
        let e = rel_err(analytic[i], (up - down) / (2.0 * FD_STEP));
        if !(e <= tol) {
            failures += 1;
        }
        worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    (worst, failures)
}

/// A scalar function of a flat point together with its analytic gradient.
struct Problem {
    x: Vec<f64>,
    grad: Vec<f64>,
    f: Box<dyn Fn(&[f64]) -> f64>,
}

struct Draw(RngState);

impl Draw {
    fn size(&mut self, lo: usize, hi: usize) -> usize {
        let (v, s) = self.0.draw(DrawKind::Uniform01, 1).expect("draw");
        self.0 = s;
        lo + ((v[0] * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    fn normal(&mut self, n: usize) -> Vec<f64> {
        let (v, s) = self.0.draw(DrawKind::StandardNormal, n).expect("draw");
        self.0 = s;
        v
    }

    fn uniform(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        let (v, s) = self.0.draw(DrawKind::Uniform01, n).expect("draw");
        self.0 = s;
        v.into_iter().map(|u| lo + (hi - lo) * u).collect()
    }

    fn matrix(&mut self, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, self.normal(r * c)).expect("sized")
    }

    /// Upstream weights scaled so the contracted loss stays O(1).
    fn upstream(&mut self, r: usize, c: usize) -> Matrix {
        let s = 1.0 / ((r * c) as f64).sqrt();
        self.matrix(r, c).scale(s)
    }

    fn state(&mut self) -> RngState {
        let s = self.0;
        self.0 = s.fork(0x9e37);
        s
    }
}

fn contract(a: &Matrix, b: &Matrix) -> f64 {
    dot(a.as_slice(), b.as_slice())
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// `Σ U ⊙ layer(X)` over the layer's parameters followed by the input entries.
fn layer_problem<P>(
    layer: P,
    x: Matrix,
    upstream: Matrix,
    forward: fn(&P, &Matrix) -> Result<Matrix>,
    gradient: impl Fn(&P, &Matrix, &Matrix) -> Result<(Vec<f64>, Matrix)>,
) -> Result<Problem>
where
    P: Params + Clone + 'static,
{
    let (pg, dx) = gradient(&layer, &x, &upstream)?;
    let np = layer.param_count();
    let point = concat(&[&layer.flatten(), x.as_slice()]);
    let grad = concat(&[&pg, dx.as_slice()]);
    let (rows, cols) = x.shape();
    let f = move |v: &[f64]| {
        let mut l = layer.clone();
        l.assign_flat(&v[..np]);
        let xi = Matrix::from_vec(rows, cols, v[np..].to_vec()).expect("sized");
        contract(&forward(&l, &xi).expect("forward"), &upstream)
    };
    Ok(Problem {
        x: point,
        grad,
        f: Box::new(f),
    })
}

fn flat(g: Vec<Vec<f64>>) -> Vec<f64> {
    g.into_iter().flatten().collect()
}

fn build(target: GradTarget, d: &mut Draw) -> Result<Problem> {
    match target {
        GradTarget::LinearDense | GradTarget::GeluDense => {
            let act = if target == GradTarget::LinearDense {
                Activation::None
            } else {
                Activation::GeLU
            };
            let (n, m, k) = (d.size(1, 8), d.size(1, 8), d.size(1, 4));
            let (mut layer, _) = DenseParams::new(n, m, act, d.state());
            layer.bias = d.normal(m);
            let x = d.matrix(k, n);
            let u = d.upstream(k, m);
            layer_problem(layer, x, u, DenseParams::forward, |l, x, u| {
                let (_, c) = l.forward_cached(x)?;
                let mut g = l.backward(&c, u)?;
                let dx = std::mem::replace(&mut g.input, Matrix::zeros(0, 0));
                Ok((flat(g.into_param_grads()), dx))
            })
        }
        GradTarget::YatDense => {
            let (n, m, k) = (d.size(1, 8), d.size(1, 8), d.size(1, 4));
            let bias = d.size(0, 1) == 1;
            let (mut layer, _) = YatDenseParams::new(n, m, bias, d.state());
            layer.kernel = d.matrix(m, n);
            layer.alpha = d.uniform(1, 0.2, 1.5)[0];
            if bias {
                layer.bias = Some(d.normal(m));
            }
            let x = d.matrix(k, n);
            let u = d.upstream(k, m);
            layer_problem(layer, x, u, YatDenseParams::forward, |l, x, u| {
                let (_, c) = l.forward_cached(x)?;
                let mut g = l.backward(&c, u)?;
                let dx = std::mem::replace(&mut g.input, Matrix::zeros(0, 0));
                Ok((flat(g.into_param_grads()), dx))
            })
        }
        GradTarget::SoftermaxHead => {
            let (n, k) = (d.size(2, 8), d.size(1, 4));
            let x = Matrix::from_vec(k, n, d.uniform(k * n, 0.1, 2.0))?;
            let u = d.upstream(k, n);
            let eval = |x: &Matrix| {
                let mut p = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    p.row_mut(r)
                        .copy_from_slice(&softermax(x.row(r), SoftermaxPolicy::Strict).expect("non-negative"));
                }
                p
            };
            let probs = eval(&x);
            let mut grad = Vec::new();
            for r in 0..k {
                grad.extend(softermax_backward(x.row(r), probs.row(r), u.row(r), SoftermaxPolicy::Strict));
            }
            Ok(Problem {
                x: x.as_slice().to_vec(),
                grad,
                f: Box::new(move |v| contract(&eval(&Matrix::from_vec(k, n, v.to_vec()).expect("sized")), &u)),
            })
        }
        GradTarget::Pooling => {
            let (t, w) = (d.size(1, 8), d.size(1, 8));
            let x = d.matrix(t, w);
            let u = d.normal(w);
            let grad = global_avg_pool_backward(t, &u).into_vec();
            Ok(Problem {
                x: x.into_vec(),
                grad,
                f: Box::new(move |v| {
                    let m = Matrix::from_vec(t, w, v.to_vec()).expect("sized");
                    dot(&global_avg_pool(&m).expect("tokens"), &u)
                }),
            })
        }
        GradTarget::PatchEmbed => {
            let patch = d.size(1, 4);
            let shape = ImageShape {
                height: patch * d.size(1, 2),
                width: patch * d.size(1, 2),
                channels: d.size(1, 2),
            };
            let image = d.uniform(shape.len(), 0.0, 1.0);
            let width = d.size(1, 8);
            let (mut proj, _) = YatDenseParams::new(shape.patch_len(patch), width, false, d.state());
            proj.kernel = d.matrix(width, shape.patch_len(patch)).scale(0.5);
            let proj = Projection::Yat(proj);
            let t = shape.tokens(patch);
            let u = d.upstream(t, width);
            let tiles = extract_patches(&image, shape, patch)?;
            let (_, cache) = proj.forward_cached(&tiles)?;
            let (pg, dtiles) = proj.backward(&cache, &u)?;
            let dimg = scatter_patches(&dtiles, shape, patch)?;
            let np = proj.param_count();
            Ok(Problem {
                x: concat(&[&proj.flatten(), &image]),
                grad: concat(&[&flat(pg), &dimg]),
                f: Box::new(move |v| {
                    let mut p = proj.clone();
                    p.assign_flat(&v[..np]);
                    let tiles = extract_patches(&v[np..], shape, patch).expect("shape");
                    contract(&p.forward_cached(&tiles).expect("forward").0, &u)
                }),
            })
        }
        GradTarget::EMha => {
            let heads = d.size(1, 2);
            let width = heads * d.size(1, 4);
            let t = d.size(1, 4);
            let seqs = d.size(1, 2);
            let (mut attn, _) = AttentionParams::new(width, heads, d.state());
            attn.attn_alpha = d.uniform(1, 0.0, 1.0)[0];
            for p in [&mut attn.proj_q, &mut attn.proj_k, &mut attn.proj_v, &mut attn.proj_out] {
                p.alpha = d.uniform(1, 0.0, 1.0)[0];
            }
            let x = d.matrix(seqs * t, width);
            let u = d.upstream(seqs * t, width);
            let (_, cache) = attn.forward_cached(&x, t)?;
            let g = attn.backward(&cache, &u)?;
            let np = attn.param_count();
            let (rows, cols) = x.shape();
            Ok(Problem {
                x: concat(&[&attn.flatten(), x.as_slice()]),
                grad: concat(&[&flat(g.params), g.input.as_slice()]),
                f: Box::new(move |v| {
                    let mut a = attn.clone();
                    a.assign_flat(&v[..np]);
                    let xi = Matrix::from_vec(rows, cols, v[np..].to_vec()).expect("sized");
                    contract(&a.forward_cached(&xi, t).expect("forward").0, &u)
                }),
            })
        }
        GradTarget::Regularizer => {
            let (m, n) = (d.size(2, 8), d.size(1, 8));
            let w = d.matrix(m, n);
            let grad = e_regularizer_grad(&w, 1e-6).into_vec();
            Ok(Problem {
                x: w.into_vec(),
                grad,
                f: Box::new(move |v| {
                    e_regularizer_penalty(&Matrix::from_vec(m, n, v.to_vec()).expect("sized"), 1e-6)
                }),
            })
        }
        GradTarget::EncoderBlock => {
            let heads = d.size(1, 2);
            let width = heads * d.size(1, 3);
            let mlp = d.size(1, 8);
            let t = d.size(1, 4);
            let ratio = if d.size(0, 1) == 1 { 0.4 } else { 0.0 };
            let mask_state = d.state();
            let (mut block, _) = EncoderBlock::new(width, mlp, heads, ratio, d.state());
            block.masking.mask_token = d.normal(width);
            block.ffn_in.alpha = 0.5;
            block.ffn_out.alpha = 0.5;
            encoder_problem(block, t, mask_state, d)
        }
        GradTarget::EMlpComposite => {
            let n = d.size(2, 8);
            let hidden = [d.size(2, 8), d.size(2, 8)];
            let classes = d.size(2, 5);
            let k = d.size(1, 4);
            let lambda = 1e-3;
            let (model, _) = Model::build(&ModelSpec::e_mlp(&hidden), n, classes, HeadKind::Softermax, false, d.state())?;
            let x = Matrix::from_vec(k, n, d.uniform(k * n, 0.0, 1.0))?;
            let labels: Vec<usize> = (0..k).map(|_| d.size(0, classes - 1)).collect();
            model_problem(model, x, labels, lambda)
        }
        GradTarget::EVitComposite => {
            let spec = ModelSpec::Vit {
                image: ImageShape::gray(4, 4),
                patch: 2,
                width: 4,
                mlp_width: 6,
                heads: 2,
                blocks: 1,
                mask_ratio: 0.0,
            };
            let k = d.size(1, 3);
            let (model, _) = Model::build(&spec, 16, 3, HeadKind::Softermax, false, d.state())?;
            let x = Matrix::from_vec(k, 16, d.uniform(k * 16, 0.0, 1.0))?;
            let labels: Vec<usize> = (0..k).map(|_| d.size(0, 2)).collect();
            model_problem(model, x, labels, 1e-3)
        }
    }
}

fn encoder_problem(block: EncoderBlock, t: usize, mask_state: RngState, d: &mut Draw) -> Result<Problem> {
    let width = block.masking.mask_token.len();
    let x = d.matrix(t, width);
    let u = d.upstream(t, width);
    let (_, cache, _) = block.forward_cached(&x, t, mask_state, true)?;
    let (pg, dx) = block.backward(&cache, &u)?;
    let np = block.param_count();
    Ok(Problem {
        x: concat(&[&block.flatten(), x.as_slice()]),
        grad: concat(&[&flat(pg), dx.as_slice()]),
        f: Box::new(move |v| {
            let mut b = block.clone();
            b.assign_flat(&v[..np]);
            let xi = Matrix::from_vec(t, width, v[np..].to_vec()).expect("sized");
            contract(&b.forward_cached(&xi, t, mask_state, true).expect("forward").0, &u)
        }),
    })
}

fn model_problem(model: Model, x: Matrix, labels: Vec<usize>, lambda: f64) -> Result<Problem> {
    let (probs, cache, _) = model.forward(&x, 0.0, RngState::new(0), false)?;
    let up = cross_entropy_grad(&probs, &labels)?;
    let (mut pg, dx) = model.backward(&cache, &up)?;
    let (_, reg) = model.regularizer(lambda);
    crate::layers::accumulate(&mut pg, &reg);
    let np = model.param_count();
    let (rows, cols) = x.shape();
    Ok(Problem {
        x: concat(&[&model.flatten(), x.as_slice()]),
        grad: concat(&[&flat(pg), dx.as_slice()]),
        f: Box::new(move |v| {
            let mut m = model.clone();
            m.assign_flat(&v[..np]);
            let xi = Matrix::from_vec(rows, cols, v[np..].to_vec()).expect("sized");
            let p = m.predict(&xi).expect("forward");
            cross_entropy(&p, &labels).expect("labels") + lambda * m.regularizer(0.0).0
        }),
    })
}

/// Checks analytic gradients of `target` against central differences on
/// `trials` random small configurations, covering every parameter and input entry.
pub fn grad_check(
    target: GradTarget,
    trials: usize,
    tolerance: f64,
    state: RngState,
) -> Result<(GradCheckReport, RngState)> {
    let mut d = Draw(state);
    let mut report = GradCheckReport {
        target,
        trials,
        checked: 0,
        max_rel_err: 0.0,
        failures: 0,
        tolerance,
    };
    for _ in 0..trials {
        let p = build(target, &mut d)?;
        let coords: Vec<usize> = (0..p.x.len()).collect();
        let (worst, fails) = fd_max_rel_err(p.f.as_ref(), &p.x, &p.grad, &coords, tolerance);
        report.checked += coords.len();
        report.failures += fails;
        report.max_rel_err = report.max_rel_err.max(worst);
    }
    Ok((report, d.0))
}

/// Gradient check of one encoder block at full size on `samples` randomly
/// chosen coordinates (plus every scalar exponent).
pub fn grad_check_encoder_block(
    width: usize,
    heads: usize,
    mlp_width: usize,
    tokens: usize,
    samples: usize,
    tolerance: f64,
    state: RngState,
) -> Result<GradCheckReport> {
    let mut d = Draw(state);
    let mask_state = d.state();
    let (mut block, _) = EncoderBlock::new(width, mlp_width, heads, 0.25, d.state());
    block.masking.mask_token = d.uniform(width, 0.0, 1.0);
    let x = Matrix::from_vec(tokens, width, d.uniform(tokens * width, 0.0, 1.0))?;
    let names = block.names();
    let mut offsets = Vec::new();
    let mut at = 0;
    block.visit(&mut |_, _, p| {
        offsets.push(at);
        at += p.len();
    });
    let np = at;
    let mut coords: Vec<usize> = names
        .iter()
        .zip(&offsets)
        .filter(|(n, _)| n.ends_with("alpha"))
        .map(|(_, &o)| o)
        .collect();
    let total = np + x.len();
    let (u, s) = d.0.draw(DrawKind::Uniform01, samples)?;
    d.0 = s;
    coords.extend(u.into_iter().map(|v| ((v * total as f64) as usize).min(total - 1)));
    let u_up = d.upstream(tokens, width);
    let (_, cache, _) = block.forward_cached(&x, tokens, mask_state, true)?;
    let (pg, dx) = block.backward(&cache, &u_up)?;
    let grad = concat(&[&flat(pg), dx.as_slice()]);
    let point = concat(&[&block.flatten(), x.as_slice()]);
    let f = move |v: &[f64]| {
        let mut b = block.clone();
        b.assign_flat(&v[..np]);
        let xi = Matrix::from_vec(tokens, width, v[np..].to_vec()).expect("sized");
        contract(&b.forward_cached(&xi, tokens, mask_state, true).expect("forward").0, &u_up)
    };
    let (worst, failures) = fd_max_rel_err(&f, &point, &grad, &coords, tolerance);
    Ok(GradCheckReport {
        target: GradTarget::EncoderBlock,
        trials: 1,
        checked: coords.len(),
        max_rel_err: worst,
        failures,
        tolerance,
    })
}
