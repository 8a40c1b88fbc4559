use serde::{Deserialize, Serialize};

use super::regularizer::{e_regularizer_grad, e_regularizer_penalty};
use crate::error::{shape_err, Result};
use crate::layers::{
    dropout, dropout_backward, extract_patches, scatter_patches, visit_prefixed,
    visit_prefixed_mut, Activation, BlockCache, DenseParams, DropoutMask, EncoderBlock, Grads,
    ImageShape, Params, PatchCache, Projection, YatCache, YatDenseParams,
};
use crate::linalg::{Matrix, RngState};
use crate::yat::{softermax, softermax_backward, softmax, softmax_backward, SoftermaxPolicy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    #[default]
    Yat,
    Dense,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Softmax,
    #[default]
    Softermax,
}

impl HeadKind {
    /// Row-wise normalisation of the final layer's outputs.
    pub fn apply(self, logits: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            let p = match self {
                HeadKind::Softmax => softmax(logits.row(r))?,
                HeadKind::Softermax => softermax(logits.row(r), SoftermaxPolicy::ClampShift)?,
            };
            out.row_mut(r).copy_from_slice(&p);
        }
        Ok(out)
    }

    pub fn backward(self, logits: &Matrix, probs: &Matrix, upstream: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            let g = match self {
                HeadKind::Softmax => softmax_backward(probs.row(r), upstream.row(r)),
                HeadKind::Softermax => softermax_backward(
                    logits.row(r),
                    probs.row(r),
                    upstream.row(r),
                    SoftermaxPolicy::ClampShift,
                ),
            };
            out.row_mut(r).copy_from_slice(&g);
        }
        out
    }
}

/// Architecture description; input width and class count come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Stack of `hidden` layers plus an output layer, all of one kind.
    Mlp {
        kind: LayerKind,
        hidden: Vec<usize>,
        /// Applied after hidden dense layers; yat layers never use one.
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        hidden_bias: bool,
    },
    Vit {
        image: ImageShape,
        patch: usize,
        width: usize,
        mlp_width: usize,
        heads: usize,
        blocks: usize,
        #[serde(default)]
        mask_ratio: f64,
    },
}

impl ModelSpec {
    pub fn e_mlp(hidden: &[usize]) -> Self {
        ModelSpec::Mlp {
            kind: LayerKind::Yat,
            hidden: hidden.to_vec(),
            activation: Activation::None,
            hidden_bias: false,
        }
    }

    pub fn dense_mlp(hidden: &[usize], activation: Activation) -> Self {
        ModelSpec::Mlp {
            kind: LayerKind::Dense,
            hidden: hidden.to_vec(),
            activation,
            hidden_bias: true,
        }
    }

    pub fn e_vit(image: ImageShape, patch: usize, width: usize, heads: usize, blocks: usize) -> Self {
        ModelSpec::Vit {
            image,
            patch,
            width,
            mlp_width: 4 * width,
            heads,
            blocks,
            mask_ratio: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vit {
    pub image: ImageShape,
    pub patch: usize,
    pub embed: YatDenseParams,
    /// Additive positional table, one row per token.
    pub pos: Matrix,
    pub blocks: Vec<EncoderBlock>,
    pub head: YatDenseParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Body {
    Mlp(Vec<Projection>),
    Vit(Vit),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub inputs: usize,
    pub classes: usize,
    pub head: HeadKind,
    pub bias_in_head: bool,
    pub body: Body,
}

#[derive(Clone, Debug)]
enum BodyCache {
    Mlp {
        layers: Vec<PatchCache>,
        masks: Vec<Option<DropoutMask>>,
    },
    Vit {
        embed: YatCache,
        blocks: Vec<BlockCache>,
        mask: Option<DropoutMask>,
        head: YatCache,
    },
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    body: BodyCache,
    logits: Matrix,
    probs: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }
}

impl Model {
    pub fn build(
        spec: &ModelSpec,
        inputs: usize,
        classes: usize,
        head: HeadKind,
        bias_in_head: bool,
        state: RngState,
    ) -> Result<(Model, RngState)> {
        if inputs == 0 || classes < 2 {
            return Err(shape_err!("model needs inputs > 0 and at least 2 classes"));
        }
        let (body, state) = match spec {
            ModelSpec::Mlp {
                kind,
                hidden,
                activation,
                hidden_bias,
            } => {
                let mut widths = vec![inputs];
                widths.extend(hidden);
                widths.push(classes);
                let mut layers = Vec::new();
                let mut state = state;
                for (i, pair) in widths.windows(2).enumerate() {
                    let last = i + 2 == widths.len();
                    let bias = if last { bias_in_head } else { *hidden_bias };
                    let layer = match kind {
                        LayerKind::Yat => {
                            let (p, s) = YatDenseParams::new(pair[0], pair[1], bias, state);
                            state = s;
                            Projection::Yat(p)
                        }
                        LayerKind::Dense => {
                            let act = if last { Activation::None } else { *activation };
                            let (mut p, s) = DenseParams::new(pair[0], pair[1], act, state);
                            if !bias {
                                p.bias.clear();
                            }
                            state = s;
                            Projection::Dense(p)
                        }
                    };
                    layers.push(layer);
                }
                (Body::Mlp(layers), state)
            }
            ModelSpec::Vit {
                image,
                patch,
                width,
                mlp_width,
                heads,
                blocks,
                mask_ratio,
            } => {
                if image.len() != inputs {
                    return Err(shape_err!("image shape has {} values, data has {inputs}", image.len()));
                }
                if *patch == 0 || image.height % patch != 0 || image.width % patch != 0 {
                    return Err(shape_err!("patch {patch} does not tile the image"));
                }
                if *heads == 0 || width % heads != 0 {
                    return Err(shape_err!("width {width} not divisible by {heads} heads"));
                }
                let (embed, mut state) =
                    YatDenseParams::new(image.patch_len(*patch), *width, false, state);
                let mut list = Vec::new();
                for _ in 0..*blocks {
                    let (b, s) = EncoderBlock::new(*width, *mlp_width, *heads, *mask_ratio, state);
                    list.push(b);
                    state = s;
                }
                let (head_layer, state) = YatDenseParams::new(*width, classes, bias_in_head, state);
                (
                    Body::Vit(Vit {
                        image: *image,
                        patch: *patch,
                        embed,
                        pos: Matrix::zeros(image.tokens(*patch), *width),
                        blocks: list,
                        head: head_layer,
                    }),
                    state,
                )
            }
        };
        Ok((
            Model {
                spec: spec.clone(),
                inputs,
                classes,
                head,
                bias_in_head,
                body,
            },
            state,
        ))
    }

    /// Forward pass on a batch (rows are samples). `dropout_rate` applies
    /// between hidden layers (MLP) or to pooled features (ViT) in training mode.
    pub fn forward(
        &self,
        x: &Matrix,
        dropout_rate: f64,
        state: RngState,
        training: bool,
    ) -> Result<(Matrix, ForwardCache, RngState)> {
        if x.cols() != self.inputs {
            return Err(shape_err!("model expects {} features, got {}", self.inputs, x.cols()));
        }
        let (logits, body, state) = match &self.body {
            Body::Mlp(layers) => {
                let mut h = x.clone();
                let mut caches = Vec::with_capacity(layers.len());
                let mut masks = Vec::with_capacity(layers.len());
                let mut state = state;
                for (i, layer) in layers.iter().enumerate() {
                    let (y, c) = layer.forward_cached(&h)?;
                    caches.push(c);
                    if i + 1 < layers.len() {
                        let (d, m, s) = dropout(&y, dropout_rate, state, training)?;
                        masks.push(m);
                        state = s;
                        h = d;
                    } else {
                        h = y;
                    }
                }
                (h, BodyCache::Mlp { layers: caches, masks }, state)
            }
            Body::Vit(v) => {
                let t = v.image.tokens(v.patch);
                let plen = v.image.patch_len(v.patch);
                let b = x.rows();
                let mut tiles = Matrix::zeros(b * t, plen);
                for r in 0..b {
                    let p = extract_patches(x.row(r), v.image, v.patch)?;
                    tiles.as_mut_slice()[r * t * plen..(r + 1) * t * plen].copy_from_slice(p.as_slice());
                }
                let (mut h, embed) = v.embed.forward_cached(&tiles)?;
                for r in 0..b * t {
                    for (e, p) in h.row_mut(r).iter_mut().zip(v.pos.row(r % t)) {
                        *e += p;
                    }
                }
                let mut state = state;
                let mut blocks = Vec::with_capacity(v.blocks.len());
                for block in &v.blocks {
                    let (y, c, s) = block.forward_cached(&h, t, state, training)?;
                    blocks.push(c);
                    state = s;
                    h = y;
                }
                let w = h.cols();
                let mut pooled = Matrix::zeros(b, w);
                for r in 0..b {
                    let out = pooled.row_mut(r);
                    for k in 0..t {
                        for (o, v) in out.iter_mut().zip(h.row(r * t + k)) {
                            *o += v;
                        }
                    }
                    for o in out.iter_mut() {
                        *o /= t as f64;
                    }
                }
                let (pooled, mask, state) = dropout(&pooled, dropout_rate, state, training)?;
                let (logits, head) = v.head.forward_cached(&pooled)?;
                (
                    logits,
                    BodyCache::Vit {
                        embed,
                        blocks,
                        mask,
                        head,
                    },
                    state,
                )
            }
        };
        let probs = self.head.apply(&logits)?;
        Ok((
            probs.clone(),
            ForwardCache {
                body,
                logits,
                probs,
            },
            state,
        ))
    }

    /// Class probabilities in inference mode, evaluated in chunks.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        const CHUNK: usize = 1024;
        let mut out = Matrix::zeros(x.rows(), self.classes);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + CHUNK).min(x.rows());
            let idx: Vec<usize> = (start..end).collect();
            let (p, _, _) = self.forward(&x.select_rows(&idx), 0.0, RngState::new(0), false)?;
            out.as_mut_slice()[start * self.classes..end * self.classes].copy_from_slice(p.as_slice());
            start = end;
        }
        Ok(out)
    }

    /// Gradients of `Σ upstream ⊙ probs` with respect to parameters (in
    /// [`Params`] order) and inputs.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(Grads, Matrix)> {
        let mut g = self.head.backward(&cache.logits, &cache.probs, upstream);
        match (&self.body, &cache.body) {
            (Body::Mlp(layers), BodyCache::Mlp { layers: caches, masks }) => {
                let mut per_layer = Vec::with_capacity(layers.len());
                for i in (0..layers.len()).rev() {
                    if i + 1 < layers.len() {
                        g = dropout_backward(masks[i].as_ref(), &g);
                    }
                    let (pg, dx) = layers[i].backward(&caches[i], &g)?;
                    per_layer.push(pg);
                    g = dx;
                }
                per_layer.reverse();
                Ok((per_layer.into_iter().flatten().collect(), g))
            }
            (
                Body::Vit(v),
                BodyCache::Vit {
                    embed,
                    blocks,
                    mask,
                    head,
                },
            ) => {
                let t = v.image.tokens(v.patch);
                let gh = v.head.backward(head, &g)?;
                let dpooled = dropout_backward(mask.as_ref(), &gh.input);
                let b = dpooled.rows();
                let w = dpooled.cols();
                let mut dh = Matrix::zeros(b * t, w);
                for r in 0..b * t {
                    for (d, p) in dh.row_mut(r).iter_mut().zip(dpooled.row(r / t)) {
                        *d = p / t as f64;
                    }
                }
                let mut block_grads = Vec::with_capacity(v.blocks.len());
                for (block, c) in v.blocks.iter().zip(blocks).rev() {
                    let (pg, dx) = block.backward(c, &dh)?;
                    block_grads.push(pg);
                    dh = dx;
                }
                block_grads.reverse();
                let mut dpos = Matrix::zeros(t, w);
                for r in 0..b * t {
                    for (d, g) in dpos.row_mut(r % t).iter_mut().zip(dh.row(r)) {
                        *d += g;
                    }
                }
                let ge = v.embed.backward(embed, &dh)?;
                let plen = v.image.patch_len(v.patch);
                let mut dx = Matrix::zeros(b, self.inputs);
                for r in 0..b {
                    let tiles = Matrix::from_vec(
                        t,
                        plen,
                        ge.input.as_slice()[r * t * plen..(r + 1) * t * plen].to_vec(),
                    )?;
                    dx.row_mut(r).copy_from_slice(&scatter_patches(&tiles, v.image, v.patch)?);
                }
                let mut grads = ge.into_param_grads();
                grads.push(dpos.into_vec());
                grads.extend(block_grads.into_iter().flatten());
                grads.extend(gh.into_param_grads());
                Ok((grads, dx))
            }
            _ => Err(shape_err!("forward cache does not belong to this model")),
        }
    }

    /// Every yat layer in parameter order.
    pub fn yat_layers(&self) -> Vec<&YatDenseParams> {
        match &self.body {
            Body::Mlp(layers) => layers
                .iter()
                .filter_map(|l| match l {
                    Projection::Yat(p) => Some(p),
                    Projection::Dense(_) => None,
                })
                .collect(),
            Body::Vit(v) => {
                let mut out = vec![&v.embed];
                for b in &v.blocks {
                    let a = &b.attention;
                    out.extend([&a.proj_q, &a.proj_k, &a.proj_v, &a.proj_out, &b.ffn_in, &b.ffn_out]);
                }
                out.push(&v.head);
                out
            }
        }
    }

    /// The last layer's weight matrix.
    pub fn output_kernel(&self) -> &Matrix {
        match &self.body {
            Body::Mlp(layers) => match layers.last().expect("at least one layer") {
                Projection::Yat(p) => &p.kernel,
                Projection::Dense(p) => &p.weight,
            },
            Body::Vit(v) => &v.head.kernel,
        }
    }

    /// Sum of the pairwise penalty over all yat layers, and `lambda` times its
    /// gradient laid out like the parameters.
    pub fn regularizer(&self, lambda: f64) -> (f64, Grads) {
        let mut grads = self.zero_grads();
        let yats = self.yat_layers();
        let names = self.names();
        let slots: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.ends_with("kernel"))
            .map(|(i, _)| i)
            .collect();
        debug_assert_eq!(slots.len(), yats.len());
        let mut total = 0.0;
        for (layer, slot) in yats.into_iter().zip(slots) {
            total += e_regularizer_penalty(&layer.kernel, layer.epsilon);
            if lambda != 0.0 {
                let g = e_regularizer_grad(&layer.kernel, layer.epsilon);
                for (d, s) in grads[slot].iter_mut().zip(g.as_slice()) {
                    *d = lambda * s;
                }
            }
        }
        (total, grads)
    }
}

impl Params for Model {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        match &self.body {
            Body::Mlp(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    visit_prefixed(&format!("layer{i}"), l, f);
                }
            }
            Body::Vit(v) => {
                visit_prefixed("embed", &v.embed, f);
                f("pos", &[v.pos.rows(), v.pos.cols()], v.pos.as_slice());
                for (i, b) in v.blocks.iter().enumerate() {
                    visit_prefixed(&format!("block{i}"), b, f);
                }
                visit_prefixed("head", &v.head, f);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        match &mut self.body {
            Body::Mlp(layers) => {
                for (i, l) in layers.iter_mut().enumerate() {
                    visit_prefixed_mut(&format!("layer{i}"), l, f);
                }
            }
            Body::Vit(v) => {
                visit_prefixed_mut("embed", &mut v.embed, f);
                f("pos", v.pos.as_mut_slice());
                for (i, b) in v.blocks.iter_mut().enumerate() {
                    visit_prefixed_mut(&format!("block{i}"), b, f);
                }
                visit_prefixed_mut("head", &mut v.head, f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DrawKind;

    #[test]
    fn e_mlp_layout() {
        let (m, _) = Model::build(&ModelSpec::e_mlp(&[128, 64]), 784, 10, HeadKind::Softermax, false, RngState::new(0)).unwrap();
        assert_eq!(
            m.names(),
            ["layer0.kernel", "layer0.alpha", "layer1.kernel", "layer1.alpha", "layer2.kernel", "layer2.alpha"]
        );
        assert_eq!(m.param_count(), 784 * 128 + 128 * 64 + 64 * 10 + 3);
        assert_eq!(m.yat_layers().len(), 3);
    }

    #[test]
    fn dense_without_head_bias() {
        let (m, _) = Model::build(&ModelSpec::dense_mlp(&[5], Activation::ReLU), 3, 2, HeadKind::Softmax, false, RngState::new(0)).unwrap();
        assert_eq!(m.param_count(), 3 * 5 + 5 + 5 * 2);
    }

    #[test]
    fn softermax_probabilities() {
        let (m, s) = Model::build(&ModelSpec::e_mlp(&[6]), 4, 3, HeadKind::Softermax, false, RngState::new(2)).unwrap();
        let (v, _) = s.draw(DrawKind::Uniform01, 20).unwrap();
        let x = Matrix::from_vec(5, 4, v).unwrap();
        let p = m.predict(&x).unwrap();
        for row in p.row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vit_shapes() {
        let spec = ModelSpec::e_vit(ImageShape::gray(8, 8), 4, 8, 2, 1);
        let (m, s) = Model::build(&spec, 64, 3, HeadKind::Softermax, false, RngState::new(3)).unwrap();
        let (v, _) = s.draw(DrawKind::Uniform01, 2 * 64).unwrap();
        let x = Matrix::from_vec(2, 64, v).unwrap();
        let (p, cache, _) = m.forward(&x, 0.0, RngState::new(0), true).unwrap();
        assert_eq!(p.shape(), (2, 3));
        let (g, dx) = m.backward(&cache, &Matrix::filled(2, 3, 1.0)).unwrap();
        assert_eq!(g.len(), m.names().len());
        assert_eq!(dx.shape(), (2, 64));
        assert_eq!(m.yat_layers().len(), 8);
        let (_, reg) = m.regularizer(1.0);
        assert_eq!(reg.len(), g.len());
    }
}
