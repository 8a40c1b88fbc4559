use serde::{Deserialize, Serialize};

use super::dense::{DenseCache, DenseParams};
use super::yat_dense::{YatCache, YatDenseParams};
use super::{Grads, Params};
use crate::error::{shape_err, Result};
use crate::linalg::Matrix;

/// Image layout: row-major pixels with channels innermost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn gray(height: usize, width: usize) -> Self {
        ImageShape {
            height,
            width,
            channels: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self, patch: usize) -> usize {
        (self.height / patch) * (self.width / patch)
    }

    pub fn patch_len(&self, patch: usize) -> usize {
        patch * patch * self.channels
    }

    fn check(&self, pixels: usize, patch: usize) -> Result<()> {
        if pixels != self.len() {
            return Err(shape_err!(
                "image has {pixels} values, shape {}x{}x{} needs {}",
                self.height,
                self.width,
                self.channels,
                self.len()
            ));
        }
        if patch == 0 || self.height % patch != 0 || self.width % patch != 0 {
            return Err(shape_err!(
                "patch {patch} does not tile a {}x{} image",
                self.height,
                self.width
            ));
        }
        Ok(())
    }
}

/// Splits an image into non-overlapping `patch×patch` tiles, one row per tile
/// in raster order. Each row is the tile flattened row-major, channels innermost.
pub fn extract_patches(image: &[f64], shape: ImageShape, patch: usize) -> Result<Matrix> {
    shape.check(image.len(), patch)?;
    let per_row = shape.width / patch;
    let plen = shape.patch_len(patch);
    let strip = patch * shape.channels;
    let mut out = Matrix::zeros(shape.tokens(patch), plen);
    for t in 0..out.rows() {
        let (pr, pc) = (t / per_row, t % per_row);
        let dst = out.row_mut(t);
        for dy in 0..patch {
            let y = pr * patch + dy;
            let src = (y * shape.width + pc * patch) * shape.channels;
            dst[dy * strip..(dy + 1) * strip].copy_from_slice(&image[src..src + strip]);
        }
    }
    Ok(out)
}

/// Inverse of [`extract_patches`].
pub fn scatter_patches(patches: &Matrix, shape: ImageShape, patch: usize) -> Result<Vec<f64>> {
    shape.check(shape.len(), patch)?;
    if patches.shape() != (shape.tokens(patch), shape.patch_len(patch)) {
        return Err(shape_err!("patch matrix {:?} does not match image shape", patches.shape()));
    }
    let per_row = shape.width / patch;
    let strip = patch * shape.channels;
    let mut image = vec![0.0; shape.len()];
    for t in 0..patches.rows() {
        let (pr, pc) = (t / per_row, t % per_row);
        let src = patches.row(t);
        for dy in 0..patch {
            let y = pr * patch + dy;
            let dst = (y * shape.width + pc * patch) * shape.channels;
            image[dst..dst + strip].copy_from_slice(&src[dy * strip..(dy + 1) * strip]);
        }
    }
    Ok(image)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    Yat(YatDenseParams),
    Dense(DenseParams),
}

#[derive(Clone, Debug)]
pub enum PatchCache {
    Yat(YatCache),
    Dense(DenseCache),
}

impl Projection {
    pub fn inputs(&self) -> usize {
        match self {
            Projection::Yat(p) => p.inputs(),
            Projection::Dense(p) => p.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Projection::Yat(p) => p.outputs(),
            Projection::Dense(p) => p.outputs(),
        }
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, PatchCache)> {
        match self {
            Projection::Yat(p) => p.forward_cached(x).map(|(y, c)| (y, PatchCache::Yat(c))),
            Projection::Dense(p) => p.forward_cached(x).map(|(y, c)| (y, PatchCache::Dense(c))),
        }
    }

    /// Parameter gradients and the gradient with respect to the projected rows.
    pub fn backward(&self, cache: &PatchCache, upstream: &Matrix) -> Result<(Grads, Matrix)> {
        match (self, cache) {
            (Projection::Yat(p), PatchCache::Yat(c)) => {
                let mut g = p.backward(c, upstream)?;
                let dx = std::mem::replace(&mut g.input, Matrix::zeros(0, 0));
                Ok((g.into_param_grads(), dx))
            }
            (Projection::Dense(p), PatchCache::Dense(c)) => {
                let mut g = p.backward(c, upstream)?;
                let dx = std::mem::replace(&mut g.input, Matrix::zeros(0, 0));
                Ok((g.into_param_grads(), dx))
            }
            _ => Err(shape_err!("projection and cache kinds differ")),
        }
    }
}

impl Params for Projection {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        match self {
            Projection::Yat(p) => p.visit(f),
            Projection::Dense(p) => p.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        match self {
            Projection::Yat(p) => p.visit_mut(f),
            Projection::Dense(p) => p.visit_mut(f),
        }
    }
}

/// Tiles the image and projects every tile: output is `tokens × width`.
pub fn patch_embed(
    image: &[f64],
    shape: ImageShape,
    patch: usize,
    projection: &Projection,
) -> Result<Matrix> {
    let tiles = extract_patches(image, shape, patch)?;
    projection.forward_cached(&tiles).map(|(y, _)| y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;
    use crate::linalg::RngState;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn mnist_sized_tiling() {
        let shape = ImageShape::gray(28, 28);
        let p = extract_patches(&ramp(784), shape, 4).unwrap();
        assert_eq!(p.shape(), (49, 16));
        assert!(extract_patches(&ramp(784), shape, 5).is_err());
        assert!(extract_patches(&ramp(783), shape, 4).is_err());
    }

    #[test]
    fn tile_contents_and_roundtrip() {
        let shape = ImageShape {
            height: 4,
            width: 6,
            channels: 2,
        };
        let img = ramp(shape.len());
        let p = extract_patches(&img, shape, 2).unwrap();
        assert_eq!(p.shape(), (6, 8));
        // token 1 covers rows 0..2, columns 2..4
        let want: Vec<f64> = [(0, 2), (0, 3), (1, 2), (1, 3)]
            .iter()
            .flat_map(|&(y, x)| {
                let i = (y * 6 + x) * 2;
                [img[i], img[i + 1]]
            })
            .collect();
        assert_eq!(p.row(1), &want[..]);
        assert_eq!(scatter_patches(&p, shape, 2).unwrap(), img);
    }

    #[test]
    fn whole_image_patch_is_one_token() {
        let shape = ImageShape::gray(4, 4);
        let img = ramp(16);
        let (proj, _) = DenseParams::new(16, 3, Activation::None, RngState::new(0));
        let tokens = patch_embed(&img, shape, 4, &Projection::Dense(proj.clone())).unwrap();
        let direct = proj.forward(&Matrix::from_vec(1, 16, img).unwrap()).unwrap();
        assert_eq!(tokens, direct);
    }

    #[test]
    fn constant_image_identical_tokens() {
        let shape = ImageShape::gray(8, 8);
        let (proj, _) = DenseParams::new(4, 5, Activation::None, RngState::new(1));
        let tokens = patch_embed(&[0.3; 64], shape, 2, &Projection::Dense(proj)).unwrap();
        for t in 1..tokens.rows() {
            assert_eq!(tokens.row(t), tokens.row(0));
        }
    }
}
