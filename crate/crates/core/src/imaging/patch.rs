use super::{FloatImage, ImageError, Result};

/// An image cut into non-overlapping `P x P` regions in row-major order.
/// Each patch is stored channel-planar (`C x P x P`), the layout the
/// convolution layers consume.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub patches: Vec<Vec<f64>>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// All patches back to back, `N x C x P x P`.
    pub fn flatten(&self) -> Vec<f64> {
        self.patches.concat()
    }

    /// Mean sample value of each patch.
    pub fn patch_means(&self) -> Vec<f64> {
        self.patches
            .iter()
            .map(|p| p.iter().sum::<f64>() / p.len() as f64)
            .collect()
    }
}

pub fn patchify(img: &FloatImage, patch_size: usize) -> Result<PatchGrid> {
    let p = patch_size;
    if p == 0 || !img.height.is_multiple_of(p) || !img.width.is_multiple_of(p) {
        return Err(ImageError::IndivisibleDims {
            height: img.height,
            width: img.width,
            patch: p,
        });
    }
    let (rows, cols, c) = (img.height / p, img.width / p, img.channels);
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for q in 0..cols {
            let mut patch = Vec::with_capacity(c * p * p);
            for ch in 0..c {
                for y in 0..p {
                    for x in 0..p {
                        patch.push(img.get(r * p + y, q * p + x, ch));
                    }
                }
            }
            patches.push(patch);
        }
    }
    Ok(PatchGrid {
        patch_size: p,
        rows,
        cols,
        channels: c,
        patches,
    })
}

pub fn unpatchify(grid: &PatchGrid) -> FloatImage {
    let p = grid.patch_size;
    let mut img = FloatImage::zeros(grid.rows * p, grid.cols * p, grid.channels);
    for (idx, patch) in grid.patches.iter().enumerate() {
        let (r, q) = (idx / grid.cols, idx % grid.cols);
        for ch in 0..grid.channels {
            for y in 0..p {
                for x in 0..p {
                    img.set(r * p + y, q * p + x, ch, patch[(ch * p + y) * p + x]);
                }
            }
        }
    }
    img
}
