use super::{gaussian_blur, resize, unit_to_u8, FloatImage, Image, ImageError, Result};

/// Eight-stop viridis-like ramp, dark to bright. Luma rises strictly along
/// the ramp, so brighter output always means a larger weight.
pub const PALETTE: [[u8; 3]; 8] = [
    [68, 1, 84],
    [70, 50, 126],
    [54, 92, 141],
    [39, 127, 142],
    [31, 161, 135],
    [74, 193, 109],
    [160, 218, 57],
    [253, 231, 37],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapOptions {
    pub rows: usize,
    pub cols: usize,
    pub height: usize,
    pub width: usize,
    /// Blur applied to the upsampled map, in output pixels. Zero disables it.
    pub blur_sigma: f64,
    /// Weight of the heat layer when blended over a base image.
    pub alpha: f64,
}

impl HeatmapOptions {
    pub fn new(rows: usize, cols: usize, height: usize, width: usize) -> Self {
        Self {
            rows,
            cols,
            height,
            width,
            blur_sigma: 0.0,
            alpha: 0.5,
        }
    }
}

fn ramp(t: f64) -> [f64; 3] {
    let pos = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let lo = (pos.floor() as usize).min(PALETTE.len() - 2);
    let f = pos - lo as f64;
    let mut rgb = [0.0; 3];
    for (c, v) in rgb.iter_mut().enumerate() {
        *v = (PALETTE[lo][c] as f64 * (1.0 - f) + PALETTE[lo + 1][c] as f64 * f) / 255.0;
    }
    rgb
}

/// Renders region weights as an RGB heatmap, optionally blended over `base`.
///
/// Weights are min-max normalized (a constant map renders mid-ramp), drawn
/// as one block per region at the target resolution, optionally blurred,
/// then colored with [`PALETTE`].
pub fn render_heatmap(weights: &[f64], opts: &HeatmapOptions, base: Option<&Image>) -> Result<Image> {
    let n = opts.rows * opts.cols;
    if weights.len() != n || n == 0 {
        return Err(ImageError::DimensionMismatch(format!(
            "{} weights for a {}x{} grid",
            weights.len(),
            opts.rows,
            opts.cols
        )));
    }
    let (lo, hi) = weights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
    let norm: Vec<f64> = weights
        .iter()
        .map(|&w| if hi > lo { (w - lo) / (hi - lo) } else { 0.5 })
        .collect();

    let mut heat = FloatImage::zeros(opts.height, opts.width, 1);
    for y in 0..opts.height {
        let r = y * opts.rows / opts.height;
        for x in 0..opts.width {
            let q = x * opts.cols / opts.width;
            heat.set(y, x, 0, norm[r * opts.cols + q]);
        }
    }
    if opts.blur_sigma > 0.0 {
        heat = gaussian_blur(&heat, opts.blur_sigma);
    }

    let base = match base {
        Some(b) => {
            let f = b.to_rgb().to_float();
            Some(if (f.height, f.width) == (opts.height, opts.width) {
                f
            } else {
                resize(&f, opts.height, opts.width)
            })
        }
        None => None,
    };
    let mut pixels = Vec::with_capacity(opts.height * opts.width * 3);
    for y in 0..opts.height {
        for x in 0..opts.width {
            let rgb = ramp(heat.get(y, x, 0));
            for (c, v) in rgb.iter().enumerate() {
                let out = match &base {
                    Some(b) => opts.alpha * v + (1.0 - opts.alpha) * b.get(y, x, c),
                    None => *v,
                };
                pixels.push(unit_to_u8(out));
            }
        }
    }
    Image::new(opts.height, opts.width, 3, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn luma(img: &Image, y: usize, x: usize) -> f64 {
        0.299 * img.get(y, x, 0) as f64 + 0.587 * img.get(y, x, 1) as f64 + 0.114 * img.get(y, x, 2) as f64
    }

    #[test]
    fn palette_luma_is_increasing() {
        let l: Vec<f64> = PALETTE
            .iter()
            .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
            .collect();
        assert!(l.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn uniform_weights_render_uniformly() {
        let opts = HeatmapOptions::new(2, 2, 8, 8);
        let base = Image::filled(8, 8, 1, 100);
        let img = render_heatmap(&[0.3; 4], &opts, Some(&base)).unwrap();
        let first = &img.pixels[..3];
        assert!(img.pixels.chunks(3).all(|px| px == first));
    }

    #[test]
    fn one_hot_lights_a_single_block() {
        let opts = HeatmapOptions::new(2, 2, 4, 4);
        let img = render_heatmap(&[0.0, 0.0, 1.0, 0.0], &opts, None).unwrap();
        let bright = luma(&img, 2, 0);
        for y in 0..4 {
            for x in 0..4 {
                let in_block = y >= 2 && x < 2;
                assert_eq!(luma(&img, y, x) == bright, in_block, "({y},{x})");
            }
        }
    }

    #[test]
    fn monotone_weights_give_monotone_luma() {
        let weights: Vec<f64> = (0..8).map(|i| (i as f64).powi(2)).collect();
        let opts = HeatmapOptions::new(1, 8, 1, 8);
        let img = render_heatmap(&weights, &opts, None).unwrap();
        let l: Vec<f64> = (0..8).map(|x| luma(&img, 0, x)).collect();
        assert!(l.windows(2).all(|w| w[0] < w[1]), "{l:?}");
    }

    #[test]
    fn affine_rescaling_does_not_change_output() {
        let w = [0.1, 0.7, 0.3, 0.9, 0.2, 0.5];
        let scaled: Vec<f64> = w.iter().map(|v| 3.0 * v + 2.0).collect();
        let mut opts = HeatmapOptions::new(2, 3, 12, 18);
        opts.blur_sigma = 2.0;
        let base = Image::filled(6, 6, 3, 40);
        let a = render_heatmap(&w, &opts, Some(&base)).unwrap();
        let b = render_heatmap(&scaled, &opts, Some(&base)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let opts = HeatmapOptions::new(2, 2, 4, 4);
        assert!(render_heatmap(&[0.1; 3], &opts, None).is_err());
    }
}
