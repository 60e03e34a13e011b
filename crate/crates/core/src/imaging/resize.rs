use super::FloatImage;

/// Source coordinate and blend factor for each output index, sampling at
/// pixel centers: `src = (dst + 0.5) * in / out - 0.5`, clamped to the edge.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resize with pixel-center alignment. Same dims is the identity.
pub fn resize(img: &FloatImage, out_h: usize, out_w: usize) -> FloatImage {
    assert!(out_h >= 1 && out_w >= 1, "resize target must be at least 1x1");
    if out_h == img.height && out_w == img.width {
        return img.clone();
    }
    let ys = taps(img.height, out_h);
    let xs = taps(img.width, out_w);
    let c = img.channels;
    let mut out = FloatImage::zeros(out_h, out_w, c);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for ch in 0..c {
                let top = img.get(y0, x0, ch) * (1.0 - fx) + img.get(y0, x1, ch) * fx;
                let bottom = img.get(y1, x0, ch) * (1.0 - fx) + img.get(y1, x1, ch) * fx;
                out.set(oy, ox, ch, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;

    #[test]
    fn constant_stays_constant() {
        let img = Image::filled(7, 5, 3, 128).to_float();
        for (h, w) in [(1, 1), (3, 9), (16, 16), (256, 256)] {
            assert!(resize(&img, h, w).to_u8().pixels.iter().all(|&p| p == 128));
        }
    }

    #[test]
    fn identity_dims() {
        let img = Image::new(2, 3, 1, vec![1, 50, 99, 200, 0, 255]).unwrap().to_float();
        assert_eq!(resize(&img, 2, 3), img);
    }

    #[test]
    fn checkerboard_to_single_pixel_floors_average() {
        let img = Image::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap().to_float();
        let out = resize(&img, 1, 1);
        assert!((out.data[0] - 0.5).abs() < 1e-15);
        assert_eq!(out.to_u8().pixels, vec![127]);
    }

    #[test]
    fn upsample_interpolates() {
        let img = FloatImage::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let out = resize(&img, 1, 4);
        assert_eq!(out.data, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
