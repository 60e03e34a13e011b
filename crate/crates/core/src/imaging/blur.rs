use super::FloatImage;

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur, clamping coordinates at the border. `sigma = 0`
/// returns the input unchanged.
pub fn gaussian_blur(img: &FloatImage, sigma: f64) -> FloatImage {
    assert!(sigma >= 0.0, "blur sigma must be nonnegative");
    if sigma == 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w, c) = (img.height as i64, img.width as i64, img.channels);

    let mut tmp = FloatImage::zeros(img.height, img.width, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sx = (x + i as i64 - r).clamp(0, w - 1);
                    acc += kv * img.get(y as usize, sx as usize, ch);
                }
                tmp.set(y as usize, x as usize, ch, acc);
            }
        }
    }
    let mut out = FloatImage::zeros(img.height, img.width, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sy = (y + i as i64 - r).clamp(0, h - 1);
                    acc += kv * tmp.get(sy as usize, x as usize, ch);
                }
                out.set(y as usize, x as usize, ch, acc);
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
    fn zero_sigma_is_identity() {
        let img = Image::new(2, 2, 1, vec![3, 200, 0, 17]).unwrap().to_float();
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Image::filled(20, 13, 3, 77).to_float();
        for sigma in [0.5, 2.0, 35.0] {
            let out = gaussian_blur(&img, sigma).to_u8();
            assert!(out.pixels.iter().all(|&p| p == 77));
        }
    }

    #[test]
    fn impulse_peak_matches_closed_form() {
        let sigma = 5.0;
        let mut img = FloatImage::zeros(65, 65, 1);
        img.set(32, 32, 0, 1.0);
        let out = gaussian_blur(&img, sigma);
        let peak = out.get(32, 32, 0);
        let expected = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
        assert!((peak - expected).abs() / expected < 0.02, "peak {peak} vs {expected}");
        let mass: f64 = out.data.iter().sum();
        assert!((mass - 1.0).abs() < 0.01);
    }

    #[test]
    fn kernel_radius() {
        assert_eq!(gaussian_kernel(1.0).len(), 7);
        assert_eq!(gaussian_kernel(0.4).len(), 5);
        assert!((gaussian_kernel(3.3).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
