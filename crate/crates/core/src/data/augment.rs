use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::topology::InputShape;

/// Bounds of the random affine distortion applied to training images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub max_shift_px: f64,
    pub max_rescale_frac: f64,
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self { max_rotation_deg: 0.0, max_shift_px: 0.0, max_rescale_frac: 0.0 }
    }

    /// 7.5 degrees, 2.5 px, 7.5 %.
    pub fn aug1() -> Self {
        Self { max_rotation_deg: 7.5, max_shift_px: 2.5, max_rescale_frac: 0.075 }
    }

    /// 15 degrees, 5 px, 15 %.
    pub fn aug2() -> Self {
        Self { max_rotation_deg: 15.0, max_shift_px: 5.0, max_rescale_frac: 0.15 }
    }

    pub fn preset(name: &str) -> Option<Option<Self>> {
        match name {
            "none" => Some(None),
            "aug1" => Some(Some(Self::aug1())),
            "aug2" => Some(Some(Self::aug2())),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.max_rotation_deg, self.max_shift_px, self.max_rescale_frac].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

fn symmetric<R: Rng>(rng: &mut R, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

/// Applies a random rotation, shift and rescale about the image center.
///
/// Output pixels are bilinear samples of the source (zero outside the image),
/// clamped to `[0, 1]`.
pub fn augment<R: Rng>(image: &[f32], shape: InputShape, cfg: &AugmentConfig, rng: &mut R) -> Vec<f32> {
    assert_eq!(image.len(), shape.len(), "image does not match shape");
    let theta = symmetric(rng, cfg.max_rotation_deg).to_radians();
    let dx = symmetric(rng, cfg.max_shift_px);
    let dy = symmetric(rng, cfg.max_shift_px);
    let scale = 1.0 + symmetric(rng, cfg.max_rescale_frac);

    let InputShape { h, w, ch } = shape;
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = theta.sin_cos();
    let sample = |y: isize, x: isize, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            f64::from(image[shape.index(y as usize, x as usize, c)])
        }
    };

    let mut out = vec![0.0f32; image.len()];
    for oy in 0..h {
        for ox in 0..w {
            // inverse map: source = R(-theta) (out - center - shift) / scale + center
            let u = ox as f64 - cx - dx;
            let v = oy as f64 - cy - dy;
            let sx = (cos * u + sin * v) / scale + cx;
            let sy = (-sin * u + cos * v) / scale + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            for c in 0..ch {
                let mut value = (1.0 - fy) * (1.0 - fx) * sample(y0, x0, c);
                if fx > 0.0 {
                    value += (1.0 - fy) * fx * sample(y0, x0 + 1, c);
                }
                if fy > 0.0 {
                    value += fy * (1.0 - fx) * sample(y0 + 1, x0, c);
                    if fx > 0.0 {
                        value += fy * fx * sample(y0 + 1, x0 + 1, c);
                    }
                }
                out[shape.index(oy, ox, c)] = value.clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stream_rng, StreamKind};
    use proptest::prelude::*;

    const MNIST: InputShape = InputShape { h: 28, w: 28, ch: 1 };

    fn test_image() -> Vec<f32> {
        (0..784).map(|k| ((k * 37) % 256) as f32 / 255.0).collect()
    }

    #[test]
    fn zero_config_is_identity() {
        let img = test_image();
        let mut rng = stream_rng(1, StreamKind::Augment, 0, 0);
        assert_eq!(augment(&img, MNIST, &AugmentConfig::none(), &mut rng), img);
    }

    #[test]
    fn aug2_keeps_shape_and_range() {
        let img = test_image();
        for k in 0..20 {
            let mut rng = stream_rng(3, StreamKind::Augment, 0, k);
            let out = augment(&img, MNIST, &AugmentConfig::aug2(), &mut rng);
            assert_eq!(out.len(), 784);
            assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let img = test_image();
        let a = augment(&img, MNIST, &AugmentConfig::aug1(), &mut stream_rng(9, StreamKind::Augment, 2, 5));
        let b = augment(&img, MNIST, &AugmentConfig::aug1(), &mut stream_rng(9, StreamKind::Augment, 2, 5));
        let c = augment(&img, MNIST, &AugmentConfig::aug1(), &mut stream_rng(9, StreamKind::Augment, 2, 6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pure_shift_moves_pixels() {
        let shape = InputShape { h: 5, w: 5, ch: 1 };
        let mut img = vec![0.0f32; 25];
        img[shape.index(2, 2, 0)] = 1.0;
        // shift bound 1 always yields a shift in [-1, 1]; with a fixed seed
        // the center mass must land somewhere inside the 3x3 neighbourhood.
        let cfg = AugmentConfig { max_rotation_deg: 0.0, max_shift_px: 1.0, max_rescale_frac: 0.0 };
        let out = augment(&img, shape, &cfg, &mut stream_rng(0, StreamKind::Augment, 0, 0));
        let total: f32 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
        for (k, v) in out.iter().enumerate() {
            let (r, c) = (k / 5, k % 5);
            if r.abs_diff(2) > 1 || c.abs_diff(2) > 1 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn presets() {
        assert_eq!(AugmentConfig::preset("none"), Some(None));
        assert_eq!(AugmentConfig::preset("aug2"), Some(Some(AugmentConfig::aug2())));
        assert_eq!(AugmentConfig::preset("aug3"), None);
        assert!(!AugmentConfig { max_rotation_deg: -1.0, ..AugmentConfig::none() }.is_valid());
    }

    proptest! {
        #[test]
        fn zero_config_identity_on_any_image(img in prop::collection::vec(0.0f32..=1.0, 784), seed in any::<u64>()) {
            let mut rng = stream_rng(seed, StreamKind::Augment, 0, 0);
            prop_assert_eq!(augment(&img, MNIST, &AugmentConfig::none(), &mut rng), img);
        }
    }
}
