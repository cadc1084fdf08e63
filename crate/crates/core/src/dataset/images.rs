use rand::Rng;

use crate::error::{Error, Result};
use crate::render::ImageGrid;

/// Maps the image's `[min, max]` affinely onto `[-0.5, 0.5]` and rounds to
/// the nearest of `levels` equidistant values `-0.5 + k / (levels - 1)`.
pub fn preprocess(img: &ImageGrid, levels: usize) -> Result<ImageGrid> {
    if levels < 2 {
        return Err(Error::Config(format!("need at least 2 levels, got {levels}")));
    }
    let (lo, hi) = (img.min(), img.max());
    if !(hi > lo) {
        return Err(Error::ConstantImage);
    }
    let steps = (levels - 1) as f64;
    let values = img
        .values
        .iter()
        .map(|&v| {
            let x = (v - lo) / (hi - lo);
            -0.5 + (x * steps).round() / steps
        })
        .collect();
    Ok(img.with_values(values))
}

/// [`preprocess`], with constant images mapped to all zeros and a warning.
pub fn preprocess_or_zero(img: &ImageGrid, levels: usize) -> Result<ImageGrid> {
    match preprocess(img, levels) {
        Err(Error::ConstantImage) => {
            log::warn!("constant image, preprocessing to zeros");
            Ok(img.with_values(vec![0.0; img.values.len()]))
        }
        other => other,
    }
}

/// `p -> 1/p` for `p >= t`; values in `(0, t)` and exact zeros are kept.
pub fn invert_nonbackground(img: &ImageGrid, t: f64) -> ImageGrid {
    img.with_values(img.values.iter().map(|&p| if p == 0.0 || p < t { p } else { 1.0 / p }).collect())
}

/// One draw of the augmentation: rotation about the image center, then an
/// optional left-right mirror, then an integer shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Radians, counter-clockwise in pixel coordinates.
    pub angle: f64,
    pub flip: bool,
    pub shift: [i64; 2],
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { angle: 0.0, flip: false, shift: [0, 0] }
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R, max_shift_px: i64) -> Self {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let flip = rng.random_bool(0.5);
        let m = max_shift_px.abs();
        let shift = [rng.random_range(-m..=m), rng.random_range(-m..=m)];
        Self { angle, flip, shift }
    }

    pub fn apply(&self, img: &ImageGrid, background: f64) -> ImageGrid {
        let (w, h) = (img.width, img.height);
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (sin, cos) = self.angle.sin_cos();
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let mut out = img.clone();
        for y in 0..h {
            for x in 0..w {
                let mut u = (x as i64 - self.shift[0]) as f64;
                let v = (y as i64 - self.shift[1]) as f64;
                if self.flip {
                    u = 2.0 * cx - u;
                }
                let (du, dv) = (u - cx, v - cy);
                let sx = snap(cx + cos * du + sin * dv);
                let sy = snap(cy - sin * du + cos * dv);
                out.set(x, y, sample_or_fill(img, sx, sy, background));
            }
        }
        out
    }
}

/// Bilinear sample treating everything outside the frame as `fill`.
fn sample_or_fill(img: &ImageGrid, x: f64, y: f64, fill: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |i: f64, j: f64| {
        if i < 0.0 || j < 0.0 || i >= img.width as f64 || j >= img.height as f64 {
            fill
        } else {
            img.get(i as usize, j as usize)
        }
    };
    let mut acc = 0.0;
    for (i, wx) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
        for (j, wy) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
            let w = wx * wy;
            if w != 0.0 {
                acc += w * at(i, j);
            }
        }
    }
    acc
}

pub fn augment<R: Rng + ?Sized>(img: &ImageGrid, rng: &mut R, max_shift_px: i64, background: f64) -> ImageGrid {
    AugmentParams::draw(rng, max_shift_px).apply(img, background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RandomStream;
    use proptest::prelude::*;

    fn image(w: usize, h: usize, values: Vec<f64>) -> ImageGrid {
        ImageGrid { width: w, height: h, pixel_size: 1.0, origin: [0.0; 2], values }
    }

    fn blob(n: usize, cx: f64, cy: f64, s: f64) -> ImageGrid {
        let mut values = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                values[y * n + x] = (-r2 / (2.0 * s * s)).exp();
            }
        }
        image(n, n, values)
    }

    #[test]
    fn preprocess_endpoints() {
        let out = preprocess(&image(3, 1, vec![0.0, 5.0, 10.0]), 256).unwrap();
        // 0 is not on an even-sized lattice; the midpoint rounds up one half step.
        assert_eq!(out.values, vec![-0.5, -0.5 + 128.0 / 255.0, 0.5]);
        assert!(matches!(preprocess(&image(2, 1, vec![3.0, 3.0]), 256), Err(Error::ConstantImage)));
        assert_eq!(preprocess_or_zero(&image(2, 1, vec![3.0, 3.0]), 256).unwrap().values, vec![0.0, 0.0]);
        let odd = preprocess(&image(3, 1, vec![0.0, 5.0, 10.0]), 257).unwrap();
        assert_eq!(odd.values, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn invert_rules() {
        let img = image(5, 1, vec![0.5, 0.0005, 1.0, 0.0, 0.001]);
        assert_eq!(invert_nonbackground(&img, 0.001).values, vec![2.0, 0.0005, 1.0, 0.0, 1000.0]);
    }

    #[test]
    fn identity_augment() {
        let img = blob(21, 8.0, 12.0, 2.0);
        assert_eq!(AugmentParams::identity().apply(&img, 0.0), img);
    }

    #[test]
    fn half_turn_is_involution() {
        let img = blob(32, 10.3, 17.8, 3.0);
        let half = AugmentParams { angle: std::f64::consts::PI, flip: false, shift: [0, 0] };
        let once = half.apply(&img, 0.0);
        assert!((once.get(0, 0) - img.get(31, 31)).abs() < 1e-12);
        let twice = half.apply(&once, 0.0);
        for (a, b) in twice.values.iter().zip(&img.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn flip_and_shift() {
        let img = image(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let flipped = AugmentParams { angle: 0.0, flip: true, shift: [0, 0] }.apply(&img, 0.0);
        assert_eq!(flipped.values, vec![3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        let shifted = AugmentParams { angle: 0.0, flip: false, shift: [1, 0] }.apply(&img, -1.0);
        assert_eq!(shifted.values, vec![-1.0, 1.0, 2.0, -1.0, 4.0, 5.0]);
    }

    #[test]
    fn augment_conserves_mass() {
        let img = blob(96, 48.0, 48.0, 5.0);
        let total = img.sum();
        let mut rng = RandomStream::new(6);
        for _ in 0..50 {
            let out = augment(&img, &mut rng, 10, 0.0);
            assert!((out.sum() / total - 1.0).abs() < 0.02);
        }
    }

    proptest! {
        #[test]
        fn preprocess_lattice_and_idempotence(values in prop::collection::vec(0.0f64..10.0, 4..64)) {
            let img = image(values.len(), 1, values);
            prop_assume!(img.max() > img.min());
            let once = preprocess(&img, 256).unwrap();
            for &v in &once.values {
                prop_assert!((-0.5..=0.5).contains(&v));
                let k = (v + 0.5) * 255.0;
                prop_assert!((k - k.round()).abs() < 1e-9);
            }
            prop_assert_eq!(preprocess(&once, 256).unwrap(), once);
        }
    }
}
