use crate::spatial::Image;

use super::Element;

/// Upper bound on the number of levels, level 0 included.
pub const MAX_PYRAMID_LEVELS: usize = 8;

/// Pixel types that can be mean-pooled.
pub trait PixelValue: Element {
    fn to_f64(self) -> f64;
    fn from_mean(mean: f64) -> Self;
}

impl PixelValue for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_mean(mean: f64) -> Self {
        mean as f32
    }
}

impl PixelValue for u8 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_mean(mean: f64) -> Self {
        mean.round().clamp(0.0, u8::MAX as f64) as u8
    }
}

impl PixelValue for u16 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_mean(mean: f64) -> Self {
        mean.round().clamp(0.0, u16::MAX as f64) as u16
    }
}

/// 2x2 mean pooling. Odd trailing rows/columns pool whatever 1x2, 2x1 or
/// 1x1 block remains.
fn halve<T: PixelValue>(img: &Image<T>) -> Image<T> {
    let h = img.height.div_ceil(2);
    let w = img.width.div_ceil(2);
    let mut data = Vec::with_capacity(img.channels * h * w);
    for c in 0..img.channels {
        for y in 0..h {
            for x in 0..w {
                let ys = (2 * y)..(2 * y + 2).min(img.height);
                let xs = (2 * x)..(2 * x + 2).min(img.width);
                let n = (ys.len() * xs.len()) as f64;
                let sum: f64 = ys
                    .flat_map(|yy| xs.clone().map(move |xx| (yy, xx)))
                    .map(|(yy, xx)| img.get(c, yy, xx).to_f64())
                    .sum();
                data.push(T::from_mean(sum / n));
            }
        }
    }
    Image::new(img.channels, h, w, data)
}

/// Level 0 is `image` itself; halving continues while the larger spatial
/// dimension exceeds `min_dim`, up to `MAX_PYRAMID_LEVELS` levels.
pub fn build_pyramid<T: PixelValue>(image: &Image<T>, min_dim: usize) -> Vec<Image<T>> {
    let mut levels = vec![image.clone()];
    while levels.len() < MAX_PYRAMID_LEVELS {
        let last = levels.last().expect("non-empty");
        if last.height.max(last.width) <= min_dim {
            break;
        }
        let next = halve(last);
        levels.push(next);
    }
    levels
}
