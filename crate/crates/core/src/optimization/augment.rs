use rand::Rng;

use super::LossError;
use crate::diff::Rgb;
use crate::imageio::Image;

pub const CROP_SIZE: usize = 224;

/// Square source window, in pixel units, sampled by a crop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropWindow {
    pub row: f64,
    pub col: f64,
    pub side: f64,
}

impl CropWindow {
    /// Largest centered square.
    pub fn full(img: &Image) -> Self {
        let side = img.width().min(img.height()) as f64;
        Self {
            row: (img.height() as f64 - side) / 2.0,
            col: (img.width() as f64 - side) / 2.0,
            side,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Crop {
    pub image: Image,
    pub window: CropWindow,
}

/// Bilinear taps `(index, weight)` for output pixel `i` of `out` samples
/// spanning `[start, start + side)` in a source axis of length `len`.
fn taps(i: usize, out: usize, start: f64, side: f64, len: usize) -> [(usize, f64); 2] {
    let x = (start + (i as f64 + 0.5) * side / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = x.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    let t = x - i0 as f64;
    [(i0, 1.0 - t), (i1, t)]
}

/// Bilinearly resamples `window` of `img` to `out x out` pixels.
pub fn resample(img: &Image, window: CropWindow, out: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(out, out, |r, c| {
        let rows = taps(r, out, window.row, window.side, h);
        let cols = taps(c, out, window.col, window.side, w);
        let mut acc = Rgb::ZERO;
        for (ri, rw) in rows {
            for (ci, cw) in cols {
                acc = acc + img.get(ri, ci) * (rw * cw);
            }
        }
        acc
    })
}

/// Adds the source-image gradient of a [`resample`] call into `d_src`.
pub fn resample_backward(d_out: &Image, window: CropWindow, d_src: &mut Image) {
    let (w, h) = (d_src.width(), d_src.height());
    let out = d_out.width();
    for r in 0..out {
        let rows = taps(r, out, window.row, window.side, h);
        for c in 0..out {
            let cols = taps(c, out, window.col, window.side, w);
            let g = d_out.get(r, c);
            for (ri, rw) in rows {
                for (ci, cw) in cols {
                    let cur = d_src.get(ri, ci);
                    d_src.set(ri, ci, cur + g * (rw * cw));
                }
            }
        }
    }
}

/// `n` random square crops with side drawn from `scale * min(H, W)`, each
/// resized to `CROP_SIZE` squared.
pub fn crop_augment<R: Rng + ?Sized>(
    img: &Image,
    n: usize,
    scale: (f64, f64),
    rng: &mut R,
) -> Result<Vec<Crop>, LossError> {
    crop_augment_to(img, n, scale, CROP_SIZE, rng)
}

pub fn crop_augment_to<R: Rng + ?Sized>(
    img: &Image,
    n: usize,
    scale: (f64, f64),
    out: usize,
    rng: &mut R,
) -> Result<Vec<Crop>, LossError> {
    let (lo, hi) = scale;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(LossError::Config(format!("crop scale range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1")));
    }
    let min_side = img.width().min(img.height()) as f64;
    if min_side < out as f64 * lo {
        return Err(LossError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    Ok((0..n)
        .map(|_| {
            let s = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let side = s * min_side;
            let row = rng.gen::<f64>() * (img.height() as f64 - side);
            let col = rng.gen::<f64>() * (img.width() as f64 - side);
            let window = CropWindow { row, col, side };
            Crop {
                image: resample(img, window, out),
                window,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Image {
        Image::from_fn(8, 8, |r, c| Rgb::new((r * 8 + c) as f64 / 64.0, (r as f64).sin(), (c as f64 * 0.7).cos()))
    }

    #[test]
    fn unit_scale_on_square_image_gives_the_resized_full_image() {
        let img = Image::from_fn(300, 300, |r, c| Rgb::new(r as f64, c as f64, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let crops = crop_augment(&img, 3, (1.0, 1.0), &mut rng).unwrap();
        let full = resample(&img, CropWindow::full(&img), CROP_SIZE);
        for c in &crops {
            assert_eq!((c.image.width(), c.image.height()), (224, 224));
            assert_eq!(c.image, full);
        }
    }

    #[test]
    fn crops_are_always_224() {
        let img = Image::new(256, 200, Rgb::splat(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for c in crop_augment(&img, 5, (0.5, 0.99), &mut rng).unwrap() {
            assert_eq!((c.image.width(), c.image.height()), (224, 224));
        }
        assert!(crop_augment(&Image::new(64, 64, Rgb::ZERO), 1, (0.5, 1.0), &mut rng).is_err());
        assert!(crop_augment(&img, 1, (0.9, 0.5), &mut rng).is_err());
    }

    #[test]
    fn bilinear_backward_matches_finite_differences() {
        let img = toy();
        let window = CropWindow {
            row: 1.3,
            col: 0.6,
            side: 5.7,
        };
        let out = 6;
        let weights = Image::from_fn(out, out, |r, c| Rgb::new(1.0 + r as f64, -0.5 * c as f64, 0.25));
        let objective = |im: &Image| -> f64 {
            resample(im, window, out)
                .pixels()
                .iter()
                .zip(weights.pixels())
                .map(|(a, b)| a.dot(*b))
                .sum()
        };
        let mut grad = Image::new(8, 8, Rgb::ZERO);
        resample_backward(&weights, window, &mut grad);
        let h = 1e-5;
        for r in 0..8 {
            for c in 0..8 {
                let mut up = img.clone();
                up.set(r, c, img.get(r, c) + Rgb::new(h, 0.0, 0.0));
                let mut down = img.clone();
                down.set(r, c, img.get(r, c) - Rgb::new(h, 0.0, 0.0));
                let fd = (objective(&up) - objective(&down)) / (2.0 * h);
                let a = grad.get(r, c).x;
                assert!((a - fd).abs() <= 1e-4 * fd.abs().max(1e-6), "({r},{c}) {a} vs {fd}");
            }
        }
    }
}
