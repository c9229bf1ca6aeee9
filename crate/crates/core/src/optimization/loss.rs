use thiserror::Error;

use super::remote::RemoteError;
use crate::diff::Rgb;
use crate::imageio::Image;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("image {width}x{height} is too small for the requested crops")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss or gradient")]
    NonFinite,
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

/// Loss value and its gradient with respect to every input pixel.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Vec<Image>,
}

/// Anything that scores a batch of images and differentiates the score.
pub trait LossProvider {
    fn evaluate(&mut self, images: &[Image]) -> Result<LossOutput, LossError>;
}

/// Negative cosine similarity.
pub fn cosine_loss(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    if a.len() != b.len() {
        return Err(LossError::Shape(format!("{} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(LossError::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((-dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean squared error over every channel of every pixel, with gradient
/// `2 (x - t) / N`.
pub fn image_target_loss(images: &[Image], targets: &[&Image]) -> Result<LossOutput, LossError> {
    if images.len() != targets.len() {
        return Err(LossError::Shape(format!("{} images vs {} targets", images.len(), targets.len())));
    }
    for (a, b) in images.iter().zip(targets) {
        if (a.width(), a.height()) != (b.width(), b.height()) {
            return Err(LossError::Shape(format!(
                "{}x{} image vs {}x{} target",
                a.width(),
                a.height(),
                b.width(),
                b.height()
            )));
        }
    }
    let n: usize = images.iter().map(|i| i.pixels().len() * 3).sum();
    let scale = 2.0 / n.max(1) as f64;
    let mut loss = 0.0;
    let grads = images
        .iter()
        .zip(targets)
        .map(|(img, tgt)| {
            let px = img
                .pixels()
                .iter()
                .zip(tgt.pixels())
                .map(|(&x, &t)| {
                    let d = x - t;
                    loss += d.dot(d);
                    d * scale
                })
                .collect();
            Image::from_pixels(img.width(), img.height(), px)
        })
        .collect();
    Ok(LossOutput {
        loss: loss / n.max(1) as f64,
        grads,
    })
}

/// [`LossProvider`] comparing against a fixed list of targets.
pub struct TargetLoss<'a> {
    pub targets: Vec<&'a Image>,
}

impl LossProvider for TargetLoss<'_> {
    fn evaluate(&mut self, images: &[Image]) -> Result<LossOutput, LossError> {
        image_target_loss(images, &self.targets)
    }
}

/// Peak signal-to-noise ratio for a peak of 1, optionally over masked pixels.
pub fn psnr(a: &Image, b: &Image, mask: Option<&[bool]>) -> f64 {
    let mut se = 0.0;
    let mut count = 0usize;
    for (i, (x, y)) in a.pixels().iter().zip(b.pixels()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let d: Rgb = *x - *y;
        se += d.dot(d);
        count += 3;
    }
    if count == 0 {
        return f64::INFINITY;
    }
    let mse = se / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -0.5];
        assert!((cosine_loss(&a, &a).unwrap() + 1.0).abs() < 1e-15);
        assert!(cosine_loss(&[1.0, 0.0], &[0.0, 3.0]).unwrap().abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine_loss(&a, &neg).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(cosine_loss(&[0.0, 0.0], &[1.0, 0.0]), Err(LossError::ZeroNorm)));
    }

    #[test]
    fn target_loss_cases() {
        let t = Image::from_fn(4, 3, |r, c| Rgb::new(r as f64 * 0.1, c as f64 * 0.2, 0.3));
        let out = image_target_loss(&[t.clone()], &[&t]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads[0].pixels().iter().all(|&g| g == Rgb::ZERO));
        let mut x = t.clone();
        x.set(1, 2, t.get(1, 2) + Rgb::new(0.5, 0.0, 0.0));
        let out = image_target_loss(&[x.clone()], &[&t]).unwrap();
        assert!((out.loss - 0.25 / 36.0).abs() < 1e-15);
        let h = 1e-6;
        let mut up = x.clone();
        up.set(0, 1, x.get(0, 1) + Rgb::new(0.0, h, 0.0));
        let mut down = x.clone();
        down.set(0, 1, x.get(0, 1) - Rgb::new(0.0, h, 0.0));
        let fd = (image_target_loss(&[up], &[&t]).unwrap().loss - image_target_loss(&[down], &[&t]).unwrap().loss)
            / (2.0 * h);
        assert!((out.grads[0].get(0, 1).y - fd).abs() < 1e-9);
        assert!(image_target_loss(&[Image::new(2, 2, Rgb::ZERO)], &[&t]).is_err());
    }

    #[test]
    fn psnr_of_known_error() {
        let a = Image::new(2, 2, Rgb::splat(0.5));
        let b = Image::new(2, 2, Rgb::splat(0.6));
        assert!((psnr(&a, &b, None) - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, None), f64::INFINITY);
    }
}
