use crate::diff::Rgb;
use crate::geometry::{Camera, Scene};
use crate::imageio::Image;
use crate::renderer::{backward_view, render_view, render_view_traced, RenderOptions};
use crate::style::Style;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    /// Parameters probed per class, spread evenly over the class.
    pub samples_per_class: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-3,
            floor: 1e-6,
            samples_per_class: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

/// Fixed pixel weights in [-1, 1] for the scalar test objective.
pub fn probe_weights(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |r, c| {
        let t = (r * width + c) as f64;
        Rgb::new((0.37 * t + 0.1).sin(), (0.91 * t + 1.3).cos(), (0.53 * t + 2.2).sin())
    })
}

fn evenly_spaced(indices: &[usize], n: usize) -> Vec<usize> {
    if indices.len() <= n {
        return indices.to_vec();
    }
    (0..n).map(|k| indices[k * (indices.len() - 1) / (n - 1).max(1)]).collect()
}

/// Compares analytic gradients of `sum(weights * image)` against central
/// differences, one report per parameter class.
pub fn check_gradients(
    scene: &Scene,
    camera: &Camera,
    style: &Style,
    options: &RenderOptions,
    config: &GradCheckConfig,
) -> Vec<ClassCheck> {
    let weights = probe_weights(camera.width, camera.height);
    let objective = |s: &Style| -> f64 {
        let v = render_view(scene, camera, s, options);
        v.image.pixels().iter().zip(weights.pixels()).map(|(a, w)| a.dot(*w)).sum()
    };
    let traced = render_view_traced(scene, camera, style, options);
    let mut grad = vec![0.0; style.param_count()];
    backward_view(&traced, style, options, &weights, &mut grad);
    let base = style.params();
    let h = config.step;
    style
        .param_classes()
        .into_iter()
        .map(|class| {
            let picked = evenly_spaced(&class.indices, config.samples_per_class);
            let mut report = ClassCheck {
                name: class.name,
                checked: picked.len(),
                max_rel_error: 0.0,
                worst_index: None,
                analytic: 0.0,
                numeric: 0.0,
                passed: true,
            };
            for i in picked {
                let mut probe = style.clone();
                let mut q = base.clone();
                q[i] = base[i] + h;
                probe.set_params(&q);
                let up = objective(&probe);
                q[i] = base[i] - h;
                probe.set_params(&q);
                let down = objective(&probe);
                let fd = (up - down) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / fd.abs().max(config.floor);
                if !(rel <= report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_index = Some(i);
                    report.analytic = grad[i];
                    report.numeric = fd;
                }
            }
            report.passed = report.max_rel_error < config.tolerance;
            report
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_spacing_keeps_endpoints() {
        let v: Vec<usize> = (10..30).collect();
        assert_eq!(evenly_spaced(&v, 3), vec![10, 19, 29]);
        assert_eq!(evenly_spaced(&v[..2], 3), vec![10, 11]);
        assert_eq!(evenly_spaced(&v, 1), vec![10]);
    }
}
