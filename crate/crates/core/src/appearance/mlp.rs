//! Dense networks evaluated on row batches, with explicit backpropagation.
//!
//! Parameters live in one flat buffer so optimizers and checkpoints can treat
//! every network uniformly. Each layer stores `W` (`in x out`, row-major)
//! followed by `b` (`out`).

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    /// `x * sigmoid(x)`.
    Silu,
    Sigmoid,
    /// `scale * tanh(x)`.
    ScaledTanh(f64),
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Silu => z * crate::diff::sigmoid(z),
            Activation::Sigmoid => crate::diff::sigmoid(z),
            Activation::ScaledTanh(k) => k * z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Silu => {
                let s = crate::diff::sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::ScaledTanh(k) => {
                let t = z.tanh();
                k * (1.0 - t * t)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    /// Fan-in scaled uniform init; `zero_last` zeroes the output layer.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        zero_last: bool,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let zero = zero_last && l + 1 == layers;
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(if zero { 0.0 } else { rng.gen_range(-bound..bound) });
            }
        }
        Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params,
        }
    }

    pub fn from_params(sizes: &[usize], hidden: Activation, output: Activation, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), Self::count_params(sizes));
        Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params,
        }
    }

    pub fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, bias)` offsets and lengths for each layer.
    pub fn layer_ranges(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let wr = off..off + w[0] * w[1];
                let br = wr.end..wr.end + w[1];
                off = br.end;
                (wr, br)
            })
            .collect()
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (wr, br) = self.layer_ranges().swap_remove(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((i, o), &self.params[wr]).expect("layer shape");
        let b = ArrayView1::from(&self.params[br]);
        (w, b)
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 2 == self.sizes.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut a = input.to_owned();
        for l in 0..self.sizes.len() - 1 {
            let (w, b) = self.layer(l);
            let mut z = a.dot(&w);
            z += &b;
            let act = self.activation(l);
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        a
    }

    pub fn forward_traced(&self, input: Array2<f64>) -> MlpTrace {
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = input;
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = a.dot(&w);
            z += &b;
            let act = self.activation(l);
            let next = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        MlpTrace {
            inputs,
            pre,
            output: a,
        }
    }

    /// Accumulates parameter gradients into `grad` (same layout as
    /// [`Self::params`]) and returns the gradient with respect to the input.
    pub fn backward(&self, trace: &MlpTrace, d_output: &Array2<f64>, grad: &mut [f64]) -> Array2<f64> {
        assert_eq!(grad.len(), self.params.len());
        let ranges = self.layer_ranges();
        let layers = self.sizes.len() - 1;
        let mut d_a = d_output.to_owned();
        for l in (0..layers).rev() {
            let act = self.activation(l);
            let z = &trace.pre[l];
            let out = if l + 1 == layers { &trace.output } else { &trace.inputs[l + 1] };
            let mut d_z = d_a;
            ndarray::Zip::from(&mut d_z)
                .and(z)
                .and(out)
                .for_each(|d, &zv, &av| *d *= act.derivative(zv, av));
            let x = &trace.inputs[l];
            let d_w = x.t().dot(&d_z);
            let d_b = d_z.sum_axis(Axis(0));
            let (wr, br) = ranges[l].clone();
            for (g, v) in grad[wr].iter_mut().zip(d_w.iter()) {
                *g += v;
            }
            for (g, v) in grad[br].iter_mut().zip(d_b.iter()) {
                *g += v;
            }
            let (w, _) = self.layer(l);
            d_a = d_z.dot(&w.t());
        }
        d_a
    }

    /// Single-row convenience wrapper around [`Self::forward`].
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
        self.forward(&input).slice(s![0, ..]).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mlp = Mlp::new(&[4, 6, 5, 3], Activation::Silu, Activation::Sigmoid, false, &mut rng);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let weights = Array2::from_shape_fn((3, 3), |(i, j)| ((i + 2 * j) as f64 * 0.9).cos());
        let objective = |m: &Mlp| (m.forward(&x) * &weights).sum();

        let trace = mlp.forward_traced(x.clone());
        let mut grad = vec![0.0; mlp.params().len()];
        let d_in = mlp.backward(&trace, &weights, &mut grad);

        let h = 1e-6;
        for p in (0..grad.len()).step_by(3) {
            let orig = mlp.params[p];
            mlp.params[p] = orig + h;
            let up = objective(&mlp);
            mlp.params[p] = orig - h;
            let down = objective(&mlp);
            mlp.params[p] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((grad[p] - fd).abs() / fd.abs().max(1e-6) < 1e-5, "param {p}: {} vs {fd}", grad[p]);
        }
        // Input gradient for one entry.
        let mut xp = x.clone();
        xp[[1, 2]] += h;
        let mut xm = x.clone();
        xm[[1, 2]] -= h;
        let fd = ((mlp.forward(&xp) * &weights).sum() - (mlp.forward(&xm) * &weights).sum()) / (2.0 * h);
        assert!((d_in[[1, 2]] - fd).abs() < 1e-7);
    }

    #[test]
    fn zero_last_layer_outputs_activation_of_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(&[5, 8, 8, 2], Activation::Silu, Activation::ScaledTanh(0.5), true, &mut rng);
        assert_eq!(mlp.eval(&[0.3, 0.1, -0.4, 2.0, 1.0]), vec![0.0, 0.0]);
    }
}
