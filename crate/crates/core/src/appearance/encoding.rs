use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    /// Random Gaussian frequency matrix with entries drawn from N(0, sigma^2).
    Gaussian,
    /// Frequencies 1..=N applied to each coordinate.
    Ladder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub enabled: bool,
    pub mode: EncodingMode,
    /// Number of cos/sin pairs in gaussian mode.
    pub pairs: usize,
    pub sigma: f64,
    /// Ladder length N in ladder mode.
    pub frequencies: usize,
}

impl EncodingConfig {
    pub fn gaussian(pairs: usize, sigma: f64) -> Self {
        Self {
            enabled: true,
            mode: EncodingMode::Gaussian,
            pairs,
            sigma,
            frequencies: 8,
        }
    }

    pub fn ladder(frequencies: usize) -> Self {
        Self {
            enabled: true,
            mode: EncodingMode::Ladder,
            pairs: 0,
            sigma: 1.0,
            frequencies,
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::gaussian(0, 1.0)
        }
    }
}

/// `x -> [cos(2πBx), sin(2πBx)]`, or the identity when disabled.
/// The frequency matrix is fixed at construction and never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEncoding {
    input_dim: usize,
    /// Row-major `rows x input_dim`; empty for the identity encoding.
    matrix: Vec<f64>,
}

impl PositionalEncoding {
    pub fn new<R: Rng + ?Sized>(config: &EncodingConfig, input_dim: usize, rng: &mut R) -> Self {
        if !config.enabled {
            return Self::identity(input_dim);
        }
        let matrix = match config.mode {
            EncodingMode::Gaussian => {
                let normal = Normal::new(0.0, config.sigma).expect("finite sigma");
                (0..config.pairs * input_dim).map(|_| normal.sample(rng)).collect()
            }
            EncodingMode::Ladder => {
                let mut m = Vec::with_capacity(config.frequencies * input_dim * input_dim);
                for f in 1..=config.frequencies {
                    for axis in 0..input_dim {
                        m.extend((0..input_dim).map(|j| if j == axis { f as f64 } else { 0.0 }));
                    }
                }
                m
            }
        };
        Self { input_dim, matrix }
    }

    pub fn identity(input_dim: usize) -> Self {
        Self {
            input_dim,
            matrix: Vec::new(),
        }
    }

    pub fn from_matrix(input_dim: usize, matrix: Vec<f64>) -> Self {
        assert!(input_dim > 0 && matrix.len() % input_dim == 0);
        Self { input_dim, matrix }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn pairs(&self) -> usize {
        self.matrix.len() / self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        if self.is_identity() {
            self.input_dim
        } else {
            2 * self.pairs()
        }
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim);
        if self.is_identity() {
            out.copy_from_slice(x);
            return;
        }
        let k = self.pairs();
        for (r, row) in self.matrix.chunks_exact(self.input_dim).enumerate() {
            let phase = 2.0 * PI * row.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            let (s, c) = phase.sin_cos();
            out[r] = c;
            out[k + r] = s;
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.encode_into(x, &mut out);
        out
    }

    pub fn encode_batch<'a>(&self, inputs: impl ExactSizeIterator<Item = &'a [f64]>) -> Array2<f64> {
        let mut out = Array2::zeros((inputs.len(), self.output_dim()));
        for (mut row, x) in out.rows_mut().into_iter().zip(inputs) {
            self.encode_into(x, row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_input_gives_ones_then_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pe = PositionalEncoding::new(&EncodingConfig::gaussian(16, 12.0), 3, &mut rng);
        let out = pe.encode(&[0.0, 0.0, 0.0]);
        assert_eq!(out.len(), 32);
        assert!(out[..16].iter().all(|&v| v == 1.0));
        assert!(out[16..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outputs_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pe = PositionalEncoding::new(&EncodingConfig::gaussian(64, 4.0), 5, &mut rng);
        for i in 0..100 {
            let x: Vec<f64> = (0..5).map(|j| ((i * 7 + j) as f64).sin() * 3.0).collect();
            assert!(pe.encode(&x).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn ladder_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pe = PositionalEncoding::new(&EncodingConfig::ladder(2), 1, &mut rng);
        let out = pe.encode(&[0.25]);
        let expect = [
            (2.0 * PI * 0.25).cos(),
            (2.0 * PI * 0.5).cos(),
            (2.0 * PI * 0.25).sin(),
            (2.0 * PI * 0.5).sin(),
        ];
        for (a, b) in out.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn disabled_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pe = PositionalEncoding::new(&EncodingConfig::disabled(), 3, &mut rng);
        assert_eq!(pe.encode(&[0.1, -0.2, 0.3]), vec![0.1, -0.2, 0.3]);
    }
}
