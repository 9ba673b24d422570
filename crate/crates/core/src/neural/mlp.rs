use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{aux_rng, PathRng};

/// Layer widths of the forward-variance network.
pub const WIDTHS: [usize; 5] = [1, 100, 100, 100, 1];
pub const LEAKY_SLOPE: f64 = 0.01;

const INIT_SLOT: u64 = 16;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Fully connected network with leaky-ReLU hidden layers and a softplus
/// output. Parameters are stored flat, layer by layer: the weight matrix
/// (row-major, `out × in`) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
    slope: f64,
}

impl Mlp {
    pub fn zeros(widths: &[usize], slope: f64) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 1 || *widths.last().unwrap() != 1 || widths.contains(&0) {
            return Err(Error::domain(format!("invalid layer widths {widths:?}")));
        }
        let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; count],
            slope,
        })
    }

    /// He/Kaiming normal weights, `std = sqrt(2 / ((1 + s²) fan_in))`, and
    /// biases uniform on `±1/sqrt(fan_in)`. Nonzero biases keep the hidden
    /// units off the activation kink at t = 0.
    pub fn kaiming(widths: &[usize], slope: f64, seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(widths, slope)?;
        let mut rng: PathRng = aux_rng(seed, INIT_SLOT);
        for l in 0..mlp.layers() {
            let (fan_in, _) = mlp.shape(l);
            let sd = (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt();
            let dist = Normal::new(0.0, sd).expect("positive sd");
            let (w, b) = mlp.layer_range(l);
            for x in &mut mlp.params[w] {
                *x = dist.sample(&mut rng);
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in &mut mlp.params[b] {
                *x = rng.gen_range(-bound..bound);
            }
        }
        Ok(mlp)
    }

    pub fn default_network(seed: u64) -> Self {
        Self::kaiming(&WIDTHS, LEAKY_SLOPE, seed).expect("valid default widths")
    }

    pub fn from_params(widths: &[usize], slope: f64, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(widths, slope)?;
        if params.len() != mlp.params.len() {
            return Err(Error::domain(format!(
                "expected {} parameters for widths {widths:?}, got {}",
                mlp.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("network parameters must be finite"));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// (fan_in, fan_out) of layer `l`.
    pub fn shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l + 1])
    }

    /// Index ranges of the weights and biases of layer `l`.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.widths[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (i, o) = self.shape(l);
        (start..start + i * o, start + i * o..start + i * o + o)
    }

    /// `out = W x + b` for one sample.
    pub(crate) fn affine(&self, l: usize, x: &[f64], out: &mut [f64]) {
        let (fan_in, _) = self.shape(l);
        let (w, b) = self.layer_range(l);
        let (w, b) = (&self.params[w], &self.params[b]);
        for (j, o) in out.iter_mut().enumerate() {
            let row = &w[j * fan_in..(j + 1) * fan_in];
            let mut s = b[j];
            for (a, v) in row.iter().zip(x) {
                s += a * v;
            }
            *o = s;
        }
    }

    /// Output pre-activation for one input; hidden activations are
    /// produced by the same routine the tape uses.
    pub(crate) fn forward_pre(&self, t: f64) -> f64 {
        let mut x = vec![t];
        for l in 0..self.layers() {
            let mut y = vec![0.0; self.widths[l + 1]];
            self.affine(l, &x, &mut y);
            if l + 1 < self.layers() {
                for v in &mut y {
                    *v = leaky(*v, self.slope);
                }
            }
            x = y;
        }
        x[0]
    }

    /// ξ0(t; θ) ≥ 0.
    pub fn forward(&self, t: f64) -> f64 {
        softplus(self.forward_pre(t))
    }
}
