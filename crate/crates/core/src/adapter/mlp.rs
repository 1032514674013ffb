use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AdapterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative; the rectifier's derivative at exactly zero is taken as 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network `affine → act → … → affine`, optionally with an
/// additive skip from input to output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAdapter {
    widths: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    activation: Activation,
    skip: bool,
}

/// Parameter gradients, shaped like the adapter's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl AdapterGradients {
    pub fn zeros_like(adapter: &MlpAdapter) -> Self {
        Self {
            weights: adapter
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: adapter.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &AdapterGradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b * scale;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b * scale;
        }
    }

    /// All entries, layer by layer, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.transpose().iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct ForwardTrace {
    /// Layer inputs: `inputs[0]` is the network input.
    pub inputs: Vec<DVector<f64>>,
    /// Pre-activation outputs of every layer.
    pub pre: Vec<DVector<f64>>,
    pub output: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct AdapterJson {
    widths: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    skip: bool,
}

impl MlpAdapter {
    pub const DEFAULT_WIDTHS: [usize; 4] = [10, 64, 64, 10];

    /// All-zero parameters. With `skip` the network is the identity map.
    pub fn zeros(widths: &[usize], activation: Activation, skip: bool) -> Result<Self, AdapterError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(AdapterError::Config(format!(
                "widths {widths:?} must list at least two positive layer sizes"
            )));
        }
        if skip && widths[0] != widths[widths.len() - 1] {
            return Err(AdapterError::Config(
                "a skip connection needs equal input and output widths".into(),
            ));
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: widths[1..].iter().map(|&n| DVector::zeros(n)).collect(),
            activation,
            skip,
        })
    }

    /// Gain on the `±x` path units set up by [`MlpAdapter::identity_init`].
    pub const IDENTITY_GAIN: f64 = 8.0;

    /// Identity map at initialization, with hidden units ready to learn a
    /// linear residual.
    ///
    /// The first layer holds `+g·x` and `-g·x` copies of the input so that
    /// `relu(g·x) - relu(-g·x)` recovers it up to scale; middle layers pass
    /// those units through with gain `g`. Remaining hidden units get small
    /// random weights, and the output layer starts at zero so the skip
    /// connection alone defines the output.
    ///
    /// A large `g` means the output layer only needs weights of order
    /// `g^(1-L)` to learn a linear residual, so gradient steps barely move the
    /// rectifier kinks of the path units and a linear map stays exactly
    /// representable throughout training.
    pub fn identity_init(widths: &[usize], seed: u64) -> Result<Self, AdapterError> {
        let mut a = Self::zeros(widths, Activation::Relu, true)?;
        let n_in = widths[0];
        if widths[1..widths.len() - 1].iter().any(|&w| w < 2 * n_in) {
            return Err(AdapterError::Config(format!(
                "identity initialization needs hidden widths of at least {}",
                2 * n_in
            )));
        }
        let g = Self::IDENTITY_GAIN;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = a.weights.len() - 1;
        for (l, w) in a.weights.iter_mut().enumerate().take(last) {
            let fan_in = w.ncols() as f64;
            let noise = Normal::new(0.0, 0.1 / fan_in.sqrt()).expect("positive scale");
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = match (l, r < 2 * n_in) {
                        (0, true) if c == r % n_in => {
                            if r < n_in {
                                g
                            } else {
                                -g
                            }
                        }
                        (_, true) if l > 0 && c == r => g,
                        (_, true) => 0.0,
                        _ => noise.sample(&mut rng),
                    };
                }
            }
        }
        Ok(a)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn skip(&self) -> bool {
        self.skip
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn set_layer(&mut self, layer: usize, w: DMatrix<f64>, b: DVector<f64>) -> Result<(), AdapterError> {
        let (rows, cols) = (self.widths[layer + 1], self.widths[layer]);
        if w.nrows() != rows || w.ncols() != cols {
            return Err(AdapterError::DimensionMismatch {
                what: "layer weight entries",
                expected: rows * cols,
                found: w.len(),
            });
        }
        if b.len() != rows {
            return Err(AdapterError::DimensionMismatch {
                what: "layer bias length",
                expected: rows,
                found: b.len(),
            });
        }
        self.weights[layer] = w;
        self.biases[layer] = b;
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Mutable view of every parameter in [`AdapterGradients::flatten`] order.
    pub fn parameters_mut(&mut self) -> Vec<&mut f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (rows, cols) = (w.nrows(), w.ncols());
            // Storage is column-major; reorder to row-major.
            let mut slots: Vec<Option<&mut f64>> = (0..rows * cols).map(|_| None).collect();
            for (i, x) in w.iter_mut().enumerate() {
                let (r, c) = (i % rows, i / rows);
                slots[r * cols + c] = Some(x);
            }
            out.extend(slots.into_iter().map(|s| s.expect("every slot filled")));
            out.extend(b.iter_mut());
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, AdapterError> {
        Ok(self.trace(x)?.output.as_slice().to_vec())
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Result<ForwardTrace, AdapterError> {
        if x.len() != self.input_dim() {
            return Err(AdapterError::DimensionMismatch {
                what: "adapter input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let input = DVector::from_column_slice(x);
        let mut inputs = vec![input.clone()];
        let mut pre = Vec::with_capacity(self.weights.len());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = w * inputs.last().expect("non-empty") + b;
            if l < last {
                inputs.push(z.map(|v| self.activation.apply(v)));
            }
            pre.push(z);
        }
        let mut output = pre[last].clone();
        if self.skip {
            output += &input;
        }
        Ok(ForwardTrace { inputs, pre, output })
    }

    /// Backpropagates `d_output` (the loss gradient at the network output).
    pub(crate) fn backward(&self, trace: &ForwardTrace, d_output: &DVector<f64>) -> AdapterGradients {
        let n = self.weights.len();
        let mut grads = AdapterGradients::zeros_like(self);
        let mut delta = d_output.clone();
        for l in (0..n).rev() {
            grads.weights[l] = &delta * trace.inputs[l].transpose();
            grads.biases[l] = delta.clone();
            if l > 0 {
                let back = self.weights[l].transpose() * &delta;
                delta = back.zip_map(&trace.pre[l - 1], |g, z| g * self.activation.derivative(z));
            }
        }
        grads
    }

    pub fn step(&mut self, grads: &AdapterGradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= g * step;
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            *b -= g * step;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn to_json(&self) -> String {
        let doc = AdapterJson {
            widths: self.widths.clone(),
            weights: self.weights.iter().map(|w| w.transpose().as_slice().to_vec()).collect(),
            biases: self.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
            activation: self.activation,
            skip: self.skip,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("adapter serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AdapterError> {
        let doc: AdapterJson = serde_json::from_str(text)?;
        let mut a = Self::zeros(&doc.widths, doc.activation, doc.skip)?;
        if doc.weights.len() != a.layer_count() || doc.biases.len() != a.layer_count() {
            return Err(AdapterError::DimensionMismatch {
                what: "layer count",
                expected: a.layer_count(),
                found: doc.weights.len().min(doc.biases.len()),
            });
        }
        for (l, (w, b)) in doc.weights.iter().zip(&doc.biases).enumerate() {
            let (rows, cols) = (doc.widths[l + 1], doc.widths[l]);
            if w.len() != rows * cols {
                return Err(AdapterError::DimensionMismatch {
                    what: "layer weight entries",
                    expected: rows * cols,
                    found: w.len(),
                });
            }
            a.set_layer(l, DMatrix::from_row_slice(rows, cols, w), DVector::from_column_slice(b))?;
        }
        if !a.is_finite() {
            return Err(AdapterError::Config("adapter parameters must be finite".into()));
        }
        Ok(a)
    }
}
