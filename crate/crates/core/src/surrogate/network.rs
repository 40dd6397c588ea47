use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pre-activations above this are clamped before exponentiation.
pub const EXP_CLAMP: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
    Exponential,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Exponential => z.min(EXP_CLAMP).exp(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Exponential => {
                if z > EXP_CLAMP {
                    0.0
                } else {
                    y
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_sizes.len() < 2 || activations.len() + 1 != layer_sizes.len() {
            return Err(Error::invalid(format!(
                "{} layer sizes need {} activations, got {}",
                layer_sizes.len(),
                layer_sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(NetworkSpec {
            layer_sizes,
            activations,
        })
    }

    /// `[k, 4k, 8k, 4k, m]` with sigmoid, relu, relu, exponential.
    pub fn dnn1(k: usize, m: usize) -> Result<Self> {
        use Activation::*;
        Self::new(
            vec![k, 4 * k, 8 * k, 4 * k, m],
            vec![Sigmoid, Relu, Relu, Exponential],
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// Provenance written alongside trained weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    #[serde(rename = "N_DNN")]
    pub n_dnn: usize,
    pub epochs: usize,
    pub seed: u64,
    pub test_rmse: f64,
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub learning_rate: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub init: String,
    #[serde(default)]
    pub shuffle: String,
    #[serde(default)]
    pub clamped_exponentials: u64,
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateNet {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    pub training_meta: Option<TrainingMeta>,
}

pub(crate) struct BatchPass {
    pub pre: Vec<DMatrix<f64>>,
    /// `post[0]` is the input batch, `post[l + 1]` the output of layer `l`.
    pub post: Vec<DMatrix<f64>>,
    pub clamped: u64,
}

impl SurrogateNet {
    /// All weights and biases zero.
    pub fn zeros(spec: NetworkSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, &activation)| Layer {
                weights: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
                activation,
            })
            .collect();
        SurrogateNet {
            spec,
            layers,
            training_meta: None,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weights.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // column-major fill; the order only matters for reproducibility
            for w in layer.weights.iter_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        let net = SurrogateNet {
            spec,
            layers,
            training_meta: None,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.len() != self.spec.activations.len() {
            return Err(Error::invalid("layer count does not match spec"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let expect = (self.spec.layer_sizes[l + 1], self.spec.layer_sizes[l]);
            if layer.weights.shape() != expect || layer.bias.len() != expect.0 {
                return Err(Error::invalid(format!(
                    "layer {l} has shape {:?}, expected {expect:?}",
                    layer.weights.shape()
                )));
            }
            if layer.activation != self.spec.activations[l] {
                return Err(Error::invalid(format!("layer {l} activation does not match spec")));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, theta: &[f64]) -> Result<DVector<f64>> {
        if theta.len() != self.spec.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {}",
                self.spec.input_dim(),
                theta.len()
            )));
        }
        let mut y = DVector::from_column_slice(theta);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            z.gemv(1.0, &layer.weights, &y, 1.0);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
            let act = layer.activation;
            z.apply(|v| *v = act.apply(*v));
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
            y = z;
        }
        Ok(y)
    }

    /// Column-per-sample batch prediction.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.batch_pass(inputs)?.post.pop().unwrap())
    }

    pub(crate) fn batch_pass(&self, inputs: &DMatrix<f64>) -> Result<BatchPass> {
        if inputs.nrows() != self.spec.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} input rows, got {}",
                self.spec.input_dim(),
                inputs.nrows()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(inputs.clone());
        let mut clamped = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * post.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if layer.activation == Activation::Exponential {
                clamped += z.iter().filter(|&&v| v > EXP_CLAMP).count() as u64;
            }
            let act = layer.activation;
            let y = z.map(|v| act.apply(v));
            if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
            pre.push(z);
            post.push(y);
        }
        Ok(BatchPass { pre, post, clamped })
    }

    /// Mean squared error over all samples and outputs, and its gradient.
    pub fn loss_and_gradients(
        &self,
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
    ) -> Result<(f64, Gradients)> {
        let pass = self.batch_pass(inputs)?;
        let (loss, grads) = self.backward(&pass, targets)?;
        Ok((loss, grads))
    }

    pub(crate) fn backward(&self, pass: &BatchPass, targets: &DMatrix<f64>) -> Result<(f64, Gradients)> {
        let out = pass.post.last().unwrap();
        if out.shape() != targets.shape() {
            return Err(Error::invalid("targets shape does not match network output"));
        }
        let scale = 1.0 / out.len() as f64;
        let resid = out - targets;
        let loss = resid.norm_squared() * scale;
        let mut upstream = resid * (2.0 * scale);

        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let act = self.layers[l].activation;
            let delta = upstream.zip_zip_map(&pass.pre[l], &pass.post[l + 1], |g, z, y| {
                g * act.derivative(z, y)
            });
            weights.push(&delta * pass.post[l].transpose());
            biases.push(delta.column_sum());
            if l > 0 {
                upstream = self.layers[l].weights.tr_mul(&delta);
            }
        }
        weights.reverse();
        biases.reverse();
        Ok((loss, Gradients { weights, biases }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&NetFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(s)?;
        let spec = NetworkSpec::new(file.spec.layer_sizes, file.spec.activations)?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                let rows = l.w.len();
                let cols = l.w.first().map_or(0, Vec::len);
                if l.w.iter().any(|r| r.len() != cols) {
                    return Err(Error::invalid("ragged weight matrix"));
                }
                Ok(Layer {
                    weights: DMatrix::from_fn(rows, cols, |i, j| l.w[i][j]),
                    bias: DVector::from_vec(l.b),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::from_layers(spec, layers)?;
        net.training_meta = file.training_meta;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    spec: NetworkSpec,
    layers: Vec<LayerFile>,
    #[serde(default)]
    training_meta: Option<TrainingMeta>,
}

impl From<&SurrogateNet> for NetFile {
    fn from(net: &SurrogateNet) -> Self {
        NetFile {
            spec: net.spec.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: l.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    b: l.bias.iter().copied().collect(),
                    activation: l.activation,
                })
                .collect(),
            training_meta: net.training_meta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network() {
        let net = SurrogateNet::zeros(NetworkSpec::dnn1(3, 5).unwrap());
        let y = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(y.as_slice(), &[1.0; 5]);
        let pass = net.batch_pass(&DMatrix::zeros(3, 2)).unwrap();
        assert!(pass.post[1].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.5), 2.5);
        assert_eq!(Activation::Linear.apply(-2.5), -2.5);
        assert_eq!(Activation::Exponential.apply(1e6), EXP_CLAMP.exp());
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = SurrogateNet::init(NetworkSpec::dnn1(4, 3).unwrap(), &mut rng);
        let x = DMatrix::from_fn(4, 6, |i, j| (i as f64 - j as f64) * 0.3);
        let batch = net.predict(&x).unwrap();
        for j in 0..6 {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let single = net.forward(&col).unwrap();
            for i in 0..3 {
                assert!((single[i] - batch[(i, j)]).abs() <= 1e-14 * single[i].abs());
            }
        }
    }

    #[test]
    fn json_roundtrip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = SurrogateNet::init(NetworkSpec::dnn1(2, 3).unwrap(), &mut rng);
        for l in net.layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let back = SurrogateNet::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        let theta = [0.123, -0.77];
        assert_eq!(back.forward(&theta).unwrap(), net.forward(&theta).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(NetworkSpec::new(vec![2, 3], vec![]).is_err());
        let net = SurrogateNet::zeros(NetworkSpec::dnn1(2, 1).unwrap());
        assert!(net.forward(&[1.0]).is_err());
        let mut bad = net.clone();
        bad.layers_mut()[1].weights[(0, 0)] = f64::NAN;
        assert!(matches!(bad.forward(&[1.0, 1.0]), Err(Error::NumericOverflow { .. })));
    }
}
