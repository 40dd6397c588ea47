use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use super::network::{Gradients, SurrogateNet};
use crate::{Error, Result};

/// Input/target pairs stored one column per sample, with a train/test
/// partition of the sample indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl TrainingSet {
    /// Random 9:1 split; the test set holds `N / 10` samples.
    pub fn new<R: Rng + ?Sized>(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        let n = inputs.ncols();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let test = idx.split_off(n - n / 10);
        Self::with_split(inputs, targets, idx, test)
    }

    pub fn with_split(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = inputs.ncols();
        if n == 0 || targets.ncols() != n {
            return Err(Error::invalid(format!(
                "need matching non-empty sample counts, got {n} inputs and {} targets",
                targets.ncols()
            )));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("split must partition the sample indices"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("split must partition the sample indices"));
        }
        Ok(TrainingSet {
            inputs,
            targets,
            train,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub fn gather(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.inputs.select_columns(idx), self.targets.select_columns(idx))
    }

    pub fn train_data(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        self.gather(&self.train)
    }

    pub fn test_data(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        self.gather(&self.test)
    }
}

/// RMSprop with per-parameter running mean-square accumulators.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    acc_w: Vec<DMatrix<f64>>,
    acc_b: Vec<DVector<f64>>,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp::new(1e-3, 0.9, 1e-8).unwrap()
    }
}

impl RmsProp {
    pub fn new(learning_rate: f64, rho: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && rho > 0.0 && rho < 1.0 && epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "bad RMSprop hyperparameters lr={learning_rate} rho={rho} eps={epsilon}"
            )));
        }
        Ok(RmsProp {
            learning_rate,
            rho,
            epsilon,
            acc_w: Vec::new(),
            acc_b: Vec::new(),
        })
    }

    pub fn accumulators(&self) -> impl Iterator<Item = f64> + '_ {
        self.acc_w
            .iter()
            .flat_map(|m| m.iter().copied())
            .chain(self.acc_b.iter().flat_map(|v| v.iter().copied()))
    }

    pub fn step(&mut self, net: &mut SurrogateNet, grads: &Gradients) {
        if self.acc_w.is_empty() {
            self.acc_w = grads.weights.iter().map(|g| g.map(|_| 0.0)).collect();
            self.acc_b = grads.biases.iter().map(|g| g.map(|_| 0.0)).collect();
        }
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        let update = |p: &mut f64, a: &mut f64, g: f64| {
            *a = rho * *a + (1.0 - rho) * g * g;
            *p -= lr * g / (a.sqrt() + eps);
        };
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            for ((p, a), &g) in layer
                .weights
                .iter_mut()
                .zip(self.acc_w[l].iter_mut())
                .zip(grads.weights[l].iter())
            {
                update(p, a, g);
            }
            for ((p, a), &g) in layer
                .bias
                .iter_mut()
                .zip(self.acc_b[l].iter_mut())
                .zip(grads.biases[l].iter())
            {
                update(p, a, g);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    /// Full train-set MSE before training and after every epoch.
    pub loss_history: Vec<f64>,
    pub best_epoch: usize,
    /// Exponential pre-activations clipped during training.
    pub clamped_exponentials: u64,
}

fn mse(net: &SurrogateNet, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let pred = net.predict(x)?;
    Ok((pred - y).norm_squared() / y.len() as f64)
}

/// Mini-batch training on the train partition. Each epoch draws a fresh
/// permutation; the last batch may be smaller than `batch_size`.
///
/// On divergence the best parameters seen so far are restored and
/// `TrainingDiverged` is returned.
pub fn train<R: Rng + ?Sized>(
    net: &mut SurrogateNet,
    data: &TrainingSet,
    epochs: usize,
    batch_size: usize,
    optimizer: &mut RmsProp,
    rng: &mut R,
) -> Result<TrainingReport> {
    let (x, y) = data.train_data();
    let n = x.ncols();
    if n == 0 {
        return Err(Error::invalid("empty training partition"));
    }
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must lie in 1..={n}"
        )));
    }
    let mut history = vec![mse(net, &x, &y)?];
    let mut best = (history[0], 0, net.clone());
    let mut clamped = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let mut diverged = false;
        for chunk in order.chunks(batch_size) {
            let xb = x.select_columns(chunk);
            let yb = y.select_columns(chunk);
            let step = net
                .batch_pass(&xb)
                .and_then(|pass| {
                    clamped += pass.clamped;
                    net.backward(&pass, &yb)
                });
            match step {
                Ok((loss, grads)) if loss.is_finite() => optimizer.step(net, &grads),
                _ => {
                    diverged = true;
                    break;
                }
            }
        }
        let loss = if diverged { f64::NAN } else { mse(net, &x, &y).unwrap_or(f64::NAN) };
        if !loss.is_finite() {
            *net = best.2;
            return Err(Error::TrainingDiverged {
                epoch,
                best_epoch: best.1,
            });
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, epoch, net.clone());
        }
    }
    Ok(TrainingReport {
        loss_history: history,
        best_epoch: best.1,
        clamped_exponentials: clamped,
    })
}

/// Root mean square over every output of every sample.
pub fn rmse(net: &SurrogateNet, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    if inputs.ncols() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    let pred = net.predict(inputs)?;
    if pred.shape() != targets.shape() {
        return Err(Error::invalid("targets shape does not match network output"));
    }
    Ok(((pred - targets).norm_squared() / targets.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{Activation, NetworkSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ts = TrainingSet::new(DMatrix::zeros(2, 95), DMatrix::zeros(1, 95), &mut rng).unwrap();
        assert_eq!(ts.test_indices().len(), 9);
        assert_eq!(ts.train_indices().len(), 86);
        assert!(TrainingSet::with_split(DMatrix::zeros(1, 3), DMatrix::zeros(1, 3), vec![0, 1], vec![1]).is_err());
    }

    #[test]
    fn zero_epochs_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = SurrogateNet::init(NetworkSpec::dnn1(2, 2).unwrap(), &mut rng);
        let before = net.clone();
        let ts = TrainingSet::new(
            DMatrix::from_fn(2, 20, |i, j| (i + j) as f64 * 0.1),
            DMatrix::from_element(2, 20, 1.5),
            &mut rng,
        )
        .unwrap();
        let report = train(&mut net, &ts, 0, 5, &mut RmsProp::default(), &mut rng).unwrap();
        assert_eq!(net, before);
        assert_eq!(report.loss_history.len(), 1);
    }

    #[test]
    fn rmse_offsets() {
        let net = SurrogateNet::zeros(NetworkSpec::new(vec![1, 2], vec![Activation::Exponential]).unwrap());
        let x = DMatrix::zeros(1, 4);
        assert_eq!(rmse(&net, &x, &DMatrix::from_element(2, 4, 1.0)).unwrap(), 0.0);
        let r = rmse(&net, &x, &DMatrix::from_element(2, 4, 1.25)).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        assert!(rmse(&net, &DMatrix::zeros(1, 0), &DMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn rejects_oversized_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = SurrogateNet::zeros(NetworkSpec::new(vec![1, 1], vec![Activation::Linear]).unwrap());
        let ts = TrainingSet::with_split(DMatrix::zeros(1, 3), DMatrix::zeros(1, 3), vec![0, 1, 2], vec![]).unwrap();
        assert!(train(&mut net, &ts, 1, 4, &mut RmsProp::default(), &mut rng).is_err());
    }
}
