use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ApproximatorInfo, ApproximatorSource, DirectionalApproximator, SensitivityKind};
use crate::dataset::{SampleTuple, SensitivityDataset};
use crate::dynamics::Activation;
use crate::error::{Error, Result};
use crate::State;

/// Smallest admissible RBF width.
const MIN_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum MlpLayer {
    /// `u_j = exp(-‖h - c_j‖² / w_j²)`; `centers` is `units x inputs`.
    Rbf { centers: DMatrix<f64>, widths: DVector<f64> },
    /// `act(W h + b)`; `weights` is `outputs x inputs`.
    Dense { weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation },
}

impl MlpLayer {
    pub fn input_dim(&self) -> usize {
        match self {
            MlpLayer::Rbf { centers, .. } => centers.ncols(),
            MlpLayer::Dense { weights, .. } => weights.ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            MlpLayer::Rbf { centers, .. } => centers.nrows(),
            MlpLayer::Dense { weights, .. } => weights.nrows(),
        }
    }

    fn parameters_mut(&mut self) -> [&mut [f64]; 2] {
        match self {
            MlpLayer::Rbf { centers, widths } => [centers.as_mut_slice(), widths.as_mut_slice()],
            MlpLayer::Dense { weights, bias, .. } => [weights.as_mut_slice(), bias.as_mut_slice()],
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            MlpLayer::Rbf { centers, widths } => {
                centers.iter().all(|v| v.is_finite()) && widths.iter().all(|w| w.is_finite() && *w > 0.0)
            }
            MlpLayer::Dense { weights, bias, .. } => weights.iter().chain(bias.iter()).all(|v| v.is_finite()),
        }
    }
}

/// Directional predictor: RBF input layer, rectified hidden layers, linear output.
///
/// Inputs are `x ⧺ v_hat ⧺ t / t_scale`, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub system_name: String,
    pub kind: SensitivityKind,
    pub state_dim: usize,
    pub t_scale: f64,
    pub layers: Vec<MlpLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_width: usize,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 25,
            batch_size: 64,
            seed: 0,
            hidden_width: 512,
            train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Held-out mean of `‖pred - d_hat‖²`.
    pub mse: f64,
    /// Held-out mean of `‖pred - d_hat‖ / ‖d_hat‖`, in percent.
    pub mre_percent: f64,
    pub train_mse: f64,
    pub train_mre_percent: f64,
    /// Mean absolute error of the raw output on the training split, last epoch.
    pub final_loss: f64,
    pub epochs_run: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub wall_time_secs: f64,
}

impl TrainingReport {
    /// Copy with the wall-clock field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_secs: 0.0, ..self.clone() }
    }
}

enum Cache {
    Rbf { input: DMatrix<f64>, dist2: DMatrix<f64>, out: DMatrix<f64> },
    Dense { input: DMatrix<f64>, out: DMatrix<f64> },
}

fn activation_derivative(act: Activation, out: f64) -> f64 {
    match act {
        Activation::Relu => {
            if out > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - out * out,
        Activation::Sigmoid => out * (1.0 - out),
        Activation::Linear => 1.0,
    }
}

/// Squared distances to the centres and the Gaussian activations.
fn rbf_forward(centers: &DMatrix<f64>, widths: &DVector<f64>, h: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let cross = centers * h;
    let hn: Vec<f64> = h.column_iter().map(|c| c.norm_squared()).collect();
    let cn: Vec<f64> = centers.row_iter().map(|r| r.norm_squared()).collect();
    let dist2 = DMatrix::from_fn(cross.nrows(), cross.ncols(), |j, b| (hn[b] + cn[j] - 2.0 * cross[(j, b)]).max(0.0));
    let out = DMatrix::from_fn(dist2.nrows(), dist2.ncols(), |j, b| (-dist2[(j, b)] / (widths[j] * widths[j])).exp());
    (dist2, out)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

impl MlpModel {
    /// Fresh network whose RBF centres are drawn from the columns of `inputs`.
    pub fn initialize(
        system_name: &str,
        kind: SensitivityKind,
        state_dim: usize,
        t_scale: f64,
        inputs: &DMatrix<f64>,
        hidden_width: usize,
        seed: u64,
    ) -> Result<Self> {
        let in_dim = 2 * state_dim + 1;
        if inputs.nrows() != in_dim || inputs.ncols() == 0 {
            return Err(Error::input("initialization inputs have the wrong shape"));
        }
        if hidden_width == 0 {
            return Err(Error::input("hidden width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool: Vec<usize> = (0..inputs.ncols()).collect();
        pool.shuffle(&mut rng);
        let centers = DMatrix::from_fn(hidden_width, in_dim, |j, i| inputs[(i, pool[j % pool.len()])]);
        let mut dists = Vec::with_capacity(hidden_width * (hidden_width - 1) / 2);
        for a in 0..hidden_width {
            for b in a + 1..hidden_width {
                dists.push((centers.row(a) - centers.row(b)).norm());
            }
        }
        let width = if dists.is_empty() { 1.0 } else { median(dists) };
        let width = if width > MIN_WIDTH { width } else { 1.0 };
        let mut dense = |rows: usize, cols: usize, limit: f64, activation: Activation| MlpLayer::Dense {
            weights: DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit)),
            bias: DVector::zeros(rows),
            activation,
        };
        let he = (6.0 / hidden_width as f64).sqrt();
        let layers = vec![
            MlpLayer::Rbf { centers, widths: DVector::from_element(hidden_width, width) },
            dense(hidden_width, hidden_width, he, Activation::Relu),
            dense(hidden_width, hidden_width, he, Activation::Relu),
            dense(state_dim, hidden_width, (3.0 / hidden_width as f64).sqrt(), Activation::Linear),
        ];
        let model = Self { system_name: system_name.to_string(), kind, state_dim, t_scale, layers };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::input("model has no layers"));
        }
        if !(self.t_scale > 0.0) {
            return Err(Error::input("time scale must be positive"));
        }
        if self.layers[0].input_dim() != 2 * self.state_dim + 1 {
            return Err(Error::input("first layer width does not match 2n+1 inputs"));
        }
        if self.layers.last().map(MlpLayer::output_dim) != Some(self.state_dim) {
            return Err(Error::input("last layer must output n values"));
        }
        for pair in self.layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::input("adjacent layer widths do not chain"));
            }
        }
        if !self.layers.iter().all(MlpLayer::is_finite) {
            return Err(Error::input("model parameters must be finite with positive widths"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * self.state_dim + 1
    }

    pub fn encode(&self, x: &State, v_hat: &State, t: f64) -> DVector<f64> {
        let n = self.state_dim;
        DVector::from_fn(2 * n + 1, |i, _| {
            if i < n {
                x[i]
            } else if i < 2 * n {
                v_hat[i - n]
            } else {
                t / self.t_scale
            }
        })
    }

    /// Input and label matrices, one tuple per column.
    pub fn encode_tuples(&self, tuples: &[SampleTuple]) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(self.input_dim(), tuples.len(), |i, j| {
            let tp = &tuples[j];
            self.encode(&tp.x_t, &tp.v_hat, tp.t)[i]
        });
        let y = DMatrix::from_fn(self.state_dim, tuples.len(), |i, j| tuples[j].d_hat[i]);
        (x, y)
    }

    fn forward_cached(&self, x: &DMatrix<f64>) -> Vec<Cache> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            match layer {
                MlpLayer::Rbf { centers, widths } => {
                    let (dist2, out) = rbf_forward(centers, widths, &h);
                    let next = out.clone();
                    caches.push(Cache::Rbf { input: h, dist2, out });
                    h = next;
                }
                MlpLayer::Dense { weights, bias, activation } => {
                    let mut z = weights * &h;
                    for mut col in z.column_iter_mut() {
                        col += bias;
                    }
                    z.apply(|v| *v = activation.apply(*v));
                    let next = z.clone();
                    caches.push(Cache::Dense { input: h, out: z });
                    h = next;
                }
            }
        }
        caches
    }

    /// Raw network output for a batch of encoded inputs.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                MlpLayer::Rbf { centers, widths } => rbf_forward(centers, widths, &h).1,
                MlpLayer::Dense { weights, bias, activation } => {
                    let mut z = weights * &h;
                    for mut col in z.column_iter_mut() {
                        col += bias;
                    }
                    z.apply(|v| *v = activation.apply(*v));
                    z
                }
            };
        }
        h
    }

    /// Mean-absolute-error loss and its gradient, in [`Self::parameters_mut`] order.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<Vec<f64>>) {
        let caches = self.forward_cached(x);
        let out = match caches.last().expect("non-empty") {
            Cache::Rbf { out, .. } | Cache::Dense { out, .. } => out,
        };
        let count = (out.nrows() * out.ncols()) as f64;
        let diff = out - y;
        let loss = diff.iter().map(|d| d.abs()).sum::<f64>() / count;
        let mut grad_out = diff.map(|d| {
            if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            }
        });

        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); 2 * self.layers.len()];
        for (li, (layer, cache)) in self.layers.iter().zip(&caches).enumerate().rev() {
            match (layer, cache) {
                (MlpLayer::Dense { weights, activation, .. }, Cache::Dense { input, out }) => {
                    let delta = DMatrix::from_fn(out.nrows(), out.ncols(), |i, j| {
                        grad_out[(i, j)] * activation_derivative(*activation, out[(i, j)])
                    });
                    let dw = &delta * input.transpose();
                    let db: Vec<f64> = delta.row_iter().map(|r| r.sum()).collect();
                    if li > 0 {
                        grad_out = weights.transpose() * &delta;
                    }
                    grads[2 * li] = dw.as_slice().to_vec();
                    grads[2 * li + 1] = db;
                }
                (MlpLayer::Rbf { centers, widths }, Cache::Rbf { input, dist2, out }) => {
                    let e = grad_out.component_mul(out);
                    let ex = &e * input.transpose();
                    let esum: Vec<f64> = e.row_iter().map(|r| r.sum()).collect();
                    let dc = DMatrix::from_fn(centers.nrows(), centers.ncols(), |j, i| {
                        2.0 / (widths[j] * widths[j]) * (ex[(j, i)] - esum[j] * centers[(j, i)])
                    });
                    let dw: Vec<f64> = (0..widths.len())
                        .map(|j| {
                            let w = widths[j];
                            2.0 / (w * w * w)
                                * e.row(j).iter().zip(dist2.row(j).iter()).map(|(a, b)| a * b).sum::<f64>()
                        })
                        .collect();
                    if li > 0 {
                        // Input gradient of a hidden RBF layer.
                        let scale: Vec<f64> = widths.iter().map(|w| 2.0 / (w * w)).collect();
                        let es = DMatrix::from_fn(e.nrows(), e.ncols(), |j, b| e[(j, b)] * scale[j]);
                        let esum_scaled: Vec<f64> = es.column_iter().map(|c| c.sum()).collect();
                        let back = centers.transpose() * &es;
                        grad_out = DMatrix::from_fn(input.nrows(), input.ncols(), |i, b| {
                            back[(i, b)] - esum_scaled[b] * input[(i, b)]
                        });
                    }
                    grads[2 * li] = dc.as_slice().to_vec();
                    grads[2 * li + 1] = dw;
                }
                _ => unreachable!("cache kind follows layer kind"),
            }
        }
        (loss, grads)
    }

    /// Parameter blocks (`weights`/`centers`, then `bias`/`widths` per layer, column-major).
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }

    fn clamp_widths(&mut self) {
        for layer in &mut self.layers {
            if let MlpLayer::Rbf { widths, .. } = layer {
                widths.apply(|w| *w = w.abs().max(MIN_WIDTH));
            }
        }
    }

    /// Normalized predictions for a batch; zero outputs stay zero.
    fn predict_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.forward(x);
        for mut col in out.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        out
    }
}

impl DirectionalApproximator for MlpModel {
    fn raw_direction(&self, x: &State, v_hat: &State, t: f64) -> Result<State> {
        if x.len() != self.state_dim || v_hat.len() != self.state_dim {
            return Err(Error::input(format!("model expects {}-dimensional inputs", self.state_dim)));
        }
        let input = DMatrix::from_column_slice(self.input_dim(), 1, self.encode(x, v_hat, t).as_slice());
        Ok(State::from_column_slice(self.forward(&input).as_slice()))
    }

    fn info(&self) -> ApproximatorInfo {
        ApproximatorInfo { system_name: self.system_name.clone(), kind: self.kind, source: ApproximatorSource::Trained }
    }
}

/// `(mse, mre_percent)` of normalized predictions against unit labels.
pub fn evaluate(model: &MlpModel, tuples: &[SampleTuple]) -> (f64, f64) {
    if tuples.is_empty() {
        return (0.0, 0.0);
    }
    let mut se = 0.0;
    let mut re = 0.0;
    for chunk in tuples.chunks(1024) {
        let (x, y) = model.encode_tuples(chunk);
        let pred = model.predict_batch(&x);
        for (p, l) in pred.column_iter().zip(y.column_iter()) {
            let err = (p - l).norm();
            se += err * err;
            re += err / l.norm();
        }
    }
    let n = tuples.len() as f64;
    (se / n, 100.0 * re / n)
}

/// Trains a directional model by mini-batch gradient descent on the MAE loss.
///
/// The dataset is split `train_fraction : 1 - train_fraction` with the config
/// seed; the report's headline metrics are measured on the held-out part.
pub fn train(dataset: &SensitivityDataset, config: &TrainConfig) -> Result<(MlpModel, TrainingReport)> {
    let started = Instant::now();
    if dataset.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    if dataset.tuples.iter().any(|t| t.kind != dataset.kind()) {
        return Err(Error::input("dataset mixes tuple kinds"));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::input("batch size, learning rate and momentum must be in range"));
    }
    let (train_set, test_set) = dataset.split(config.train_fraction, config.seed)?;
    let t_scale = if dataset.horizon() > 0.0 {
        dataset.horizon()
    } else {
        dataset.tuples.iter().map(|t| t.t).fold(0.0, f64::max).max(dataset.step)
    };
    let n = dataset.dim();
    let probe = MlpModel {
        system_name: dataset.system_name.clone(),
        kind: dataset.kind(),
        state_dim: n,
        t_scale,
        layers: Vec::new(),
    };
    let (x_all, y_all) = probe.encode_tuples(&train_set.tuples);
    let mut model = MlpModel::initialize(
        &dataset.system_name,
        dataset.kind(),
        n,
        t_scale,
        &x_all,
        config.hidden_width,
        config.seed.wrapping_add(1),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut velocity: Vec<Vec<f64>> = model.parameters_mut().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut order: Vec<usize> = (0..x_all.ncols()).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x_all.select_columns(batch);
            let yb = y_all.select_columns(batch);
            let (loss, grads) = model.loss_and_gradient(&xb, &yb);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { last_stable_epoch: epoch });
            }
            total += loss * batch.len() as f64;
            for ((param, grad), vel) in model.parameters_mut().into_iter().zip(&grads).zip(&mut velocity) {
                for ((p, g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
            }
            model.clamp_widths();
        }
        final_loss = total / order.len() as f64;
        if !final_loss.is_finite() || !model.layers.iter().all(MlpLayer::is_finite) {
            return Err(Error::TrainingDiverged { last_stable_epoch: epoch });
        }
        log::debug!("epoch {epoch}: loss {final_loss:.6}");
    }

    let (mse, mre_percent) = evaluate(&model, &test_set.tuples);
    let (train_mse, train_mre_percent) = evaluate(&model, &train_set.tuples);
    let report = TrainingReport {
        mse,
        mre_percent,
        train_mse,
        train_mre_percent,
        final_loss,
        epochs_run: config.epochs,
        train_size: train_set.len(),
        test_size: test_set.len(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::{load_model, model_from_json, model_to_json, save_model};
    use crate::dataset::{generate_dataset, random_unit, GenerationConfig};
    use crate::dynamics::catalog;

    fn small_dataset(anchors: usize, neighbors: usize, subsample: usize) -> SensitivityDataset {
        let sys = catalog::damped_oscillator();
        let mut cfg = GenerationConfig::standard(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse, 4);
        cfg.num_anchors = anchors;
        cfg.num_neighbors = neighbors;
        cfg.time_subsample = subsample;
        generate_dataset(&sys, &cfg).unwrap()
    }

    fn small_model(width: usize) -> MlpModel {
        let ds = small_dataset(2, 2, 50);
        let (model, _) = train(&ds, &TrainConfig { epochs: 1, hidden_width: width, ..TrainConfig::default() }).unwrap();
        model
    }

    #[test]
    fn overfits_twenty_tuples() {
        let mut ds = small_dataset(2, 2, 40);
        ds.tuples.truncate(20);
        let cfg = TrainConfig { epochs: 2000, batch_size: 20, ..TrainConfig::default() };
        let (_, report) = train(&ds, &cfg).unwrap();
        assert_eq!(report.train_size + report.test_size, 20);
        assert!(report.train_mse < 1e-3, "{}", report.train_mse);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = small_dataset(3, 3, 20);
        let cfg = TrainConfig { epochs: 3, hidden_width: 32, ..TrainConfig::default() };
        let (m1, r1) = train(&ds, &cfg).unwrap();
        let (m2, r2) = train(&ds, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.without_timing(), r2.without_timing());
        assert!(r1.mse >= 0.0 && r1.mre_percent >= 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        let ds = small_dataset(2, 2, 20);
        let cfg = TrainConfig { epochs: 5, learning_rate: 1e300, hidden_width: 8, ..TrainConfig::default() };
        assert!(matches!(train(&ds, &cfg), Err(Error::TrainingDiverged { .. })));
    }

    #[test]
    fn rejects_mixed_or_empty_datasets() {
        let mut ds = small_dataset(2, 2, 20);
        ds.tuples[0].kind = SensitivityKind::Forward;
        assert!(train(&ds, &TrainConfig::default()).is_err());
        ds.tuples.clear();
        assert!(train(&ds, &TrainConfig::default()).is_err());
    }

    #[test]
    fn outputs_are_unit_norm() {
        let model = small_model(16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x = State::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let v = random_unit(2, &mut rng);
            let d = model.predict(&x, &v, rng.random_range(0.0..2.0)).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-6);
        }
        assert!(model.predict(&State::zeros(2), &State::from_vec(vec![0.5, 0.0]), 0.1).is_err());
    }

    #[test]
    fn zero_output_is_degenerate() {
        let mut model = small_model(4);
        if let Some(MlpLayer::Dense { weights, bias, .. }) = model.layers.last_mut() {
            weights.fill(0.0);
            bias.fill(0.0);
        }
        let v = State::from_vec(vec![1.0, 0.0]);
        assert!(matches!(model.predict(&State::zeros(2), &v, 0.1), Err(Error::DegeneratePrediction { .. })));
    }

    #[test]
    fn model_file_round_trip() {
        let model = small_model(16);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = State::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let v = random_unit(2, &mut rng);
            let t = rng.random_range(0.0..2.0);
            assert_eq!(back.predict(&x, &v, t).unwrap(), model.predict(&x, &v, t).unwrap());
        }
    }

    #[test]
    fn model_file_errors() {
        let text = model_to_json(&small_model(4));
        let wrong = text.replacen("\"version\":1", "\"version\":7", 1);
        match model_from_json(&wrong) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("version 7")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(model_from_json(&text[..text.len() / 2]), Err(Error::Parse { .. })));
        let bad = text.replacen("\"activation\":\"relu\"", "\"activation\":\"swish\"", 1);
        match model_from_json(&bad) {
            Err(Error::Parse { path, .. }) => assert!(path.starts_with("layers[1]"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    fn check_gradients(model: &MlpModel, x: &DMatrix<f64>, y: &DMatrix<f64>) {
        let (_, grads) = model.loss_and_gradient(x, y);
        let mut probe = model.clone();
        let h = 1e-6;
        for (b, block) in grads.iter().enumerate() {
            for (i, &an) in block.iter().enumerate() {
                let orig = probe.parameters_mut()[b][i];
                probe.parameters_mut()[b][i] = orig + h;
                let up = probe.loss_and_gradient(x, y).0;
                probe.parameters_mut()[b][i] = orig - h;
                let down = probe.loss_and_gradient(x, y).0;
                probe.parameters_mut()[b][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let tol = 1e-4 * an.abs().max(fd.abs()) + 1e-8;
                assert!((an - fd).abs() <= tol, "block {b} entry {i}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
        let model = MlpModel::initialize("g", SensitivityKind::Inverse, 2, 1.0, &x, 6, 3).unwrap();
        check_gradients(&model, &x, &y);

        // Hidden RBF and smooth activations exercise the remaining backward paths.
        let mut dense = |rows: usize, cols: usize, act: Activation| MlpLayer::Dense {
            weights: DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)),
            bias: DVector::from_fn(rows, |_, _| rng.random_range(-0.5..0.5)),
            activation: act,
        };
        let first = dense(4, 5, Activation::Tanh);
        let second = dense(3, 3, Activation::Sigmoid);
        let last = dense(2, 3, Activation::Linear);
        let mixed = MlpModel {
            system_name: "g".into(),
            kind: SensitivityKind::Inverse,
            state_dim: 2,
            t_scale: 1.0,
            layers: vec![
                first,
                MlpLayer::Rbf {
                    centers: DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0)),
                    widths: DVector::from_element(3, 1.3),
                },
                second,
                last,
            ],
        };
        mixed.validate().unwrap();
        check_gradients(&mixed, &x, &y);
    }
}
