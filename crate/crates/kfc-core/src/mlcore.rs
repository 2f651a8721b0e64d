//! Minimal trainable classifiers with analytic gradients.
//!
//! Two architectures are provided: multinomial softmax regression and a
//! one-hidden-layer tanh perceptron. Both operate on a flat `f64` parameter
//! vector, train with mini-batch SGD under softmax cross-entropy, and are
//! deterministic functions of their seeds. All reductions run in a fixed
//! iteration order so results are bit-reproducible.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, LabeledExample};
use crate::error::{Error, Result};

/// Model architecture and its dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    /// Linear logits over `features` inputs for `classes` outputs.
    /// Parameter layout: row-major weight matrix `[classes x features]`,
    /// then `classes` biases.
    SoftmaxLinear { features: usize, classes: usize },
    /// One tanh hidden layer. Parameter layout: `[hidden x features]`
    /// weights, `hidden` biases, `[classes x hidden]` weights, `classes`
    /// biases.
    Mlp1 {
        features: usize,
        hidden: usize,
        classes: usize,
    },
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Arch::SoftmaxLinear { features, classes } => features >= 1 && classes >= 1,
            Arch::Mlp1 {
                features,
                hidden,
                classes,
            } => features >= 1 && hidden >= 1 && classes >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid architecture dimensions: {self:?}")))
        }
    }

    pub fn features(&self) -> usize {
        match *self {
            Arch::SoftmaxLinear { features, .. } | Arch::Mlp1 { features, .. } => features,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Arch::SoftmaxLinear { classes, .. } | Arch::Mlp1 { classes, .. } => classes,
        }
    }

    /// Total number of parameters.
    pub fn param_dim(&self) -> usize {
        match *self {
            Arch::SoftmaxLinear { features, classes } => classes * (features + 1),
            Arch::Mlp1 {
                features,
                hidden,
                classes,
            } => hidden * (features + 1) + classes * (hidden + 1),
        }
    }
}

/// A flat vector of finite model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "parameter values must be finite".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// An architecture descriptor paired with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Arch,
    params: ParamVector,
}

impl Model {
    pub fn new(arch: Arch, params: ParamVector) -> Result<Self> {
        arch.validate()?;
        if params.dim() != arch.param_dim() {
            return Err(Error::Shape {
                expected: arch.param_dim(),
                actual: params.dim(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }
}

/// Local training hyperparameters. `epochs = 0` is allowed and performs no
/// update steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSpec {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(epochs: usize, learning_rate: f64, batch_size: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            epochs,
            learning_rate,
            batch_size,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draw initial parameters i.i.d. uniform in `[-0.05, 0.05]` from a seeded
/// generator. Identical `(arch, seed)` yield identical models.
pub fn init_model(arch: Arch, seed: u64) -> Result<Model> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-0.05, 0.05);
    let values = (0..arch.param_dim()).map(|_| dist.sample(&mut rng)).collect();
    Model::new(arch, ParamVector::new(values)?)
}

struct Forward {
    logits: Vec<f64>,
    hidden: Option<Vec<f64>>,
}

fn forward(arch: Arch, params: &[f64], x: &[f64]) -> Forward {
    match arch {
        Arch::SoftmaxLinear { features: p, classes: k } => {
            let mut logits = vec![0.0; k];
            for c in 0..k {
                let row = &params[c * p..(c + 1) * p];
                let mut acc = params[k * p + c];
                for j in 0..p {
                    acc += row[j] * x[j];
                }
                logits[c] = acc;
            }
            Forward {
                logits,
                hidden: None,
            }
        }
        Arch::Mlp1 {
            features: p,
            hidden: h,
            classes: k,
        } => {
            let (w1, rest) = params.split_at(h * p);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(k * h);
            let mut hid = vec![0.0; h];
            for a in 0..h {
                let row = &w1[a * p..(a + 1) * p];
                let mut acc = b1[a];
                for j in 0..p {
                    acc += row[j] * x[j];
                }
                hid[a] = acc.tanh();
            }
            let mut logits = vec![0.0; k];
            for c in 0..k {
                let row = &w2[c * h..(c + 1) * h];
                let mut acc = b2[c];
                for a in 0..h {
                    acc += row[a] * hid[a];
                }
                logits[c] = acc;
            }
            Forward {
                logits,
                hidden: Some(hid),
            }
        }
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Class probabilities for one input: softmax over the model logits.
pub fn predict_proba(model: &Model, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != model.arch.features() {
        return Err(Error::Shape {
            expected: model.arch.features(),
            actual: features.len(),
        });
    }
    Ok(softmax(&forward(model.arch, model.params.values(), features).logits))
}

/// Predicted label: argmax of the probabilities, ties to the lowest class.
pub fn predict_label(model: &Model, features: &[f64]) -> Result<usize> {
    let probs = predict_proba(model, features)?;
    Ok(argmax(&probs))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Accumulate one example's cross-entropy and gradient into `grad`.
/// Returns the example loss.
fn accumulate_example(arch: Arch, params: &[f64], ex: &LabeledExample, grad: &mut [f64]) -> f64 {
    let fwd = forward(arch, params, &ex.features);
    let probs = softmax(&fwd.logits);
    let loss = log_sum_exp(&fwd.logits) - fwd.logits[ex.label];
    match arch {
        Arch::SoftmaxLinear { features: p, classes: k } => {
            for c in 0..k {
                let g = probs[c] - if c == ex.label { 1.0 } else { 0.0 };
                let row = &mut grad[c * p..(c + 1) * p];
                for (w, x) in row.iter_mut().zip(&ex.features) {
                    *w += g * x;
                }
                grad[k * p + c] += g;
            }
        }
        Arch::Mlp1 {
            features: p,
            hidden: h,
            classes: k,
        } => {
            let hid = fwd.hidden.as_ref().expect("mlp forward stores hidden");
            let w2_off = h * (p + 1);
            let b2_off = w2_off + k * h;
            let mut d_hidden = vec![0.0; h];
            for c in 0..k {
                let g = probs[c] - if c == ex.label { 1.0 } else { 0.0 };
                for a in 0..h {
                    grad[w2_off + c * h + a] += g * hid[a];
                    d_hidden[a] += g * params[w2_off + c * h + a];
                }
                grad[b2_off + c] += g;
            }
            for a in 0..h {
                let dz = d_hidden[a] * (1.0 - hid[a] * hid[a]);
                let row = &mut grad[a * p..(a + 1) * p];
                for (w, x) in row.iter_mut().zip(&ex.features) {
                    *w += dz * x;
                }
                grad[h * p + a] += dz;
            }
        }
    }
    loss
}

fn batch_loss_grad<'a>(
    arch: Arch,
    params: &[f64],
    batch: impl Iterator<Item = &'a LabeledExample>,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; arch.param_dim()];
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in batch {
        if ex.features.len() != arch.features() {
            return Err(Error::Shape {
                expected: arch.features(),
                actual: ex.features.len(),
            });
        }
        if ex.label >= arch.classes() {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {} classes",
                ex.label,
                arch.classes()
            )));
        }
        total += accumulate_example(arch, params, ex, &mut grad);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let scale = 1.0 / count as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok((total * scale, grad))
}

/// Mean cross-entropy over a batch and its analytic gradient.
pub fn loss_and_grad(model: &Model, batch: &[LabeledExample]) -> Result<(f64, ParamVector)> {
    let (loss, grad) = batch_loss_grad(model.arch, model.params.values(), batch.iter())?;
    Ok((loss, ParamVector::new(grad)?))
}

/// Mini-batch SGD. Shuffling is driven by `spec.seed`; the input model is not
/// mutated and identical inputs produce byte-identical outputs.
pub fn sgd_train(model: &Model, dataset: &Dataset, spec: &TrainSpec) -> Result<Model> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training dataset".into()));
    }
    if dataset.feature_dim() != model.arch.features() {
        return Err(Error::Shape {
            expected: model.arch.features(),
            actual: dataset.feature_dim(),
        });
    }
    if dataset.num_classes() > model.arch.classes() {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model only {}",
            dataset.num_classes(),
            model.arch.classes()
        )));
    }
    spec.validate()?;
    let lr = spec.learning_rate;
    let mut params = model.params.values().to_vec();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(spec.batch_size) {
            let batch = chunk.iter().map(|&i| &dataset.examples()[i]);
            let (_, grad) = batch_loss_grad(model.arch, &params, batch)?;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= lr * g;
            }
        }
    }
    Model::new(model.arch, ParamVector::new(params)?)
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn evaluate_accuracy(model: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation dataset".into()));
    }
    let mut correct = 0usize;
    for ex in dataset.examples() {
        if predict_label(model, &ex.features)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
