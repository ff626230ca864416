//! Domain-of-expertise classifiers: the trait, trivial constants, and the
//! learned one-hidden-layer classifier trained from source-stage buffers.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::funcapprox::{AdamState, Checkpoint, Mlp, ADAM_EPSILON};
use crate::rng::Rng;

/// Maps an agent's observation to the probability it lies in that agent's
/// domain of expertise.
pub trait DoeClassifier: Send + Sync {
    fn predict(&self, obs: &Observation) -> f64;
}

/// Same value for every observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDoe(pub f64);

impl DoeClassifier for ConstantDoe {
    fn predict(&self, _obs: &Observation) -> f64 {
        self.0
    }
}

impl<C: DoeClassifier + ?Sized> DoeClassifier for Box<C> {
    fn predict(&self, obs: &Observation) -> f64 {
        (**self).predict(obs)
    }
}

impl<C: DoeClassifier + ?Sized> DoeClassifier for std::sync::Arc<C> {
    fn predict(&self, obs: &Observation) -> f64 {
        (**self).predict(obs)
    }
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of one prediction, with the prediction clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce(p: f64, label: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoeDataset {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl DoeDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.train.first().or(self.test.first()).map_or(0, |e| e.features.len())
    }
}

pub const TEST_FRACTION: f64 = 0.1;

/// Label `own` observations 1 and the other source task's observations 0,
/// shuffle, and hold out 10% for testing. If the negatives outnumber the
/// positives they are subsampled to match.
pub fn build_dataset(own: &[Observation], others: &[&[Observation]], rng: &mut Rng) -> Result<DoeDataset> {
    if own.is_empty() {
        return Err(Error::config("own buffer is empty"));
    }
    let mut negatives: Vec<&Observation> = others.iter().flat_map(|b| b.iter()).collect();
    if negatives.is_empty() {
        return Err(Error::config("no negative examples: other buffers are empty"));
    }
    let dim = own[0].features.len();
    if let Some(bad) = own.iter().chain(negatives.iter().copied()).find(|o| o.features.len() != dim) {
        return Err(Error::config(format!(
            "observation dimension mismatch: {} vs {}",
            bad.features.len(),
            dim
        )));
    }
    if negatives.len() > own.len() {
        negatives.shuffle(rng);
        negatives.truncate(own.len());
    }
    let mut examples: Vec<Example> = own
        .iter()
        .map(|o| Example {
            features: o.features.clone(),
            label: 1.0,
        })
        .chain(negatives.into_iter().map(|o| Example {
            features: o.features.clone(),
            label: 0.0,
        }))
        .collect();
    examples.shuffle(rng);
    let test_len = (examples.len() as f64 * TEST_FRACTION).round() as usize;
    let train = examples.split_off(test_len);
    Ok(DoeDataset { train, test: examples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            learning_rate: 1e-2,
            batch_size: 512,
            epochs: 1,
        }
    }
}

/// One hidden ReLU layer and a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedClassifier {
    pub owner: usize,
    net: Mlp,
}

impl LearnedClassifier {
    pub fn new(owner: usize, input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            owner,
            net: Mlp::new(&[input_dim, hidden, 1], rng),
        }
    }

    pub fn from_net(owner: usize, net: Mlp) -> Result<Self> {
        if net.output_dim() != 1 || net.sizes().len() != 3 {
            return Err(Error::config("classifier must be a one-hidden-layer net with one output"));
        }
        Ok(Self { owner, net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn probability(&self, features: &[f64]) -> f64 {
        sigmoid(self.net.forward(features)[0]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    pub fn mean_bce(&self, examples: &[Example]) -> f64 {
        if examples.is_empty() {
            return f64::NAN;
        }
        examples.iter().map(|e| bce(self.probability(&e.features), e.label)).sum::<f64>() / examples.len() as f64
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new("classifier")
            .with_meta("owner", self.owner as u64)
            .with_meta("sizes", self.net.sizes().to_vec());
        ckpt.push_array("params", vec![self.net.params().len()], self.net.params().to_vec());
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> std::result::Result<Self, String> {
        if ckpt.kind != "classifier" {
            return Err(format!("expected a classifier checkpoint, found {:?}", ckpt.kind));
        }
        let owner = ckpt.meta_u64("owner").ok_or("missing owner")? as usize;
        let sizes: Vec<usize> = ckpt
            .metadata
            .get("sizes")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or("missing sizes")?;
        let params = ckpt.array("params").ok_or("missing params")?;
        let net = Mlp::from_parts(sizes, params.data.clone()).ok_or("params do not match sizes")?;
        Self::from_net(owner, net).map_err(|e| e.to_string())
    }
}

impl DoeClassifier for LearnedClassifier {
    fn predict(&self, obs: &Observation) -> f64 {
        self.probability(&obs.features)
    }
}

/// Minibatch Adam on mean binary cross-entropy. Returns the classifier and
/// its held-out loss.
pub fn train_classifier(
    owner: usize,
    dataset: &DoeDataset,
    config: &ClassifierConfig,
    rng: &mut Rng,
) -> Result<(LearnedClassifier, f64)> {
    if dataset.train.is_empty() {
        return Err(Error::config("empty training split"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::config("batch size and epochs must be positive"));
    }
    let mut clf = LearnedClassifier::new(owner, dataset.input_dim(), config.hidden, rng);
    let mut adam = AdamState::with_epsilon(clf.net.params().len(), config.learning_rate, ADAM_EPSILON);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut grads = vec![0.0; clf.net.params().len()];
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let ex = &dataset.train[i];
                let p = sigmoid(clf.net.forward(&ex.features)[0]);
                clf.net.accumulate_grad(&ex.features, &[(p - ex.label) * scale], &mut grads);
            }
            adam.step(clf.net.params_mut(), &grads)?;
        }
    }
    let test_bce = clf.mean_bce(&dataset.test);
    Ok((clf, test_bce))
}

/// Mean BCE of `classifier` against the labels `expert` assigns.
pub fn evaluate_against_expert(
    classifier: &dyn DoeClassifier,
    expert: &dyn DoeClassifier,
    observations: &[Observation],
) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::arg("no observations to evaluate on"));
    }
    let total: f64 = observations
        .iter()
        .map(|o| bce(classifier.predict(o), expert.predict(o)))
        .sum();
    Ok(total / observations.len() as f64)
}
