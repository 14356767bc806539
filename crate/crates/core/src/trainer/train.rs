use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::fmt_f64;
use crate::rng::stream_rng;

use super::bundle::Mode;
use super::dataset::Dataset;
use super::model::{apply_bn_updates, Model};
use super::ops::{argmax, softmax_cross_entropy};
use super::params::ParamSet;

/// Reduce the learning rate when test error stops improving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauDecay {
    pub factor: f64,
    /// Evaluations without a new best before decaying.
    pub patience: usize,
    pub min_learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub eval_interval: usize,
    /// Held-out accuracies whose first crossing is recorded.
    pub thresholds: Vec<f64>,
    /// End the run once every threshold has been reached.
    pub stop_when_reached: bool,
    pub plateau: Option<PlateauDecay>,
    /// A batch loss above this counts as divergence. The stabilized
    /// cross-entropy stays finite long after training has blown up.
    pub divergence_loss: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 0.0,
            nesterov: false,
            batch_size: 32,
            max_iterations: 4096,
            eval_interval: 64,
            thresholds: vec![0.5, 0.8, 0.9, 0.95],
            stop_when_reached: false,
            plateau: None,
            divergence_loss: 1e6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("evaluation interval must be at least 1");
        }
        if !(self.divergence_loss > 0.0) {
            return bad("divergence loss must be positive");
        }
        if self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("thresholds are accuracies in [0, 1]");
        }
        if let Some(p) = &self.plateau {
            if !(p.factor > 0.0 && p.factor < 1.0) || p.patience == 0 {
                return bad("plateau decay needs factor in (0, 1) and patience >= 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub test_error: f64,
    /// Lowest test error seen so far.
    pub best_test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdHit {
    pub threshold: f64,
    /// First evaluated iteration with accuracy at or above the threshold.
    pub iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub iteration: usize,
    pub message: String,
}

/// Headline numbers of a run, as written to the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub iterations_run: usize,
    pub parameter_count: usize,
    pub final_accuracy: f64,
    pub iterations_to_threshold: Vec<ThresholdHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged: Option<Divergence>,
}

impl TrainSummary {
    pub fn thresholds(&self) -> Vec<f64> {
        self.iterations_to_threshold.iter().map(|h| h.threshold).collect()
    }

    pub fn iterations_for(&self, threshold: f64) -> Option<usize> {
        self.iterations_to_threshold.iter().find(|h| h.threshold == threshold).and_then(|h| h.iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    #[serde(flatten)]
    pub summary: TrainSummary,
    pub train_loss: Vec<f64>,
    pub evaluations: Vec<Evaluation>,
}

impl TrainReport {
    /// `iteration,train_loss,test_error`, one row per iteration; the error
    /// cell is empty between evaluations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,train_loss,test_error\n");
        let mut evals = self.evaluations.iter().peekable();
        for (i, loss) in self.train_loss.iter().enumerate() {
            let it = i + 1;
            out.push_str(&format!("{it},{},", fmt_f64(*loss)));
            if let Some(e) = evals.next_if(|e| e.iteration == it) {
                out.push_str(&fmt_f64(e.test_error));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset does not fit the network: {0}")]
    DatasetMismatch(String),
    #[error("training diverged at iteration {}: {}", .report.summary.diverged.as_ref().map_or(0, |d| d.iteration), .report.summary.diverged.as_ref().map_or("", |d| d.message.as_str()))]
    Diverged { report: Box<TrainReport> },
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: ParamSet,
}

/// Held-out accuracy in evaluation mode.
pub fn evaluate<M: Model + ?Sized>(model: &M, params: &ParamSet, data: &Dataset) -> f64 {
    const CHUNK: usize = 256;
    let classes = model.classes();
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in indices.chunks(CHUNK) {
        let (x, y) = data.gather(chunk);
        let state = model.forward(params, &x, chunk.len(), Mode::Eval);
        correct += y
            .iter()
            .enumerate()
            .filter(|&(b, &label)| argmax(&state.logits[b * classes..][..classes]) == label)
            .count();
    }
    correct as f64 / data.len() as f64
}

/// Momentum SGD over trainable, unmasked entries only.
pub fn sgd_step(params: &mut ParamSet, grads: &[Vec<f64>], velocity: &mut [Vec<f64>], lr: f64, config: &TrainConfig) {
    for ((t, g), v) in params.tensors.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if !t.trainable {
            continue;
        }
        let active = t.active.as_deref();
        for i in 0..t.values.len() {
            if active.is_some_and(|a| !a[i]) {
                continue;
            }
            let gi = g[i] + config.weight_decay * t.values[i];
            v[i] = config.momentum * v[i] + gi;
            let step = if config.nesterov { gi + config.momentum * v[i] } else { v[i] };
            t.values[i] -= lr * step;
        }
    }
}

fn check_data<M: Model + ?Sized>(model: &M, data: &Dataset, which: &str) -> Result<(), TrainError> {
    if data.sample_len != model.input_len() {
        return Err(TrainError::DatasetMismatch(format!(
            "{which} samples have {} values, the network expects {}",
            data.sample_len,
            model.input_len()
        )));
    }
    if data.classes > model.classes() {
        return Err(TrainError::DatasetMismatch(format!(
            "{which} set has {} classes, the network outputs {}",
            data.classes,
            model.classes()
        )));
    }
    Ok(())
}

/// Minibatch SGD from a fresh initialization. Batches are drawn from a
/// per-epoch shuffle; held-out accuracy is measured every
/// `eval_interval` iterations and after the last one.
pub fn train<M: Model + ?Sized>(
    model: &M,
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    check_data(model, train_set, "training")?;
    check_data(model, test_set, "test")?;
    if config.batch_size > train_set.len() {
        return Err(TrainError::InvalidConfig(format!(
            "batch size {} exceeds the {} training samples",
            config.batch_size,
            train_set.len()
        )));
    }
    let mut params = model.init_params(config.seed);
    let mut velocity = params.zeros_like();
    let mut rng = stream_rng(config.seed, 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let mut pos = 0;
    let mut lr = config.learning_rate;
    let mut report = TrainReport {
        summary: TrainSummary {
            seed: config.seed,
            iterations_run: 0,
            parameter_count: params.trainable_count(),
            final_accuracy: 0.0,
            iterations_to_threshold: config
                .thresholds
                .iter()
                .map(|&threshold| ThresholdHit { threshold, iteration: None })
                .collect(),
            diverged: None,
        },
        train_loss: Vec::new(),
        evaluations: Vec::new(),
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for it in 1..=config.max_iterations {
        if pos + config.batch_size > order.len() {
            order.shuffle(&mut rng);
            pos = 0;
        }
        let (x, y) = train_set.gather(&order[pos..pos + config.batch_size]);
        pos += config.batch_size;
        let state = model.forward(&params, &x, config.batch_size, Mode::Train);
        let (loss, dlogits) = softmax_cross_entropy(&state.logits, &y, model.classes());
        let grads = model.backward(&params, &state, &dlogits);
        let finite = loss.is_finite() && grads.iter().flatten().all(|g| g.is_finite());
        if !finite || loss > config.divergence_loss {
            let message = if finite {
                format!("loss {loss} exceeds {}", config.divergence_loss)
            } else {
                format!("non-finite loss or gradient (loss = {loss})")
            };
            report.summary.diverged = Some(Divergence { iteration: it, message });
            return Err(TrainError::Diverged { report: Box::new(report) });
        }
        apply_bn_updates(&mut params, &state.bn_updates);
        sgd_step(&mut params, &grads, &mut velocity, lr, config);
        report.train_loss.push(loss);
        report.summary.iterations_run = it;

        if it % config.eval_interval == 0 || it == config.max_iterations {
            let acc = evaluate(model, &params, test_set);
            let err = 1.0 - acc;
            if err < best {
                best = err;
                stale = 0;
            } else {
                stale += 1;
            }
            report.evaluations.push(Evaluation { iteration: it, test_error: err, best_test_error: best });
            report.summary.final_accuracy = acc;
            for hit in &mut report.summary.iterations_to_threshold {
                if hit.iteration.is_none() && acc >= hit.threshold {
                    hit.iteration = Some(it);
                }
            }
            if let Some(p) = &config.plateau {
                if stale >= p.patience {
                    lr = (lr * p.factor).max(p.min_learning_rate);
                    stale = 0;
                }
            }
            if config.stop_when_reached && report.summary.iterations_to_threshold.iter().all(|h| h.iteration.is_some()) {
                break;
            }
        }
    }
    Ok(TrainOutcome { report, params })
}
