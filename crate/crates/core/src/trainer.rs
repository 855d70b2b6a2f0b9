//! Per-graph unsupervised training of the encoder.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderConfig, ModelParams, SoftAssignment};
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector, Matrix};
use crate::objective::{self, LossConfig};
use crate::seed;
use crate::spectral::SpectralEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn new(learning_rate: f64) -> Self {
        AdamHyper { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair of tensors per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u32,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        AdamState { m, v, step: 0 }
    }
}

/// One Adam update of `params` in place.
///
/// A non-finite gradient leaves both the parameters and the state untouched.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dims(params.len(), grads.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(Error::dims(format!("{:?}", p.shape()), format!("{:?}", g.shape())));
        }
        if !encoder::layers::all_finite(g) {
            return Err(Error::NonFinite(format!("gradient of tensor {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let AdamHyper { learning_rate, beta1, beta2, eps } = *hyper;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for ((pj, &gj), (mj, vj)) in p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
            *mj = beta1 * *mj + (1.0 - beta1) * gj;
            *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
            let mhat = *mj / c1;
            let vhat = *vj / c2;
            *pj -= learning_rate * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Steps without an improvement of at least `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(encoder: EncoderConfig, loss: LossConfig, seed: u64) -> Self {
        TrainConfig {
            encoder,
            loss,
            learning_rate: 1e-3,
            max_steps: 300,
            patience: 30,
            min_improvement: 1e-5,
            restarts: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        if self.encoder.clusters != self.loss.clusters {
            return Err(Error::InvalidParameter(format!(
                "encoder emits {} clusters but the loss expects {}",
                self.encoder.clusters, self.loss.clusters
            )));
        }
        if !(self.learning_rate > 0.0) || self.max_steps == 0 || self.restarts == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter(
                "learning rate, steps, patience and restarts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartHistory {
    pub seed: u64,
    /// Loss at the parameters before each update.
    pub losses: Vec<f64>,
    /// Soft modularity at each step.
    pub modularity: Vec<f64>,
    pub best_step: Option<usize>,
    pub diverged: bool,
}

impl RestartHistory {
    pub fn best_loss(&self) -> Option<f64> {
        self.best_step.map(|s| self.losses[s])
    }

    /// Running minimum of the loss.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.losses
            .iter()
            .scan(f64::INFINITY, |best, &l| {
                *best = best.min(l);
                Some(*best)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub restarts: Vec<RestartHistory>,
    pub best_restart: Option<usize>,
    pub duration_secs: f64,
}

impl TrainHistory {
    pub fn best_loss(&self) -> Option<f64> {
        self.best_restart.and_then(|r| self.restarts[r].best_loss())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub assignment: SoftAssignment,
    pub labels: LabelVector,
    pub history: TrainHistory,
    /// Parameters that produced `assignment`.
    pub params: ModelParams,
}

/// Trains a fresh encoder on `g` from each of `cfg.restarts` seeds and keeps
/// the assignment with the lowest loss seen at any step.
///
/// Ground-truth labels are never an input.
pub fn train_on_graph(g: &Graph, spectral: Option<&SpectralEmbedding>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let started = Instant::now();
    let mut history = TrainHistory { restarts: Vec::new(), best_restart: None, duration_secs: 0.0 };
    let mut best: Option<(f64, Matrix, ModelParams)> = None;

    for restart in 0..cfg.restarts {
        let rseed = seed::derive(cfg.seed, seed::stream::RESTART.wrapping_mul(1 << 32) + restart as u64);
        let (record, found) = train_once(g, spectral, cfg, rseed)?;
        if let Some((loss, u, params)) = found {
            if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
                best = Some((loss, u, params));
                history.best_restart = Some(restart);
            }
        }
        history.restarts.push(record);
    }
    history.duration_secs = started.elapsed().as_secs_f64();

    match best {
        Some((_, u, params)) => {
            let assignment = SoftAssignment(u);
            let labels = assignment.argmax();
            Ok(TrainOutcome { assignment, labels, history, params })
        }
        None => Err(Error::TrainingDiverged { restarts: cfg.restarts, history: Box::new(history) }),
    }
}

type Best = Option<(f64, Matrix, ModelParams)>;

fn train_once(
    g: &Graph,
    spectral: Option<&SpectralEmbedding>,
    cfg: &TrainConfig,
    rseed: u64,
) -> Result<(RestartHistory, Best)> {
    let x0 = encoder::initial_embeddings(g, &cfg.encoder, spectral, rseed)?;
    let mut params = encoder::init_params(&cfg.encoder, x0.ncols(), rseed)?;
    let shapes: Vec<_> = params.named_tensors().iter().map(|(_, t)| t.shape()).collect();
    let mut state = AdamState::new(shapes);
    let hyper = AdamHyper::new(cfg.learning_rate);

    let mut record = RestartHistory {
        seed: rseed,
        losses: Vec::new(),
        modularity: Vec::new(),
        best_step: None,
        diverged: false,
    };
    let mut best: Best = None;
    let mut reference = f64::INFINITY;
    let mut since_improvement = 0;

    for step in 0..cfg.max_steps {
        let (u, cache) = match encoder::forward(g, &x0, &params) {
            Ok(out) => out,
            Err(Error::NonFinite(_)) => {
                record.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (parts, du) = objective::loss_and_grad(g, &u.0, &cfg.loss)?;
        if !parts.loss.is_finite() {
            record.diverged = true;
            break;
        }
        record.losses.push(parts.loss);
        record.modularity.push(parts.modularity);
        if best.as_ref().is_none_or(|(b, _, _)| parts.loss < *b) {
            best = Some((parts.loss, u.0.clone(), params.clone()));
            record.best_step = Some(step);
        }
        if parts.loss < reference - cfg.min_improvement {
            reference = parts.loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                break;
            }
        }
        if step + 1 == cfg.max_steps {
            break;
        }

        let grads = encoder::backward(&cache, &params, &du)?;
        let grad_refs: Vec<&Matrix> = grads.params.named_tensors().into_iter().map(|(_, t)| t).collect();
        let mut param_refs = params.tensors_mut();
        if let Err(Error::NonFinite(_)) = adam_step(&mut param_refs, &grad_refs, &mut state, &hyper) {
            record.diverged = true;
            break;
        }
    }
    Ok((record, best))
}
