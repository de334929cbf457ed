//! Training loop pieces: the head-wise cross-entropy surrogate of the MBR
//! decision rule, SGD and Adam, and the per-epoch batch loop.
//!
//! The consensus perturbation enters the loss as a constant additive term
//! on covered arcs (straight-through at the inference boundary): gradients
//! reach the scorer through the softmax but do not flow through the ADMM
//! iterations. The two-paradigm schedule holds high-order inference back
//! for the first `warm_start_epochs` epochs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::{self, Sentence, Vocabulary};
use crate::decoder::HeadDistribution;
use crate::factor_graph::ScoreSplit;
use crate::linalg::Matrix;
use crate::pipeline::{self, ParseSettings, PipelineError};
use crate::scorer::{self, ScorerParams};
use crate::{admm::AdmmConfig, decoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub high_order: bool,
    pub beta: f64,
    pub admm: AdmmConfig,
    pub seed: u64,
    /// First-order-only epochs before high-order inference engages.
    pub warm_start_epochs: usize,
    pub score_split: ScoreSplit,
    pub include_backward: bool,
}

impl TrainConfig {
    /// Defaults per optimizer: lr 1e-3 for Adam, 1e-2 for SGD.
    pub fn defaults(optimizer: OptimizerKind) -> Self {
        TrainConfig {
            optimizer,
            learning_rate: match optimizer {
                OptimizerKind::Adam => 1e-3,
                OptimizerKind::Sgd => 1e-2,
            },
            epochs: 10,
            batch_size: 5,
            max_len: 20,
            high_order: false,
            beta: 1.0,
            admm: AdmmConfig::default(),
            seed: 0,
            warm_start_epochs: 0,
            score_split: ScoreSplit::Unscaled,
            include_backward: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch size must be >= 1".into()));
        }
        self.admm.validate().map_err(PipelineError::Admm)?;
        Ok(())
    }

    /// Inference settings for a given 1-based epoch.
    pub fn settings_for_epoch(&self, epoch: usize) -> ParseSettings {
        ParseSettings {
            high_order: self.high_order && epoch > self.warm_start_epochs,
            beta: self.beta,
            admm: self.admm.clone(),
            score_split: self.score_split,
            include_backward: self.include_backward,
        }
    }

    /// Inference settings after training (final paradigm).
    pub fn settings_final(&self) -> ParseSettings {
        self.settings_for_epoch(self.epochs.max(self.warm_start_epochs + 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Config(String),
    /// Loss became NaN/inf; names the offending sentence.
    NonFiniteLoss { epoch: usize, sentence: String },
    Pipeline(PipelineError),
    Shape(String),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(m) => write!(f, "train configuration error: {m}"),
            TrainError::NonFiniteLoss { epoch, sentence } => {
                write!(f, "non-finite loss in epoch {epoch} on sentence {sentence:?}")
            }
            TrainError::Pipeline(e) => write!(f, "{e}"),
            TrainError::Shape(m) => write!(f, "{m}"),
        }
    }
}

impl From<PipelineError> for TrainError {
    fn from(e: PipelineError) -> Self {
        TrainError::Pipeline(e)
    }
}

/// Head-wise negative log-likelihood, averaged over tokens, plus its
/// gradient w.r.t. the adjusted scores (softmax minus gold indicator,
/// scaled by 1/n). Computed in the log domain, so a vanishing gold-arc
/// probability yields a large finite loss rather than a literal log 0.
pub fn loss_and_gradient(
    dist: &HeadDistribution,
    gold: &Sentence,
) -> Result<(f64, Matrix), TrainError> {
    let n = dist.n();
    if n != gold.len() {
        return Err(TrainError::Shape(format!(
            "distribution over {n} tokens vs {}-token gold sentence",
            gold.len()
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n + 1, n);
    for dep in 1..=n {
        let gold_head = gold.gold_heads[dep - 1];
        loss -= dist.log_prob(gold_head, dep) * inv_n;
        for head in 0..=n {
            if head == dep {
                continue; // masked arc: zero probability, zero gradient
            }
            let indicator = if head == gold_head { 1.0 } else { 0.0 };
            grad[(head, dep - 1)] = (dist.prob(head, dep) - indicator) * inv_n;
        }
    }
    Ok((loss, grad))
}

/// Adam moments, one tensor pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ScorerParams,
    v: ScorerParams,
    step: usize,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum OptState {
    Sgd,
    Adam(AdamState),
}

impl OptState {
    pub fn new(kind: OptimizerKind, params: &ScorerParams) -> Self {
        match kind {
            OptimizerKind::Sgd => OptState::Sgd,
            OptimizerKind::Adam => OptState::Adam(AdamState {
                m: params.zeros_like(),
                v: params.zeros_like(),
                step: 0,
            }),
        }
    }

    pub fn step(&mut self, params: &mut ScorerParams, grads: &ScorerParams, lr: f64) {
        match self {
            OptState::Sgd => sgd_step(params, grads, lr),
            OptState::Adam(state) => adam_step(params, grads, state, lr),
        }
    }
}

/// `p <- p - lr * g`
pub fn sgd_step(params: &mut ScorerParams, grads: &ScorerParams, lr: f64) {
    params.add_scaled(-lr, grads);
}

/// Standard Adam with bias correction.
pub fn adam_step(params: &mut ScorerParams, grads: &ScorerParams, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
    let bc2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
    let g_tensors = grads.tensors();
    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
        let g = g_tensors[k].1;
        let m = &mut m_tensors[k].1;
        let v = &mut v_tensors[k].1;
        let pd = p.data_mut();
        for (i, &gi) in g.data().iter().enumerate() {
            let mi = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * gi;
            let vi = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            pd[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean per-sentence loss.
    pub loss: f64,
    pub sentences: usize,
    pub batches: usize,
    /// ADMM solves attempted / converged this epoch.
    pub admm_runs: usize,
    pub admm_converged: usize,
}

impl EpochStats {
    pub fn admm_convergence_rate(&self) -> f64 {
        if self.admm_runs == 0 {
            1.0
        } else {
            self.admm_converged as f64 / self.admm_runs as f64
        }
    }
}

/// Per-epoch record assembled by the driver; the core fills losses and
/// convergence, the std side adds wall clock and dev UAS.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub dev_uas: Vec<Option<f64>>,
    pub epoch_seconds: Vec<f64>,
    pub admm_convergence: Vec<f64>,
}

fn shuffle_seed(config: &TrainConfig, epoch: usize) -> u64 {
    config
        .seed
        .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One pass over the data. `epoch` is 1-based; high-order inference is used
/// only when `epoch > warm_start_epochs` (and `high_order` is set).
pub fn train_epoch(
    sentences: &[Sentence],
    vocab: &Vocabulary,
    params: &mut ScorerParams,
    opt: &mut OptState,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    config.validate()?;
    let settings = config.settings_for_epoch(epoch);
    let batches = corpus::batches(
        sentences,
        config.batch_size,
        config.max_len,
        Some(shuffle_seed(config, epoch)),
    );
    let mut total_loss = 0.0;
    let mut seen = 0usize;
    let mut admm_runs = 0usize;
    let mut admm_converged = 0usize;
    for batch in &batches {
        let mut grads = params.zeros_like();
        let scale = 1.0 / batch.sentences.len() as f64;
        for sentence in &batch.sentences {
            let inference = pipeline::infer(sentence, vocab, params, &settings)?;
            if let Some(converged) = inference.admm_converged() {
                admm_runs += 1;
                if converged {
                    admm_converged += 1;
                }
            }
            let (loss, d_scores) = loss_and_gradient(&inference.dist, sentence)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    sentence: sentence.tokens.join(" "),
                });
            }
            total_loss += loss;
            seen += 1;
            let g = scorer::backward(&d_scores, &inference.tape, params)
                .map_err(PipelineError::Scorer)?;
            grads.add_scaled(scale, &g);
        }
        opt.step(params, &grads, config.learning_rate);
    }
    Ok(EpochStats {
        loss: if seen == 0 { 0.0 } else { total_loss / seen as f64 },
        sentences: seen,
        batches: batches.len(),
        admm_runs,
        admm_converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub uas: f64,
    pub sentences: usize,
    pub tokens: usize,
    pub admm_runs: usize,
    pub admm_converged: usize,
}

/// Corpus UAS of the current parameters (token-weighted).
pub fn evaluate(
    sentences: &[Sentence],
    vocab: &Vocabulary,
    params: &ScorerParams,
    settings: &ParseSettings,
) -> Result<EvalStats, PipelineError> {
    let mut correct = 0usize;
    let mut tokens = 0usize;
    let mut admm_runs = 0usize;
    let mut admm_converged = 0usize;
    for sentence in sentences {
        let (tree, inference) = pipeline::parse_sentence(sentence, vocab, params, settings)?;
        if let Some(c) = inference.admm_converged() {
            admm_runs += 1;
            if c {
                admm_converged += 1;
            }
        }
        correct += tree
            .heads
            .iter()
            .zip(&sentence.gold_heads)
            .filter(|(a, b)| a == b)
            .count();
        tokens += sentence.len();
        debug_assert!(decoder::is_tree(&tree.heads));
    }
    Ok(EvalStats {
        uas: if tokens == 0 {
            0.0
        } else {
            correct as f64 / tokens as f64
        },
        sentences: sentences.len(),
        tokens,
        admm_runs,
        admm_converged,
    })
}
