//! End-to-end per-sentence inference: score, optionally transfer into the
//! factor graph and solve by ADMM, form the head distribution, decode.
//! Decoding returns the MBR heads unchanged whenever they already form a
//! tree; otherwise the maximum spanning arborescence over log-probability
//! weights guarantees a tree.

use core::fmt;

use crate::admm::{self, AdmmConfig, AdmmError, MapResult};
use crate::corpus::{Sentence, Vocabulary};
use crate::decoder::{self, HeadDistribution, ParseTree};
use crate::factor_graph::{self, FactorGraph, ScoreSplit};
use crate::scorer::{self, ScorerError, ScorerParams};

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    Scorer(ScorerError),
    Admm(AdmmError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Scorer(e) => write!(f, "{e}"),
            PipelineError::Admm(e) => write!(f, "{e}"),
        }
    }
}

impl From<ScorerError> for PipelineError {
    fn from(e: ScorerError) -> Self {
        PipelineError::Scorer(e)
    }
}

impl From<AdmmError> for PipelineError {
    fn from(e: AdmmError) -> Self {
        PipelineError::Admm(e)
    }
}

/// Inference-time knobs shared by parsing and training.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseSettings {
    pub high_order: bool,
    /// Weight of the consensus perturbation on covered arcs.
    pub beta: f64,
    pub admm: AdmmConfig,
    pub score_split: ScoreSplit,
    pub include_backward: bool,
}

impl Default for ParseSettings {
    fn default() -> Self {
        ParseSettings {
            high_order: false,
            beta: 1.0,
            admm: AdmmConfig::default(),
            score_split: ScoreSplit::Unscaled,
            include_backward: false,
        }
    }
}

impl ParseSettings {
    pub fn high_order() -> Self {
        ParseSettings {
            high_order: true,
            ..ParseSettings::default()
        }
    }
}

/// Everything one sentence's forward pass produced.
#[derive(Debug, Clone)]
pub struct SentenceInference {
    pub tape: scorer::Forward,
    pub graph: Option<FactorGraph>,
    pub map: Option<MapResult>,
    pub dist: HeadDistribution,
}

impl SentenceInference {
    pub fn admm_converged(&self) -> Option<bool> {
        self.map.as_ref().map(|m| m.converged)
    }
}

pub fn infer(
    sentence: &Sentence,
    vocab: &Vocabulary,
    params: &ScorerParams,
    settings: &ParseSettings,
) -> Result<SentenceInference, PipelineError> {
    let tape = scorer::forward(sentence, vocab, params)?;
    let (graph, map) = if settings.high_order {
        let graph = factor_graph::build(
            sentence.len(),
            &tape.scores,
            settings.include_backward,
            settings.score_split,
        );
        let map = admm::run(&graph, &settings.admm)?;
        (Some(graph), Some(map))
    } else {
        (None, None)
    };
    let dist = decoder::head_distribution(&tape.scores, map.as_ref(), settings.beta);
    Ok(SentenceInference {
        tape,
        graph,
        map,
        dist,
    })
}

/// MBR heads if they form a tree, else the MST fallback.
pub fn decode(dist: &HeadDistribution) -> ParseTree {
    let heads = decoder::mbr_decode(dist);
    if decoder::is_tree(&heads) {
        return ParseTree { heads };
    }
    decoder::mst_decode(&dist.log_p)
}

pub fn parse_sentence(
    sentence: &Sentence,
    vocab: &Vocabulary,
    params: &ScorerParams,
    settings: &ParseSettings,
) -> Result<(ParseTree, SentenceInference), PipelineError> {
    let inference = infer(sentence, vocab, params, settings)?;
    let tree = decode(&inference.dist);
    Ok((tree, inference))
}
