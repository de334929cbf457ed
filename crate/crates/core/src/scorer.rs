//! Biaffine arc scoring.
//!
//! Tokens (plus a learned root at position 0) are embedded, contextualized
//! by an encoder, projected through arc-dep and arc-head MLPs, and scored by
//! a biaffine form: `s[i][j] = h_head_i' U1 h_dep_j + h_head_i' u2` for head
//! `i` and dependent `j`. Self-arcs are masked to `-inf`. The forward pass
//! records a tape; `backward` returns exact gradients for every parameter.
//!
//! Two encoders are provided. The default is a single-layer bidirectional
//! tanh RNN over concatenated word+POS embeddings. The `Window` encoder
//! (concatenation of the +-1 neighborhood) is context-poor but fast, kept
//! for cheap tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::{Sentence, Vocabulary, ROOT_ID};
use crate::factor_graph::FactorGraph;
use crate::linalg::{axpy, dot, Matrix};

/// Scores are clamped to this magnitude before exponentiation so potentials
/// never overflow.
pub const SCORE_CLAMP: f64 = 30.0;

const INIT_SCALE: f64 = 0.1;
const LRELU_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerError {
    /// Inconsistent dimensions between parameter components.
    Config(String),
    /// Runtime shape mismatch (inputs vs recorded tape).
    Shape(String),
    /// A factor-graph arc resolved to a masked or non-finite score.
    MaskedArc { head: usize, dep: usize },
}

impl fmt::Display for ScorerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerError::Config(m) => write!(f, "scorer configuration error: {m}"),
            ScorerError::Shape(m) => write!(f, "shape mismatch: {m}"),
            ScorerError::MaskedArc { head, dep } => {
                write!(f, "arc {head}->{dep} resolves to a masked score")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// `r_i = [x_{i-1}; x_i; x_{i+1}]` with zero padding.
    Window,
    /// Single-layer bidirectional tanh RNN, `r_i = [h_fwd_i; h_bwd_i]`.
    BiRnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScorerConfig {
    pub word_vocab: usize,
    pub pos_vocab: usize,
    pub d_emb: usize,
    pub d_pos: usize,
    /// Recurrent width per direction (BiRnn only).
    pub d_hidden: usize,
    /// Arc MLP output width.
    pub d_arc: usize,
    pub encoder: EncoderKind,
}

impl ScorerConfig {
    pub fn defaults(word_vocab: usize, pos_vocab: usize) -> Self {
        ScorerConfig {
            word_vocab,
            pos_vocab,
            d_emb: 64,
            d_pos: 16,
            d_hidden: 64,
            d_arc: 64,
            encoder: EncoderKind::BiRnn,
        }
    }

    /// Small widths for unit tests.
    pub fn tiny(word_vocab: usize, pos_vocab: usize, encoder: EncoderKind) -> Self {
        ScorerConfig {
            word_vocab,
            pos_vocab,
            d_emb: 5,
            d_pos: 3,
            d_hidden: 4,
            d_arc: 6,
            encoder,
        }
    }

    pub fn d_input(&self) -> usize {
        self.d_emb + self.d_pos
    }

    /// Width of the contextual representation r_i.
    pub fn d_repr(&self) -> usize {
        match self.encoder {
            EncoderKind::Window => 3 * self.d_input(),
            EncoderKind::BiRnn => 2 * self.d_hidden,
        }
    }

    fn validate(&self) -> Result<(), ScorerError> {
        let dims = [
            ("word_vocab", self.word_vocab),
            ("pos_vocab", self.pos_vocab),
            ("d_emb", self.d_emb),
            ("d_pos", self.d_pos),
            ("d_arc", self.d_arc),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(ScorerError::Config(format!("{name} must be positive")));
            }
        }
        if self.encoder == EncoderKind::BiRnn && self.d_hidden == 0 {
            return Err(ScorerError::Config("d_hidden must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnDirection {
    /// d_hidden x d_input
    pub w_in: Matrix,
    /// d_hidden x d_hidden
    pub w_rec: Matrix,
    /// 1 x d_hidden
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    /// d_out x d_in
    pub w: Matrix,
    /// 1 x d_out
    pub b: Matrix,
}

/// All trainable tensors. The same struct doubles as a gradient container
/// (`zeros_like`) and as optimizer moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub config: ScorerConfig,
    pub word_emb: Matrix,
    pub pos_emb: Matrix,
    pub rnn_fwd: Option<RnnDirection>,
    pub rnn_bwd: Option<RnnDirection>,
    pub mlp_dep: AffineParams,
    pub mlp_head: AffineParams,
    /// d_arc x d_arc bilinear term.
    pub u1: Matrix,
    /// 1 x d_arc head-side bias direction.
    pub u2: Matrix,
}

impl ScorerParams {
    /// Fresh parameters, uniform in [-0.1, 0.1], deterministic in `seed`.
    pub fn new_seeded(config: ScorerConfig, seed: u64) -> Result<Self, ScorerError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut mat = |r: usize, c: usize| Matrix::uniform(r, c, INIT_SCALE, &mut rng);
        let d_in = config.d_input();
        let d_r = config.d_repr();
        let word_emb = mat(config.word_vocab, config.d_emb);
        let pos_emb = mat(config.pos_vocab, config.d_pos);
        let (rnn_fwd, rnn_bwd) = match config.encoder {
            EncoderKind::Window => (None, None),
            EncoderKind::BiRnn => {
                let mut dir = |_: ()| RnnDirection {
                    w_in: mat(config.d_hidden, d_in),
                    w_rec: mat(config.d_hidden, config.d_hidden),
                    bias: mat(1, config.d_hidden),
                };
                (Some(dir(())), Some(dir(())))
            }
        };
        Ok(ScorerParams {
            config,
            word_emb,
            pos_emb,
            rnn_fwd,
            rnn_bwd,
            mlp_dep: AffineParams {
                w: mat(config.d_arc, d_r),
                b: mat(1, config.d_arc),
            },
            mlp_head: AffineParams {
                w: mat(config.d_arc, d_r),
                b: mat(1, config.d_arc),
            },
            u1: mat(config.d_arc, config.d_arc),
            u2: mat(1, config.d_arc),
        })
    }

    /// Same shapes, all zeros: the gradient/moment container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Named tensors in a fixed order (serialization, optimizers, tests).
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v: Vec<(&'static str, &Matrix)> = vec![
            ("word_emb", &self.word_emb),
            ("pos_emb", &self.pos_emb),
        ];
        if let Some(r) = &self.rnn_fwd {
            v.push(("rnn_fwd_w_in", &r.w_in));
            v.push(("rnn_fwd_w_rec", &r.w_rec));
            v.push(("rnn_fwd_bias", &r.bias));
        }
        if let Some(r) = &self.rnn_bwd {
            v.push(("rnn_bwd_w_in", &r.w_in));
            v.push(("rnn_bwd_w_rec", &r.w_rec));
            v.push(("rnn_bwd_bias", &r.bias));
        }
        v.push(("mlp_dep_w", &self.mlp_dep.w));
        v.push(("mlp_dep_b", &self.mlp_dep.b));
        v.push(("mlp_head_w", &self.mlp_head.w));
        v.push(("mlp_head_b", &self.mlp_head.b));
        v.push(("u1", &self.u1));
        v.push(("u2", &self.u2));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v: Vec<(&'static str, &mut Matrix)> = vec![
            ("word_emb", &mut self.word_emb),
            ("pos_emb", &mut self.pos_emb),
        ];
        if let Some(r) = &mut self.rnn_fwd {
            v.push(("rnn_fwd_w_in", &mut r.w_in));
            v.push(("rnn_fwd_w_rec", &mut r.w_rec));
            v.push(("rnn_fwd_bias", &mut r.bias));
        }
        if let Some(r) = &mut self.rnn_bwd {
            v.push(("rnn_bwd_w_in", &mut r.w_in));
            v.push(("rnn_bwd_w_rec", &mut r.w_rec));
            v.push(("rnn_bwd_bias", &mut r.bias));
        }
        v.push(("mlp_dep_w", &mut self.mlp_dep.w));
        v.push(("mlp_dep_b", &mut self.mlp_dep.b));
        v.push(("mlp_head_w", &mut self.mlp_head.w));
        v.push(("mlp_head_b", &mut self.mlp_head.b));
        v.push(("u1", &mut self.u1));
        v.push(("u2", &mut self.u2));
        v
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        let theirs = other.tensors();
        for (i, (_, t)) in self.tensors_mut().into_iter().enumerate() {
            t.add_scaled(alpha, theirs[i].1);
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        self.config.validate()?;
        let c = &self.config;
        let d_in = c.d_input();
        let d_r = c.d_repr();
        let mut expected: Vec<(&'static str, (usize, usize))> = vec![
            ("word_emb", (c.word_vocab, c.d_emb)),
            ("pos_emb", (c.pos_vocab, c.d_pos)),
        ];
        if c.encoder == EncoderKind::BiRnn {
            for pre in ["rnn_fwd", "rnn_bwd"] {
                expected.push((
                    match pre {
                        "rnn_fwd" => "rnn_fwd_w_in",
                        _ => "rnn_bwd_w_in",
                    },
                    (c.d_hidden, d_in),
                ));
                expected.push((
                    match pre {
                        "rnn_fwd" => "rnn_fwd_w_rec",
                        _ => "rnn_bwd_w_rec",
                    },
                    (c.d_hidden, c.d_hidden),
                ));
                expected.push((
                    match pre {
                        "rnn_fwd" => "rnn_fwd_bias",
                        _ => "rnn_bwd_bias",
                    },
                    (1, c.d_hidden),
                ));
            }
        }
        expected.extend([
            ("mlp_dep_w", (c.d_arc, d_r)),
            ("mlp_dep_b", (1, c.d_arc)),
            ("mlp_head_w", (c.d_arc, d_r)),
            ("mlp_head_b", (1, c.d_arc)),
            ("u1", (c.d_arc, c.d_arc)),
            ("u2", (1, c.d_arc)),
        ]);
        let actual = self.tensors();
        if actual.len() != expected.len() {
            return Err(ScorerError::Config(format!(
                "expected {} tensors, found {}",
                expected.len(),
                actual.len()
            )));
        }
        for ((name, shape), (actual_name, t)) in expected.iter().zip(&actual) {
            if name != actual_name || t.shape() != *shape {
                return Err(ScorerError::Config(format!(
                    "tensor {actual_name} has shape {:?}, expected {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(ScorerError::Config(format!("tensor {name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Arc scores of one sentence: `(n+1) x n` with heads `0..=n` on rows and
/// dependents `1..=n` on columns. Self-arcs hold `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcScoreTable {
    n: usize,
    s: Matrix,
}

impl ArcScoreTable {
    pub fn new(n: usize) -> Self {
        let mut s = Matrix::zeros(n + 1, n);
        for j in 1..=n {
            s[(j, j - 1)] = f64::NEG_INFINITY;
        }
        ArcScoreTable { n, s }
    }

    /// Build from explicit entries, re-masking the diagonal.
    pub fn from_matrix(n: usize, mut s: Matrix) -> Result<Self, ScorerError> {
        if s.shape() != (n + 1, n) {
            return Err(ScorerError::Shape(format!(
                "score table for n={n} must be {}x{}, got {:?}",
                n + 1,
                n,
                s.shape()
            )));
        }
        for j in 1..=n {
            s[(j, j - 1)] = f64::NEG_INFINITY;
        }
        Ok(ArcScoreTable { n, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Score of arc head -> dep, `head in 0..=n`, `dep in 1..=n`.
    pub fn get(&self, head: usize, dep: usize) -> f64 {
        self.s[(head, dep - 1)]
    }

    pub fn set(&mut self, head: usize, dep: usize, value: f64) {
        assert_ne!(head, dep, "self-arcs stay masked");
        self.s[(head, dep - 1)] = value;
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.s
    }

    /// True when every non-masked entry is finite.
    pub fn all_finite(&self) -> bool {
        for head in 0..=self.n {
            for dep in 1..=self.n {
                let v = self.get(head, dep);
                if head == dep {
                    if v != f64::NEG_INFINITY {
                        return false;
                    }
                } else if !v.is_finite() {
                    return false;
                }
            }
        }
        true
    }
}

/// Exponentiated arc scores aligned with a factor graph's arc list.
/// Pairwise values are sums of unaries; the mutual-interaction term is
/// deliberately absent (the scorer is trained end to end).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    psi: Vec<f64>,
}

impl PotentialTable {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// psi of the arc at `arc_index` in the originating factor graph.
    pub fn psi_unary(&self, arc_index: usize) -> f64 {
        self.psi[arc_index]
    }

    pub fn psi_pair(&self, arc_a: usize, arc_b: usize) -> f64 {
        self.psi[arc_a] + self.psi[arc_b]
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }
}

/// `psi_r = exp(clamp(s_r))` for every arc of the factor graph.
pub fn potentials(
    scores: &ArcScoreTable,
    graph: &FactorGraph,
) -> Result<PotentialTable, ScorerError> {
    let mut psi = Vec::with_capacity(graph.arcs().len());
    for arc in graph.arcs() {
        let s = scores.get(arc.head, arc.dep);
        if !s.is_finite() {
            return Err(ScorerError::MaskedArc {
                head: arc.head,
                dep: arc.dep,
            });
        }
        psi.push(libm::exp(s.clamp(-SCORE_CLAMP, SCORE_CLAMP)));
    }
    Ok(PotentialTable { psi })
}

fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LRELU_SLOPE * x
    }
}

fn lrelu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        LRELU_SLOPE
    }
}

/// Recorded forward computation for one sentence: everything `backward`
/// needs to produce exact parameter gradients.
#[derive(Debug, Clone)]
pub struct Forward {
    word_ids: Vec<usize>,
    pos_ids: Vec<usize>,
    /// Concatenated embeddings per position, root first.
    x: Vec<Vec<f64>>,
    /// Post-tanh hidden states (BiRnn only).
    h_fwd: Vec<Vec<f64>>,
    h_bwd: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    dep_pre: Vec<Vec<f64>>,
    head_pre: Vec<Vec<f64>>,
    h_dep: Vec<Vec<f64>>,
    h_head: Vec<Vec<f64>>,
    /// `U1 h_dep_j`, cached per dependent.
    u1_hdep: Vec<Vec<f64>>,
    pub scores: ArcScoreTable,
}

impl Forward {
    pub fn n(&self) -> usize {
        self.scores.n()
    }

    pub fn representations(&self) -> &[Vec<f64>] {
        &self.r
    }
}

fn lookup_ids(sentence: &Sentence, vocab: &Vocabulary) -> (Vec<usize>, Vec<usize>) {
    let n = sentence.len();
    let mut word_ids = Vec::with_capacity(n + 1);
    let mut pos_ids = Vec::with_capacity(n + 1);
    word_ids.push(ROOT_ID);
    pos_ids.push(ROOT_ID);
    for j in 0..n {
        word_ids.push(vocab.word_id(&sentence.tokens[j]));
        pos_ids.push(vocab.pos_id(&sentence.pos_tags[j]));
    }
    (word_ids, pos_ids)
}

fn affine(p: &AffineParams, x: &[f64]) -> Vec<f64> {
    let mut y = p.w.matvec(x);
    axpy(&mut y, 1.0, p.b.row(0));
    y
}

fn rnn_pass(dir: &RnnDirection, x: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let len = x.len();
    let d_h = dir.bias.cols();
    let mut h = vec![vec![0.0; d_h]; len];
    let order: Vec<usize> = if reverse {
        (0..len).rev().collect()
    } else {
        (0..len).collect()
    };
    let mut prev = vec![0.0; d_h];
    for &t in &order {
        let mut a = dir.w_in.matvec(&x[t]);
        axpy(&mut a, 1.0, &dir.w_rec.matvec(&prev));
        axpy(&mut a, 1.0, dir.bias.row(0));
        for v in a.iter_mut() {
            *v = libm::tanh(*v);
        }
        h[t] = a;
        prev = h[t].clone();
    }
    h
}

/// Full forward pass, recording the tape.
pub fn forward(
    sentence: &Sentence,
    vocab: &Vocabulary,
    params: &ScorerParams,
) -> Result<Forward, ScorerError> {
    params.validate()?;
    let c = &params.config;
    let n = sentence.len();
    let (word_ids, pos_ids) = lookup_ids(sentence, vocab);
    for &w in &word_ids {
        if w >= c.word_vocab {
            return Err(ScorerError::Config(format!(
                "word id {w} out of range for vocab {}",
                c.word_vocab
            )));
        }
    }
    for &p in &pos_ids {
        if p >= c.pos_vocab {
            return Err(ScorerError::Config(format!(
                "pos id {p} out of range for vocab {}",
                c.pos_vocab
            )));
        }
    }

    let d_in = c.d_input();
    let x: Vec<Vec<f64>> = (0..=n)
        .map(|t| {
            let mut v = Vec::with_capacity(d_in);
            v.extend_from_slice(params.word_emb.row(word_ids[t]));
            v.extend_from_slice(params.pos_emb.row(pos_ids[t]));
            v
        })
        .collect();

    let (h_fwd, h_bwd, r): (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) = match c.encoder {
        EncoderKind::Window => {
            let zero = vec![0.0; d_in];
            let r = (0..=n)
                .map(|t| {
                    let mut v = Vec::with_capacity(3 * d_in);
                    v.extend_from_slice(if t == 0 { &zero } else { &x[t - 1] });
                    v.extend_from_slice(&x[t]);
                    v.extend_from_slice(if t == n { &zero } else { &x[t + 1] });
                    v
                })
                .collect();
            (Vec::new(), Vec::new(), r)
        }
        EncoderKind::BiRnn => {
            let fwd = params.rnn_fwd.as_ref().expect("validated");
            let bwd = params.rnn_bwd.as_ref().expect("validated");
            let h_fwd = rnn_pass(fwd, &x, false);
            let h_bwd = rnn_pass(bwd, &x, true);
            let r = (0..=n)
                .map(|t| {
                    let mut v = Vec::with_capacity(2 * c.d_hidden);
                    v.extend_from_slice(&h_fwd[t]);
                    v.extend_from_slice(&h_bwd[t]);
                    v
                })
                .collect();
            (h_fwd, h_bwd, r)
        }
    };

    let dep_pre: Vec<Vec<f64>> = r.iter().map(|ri| affine(&params.mlp_dep, ri)).collect();
    let head_pre: Vec<Vec<f64>> = r.iter().map(|ri| affine(&params.mlp_head, ri)).collect();
    let h_dep: Vec<Vec<f64>> = dep_pre
        .iter()
        .map(|p| p.iter().map(|&v| lrelu(v)).collect())
        .collect();
    let h_head: Vec<Vec<f64>> = head_pre
        .iter()
        .map(|p| p.iter().map(|&v| lrelu(v)).collect())
        .collect();

    let u1_hdep: Vec<Vec<f64>> = h_dep.iter().map(|hd| params.u1.matvec(hd)).collect();
    let u2 = params.u2.row(0);
    let mut scores = ArcScoreTable::new(n);
    for head in 0..=n {
        let base = dot(&h_head[head], u2);
        for dep in 1..=n {
            if head == dep {
                continue;
            }
            scores.set(head, dep, dot(&h_head[head], &u1_hdep[dep]) + base);
        }
    }

    Ok(Forward {
        word_ids,
        pos_ids,
        x,
        h_fwd,
        h_bwd,
        r,
        dep_pre,
        head_pre,
        h_dep,
        h_head,
        u1_hdep,
        scores,
    })
}

/// Contextual representations r_0..r_n (root included).
pub fn encode(
    sentence: &Sentence,
    vocab: &Vocabulary,
    params: &ScorerParams,
) -> Result<Vec<Vec<f64>>, ScorerError> {
    Ok(forward(sentence, vocab, params)?.r)
}

/// Biaffine scores from precomputed representations.
pub fn arc_scores(r: &[Vec<f64>], params: &ScorerParams) -> Result<ArcScoreTable, ScorerError> {
    params.validate()?;
    let c = &params.config;
    if r.is_empty() {
        return Err(ScorerError::Shape("no representations".into()));
    }
    let n = r.len() - 1;
    for ri in r {
        if ri.len() != c.d_repr() {
            return Err(ScorerError::Shape(format!(
                "representation width {} does not match d_repr {}",
                ri.len(),
                c.d_repr()
            )));
        }
    }
    let h_dep: Vec<Vec<f64>> = r
        .iter()
        .map(|ri| affine(&params.mlp_dep, ri).iter().map(|&v| lrelu(v)).collect())
        .collect();
    let h_head: Vec<Vec<f64>> = r
        .iter()
        .map(|ri| affine(&params.mlp_head, ri).iter().map(|&v| lrelu(v)).collect())
        .collect();
    let u1_hdep: Vec<Vec<f64>> = h_dep.iter().map(|hd| params.u1.matvec(hd)).collect();
    let u2 = params.u2.row(0);
    let mut scores = ArcScoreTable::new(n);
    for head in 0..=n {
        let base = dot(&h_head[head], u2);
        for dep in 1..=n {
            if head != dep {
                scores.set(head, dep, dot(&h_head[head], &u1_hdep[dep]) + base);
            }
        }
    }
    Ok(scores)
}

/// Exact reverse-mode gradients of a scalar loss w.r.t. every parameter,
/// given the loss gradient w.r.t. the score table (masked entries must be 0).
pub fn backward(
    d_scores: &Matrix,
    tape: &Forward,
    params: &ScorerParams,
) -> Result<ScorerParams, ScorerError> {
    let c = &params.config;
    let n = tape.n();
    if d_scores.shape() != (n + 1, n) {
        return Err(ScorerError::Shape(format!(
            "gradient table {:?} does not match scores {:?}",
            d_scores.shape(),
            (n + 1, n)
        )));
    }
    let mut g = params.zeros_like();
    let d_arc = c.d_arc;
    let u2 = params.u2.row(0);

    // Biaffine layer.
    let mut d_hhead = vec![vec![0.0; d_arc]; n + 1];
    let mut d_hdep = vec![vec![0.0; d_arc]; n + 1];
    for head in 0..=n {
        let mut u1t_hhead: Option<Vec<f64>> = None;
        for dep in 1..=n {
            if head == dep {
                continue;
            }
            let gd = d_scores[(head, dep - 1)];
            if gd == 0.0 {
                continue;
            }
            g.u1.add_outer(gd, &tape.h_head[head], &tape.h_dep[dep]);
            axpy(g.u2.row_mut(0), gd, &tape.h_head[head]);
            axpy(&mut d_hhead[head], gd, &tape.u1_hdep[dep]);
            axpy(&mut d_hhead[head], gd, u2);
            let u1t =
                u1t_hhead.get_or_insert_with(|| params.u1.matvec_transpose(&tape.h_head[head]));
            axpy(&mut d_hdep[dep], gd, u1t);
        }
    }

    // Arc MLPs.
    let mut d_r = vec![vec![0.0; c.d_repr()]; n + 1];
    for t in 0..=n {
        let mut d_pre: Vec<f64> = d_hdep[t]
            .iter()
            .zip(&tape.dep_pre[t])
            .map(|(&dh, &pre)| dh * lrelu_grad(pre))
            .collect();
        g.mlp_dep.w.add_outer(1.0, &d_pre, &tape.r[t]);
        axpy(g.mlp_dep.b.row_mut(0), 1.0, &d_pre);
        axpy(&mut d_r[t], 1.0, &params.mlp_dep.w.matvec_transpose(&d_pre));

        d_pre = d_hhead[t]
            .iter()
            .zip(&tape.head_pre[t])
            .map(|(&dh, &pre)| dh * lrelu_grad(pre))
            .collect();
        g.mlp_head.w.add_outer(1.0, &d_pre, &tape.r[t]);
        axpy(g.mlp_head.b.row_mut(0), 1.0, &d_pre);
        axpy(&mut d_r[t], 1.0, &params.mlp_head.w.matvec_transpose(&d_pre));
    }

    // Encoder.
    let d_in = c.d_input();
    let mut d_x = vec![vec![0.0; d_in]; n + 1];
    match c.encoder {
        EncoderKind::Window => {
            for t in 0..=n {
                if t > 0 {
                    axpy(&mut d_x[t - 1], 1.0, &d_r[t][0..d_in]);
                }
                axpy(&mut d_x[t], 1.0, &d_r[t][d_in..2 * d_in]);
                if t < n {
                    axpy(&mut d_x[t + 1], 1.0, &d_r[t][2 * d_in..]);
                }
            }
        }
        EncoderKind::BiRnn => {
            let d_h = c.d_hidden;
            let fwd = params.rnn_fwd.as_ref().expect("validated");
            let bwd = params.rnn_bwd.as_ref().expect("validated");
            let g_fwd = g.rnn_fwd.as_mut().expect("zeros_like keeps layout");
            let g_bwd = g.rnn_bwd.as_mut().expect("zeros_like keeps layout");

            // Forward direction: h_t depends on h_{t-1}; walk t downwards.
            let mut carry = vec![0.0; d_h];
            for t in (0..=n).rev() {
                let mut dh = d_r[t][0..d_h].to_vec();
                axpy(&mut dh, 1.0, &carry);
                let da: Vec<f64> = dh
                    .iter()
                    .zip(&tape.h_fwd[t])
                    .map(|(&d, &h)| d * (1.0 - h * h))
                    .collect();
                g_fwd.w_in.add_outer(1.0, &da, &tape.x[t]);
                if t > 0 {
                    g_fwd.w_rec.add_outer(1.0, &da, &tape.h_fwd[t - 1]);
                }
                axpy(g_fwd.bias.row_mut(0), 1.0, &da);
                axpy(&mut d_x[t], 1.0, &fwd.w_in.matvec_transpose(&da));
                carry = fwd.w_rec.matvec_transpose(&da);
            }

            // Backward direction: h_t depends on h_{t+1}; walk t upwards.
            let mut carry = vec![0.0; d_h];
            for t in 0..=n {
                let mut dh = d_r[t][d_h..].to_vec();
                axpy(&mut dh, 1.0, &carry);
                let da: Vec<f64> = dh
                    .iter()
                    .zip(&tape.h_bwd[t])
                    .map(|(&d, &h)| d * (1.0 - h * h))
                    .collect();
                g_bwd.w_in.add_outer(1.0, &da, &tape.x[t]);
                if t < n {
                    g_bwd.w_rec.add_outer(1.0, &da, &tape.h_bwd[t + 1]);
                }
                axpy(g_bwd.bias.row_mut(0), 1.0, &da);
                axpy(&mut d_x[t], 1.0, &bwd.w_in.matvec_transpose(&da));
                carry = bwd.w_rec.matvec_transpose(&da);
            }
        }
    }

    // Embedding tables.
    for t in 0..=n {
        axpy(
            g.word_emb.row_mut(tape.word_ids[t]),
            1.0,
            &d_x[t][0..c.d_emb],
        );
        axpy(g.pos_emb.row_mut(tape.pos_ids[t]), 1.0, &d_x[t][c.d_emb..]);
    }

    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;
    use alloc::string::ToString;

    fn toy_sentence(n: usize) -> Sentence {
        let tokens = (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>();
        let tags = (0..n)
            .map(|i| if i % 2 == 0 { "NOUN" } else { "VERB" }.to_string())
            .collect::<Vec<_>>();
        let heads = (0..n).collect::<Vec<_>>();
        Sentence::new(tokens, tags, heads).unwrap()
    }

    fn toy_vocab() -> Vocabulary {
        let text = "1\tw0\t_\tNOUN\t_\t_\t0\t_\t_\t_\n\
                    2\tw1\t_\tVERB\t_\t_\t1\t_\t_\t_\n\
                    3\tw2\t_\tNOUN\t_\t_\t2\t_\t_\t_\n\n";
        Vocabulary::build(&parse_conllu(text).unwrap(), 1).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_representations_for_window_encoder() {
        let vocab = toy_vocab();
        let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), EncoderKind::Window);
        let params = ScorerParams::new_seeded(config, 0).unwrap().zeros_like();
        let r = encode(&toy_sentence(2), &vocab, &params).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|ri| ri.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn encode_is_deterministic_and_shapes_match() {
        let vocab = toy_vocab();
        for kind in [EncoderKind::Window, EncoderKind::BiRnn] {
            let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), kind);
            let params = ScorerParams::new_seeded(config, 3).unwrap();
            let s = toy_sentence(1);
            let r1 = encode(&s, &vocab, &params).unwrap();
            let r2 = encode(&s, &vocab, &params).unwrap();
            assert_eq!(r1, r2);
            assert_eq!(r1.len(), 2); // root + token
            assert_eq!(r1[0].len(), config.d_repr());
        }
    }

    #[test]
    fn biaffine_scalar_case_matches_hand_computation() {
        // d_arc = 1: with h_head = [2], h_dep = [3], U1 = [[1]], u2 = [0.5]
        // the score is 2*3*1 + 2*0.5 = 7.
        let h_head = [2.0];
        let h_dep = [3.0];
        let u1 = Matrix::from_rows(&[&[1.0]]);
        let u2 = [0.5];
        let s = dot(&h_head, &u1.matvec(&h_dep)) + dot(&h_head, &u2);
        assert_eq!(s, 7.0);
        // independent oracle: explicit sum form of the bilinear product
        let mut oracle = 0.0;
        for a in 0..1 {
            for b in 0..1 {
                oracle += h_head[a] * u1[(a, b)] * h_dep[b];
            }
            oracle += h_head[a] * u2[a];
        }
        assert_eq!(oracle, s);
    }

    #[test]
    fn zero_biaffine_terms_zero_all_scores() {
        let vocab = toy_vocab();
        let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), EncoderKind::Window);
        let mut params = ScorerParams::new_seeded(config, 1).unwrap();
        params.u1.fill(0.0);
        params.u2.fill(0.0);
        let tape = forward(&toy_sentence(3), &vocab, &params).unwrap();
        for head in 0..=3 {
            for dep in 1..=3 {
                if head != dep {
                    assert_eq!(tape.scores.get(head, dep), 0.0);
                }
            }
        }
    }

    #[test]
    fn self_arcs_are_masked() {
        let vocab = toy_vocab();
        let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), EncoderKind::BiRnn);
        let params = ScorerParams::new_seeded(config, 5).unwrap();
        let tape = forward(&toy_sentence(3), &vocab, &params).unwrap();
        for j in 1..=3 {
            assert_eq!(tape.scores.get(j, j), f64::NEG_INFINITY);
        }
        assert!(tape.scores.all_finite());
    }

    #[test]
    fn permuting_tokens_permutes_scores_under_context_free_encoding() {
        // Window encoder with the neighbor slots zeroed out is context-free:
        // r_t depends on x_t only, so swapping two tokens swaps the
        // corresponding rows and columns of the score table.
        let vocab = toy_vocab();
        let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), EncoderKind::Window);
        let mut params = ScorerParams::new_seeded(config, 9).unwrap();
        let d_in = config.d_input();
        // zero the MLP columns that read the +-1 neighbors
        for t in [&mut params.mlp_dep.w, &mut params.mlp_head.w] {
            for r in 0..t.rows() {
                for c in 0..d_in {
                    t[(r, c)] = 0.0;
                }
                for c in 2 * d_in..3 * d_in {
                    t[(r, c)] = 0.0;
                }
            }
        }
        let s1 = Sentence::new(
            vec!["w0".into(), "w1".into(), "w2".into()],
            vec!["NOUN".into(), "VERB".into(), "NOUN".into()],
            vec![0, 1, 2],
        )
        .unwrap();
        let s2 = Sentence::new(
            vec!["w1".into(), "w0".into(), "w2".into()],
            vec!["VERB".into(), "NOUN".into(), "NOUN".into()],
            vec![0, 1, 2],
        )
        .unwrap();
        let t1 = forward(&s1, &vocab, &params).unwrap();
        let t2 = forward(&s2, &vocab, &params).unwrap();
        // permutation swapping positions 1 and 2 (root fixed)
        let perm = [0usize, 2, 1, 3];
        for head in 0..=3 {
            for dep in 1..=3 {
                if head == dep {
                    continue;
                }
                let (ph, pd) = (perm[head], perm[dep]);
                if ph == pd {
                    continue;
                }
                assert!(
                    (t1.scores.get(head, dep) - t2.scores.get(ph, pd)).abs() < 1e-12,
                    "score ({head},{dep}) should move to ({ph},{pd})"
                );
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let vocab = toy_vocab();
        let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), EncoderKind::BiRnn);
        let params = ScorerParams::new_seeded(config, 2).unwrap();
        let tape = forward(&toy_sentence(2), &vocab, &params).unwrap();
        let d = Matrix::zeros(3, 2);
        let g = backward(&d, &tape, &params).unwrap();
        for (_, t) in g.tensors() {
            assert!(t.iter().all(|v| v == 0.0));
        }
    }

    #[test]
    fn u2_gradient_is_sum_of_head_projections() {
        // d s[i][j] / d u2 = h_head_i, so with upstream gradient 1 on a single
        // arc the u2 gradient equals that head's projection.
        let vocab = toy_vocab();
        let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), EncoderKind::Window);
        let params = ScorerParams::new_seeded(config, 4).unwrap();
        let tape = forward(&toy_sentence(2), &vocab, &params).unwrap();
        let mut d = Matrix::zeros(3, 2);
        d[(0, 1 - 1)] = 1.0; // arc 0 -> 1
        let g = backward(&d, &tape, &params).unwrap();
        for k in 0..config.d_arc {
            assert!((g.u2[(0, k)] - tape.h_head[0][k]).abs() < 1e-12);
        }
    }

    /// Central finite differences on every parameter of a 3-token sentence.
    /// The scalar "loss" is a fixed random linear functional of the scores,
    /// which exercises every path of the tape.
    #[test]
    fn gradients_match_finite_differences() {
        use rand::Rng;
        let vocab = toy_vocab();
        for kind in [EncoderKind::Window, EncoderKind::BiRnn] {
            let config = ScorerConfig::tiny(vocab.word_count(), vocab.pos_count(), kind);
            let params = ScorerParams::new_seeded(config, 11).unwrap();
            let sentence = toy_sentence(3);
            let n = sentence.len();
            let mut rng = ChaCha12Rng::seed_from_u64(99);
            let mut weights = Matrix::zeros(n + 1, n);
            for head in 0..=n {
                for dep in 1..=n {
                    if head != dep {
                        weights[(head, dep - 1)] = rng.gen_range(-1.0..1.0);
                    }
                }
            }
            let loss_of = |p: &ScorerParams| -> f64 {
                let tape = forward(&sentence, &vocab, p).unwrap();
                let mut l = 0.0;
                for head in 0..=n {
                    for dep in 1..=n {
                        if head != dep {
                            l += weights[(head, dep - 1)] * tape.scores.get(head, dep);
                        }
                    }
                }
                l
            };
            let tape = forward(&sentence, &vocab, &params).unwrap();
            let analytic = backward(&weights, &tape, &params).unwrap();

            let eps = 1e-5;
            let names: Vec<&str> = params.tensors().iter().map(|(n, _)| *n).collect();
            for name in names {
                let (rows, cols) = {
                    let t = params.tensors();
                    let m = t.iter().find(|(n, _)| *n == name).unwrap().1;
                    m.shape()
                };
                for idx in [(0, 0), (rows - 1, cols - 1), (rows / 2, cols / 2)] {
                    let nudge = |delta: f64| -> ScorerParams {
                        let mut p = params.clone();
                        let mut ts = p.tensors_mut();
                        let t = ts.iter_mut().find(|(n, _)| *n == name).unwrap();
                        t.1[idx] += delta;
                        drop(ts);
                        p
                    };
                    let numeric = (loss_of(&nudge(eps)) - loss_of(&nudge(-eps))) / (2.0 * eps);
                    let ts = analytic.tensors();
                    let got = ts.iter().find(|(n, _)| *n == name).unwrap().1[idx];
                    let denom = numeric.abs().max(got.abs()).max(1e-8);
                    assert!(
                        (numeric - got).abs() / denom < 1e-4,
                        "{kind:?} {name}{idx:?}: analytic {got} vs numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn potentials_exponentiate_scores() {
        use crate::factor_graph::{build, ScoreSplit};
        let mut scores = ArcScoreTable::new(3);
        for head in 0..=3usize {
            for dep in 1..=3usize {
                if head != dep {
                    scores.set(head, dep, 0.0);
                }
            }
        }
        scores.set(1, 2, libm::log(5.0));
        let graph = build(3, &scores, false, ScoreSplit::Unscaled);
        let pot = potentials(&scores, &graph).unwrap();
        let idx = graph
            .arc_index(crate::factor_graph::ArcId { head: 1, dep: 2 })
            .unwrap();
        assert!((pot.psi_unary(idx) - 5.0).abs() < 1e-12);
        // s = 0 elsewhere -> psi = 1
        let other = graph
            .arc_index(crate::factor_graph::ArcId { head: 2, dep: 3 })
            .unwrap();
        assert!((pot.psi_unary(other) - 1.0).abs() < 1e-12);
        // pairwise = sum of unaries
        assert!((pot.psi_pair(idx, other) - 6.0).abs() < 1e-12);
        assert!(pot.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn potentials_are_monotone_in_the_score_and_clamped() {
        use crate::factor_graph::{build, ArcId, ScoreSplit};
        let mut lo = ArcScoreTable::new(3);
        let mut hi = ArcScoreTable::new(3);
        for head in 0..=3usize {
            for dep in 1..=3usize {
                if head != dep {
                    lo.set(head, dep, 0.2);
                    hi.set(head, dep, 0.2);
                }
            }
        }
        lo.set(1, 2, -1.0);
        hi.set(1, 2, 1.0);
        let k = {
            let graph = build(3, &lo, false, ScoreSplit::Unscaled);
            graph.arc_index(ArcId { head: 1, dep: 2 }).unwrap()
        };
        let g_lo = build(3, &lo, false, ScoreSplit::Unscaled);
        let g_hi = build(3, &hi, false, ScoreSplit::Unscaled);
        let p_lo = potentials(&lo, &g_lo).unwrap();
        let p_hi = potentials(&hi, &g_hi).unwrap();
        assert!(p_lo.psi_unary(k) < p_hi.psi_unary(k));
        // clamp keeps extreme scores finite
        hi.set(1, 2, 1e6);
        let g = build(3, &hi, false, ScoreSplit::Unscaled);
        let p = potentials(&hi, &g).unwrap();
        assert!(p.psi_unary(k).is_finite());
        assert!((p.psi_unary(k) - libm::exp(SCORE_CLAMP)).abs() < 1e-3);
    }

    #[test]
    fn potentials_reject_masked_scores() {
        use crate::factor_graph::{build, ScoreSplit};
        let mut scores = ArcScoreTable::new(3);
        for head in 0..=3usize {
            for dep in 1..=3usize {
                if head != dep {
                    scores.set(head, dep, 0.0);
                }
            }
        }
        scores.set(1, 2, f64::NEG_INFINITY);
        let graph = build(3, &scores, false, ScoreSplit::Unscaled);
        assert!(matches!(
            potentials(&scores, &graph),
            Err(ScorerError::MaskedArc { head: 1, dep: 2 })
        ));
    }

    #[test]
    fn seeded_initialization_is_reproducible() {
        let config = ScorerConfig::tiny(6, 4, EncoderKind::BiRnn);
        let a = ScorerParams::new_seeded(config, 7).unwrap();
        let b = ScorerParams::new_seeded(config, 7).unwrap();
        assert_eq!(a, b);
        let c = ScorerParams::new_seeded(config, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let config = ScorerConfig::tiny(7, 4, EncoderKind::BiRnn);
        let params = ScorerParams::new_seeded(config, 42).unwrap();
        let bytes = crate::model_io::params_to_bytes(&params);
        let restored = crate::model_io::params_from_bytes(&bytes).unwrap();
        assert_eq!(params, restored);
    }
}
