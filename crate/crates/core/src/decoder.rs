//! From arc scores to trees: MBR head selection over per-dependent head
//! distributions, arborescence validation, and a Chu-Liu/Edmonds maximum
//! spanning arborescence fallback for the cyclic case.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::admm::MapResult;
use crate::corpus::Sentence;
use crate::linalg::{log_sum_exp, Matrix};
use crate::scorer::ArcScoreTable;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecoderError {
    LengthMismatch { predicted: usize, gold: usize },
    Invalid(String),
}

impl fmt::Display for DecoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecoderError::LengthMismatch { predicted, gold } => {
                write!(f, "length mismatch: {predicted} predicted vs {gold} gold tokens")
            }
            DecoderError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

/// Per-dependent head distributions: `p[(i, j-1)] = p(head(j) = i)`.
/// Columns sum to one; self-arcs carry zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadDistribution {
    pub p: Matrix,
    pub log_p: Matrix,
}

impl HeadDistribution {
    pub fn n(&self) -> usize {
        self.p.cols()
    }

    pub fn prob(&self, head: usize, dep: usize) -> f64 {
        self.p[(head, dep - 1)]
    }

    pub fn log_prob(&self, head: usize, dep: usize) -> f64 {
        self.log_p[(head, dep - 1)]
    }
}

/// One head per token, rooted at 0 and validated as an arborescence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    /// `heads[j-1]` is the head of token `j`.
    pub heads: Vec<usize>,
}

impl ParseTree {
    pub fn new(heads: Vec<usize>) -> Result<Self, DecoderError> {
        if !is_tree(&heads) {
            return Err(DecoderError::Invalid(format!(
                "heads {heads:?} are not an arborescence rooted at 0"
            )));
        }
        Ok(ParseTree { heads })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Softmax over candidate heads of `s[i][j] + beta * u(y_ij)`, the
/// consensus term applying only to arcs the factor graph covers. With
/// `beta = 0` or no consensus this is the plain first-order softmax.
pub fn head_distribution(
    scores: &ArcScoreTable,
    consensus: Option<&MapResult>,
    beta: f64,
) -> HeadDistribution {
    let n = scores.n();
    let mut adjusted = scores.as_matrix().clone();
    if let (Some(map), true) = (consensus, beta != 0.0) {
        for (arc, u) in map.consensus() {
            adjusted[(arc.head, arc.dep - 1)] += beta * u;
        }
    }
    let mut log_p = Matrix::zeros(n + 1, n);
    let mut p = Matrix::zeros(n + 1, n);
    let mut column = vec![0.0; n + 1];
    for dep in 1..=n {
        for head in 0..=n {
            column[head] = adjusted[(head, dep - 1)];
        }
        let lse = log_sum_exp(&column);
        for head in 0..=n {
            let lp = column[head] - lse;
            log_p[(head, dep - 1)] = lp;
            p[(head, dep - 1)] = libm::exp(lp);
        }
    }
    HeadDistribution { p, log_p }
}

/// Per-dependent argmax head; ties break toward the smaller head index.
/// The result may be cyclic; gate it through `is_tree`.
pub fn mbr_decode(dist: &HeadDistribution) -> Vec<usize> {
    let n = dist.n();
    (1..=n)
        .map(|dep| {
            let mut best = 0;
            for head in 1..=n {
                if head != dep && dist.prob(head, dep) > dist.prob(best, dep) {
                    best = head;
                }
            }
            best
        })
        .collect()
}

/// True iff `heads` is an arborescence rooted at 0: one in-range non-self
/// head per token and every token reaches the root.
pub fn is_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    for (j, &h) in heads.iter().enumerate() {
        if h > n || h == j + 1 {
            return false;
        }
    }
    for start in 1..=n {
        let mut node = start;
        let mut steps = 0;
        while node != 0 {
            node = heads[node - 1];
            steps += 1;
            if steps > n {
                return false; // walked into a cycle
            }
        }
    }
    true
}

/// Maximum spanning arborescence rooted at 0 by Chu-Liu/Edmonds: greedy
/// head selection, cycle contraction, recursive resolution. `weights` is
/// `(n+1) x n` with heads on rows, dependents on columns; self-arcs are
/// ignored. All non-self entries must be finite or `-inf`-dominated by at
/// least one finite candidate per column.
pub fn mst_decode(weights: &Matrix) -> ParseTree {
    let n = weights.cols();
    assert_eq!(weights.rows(), n + 1, "weights must be (n+1) x n");
    if n == 0 {
        return ParseTree { heads: Vec::new() };
    }
    // square working copy, scores[(head, dep)] for vertices 0..=n
    let mut scores = Matrix::zeros(n + 1, n + 1);
    for head in 0..=n {
        scores[(head, 0)] = f64::NEG_INFINITY; // nothing points at the root
        for dep in 1..=n {
            scores[(head, dep)] = if head == dep {
                f64::NEG_INFINITY
            } else {
                weights[(head, dep - 1)]
            };
        }
    }
    let mut active = vec![true; n + 1];
    let parents = chu_liu_edmonds(&mut scores, 0, &mut active);
    let heads = (1..=n)
        .map(|j| parents[j].expect("non-root vertices have parents"))
        .collect();
    ParseTree { heads }
}

fn chu_liu_edmonds(
    scores: &mut Matrix,
    root: usize,
    active: &mut [bool],
) -> Vec<Option<usize>> {
    let max_parents = find_max_parents(scores, root, active);
    let cycle = match find_cycle(&max_parents) {
        Some(c) => c,
        None => return max_parents,
    };

    // Contract the cycle into its first vertex.
    let rep = cycle[0];
    let cycle_sum: f64 = cycle
        .iter()
        .map(|&v| scores[(max_parents[v].expect("cycle vertex"), v)])
        .sum();
    for &v in &cycle[1..] {
        active[v] = false;
    }
    let in_cycle = |v: usize| cycle.contains(&v);
    // replacements[(contracted edge)] = original cycle endpoint
    let mut incoming: Vec<(usize, usize)> = Vec::new(); // (outside vertex, cycle vertex)
    let mut outgoing: Vec<(usize, usize)> = Vec::new();
    for v in 0..scores.rows() {
        if !active[v] || in_cycle(v) {
            continue;
        }
        let mut best_in = f64::NEG_INFINITY;
        let mut best_in_cv = cycle[0];
        let mut best_out = f64::NEG_INFINITY;
        let mut best_out_cv = cycle[0];
        for &cv in &cycle {
            if scores[(cv, v)] > best_out {
                best_out = scores[(cv, v)];
                best_out_cv = cv;
            }
            let broken = scores[(max_parents[cv].expect("cycle vertex"), cv)];
            let gain = cycle_sum + scores[(v, cv)] - broken;
            if gain > best_in {
                best_in = gain;
                best_in_cv = cv;
            }
        }
        scores[(v, rep)] = best_in;
        scores[(rep, v)] = best_out;
        incoming.push((v, best_in_cv));
        outgoing.push((v, best_out_cv));
    }

    let mut mst = chu_liu_edmonds(scores, root, active);

    // Expand: the chosen incoming edge of the contraction decides which
    // cycle edge breaks.
    let enter_from = mst[rep].expect("contracted vertex has a parent");
    let kicked = incoming
        .iter()
        .find(|(v, _)| *v == enter_from)
        .map(|&(_, cv)| cv)
        .expect("parent recorded during contraction");
    mst[kicked] = Some(enter_from);
    for &cv in &cycle {
        if cv != kicked {
            mst[cv] = max_parents[cv];
        }
    }
    for (v, cv) in outgoing {
        if mst[v] == Some(rep) {
            mst[v] = Some(cv);
        }
    }
    mst
}

fn find_max_parents(scores: &Matrix, root: usize, active: &[bool]) -> Vec<Option<usize>> {
    let mut parents = vec![None; active.len()];
    for child in 0..active.len() {
        if child == root || !active[child] {
            continue;
        }
        let mut best: Option<usize> = None;
        for parent in 0..active.len() {
            if parent == child || !active[parent] {
                continue;
            }
            if best.map_or(true, |b| scores[(parent, child)] > scores[(b, child)]) {
                best = Some(parent);
            }
        }
        parents[child] = best;
    }
    parents
}

fn find_cycle(parents: &[Option<usize>]) -> Option<Vec<usize>> {
    // 0 = unseen, 1 = on current walk, 2 = settled
    let mut mark = vec![0u8; parents.len()];
    for start in 0..parents.len() {
        if mark[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if mark[v] == 1 {
                let pos = path.iter().position(|&p| p == v).expect("on walk");
                return Some(path[pos..].to_vec());
            }
            if mark[v] == 2 {
                break;
            }
            mark[v] = 1;
            path.push(v);
            match parents[v] {
                Some(p) => v = p,
                None => break,
            }
        }
        for p in path {
            mark[p] = 2;
        }
    }
    None
}

/// Unlabeled attachment score: the fraction of tokens whose predicted head
/// equals the gold head.
pub fn uas(predicted: &ParseTree, gold: &Sentence) -> Result<f64, DecoderError> {
    if predicted.len() != gold.len() {
        return Err(DecoderError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let hits = predicted
        .heads
        .iter()
        .zip(&gold.gold_heads)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / gold.len() as f64)
}
