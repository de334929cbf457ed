//! Per-sentence factor graph of high-order constraints.
//!
//! Every slave couples exactly two token-token arcs inside a width-3 anchor
//! window: a forward grandparent slave ties `i -> i+1` to `i+1 -> i+2`, a
//! forward consecutive-sibling slave ties `i -> i+1` to `i -> i+2`. Backward
//! mirrors exist behind a flag and are off by default. Arcs shared between
//! slaves are the overlapping basic components; `delta(r)` counts the slaves
//! covering arc `r` and drives the consensus average.
//!
//! Root arcs are not covered by slaves; root attachment is carried by the
//! first-order scores through decoding.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::scorer::ArcScoreTable;

/// A token-token arc candidate, heads and dependents both in `[1, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcId {
    pub head: usize,
    pub dep: usize,
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "y{}{}", self.head, self.dep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlaveKind {
    GrandparentForward,
    SiblingForward,
    GrandparentBackward,
    SiblingBackward,
}

impl SlaveKind {
    pub fn label(&self) -> &'static str {
        match self {
            SlaveKind::GrandparentForward => "GPf",
            SlaveKind::SiblingForward => "SBf",
            SlaveKind::GrandparentBackward => "GPb",
            SlaveKind::SiblingBackward => "SBb",
        }
    }

    pub fn is_grandparent(&self) -> bool {
        matches!(
            self,
            SlaveKind::GrandparentForward | SlaveKind::GrandparentBackward
        )
    }
}

/// One two-arc subproblem with its local scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Slave {
    pub kind: SlaveKind,
    /// Leftmost window position the slave is anchored at.
    pub anchor: usize,
    pub arcs: [ArcId; 2],
    /// Local copy of the per-arc score theta_s(r).
    pub theta: [f64; 2],
}

/// How first-order scores are copied into overlapping slaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreSplit {
    /// Every covering slave receives the full arc score.
    #[default]
    Unscaled,
    /// Each covering slave receives theta / delta(r), so the decomposed
    /// objective matches the first-order objective on overlaps.
    SplitByCover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    slaves: Vec<Slave>,
    /// Deduplicated arcs in first-appearance order.
    arcs: Vec<ArcId>,
    arc_index: BTreeMap<ArcId, usize>,
    /// delta[k] = number of slaves covering arcs[k].
    delta: Vec<usize>,
    /// First-order score per arc (always unscaled), used for warm starts.
    arc_scores: Vec<f64>,
}

/// Build the factor graph of a length-`n` sentence. `n <= 2` yields an
/// empty graph.
pub fn build(
    n: usize,
    scores: &ArcScoreTable,
    include_backward: bool,
    split: ScoreSplit,
) -> FactorGraph {
    assert_eq!(scores.n(), n, "score table length mismatch");
    let mut g = FactorGraph {
        slaves: Vec::new(),
        arcs: Vec::new(),
        arc_index: BTreeMap::new(),
        delta: Vec::new(),
        arc_scores: Vec::new(),
    };
    if n < 3 {
        return g;
    }
    let push = |g: &mut FactorGraph, kind: SlaveKind, anchor: usize, a: ArcId, b: ArcId| {
        for arc in [a, b] {
            if !g.arc_index.contains_key(&arc) {
                g.arc_index.insert(arc, g.arcs.len());
                g.arcs.push(arc);
                g.delta.push(0);
                g.arc_scores.push(scores.get(arc.head, arc.dep));
            }
            g.delta[g.arc_index[&arc]] += 1;
        }
        g.slaves.push(Slave {
            kind,
            anchor,
            arcs: [a, b],
            theta: [scores.get(a.head, a.dep), scores.get(b.head, b.dep)],
        });
    };
    let arc = |head: usize, dep: usize| ArcId { head, dep };
    for i in 1..=n - 2 {
        push(
            &mut g,
            SlaveKind::GrandparentForward,
            i,
            arc(i, i + 1),
            arc(i + 1, i + 2),
        );
        push(
            &mut g,
            SlaveKind::SiblingForward,
            i,
            arc(i, i + 1),
            arc(i, i + 2),
        );
        if include_backward {
            push(
                &mut g,
                SlaveKind::GrandparentBackward,
                i,
                arc(i + 2, i + 1),
                arc(i + 1, i),
            );
            push(
                &mut g,
                SlaveKind::SiblingBackward,
                i,
                arc(i + 2, i + 1),
                arc(i + 2, i),
            );
        }
    }
    if split == ScoreSplit::SplitByCover {
        let delta = g.delta.clone();
        let index = g.arc_index.clone();
        for slave in &mut g.slaves {
            for k in 0..2 {
                slave.theta[k] /= delta[index[&slave.arcs[k]]] as f64;
            }
        }
    }
    g
}

impl FactorGraph {
    pub fn slaves(&self) -> &[Slave] {
        &self.slaves
    }

    pub fn arcs(&self) -> &[ArcId] {
        &self.arcs
    }

    pub fn is_empty(&self) -> bool {
        self.slaves.is_empty()
    }

    pub fn arc_index(&self, arc: ArcId) -> Option<usize> {
        self.arc_index.get(&arc).copied()
    }

    /// Number of slaves covering `arc`; `None` for unknown arcs.
    pub fn delta_of(&self, arc: ArcId) -> Option<usize> {
        self.arc_index(arc).map(|k| self.delta[k])
    }

    pub fn delta_at(&self, arc_index: usize) -> usize {
        self.delta[arc_index]
    }

    /// Unscaled first-order score of the arc at `arc_index`.
    pub fn arc_score_at(&self, arc_index: usize) -> f64 {
        self.arc_scores[arc_index]
    }

    /// Total number of (slave, arc) slots, `sum_s |R_s|`.
    pub fn slot_count(&self) -> usize {
        self.slaves.len() * 2
    }

    /// Structured text dump: one line per slave, one per arc with delta.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "factor-graph slaves={} arcs={}\n",
            self.slaves.len(),
            self.arcs.len()
        ));
        for s in &self.slaves {
            out.push_str(&format!(
                "slave {}{} arcs=[{}, {}] theta=[{:.4}, {:.4}]\n",
                s.kind.label(),
                s.anchor,
                s.arcs[0],
                s.arcs[1],
                s.theta[0],
                s.theta[1]
            ));
        }
        for (k, a) in self.arcs.iter().enumerate() {
            out.push_str(&format!("arc {} delta={}\n", a, self.delta[k]));
        }
        out
    }
}

/// Linear slave objective `f_s(z_s) = sum_r theta_s(r) z_s(r)`.
pub fn slave_score(slave: &Slave, z: &[f64; 2]) -> f64 {
    debug_assert!(z.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
    slave.theta[0] * z[0] + slave.theta[1] * z[1]
}
