//! Ground-truth engines for small instances.
//!
//! `brute_force` enumerates every assignment of a binary factor graph and
//! returns the exact log-partition, marginals, and MAP. `lbp` runs
//! synchronous sum-product with damping as an independent approximate
//! route. `check_logz_gradient` verifies the exponential-family identity
//! `d logZ / d theta_r = E[y_r]` by central finite differences.
//!
//! The pairwise slave potential is evaluated per joint state as
//! `(y_k ? psi_k : 1) + (y_k' ? psi_k' : 1)`: the both-on state carries the
//! sum of the unary potentials and every state stays strictly positive,
//! degenerating to a constant factor when all scores are zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::factor_graph::FactorGraph;
use crate::linalg::log_sum_exp;
use crate::scorer::PotentialTable;

/// Hard cap on exhaustive enumeration.
pub const BRUTE_FORCE_MAX_VARS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooLarge { vars: usize, cap: usize },
    InvalidPotential(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooLarge { vars, cap } => {
                write!(f, "{vars} variables exceed the enumeration cap {cap}")
            }
            OracleError::InvalidPotential(m) => write!(f, "invalid potential: {m}"),
        }
    }
}

/// One factor over binary variables. `table[idx]` indexes joint states with
/// `scope[0]` as the low bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

impl Factor {
    pub fn unary(var: usize, psi_on: f64) -> Self {
        Factor {
            scope: vec![var],
            table: vec![1.0, psi_on],
        }
    }

    /// Pairwise slave potential (see module docs).
    pub fn pairwise_sum(var_a: usize, var_b: usize, psi_a: f64, psi_b: f64) -> Self {
        let at = |ya: bool, yb: bool| -> f64 {
            (if ya { psi_a } else { 1.0 }) + (if yb { psi_b } else { 1.0 })
        };
        Factor {
            scope: vec![var_a, var_b],
            table: vec![
                at(false, false),
                at(true, false),
                at(false, true),
                at(true, true),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFactorGraph {
    pub num_vars: usize,
    pub factors: Vec<Factor>,
}

impl DiscreteFactorGraph {
    pub fn new(num_vars: usize, factors: Vec<Factor>) -> Result<Self, OracleError> {
        for f in &factors {
            if f.table.len() != 1 << f.scope.len() {
                return Err(OracleError::InvalidPotential(format!(
                    "scope {:?} needs {} states, table has {}",
                    f.scope,
                    1usize << f.scope.len(),
                    f.table.len()
                )));
            }
            if f.scope.iter().any(|&v| v >= num_vars) {
                return Err(OracleError::InvalidPotential(format!(
                    "scope {:?} outside 0..{num_vars}",
                    f.scope
                )));
            }
            if f.table.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
                return Err(OracleError::InvalidPotential(
                    "potentials must be strictly positive and finite".into(),
                ));
            }
        }
        Ok(DiscreteFactorGraph { num_vars, factors })
    }

    /// The MRF induced by a parser factor graph: one binary variable per
    /// arc, a unary factor per arc, a pairwise factor per slave.
    pub fn from_parser_graph(
        graph: &FactorGraph,
        potentials: &PotentialTable,
    ) -> Result<Self, OracleError> {
        let mut factors = Vec::new();
        for k in 0..graph.arcs().len() {
            factors.push(Factor::unary(k, potentials.psi_unary(k)));
        }
        for slave in graph.slaves() {
            let a = graph.arc_index(slave.arcs[0]).expect("interned");
            let b = graph.arc_index(slave.arcs[1]).expect("interned");
            factors.push(Factor::pairwise_sum(
                a,
                b,
                potentials.psi_unary(a),
                potentials.psi_unary(b),
            ));
        }
        Self::new(graph.arcs().len(), factors)
    }

    fn log_weight(&self, assignment: u32) -> f64 {
        let mut lw = 0.0;
        for f in &self.factors {
            let mut idx = 0usize;
            for (slot, &v) in f.scope.iter().enumerate() {
                idx |= (((assignment >> v) & 1) as usize) << slot;
            }
            lw += libm::log(f.table[idx]);
        }
        lw
    }
}

/// Exact quantities from exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub log_z: f64,
    /// `p(y_v = 1)` per variable.
    pub marginals: Vec<f64>,
    pub map_assignment: Vec<bool>,
    /// Log of the unnormalized weight of the MAP assignment.
    pub map_log_weight: f64,
}

pub fn brute_force(graph: &DiscreteFactorGraph) -> Result<BruteForce, OracleError> {
    let v = graph.num_vars;
    if v > BRUTE_FORCE_MAX_VARS {
        return Err(OracleError::TooLarge {
            vars: v,
            cap: BRUTE_FORCE_MAX_VARS,
        });
    }
    let count = 1u32 << v;
    let mut log_weights = Vec::with_capacity(count as usize);
    let mut best = 0u32;
    for a in 0..count {
        let lw = graph.log_weight(a);
        log_weights.push(lw);
        if lw > log_weights[best as usize] {
            best = a;
        }
    }
    let log_z = log_sum_exp(&log_weights);
    let mut marginals = Vec::with_capacity(v);
    for var in 0..v {
        let on: Vec<f64> = (0..count)
            .filter(|a| (a >> var) & 1 == 1)
            .map(|a| log_weights[a as usize])
            .collect();
        marginals.push(libm::exp(log_sum_exp(&on) - log_z));
    }
    Ok(BruteForce {
        log_z,
        marginals,
        map_assignment: (0..v).map(|var| (best >> var) & 1 == 1).collect(),
        map_log_weight: log_weights[best as usize],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbpResult {
    /// Normalized per-variable beliefs `(p(y=0), p(y=1))`.
    pub var_beliefs: Vec<[f64; 2]>,
    /// Normalized per-factor beliefs over joint states, factor order.
    pub factor_beliefs: Vec<Vec<f64>>,
    pub rounds: usize,
    pub converged: bool,
}

/// Synchronous sum-product with damped message updates. Non-convergence is
/// reported through the flag; beliefs are returned either way.
pub fn lbp(
    graph: &DiscreteFactorGraph,
    max_rounds: usize,
    damping: f64,
    tol: f64,
) -> Result<LbpResult, OracleError> {
    if !(0.0..1.0).contains(&damping) {
        return Err(OracleError::InvalidPotential(format!(
            "damping must lie in [0,1), got {damping}"
        )));
    }
    let nf = graph.factors.len();
    // var -> (factor, slot) adjacency
    let mut neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph.num_vars];
    for (f, factor) in graph.factors.iter().enumerate() {
        for (slot, &v) in factor.scope.iter().enumerate() {
            neighbors[v].push((f, slot));
        }
    }
    // messages indexed [factor][slot]
    let mut var_to_factor: Vec<Vec<[f64; 2]>> = (0..nf)
        .map(|f| vec![[0.5, 0.5]; graph.factors[f].scope.len()])
        .collect();
    let mut factor_to_var = var_to_factor.clone();

    let normalize = |m: [f64; 2]| -> [f64; 2] {
        let s = m[0] + m[1];
        [m[0] / s, m[1] / s]
    };
    let mut rounds = 0;
    let mut converged = false;
    for round in 0..max_rounds {
        rounds = round + 1;
        let mut delta: f64 = 0.0;

        // variables speak: product of incoming factor messages, minus the target
        let mut new_vf = var_to_factor.clone();
        for (v, adj) in neighbors.iter().enumerate() {
            for &(f, slot) in adj {
                let mut m = [1.0, 1.0];
                for &(other_f, other_slot) in adj {
                    if other_f == f && other_slot == slot {
                        continue;
                    }
                    m[0] *= factor_to_var[other_f][other_slot][0];
                    m[1] *= factor_to_var[other_f][other_slot][1];
                }
                let m = normalize(m);
                let old = var_to_factor[f][slot];
                let damped = normalize([
                    damping * old[0] + (1.0 - damping) * m[0],
                    damping * old[1] + (1.0 - damping) * m[1],
                ]);
                delta = delta.max((damped[0] - old[0]).abs().max((damped[1] - old[1]).abs()));
                new_vf[f][slot] = damped;
            }
            let _ = v;
        }

        // factors speak: marginalize the potential against incoming messages
        let mut new_fv = factor_to_var.clone();
        for (f, factor) in graph.factors.iter().enumerate() {
            let arity = factor.scope.len();
            for slot in 0..arity {
                let mut m = [0.0, 0.0];
                for idx in 0..factor.table.len() {
                    let yi = (idx >> slot) & 1;
                    let mut w = factor.table[idx];
                    for other in 0..arity {
                        if other == slot {
                            continue;
                        }
                        let yo = (idx >> other) & 1;
                        w *= var_to_factor[f][other][yo];
                    }
                    m[yi] += w;
                }
                let m = normalize(m);
                let old = factor_to_var[f][slot];
                let damped = normalize([
                    damping * old[0] + (1.0 - damping) * m[0],
                    damping * old[1] + (1.0 - damping) * m[1],
                ]);
                delta = delta.max((damped[0] - old[0]).abs().max((damped[1] - old[1]).abs()));
                new_fv[f][slot] = damped;
            }
        }

        var_to_factor = new_vf;
        factor_to_var = new_fv;
        if delta < tol {
            converged = true;
            break;
        }
    }

    let var_beliefs: Vec<[f64; 2]> = neighbors
        .iter()
        .map(|adj| {
            let mut b = [1.0, 1.0];
            for &(f, slot) in adj {
                b[0] *= factor_to_var[f][slot][0];
                b[1] *= factor_to_var[f][slot][1];
            }
            normalize(b)
        })
        .collect();
    let factor_beliefs: Vec<Vec<f64>> = graph
        .factors
        .iter()
        .enumerate()
        .map(|(f, factor)| {
            let arity = factor.scope.len();
            let mut b: Vec<f64> = factor.table.clone();
            for (idx, w) in b.iter_mut().enumerate() {
                for slot in 0..arity {
                    let y = (idx >> slot) & 1;
                    *w *= var_to_factor[f][slot][y];
                }
            }
            let s: f64 = b.iter().sum();
            b.iter().map(|w| w / s).collect()
        })
        .collect();
    Ok(LbpResult {
        var_beliefs,
        factor_beliefs,
        rounds,
        converged,
    })
}

/// Verify `d logZ / d theta_r = E[y_r]` by central finite differences on
/// brute-force logZ. `builder` must route `theta` exclusively through unary
/// `exp(theta_r y_r)` potentials. Returns the maximum absolute deviation.
pub fn check_logz_gradient<F>(builder: F, theta: &[f64], step: f64) -> Result<f64, OracleError>
where
    F: Fn(&[f64]) -> DiscreteFactorGraph,
{
    let base = builder(theta);
    if base.num_vars > 12 {
        return Err(OracleError::TooLarge {
            vars: base.num_vars,
            cap: 12,
        });
    }
    let exact = brute_force(&base)?;
    let mut worst: f64 = 0.0;
    for r in 0..theta.len() {
        let mut plus = theta.to_vec();
        plus[r] += step;
        let mut minus = theta.to_vec();
        minus[r] -= step;
        let lz_plus = brute_force(&builder(&plus))?.log_z;
        let lz_minus = brute_force(&builder(&minus))?.log_z;
        let slope = (lz_plus - lz_minus) / (2.0 * step);
        worst = worst.max((slope - exact.marginals[r]).abs());
    }
    Ok(worst)
}

/// Unary-only MRF on the arc set of a parser graph plus fixed pairwise
/// tables: the builder shape `check_logz_gradient` expects.
pub fn parser_mrf_with_unary_theta(
    graph: &FactorGraph,
    fixed_pair_psi: &[f64],
    theta: &[f64],
) -> DiscreteFactorGraph {
    assert_eq!(theta.len(), graph.arcs().len());
    assert_eq!(fixed_pair_psi.len(), graph.arcs().len());
    let mut factors = Vec::new();
    for (k, &t) in theta.iter().enumerate() {
        factors.push(Factor::unary(k, libm::exp(t)));
    }
    for slave in graph.slaves() {
        let a = graph.arc_index(slave.arcs[0]).expect("interned");
        let b = graph.arc_index(slave.arcs[1]).expect("interned");
        factors.push(Factor::pairwise_sum(
            a,
            b,
            fixed_pair_psi[a],
            fixed_pair_psi[b],
        ));
    }
    DiscreteFactorGraph::new(graph.arcs().len(), factors).expect("positive by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{build, ScoreSplit};
    use crate::scorer::{potentials, ArcScoreTable};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn zero_scores(n: usize) -> ArcScoreTable {
        let mut s = ArcScoreTable::new(n);
        for head in 0..=n {
            for dep in 1..=n {
                if head != dep {
                    s.set(head, dep, 0.0);
                }
            }
        }
        s
    }

    #[test]
    fn single_variable_normalization() {
        let g = DiscreteFactorGraph::new(1, vec![Factor::unary(0, 3.0)]).unwrap();
        let bf = brute_force(&g).unwrap();
        assert!((bf.marginals[0] - 0.75).abs() < 1e-12);
        assert!((bf.log_z - libm::log(4.0)).abs() < 1e-12);
        assert_eq!(bf.map_assignment, vec![true]);
    }

    #[test]
    fn independent_variables_factorize() {
        let g = DiscreteFactorGraph::new(
            2,
            vec![Factor::unary(0, 3.0), Factor::unary(1, 3.0)],
        )
        .unwrap();
        let bf = brute_force(&g).unwrap();
        assert_eq!(bf.map_assignment, vec![true, true]);
        assert!((bf.marginals[0] - bf.marginals[1]).abs() < 1e-12);
        // joint MAP weight = product of per-variable MAP weights
        assert!((bf.map_log_weight - 2.0 * libm::log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_scores_give_uniform_marginals_on_parser_graphs() {
        let scores = zero_scores(4);
        let g = build(4, &scores, false, ScoreSplit::Unscaled);
        let pot = potentials(&scores, &g).unwrap();
        let mrf = DiscreteFactorGraph::from_parser_graph(&g, &pot).unwrap();
        let bf = brute_force(&mrf).unwrap();
        for &m in &bf.marginals {
            assert!((m - 0.5).abs() < 1e-12, "marginal {m} not uniform");
        }
    }

    #[test]
    fn map_weight_dominates_sampled_assignments() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut scores = zero_scores(5);
        for head in 0..=5usize {
            for dep in 1..=5usize {
                if head != dep {
                    scores.set(head, dep, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let g = build(5, &scores, false, ScoreSplit::Unscaled);
        let pot = potentials(&scores, &g).unwrap();
        let mrf = DiscreteFactorGraph::from_parser_graph(&g, &pot).unwrap();
        let bf = brute_force(&mrf).unwrap();
        for _ in 0..50 {
            let a: u32 = rng.gen_range(0..1u32 << mrf.num_vars);
            assert!(bf.map_log_weight >= mrf.log_weight(a) - 1e-12);
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let g = DiscreteFactorGraph::new(21, vec![]).unwrap();
        assert!(matches!(
            brute_force(&g),
            Err(OracleError::TooLarge { vars: 21, cap: 20 })
        ));
    }

    #[test]
    fn lbp_single_variable_matches_exactly() {
        let g = DiscreteFactorGraph::new(1, vec![Factor::unary(0, 3.0)]).unwrap();
        let r = lbp(&g, 50, 0.0, 1e-12).unwrap();
        assert!(r.converged);
        assert!((r.var_beliefs[0][0] - 0.25).abs() < 1e-12);
        assert!((r.var_beliefs[0][1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn lbp_is_exact_on_trees() {
        // A single slave (two arcs, one pairwise factor) is a tree.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let psi_a = libm::exp(rng.gen_range(-1.0..1.0));
            let psi_b = libm::exp(rng.gen_range(-1.0..1.0));
            let g = DiscreteFactorGraph::new(
                2,
                vec![
                    Factor::unary(0, psi_a),
                    Factor::unary(1, psi_b),
                    Factor::pairwise_sum(0, 1, psi_a, psi_b),
                ],
            )
            .unwrap();
            let bf = brute_force(&g).unwrap();
            // undamped: exact within a few sweeps of this diameter-2 tree
            let r = lbp(&g, 8, 0.0, 0.0).unwrap();
            for v in 0..2 {
                assert!(
                    (r.var_beliefs[v][1] - bf.marginals[v]).abs() < 1e-9,
                    "belief {} vs exact {}",
                    r.var_beliefs[v][1],
                    bf.marginals[v]
                );
            }
            // damped run settles on the same fixed point
            let rd = lbp(&g, 400, 0.5, 1e-13).unwrap();
            assert!(rd.converged);
            for v in 0..2 {
                assert!((rd.var_beliefs[v][1] - bf.marginals[v]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lbp_beliefs_stay_normalized_and_positive() {
        let scores = zero_scores(5);
        let g = build(5, &scores, false, ScoreSplit::Unscaled);
        let pot = potentials(&scores, &g).unwrap();
        let mrf = DiscreteFactorGraph::from_parser_graph(&g, &pot).unwrap();
        let r = lbp(&mrf, 30, 0.5, 1e-10).unwrap();
        for b in &r.var_beliefs {
            assert!(b[0] > 0.0 && b[1] > 0.0);
            assert!((b[0] + b[1] - 1.0).abs() < 1e-12);
        }
        for fb in &r.factor_beliefs {
            assert!(fb.iter().all(|&p| p > 0.0));
            assert!((fb.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lbp_on_loopy_parser_graphs_stays_near_exact() {
        // Measured bound, not a theorem: recorded max error stays small on
        // random loopy 5-token graphs.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let mut scores = zero_scores(5);
            for head in 0..=5usize {
                for dep in 1..=5usize {
                    if head != dep {
                        scores.set(head, dep, rng.gen_range(-1.0..1.0));
                    }
                }
            }
            let g = build(5, &scores, false, ScoreSplit::Unscaled);
            let pot = potentials(&scores, &g).unwrap();
            let mrf = DiscreteFactorGraph::from_parser_graph(&g, &pot).unwrap();
            let bf = brute_force(&mrf).unwrap();
            let r = lbp(&mrf, 300, 0.5, 1e-10).unwrap();
            for v in 0..mrf.num_vars {
                worst = worst.max((r.var_beliefs[v][1] - bf.marginals[v]).abs());
            }
        }
        assert!(worst <= 0.05, "max loopy belief error {worst}");
    }

    #[test]
    fn logz_gradient_matches_marginals() {
        // single unary variable, theta = 0: marginal 0.5, slope 0.5
        let builder = |theta: &[f64]| {
            DiscreteFactorGraph::new(1, vec![Factor::unary(0, libm::exp(theta[0]))]).unwrap()
        };
        let dev = check_logz_gradient(builder, &[0.0], 1e-4).unwrap();
        assert!(dev < 1e-8);

        // random n=4 parser-shaped graphs with fixed pairwise tables
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..10 {
            let scores = zero_scores(4);
            let g = build(4, &scores, false, ScoreSplit::Unscaled);
            let fixed: Vec<f64> = (0..g.arcs().len())
                .map(|_| libm::exp(rng.gen_range(-0.5..0.5)))
                .collect();
            let theta: Vec<f64> = (0..g.arcs().len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let dev = check_logz_gradient(
                |t| parser_mrf_with_unary_theta(&g, &fixed, t),
                &theta,
                1e-4,
            )
            .unwrap();
            assert!(dev <= 1e-6, "finite-difference deviation {dev}");
        }
    }

    #[test]
    fn raising_a_theta_shifts_logz_and_its_own_marginal_upward() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let scores = zero_scores(4);
        let g = build(4, &scores, false, ScoreSplit::Unscaled);
        let theta: Vec<f64> = (0..g.arcs().len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let fixed = vec![1.0; g.arcs().len()];
        let base = brute_force(&parser_mrf_with_unary_theta(&g, &fixed, &theta)).unwrap();
        for r in 0..theta.len() {
            let mut bumped = theta.clone();
            bumped[r] += 1.0;
            let after = brute_force(&parser_mrf_with_unary_theta(&g, &fixed, &bumped)).unwrap();
            assert!(after.log_z > base.log_z);
            assert!(after.marginals[r] > base.marginals[r]);
        }
    }
}
