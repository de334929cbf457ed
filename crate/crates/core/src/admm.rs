//! Consensus ADMM over the slave decomposition.
//!
//! Each iteration solves every slave's box-constrained quadratic in closed
//! form (Jacobi order, reading only iteration-t values), averages shared
//! arcs into the consensus vector `u`, and moves the Lagrange multipliers
//! against the remaining disagreement. The loop stops when the primal and
//! dual residuals both fall under their thresholds.
//!
//! The slave objective `max_z sum_r (theta + lambda + rho u) z - rho/2 z^2`
//! is, up to constants, `-rho/2 ||z - a/rho||^2` with `a` the linear
//! coefficients, so solving a slave is a Euclidean projection of `a/rho`
//! onto its feasible set: a per-coordinate clip for the default box mode,
//! a projection onto the convex hull of the declared admissible binary
//! patterns in pattern mode.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::factor_graph::{slave_score, ArcId, FactorGraph, Slave};
use crate::linalg::sigmoid;

/// `u` entries closer to {0,1} than this count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum AdmmError {
    Config(String),
    /// A slave score was NaN or infinite.
    NonFiniteScore { arc: ArcId },
}

impl fmt::Display for AdmmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdmmError::Config(m) => write!(f, "admm configuration error: {m}"),
            AdmmError::NonFiniteScore { arc } => {
                write!(f, "non-finite score on arc {arc}")
            }
        }
    }
}

/// Admissible binary patterns of one slave; the feasible set is their
/// convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    allowed: Vec<[bool; 2]>,
}

impl PatternSet {
    pub fn new(allowed: Vec<[bool; 2]>) -> Result<Self, AdmmError> {
        if allowed.is_empty() {
            return Err(AdmmError::Config("empty pattern set".into()));
        }
        Ok(PatternSet { allowed })
    }

    pub fn full_box() -> Self {
        PatternSet {
            allowed: vec![[false, false], [true, false], [false, true], [true, true]],
        }
    }

    fn points(&self) -> Vec<[f64; 2]> {
        self.allowed
            .iter()
            .map(|p| [p[0] as u8 as f64, p[1] as u8 as f64])
            .collect()
    }
}

/// Pattern mode: one admissible set per slave family.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternConfig {
    pub grandparent: PatternSet,
    pub sibling: PatternSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Base step; the schedule is `eta_t = eta0 / sqrt(t + 1)`.
    pub eta0: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iters: usize,
    pub rounding_threshold: f64,
    /// `None` is the default box mode.
    pub patterns: Option<PatternConfig>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig::with_rho(1.0)
    }
}

impl AdmmConfig {
    /// Defaults with the given penalty; `eta0` follows `rho`.
    pub fn with_rho(rho: f64) -> Self {
        AdmmConfig {
            rho,
            eta0: rho,
            eps_primal: 1e-4,
            eps_dual: 1e-4,
            max_iters: 300,
            rounding_threshold: 0.5,
            patterns: None,
        }
    }

    pub fn validate(&self) -> Result<(), AdmmError> {
        for (name, v) in [
            ("rho", self.rho),
            ("eta0", self.eta0),
            ("eps_primal", self.eps_primal),
            ("eps_dual", self.eps_dual),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AdmmError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters < 1 {
            return Err(AdmmError::Config("max_iters must be >= 1".into()));
        }
        if !(self.rounding_threshold > 0.0 && self.rounding_threshold < 1.0) {
            return Err(AdmmError::Config(format!(
                "rounding_threshold must lie in (0,1), got {}",
                self.rounding_threshold
            )));
        }
        Ok(())
    }

    fn eta(&self, t: usize) -> f64 {
        self.eta0 / libm::sqrt((t + 1) as f64)
    }
}

/// Mutable iterate of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    /// Per-slave relaxed assignment, aligned with `graph.slaves()`.
    pub z: Vec<[f64; 2]>,
    /// Consensus value per arc, aligned with `graph.arcs()`.
    pub u: Vec<f64>,
    /// Per-slave multipliers, aligned like `z`.
    pub lambda: Vec<[f64; 2]>,
    pub iter: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Warm start: `u` from the logistic of the first-order score, `z` copied
/// from `u`, multipliers zero (which satisfies the dual sum constraint).
pub fn init_state(graph: &FactorGraph) -> AdmmState {
    let u: Vec<f64> = (0..graph.arcs().len())
        .map(|k| sigmoid(graph.arc_score_at(k)))
        .collect();
    let z = graph
        .slaves()
        .iter()
        .map(|s| {
            [
                u[graph.arc_index(s.arcs[0]).expect("slave arc interned")],
                u[graph.arc_index(s.arcs[1]).expect("slave arc interned")],
            ]
        })
        .collect();
    AdmmState {
        z,
        u,
        lambda: vec![[0.0; 2]; graph.slaves().len()],
        iter: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
    }
}

/// Closed-form box-mode slave solve:
/// `z(r) = clip((theta(r) + lambda(r) + rho u(r)) / rho, 0, 1)`.
pub fn solve_slave(
    slave: &Slave,
    lambda_s: &[f64; 2],
    u_prev: &[f64; 2],
    rho: f64,
) -> Result<[f64; 2], AdmmError> {
    solve_slave_in(slave, lambda_s, u_prev, rho, None)
}

/// Slave solve with an optional admissible-pattern hull.
pub fn solve_slave_in(
    slave: &Slave,
    lambda_s: &[f64; 2],
    u_prev: &[f64; 2],
    rho: f64,
    patterns: Option<&PatternSet>,
) -> Result<[f64; 2], AdmmError> {
    if !(rho > 0.0) {
        return Err(AdmmError::Config(format!("rho must be positive, got {rho}")));
    }
    let mut q = [0.0; 2];
    for r in 0..2 {
        let theta = slave.theta[r];
        if !theta.is_finite() {
            return Err(AdmmError::NonFiniteScore { arc: slave.arcs[r] });
        }
        q[r] = (theta + lambda_s[r] + rho * u_prev[r]) / rho;
    }
    Ok(match patterns {
        None => [q[0].clamp(0.0, 1.0), q[1].clamp(0.0, 1.0)],
        Some(set) => project_onto_hull(q, &set.points()),
    })
}

/// Euclidean projection of `q` onto the convex hull of `pts` (0-2 dims of
/// freedom, at most four points). Exact: the projection is either `q`
/// itself, a vertex, or the projection onto one of the pairwise segments.
fn project_onto_hull(q: [f64; 2], pts: &[[f64; 2]]) -> [f64; 2] {
    debug_assert!(!pts.is_empty());
    if point_in_hull(q, pts) {
        return q;
    }
    let mut best = pts[0];
    let mut best_d = dist2(q, best);
    for (i, &a) in pts.iter().enumerate() {
        let d = dist2(q, a);
        if d < best_d {
            best = a;
            best_d = d;
        }
        for &b in &pts[i + 1..] {
            let p = project_onto_segment(q, a, b);
            let d = dist2(q, p);
            if d < best_d {
                best = p;
                best_d = d;
            }
        }
    }
    best
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn project_onto_segment(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return a;
    }
    let t = (((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

/// Is `q` a convex combination of `pts`? Exact for points drawn from the
/// unit-square corners: check `q` against every half-plane spanned by a
/// point pair that has all remaining points on one side.
fn point_in_hull(q: [f64; 2], pts: &[[f64; 2]]) -> bool {
    const EPS: f64 = 1e-12;
    if pts.len() == 1 {
        return dist2(q, pts[0]) <= EPS;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| -> f64 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    if pts.len() == 2 || pts.iter().all(|&p| cross(pts[0], pts[1], p).abs() <= EPS) {
        // degenerate hull: a segment
        let p = project_onto_segment(q, pts[0], *pts.last().expect("nonempty"));
        let far = pts
            .iter()
            .map(|&a| project_onto_segment(q, pts[0], a))
            .fold(p, |acc, c| if dist2(q, c) < dist2(q, acc) { c } else { acc });
        return dist2(q, far) <= EPS;
    }
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            let side: Vec<f64> = pts
                .iter()
                .map(|&p| cross(a, b, p))
                .filter(|c| c.abs() > EPS)
                .collect();
            if side.is_empty() {
                continue;
            }
            let all_pos = side.iter().all(|&c| c > 0.0);
            let all_neg = side.iter().all(|&c| c < 0.0);
            let cq = cross(a, b, q);
            // (a,b) is a hull edge; q must be on the inhabited side
            if all_pos && cq < -EPS {
                return false;
            }
            if all_neg && cq > EPS {
                return false;
            }
        }
    }
    // inside every edge half-plane; also require the box bound
    (-EPS..=1.0 + EPS).contains(&q[0]) && (-EPS..=1.0 + EPS).contains(&q[1])
}

/// Consensus update: per-arc average of the covering slaves' assignments.
pub fn update_u(graph: &FactorGraph, z: &[[f64; 2]]) -> Vec<f64> {
    let mut sums = vec![0.0; graph.arcs().len()];
    for (s, slave) in graph.slaves().iter().enumerate() {
        for r in 0..2 {
            sums[graph.arc_index(slave.arcs[r]).expect("interned")] += z[s][r];
        }
    }
    sums.iter()
        .enumerate()
        .map(|(k, &sum)| sum / graph.delta_at(k) as f64)
        .collect()
}

/// Multiplier update `lambda -= eta_t (z - u)`. Because `u` is the average
/// of the covering `z`, the per-arc multiplier sum stays exactly zero.
pub fn update_lambda(
    graph: &FactorGraph,
    lambda: &mut [[f64; 2]],
    z: &[[f64; 2]],
    u: &[f64],
    eta_t: f64,
) {
    for (s, slave) in graph.slaves().iter().enumerate() {
        for r in 0..2 {
            let k = graph.arc_index(slave.arcs[r]).expect("interned");
            lambda[s][r] -= eta_t * (z[s][r] - u[k]);
        }
    }
}

/// Root-mean-square residuals over the slot set: primal is the z-vs-u
/// disagreement, dual the rho-scaled delta-weighted consensus drift.
pub fn residuals(
    graph: &FactorGraph,
    z: &[[f64; 2]],
    u_curr: &[f64],
    u_prev: &[f64],
    rho: f64,
) -> (f64, f64) {
    let slots = graph.slot_count();
    if slots == 0 {
        return (0.0, 0.0);
    }
    let norm = libm::sqrt(slots as f64);
    let mut primal2 = 0.0;
    for (s, slave) in graph.slaves().iter().enumerate() {
        for r in 0..2 {
            let k = graph.arc_index(slave.arcs[r]).expect("interned");
            let d = z[s][r] - u_curr[k];
            primal2 += d * d;
        }
    }
    let mut dual2 = 0.0;
    for k in 0..u_curr.len() {
        let d = u_curr[k] - u_prev[k];
        dual2 += graph.delta_at(k) as f64 * d * d;
    }
    (
        libm::sqrt(primal2) / norm,
        rho * libm::sqrt(dual2) / norm,
    )
}

/// Per-arc sums of the multipliers; all zero when dual-feasible.
pub fn lambda_sums(graph: &FactorGraph, lambda: &[[f64; 2]]) -> Vec<f64> {
    let mut sums = vec![0.0; graph.arcs().len()];
    for (s, slave) in graph.slaves().iter().enumerate() {
        for r in 0..2 {
            sums[graph.arc_index(slave.arcs[r]).expect("interned")] += lambda[s][r];
        }
    }
    sums
}

/// Outcome of one MAP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    /// Arc list, aligned with `u_relaxed`/`u_rounded`.
    pub arcs: Vec<ArcId>,
    pub u_relaxed: Vec<f64>,
    pub u_rounded: Vec<bool>,
    /// Every consensus value within `INTEGRALITY_TOL` of {0, 1}.
    pub integral: bool,
    /// `sum_s f_s(z_s)` at the final iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MapResult {
    pub fn consensus(&self) -> impl Iterator<Item = (ArcId, f64)> + '_ {
        self.arcs.iter().copied().zip(self.u_relaxed.iter().copied())
    }

    pub fn u_of(&self, arc: ArcId) -> Option<f64> {
        self.arcs
            .iter()
            .position(|&a| a == arc)
            .map(|k| self.u_relaxed[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

pub fn run(graph: &FactorGraph, config: &AdmmConfig) -> Result<MapResult, AdmmError> {
    run_traced(graph, config, None)
}

/// Full solve; `trace` receives one row per iteration when present.
pub fn run_traced(
    graph: &FactorGraph,
    config: &AdmmConfig,
    mut trace: Option<&mut dyn FnMut(TraceRow)>,
) -> Result<MapResult, AdmmError> {
    config.validate()?;
    if graph.is_empty() {
        return Ok(MapResult {
            arcs: Vec::new(),
            u_relaxed: Vec::new(),
            u_rounded: Vec::new(),
            integral: true,
            objective: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    for slave in graph.slaves() {
        for r in 0..2 {
            if !slave.theta[r].is_finite() {
                return Err(AdmmError::NonFiniteScore { arc: slave.arcs[r] });
            }
        }
    }

    let mut state = init_state(graph);
    let pattern_of = |slave: &Slave| -> Option<&PatternSet> {
        config.patterns.as_ref().map(|p| {
            if slave.kind.is_grandparent() {
                &p.grandparent
            } else {
                &p.sibling
            }
        })
    };
    let mut converged = false;
    for t in 0..config.max_iters {
        // Jacobi slave solves against iteration-t values.
        let mut z_next = vec![[0.0; 2]; graph.slaves().len()];
        for (s, slave) in graph.slaves().iter().enumerate() {
            let u_prev = [
                state.u[graph.arc_index(slave.arcs[0]).expect("interned")],
                state.u[graph.arc_index(slave.arcs[1]).expect("interned")],
            ];
            z_next[s] =
                solve_slave_in(slave, &state.lambda[s], &u_prev, config.rho, pattern_of(slave))?;
        }
        let u_next = update_u(graph, &z_next);
        update_lambda(graph, &mut state.lambda, &z_next, &u_next, config.eta(t));
        let (primal, dual) = residuals(graph, &z_next, &u_next, &state.u, config.rho);
        state.z = z_next;
        state.u = u_next;
        state.iter = t + 1;
        state.primal_residual = primal;
        state.dual_residual = dual;
        if let Some(cb) = trace.as_deref_mut() {
            cb(TraceRow {
                iter: state.iter,
                primal,
                dual,
                objective: objective(graph, &state.z),
            });
        }
        if primal < config.eps_primal && dual < config.eps_dual {
            converged = true;
            break;
        }
    }

    let u_rounded: Vec<bool> = state
        .u
        .iter()
        .map(|&v| v >= config.rounding_threshold)
        .collect();
    let integral = state
        .u
        .iter()
        .all(|&v| v.min(1.0 - v).abs() <= INTEGRALITY_TOL);
    Ok(MapResult {
        arcs: graph.arcs().to_vec(),
        u_relaxed: state.u.clone(),
        u_rounded,
        integral,
        objective: objective(graph, &state.z),
        iterations: state.iter,
        converged,
    })
}

fn objective(graph: &FactorGraph, z: &[[f64; 2]]) -> f64 {
    graph
        .slaves()
        .iter()
        .zip(z)
        .map(|(s, zs)| slave_score(s, zs))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{build, ScoreSplit, SlaveKind};
    use crate::scorer::ArcScoreTable;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn table(n: usize, fill: f64) -> ArcScoreTable {
        let mut s = ArcScoreTable::new(n);
        for head in 0..=n {
            for dep in 1..=n {
                if head != dep {
                    s.set(head, dep, fill);
                }
            }
        }
        s
    }

    fn random_table(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> ArcScoreTable {
        let mut s = ArcScoreTable::new(n);
        for head in 0..=n {
            for dep in 1..=n {
                if head != dep {
                    s.set(head, dep, rng.gen_range(lo..hi));
                }
            }
        }
        s
    }

    fn one_slave(theta: [f64; 2]) -> Slave {
        Slave {
            kind: SlaveKind::GrandparentForward,
            anchor: 1,
            arcs: [ArcId { head: 1, dep: 2 }, ArcId { head: 2, dep: 3 }],
            theta,
        }
    }

    #[test]
    fn box_solve_matches_stationarity() {
        // rho = 1 and coefficient a: maximizing a z - z^2/2 gives z = a,
        // clipped into the box.
        let slave = one_slave([0.3, 0.0]);
        let z = solve_slave(&slave, &[0.0; 2], &[0.0; 2], 1.0).unwrap();
        assert!((z[0] - 0.3).abs() < 1e-12);
        let neg = one_slave([-0.5, 2.0]);
        let z = solve_slave(&neg, &[0.0; 2], &[0.0; 2], 1.0).unwrap();
        assert_eq!(z, [0.0, 1.0]);
    }

    #[test]
    fn box_solve_matches_grid_search_oracle() {
        // The objective separates per coordinate; scan a 1001-point grid.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..200 {
            let theta = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let lambda = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let u = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let rho = rng.gen_range(0.2..3.0);
            let slave = one_slave(theta);
            let z = solve_slave(&slave, &lambda, &u, rho).unwrap();
            for r in 0..2 {
                let a = theta[r] + lambda[r] + rho * u[r];
                let obj = |zz: f64| a * zz - 0.5 * rho * zz * zz;
                let mut best = 0.0;
                for g in 0..=1000 {
                    let zz = g as f64 / 1000.0;
                    if obj(zz) > obj(best) {
                        best = zz;
                    }
                }
                assert!(
                    obj(z[r]) >= obj(best) - 1e-6,
                    "closed form {} loses to grid {best}",
                    z[r]
                );
            }
        }
    }

    #[test]
    fn nonpositive_rho_is_a_config_error() {
        let slave = one_slave([1.0, 1.0]);
        assert!(matches!(
            solve_slave(&slave, &[0.0; 2], &[0.0; 2], 0.0),
            Err(AdmmError::Config(_))
        ));
        assert!(matches!(
            solve_slave(&slave, &[0.0; 2], &[0.0; 2], -1.0),
            Err(AdmmError::Config(_))
        ));
    }

    #[test]
    fn hull_projection_is_exact_on_known_cases() {
        // only (0,0) and (1,1) allowed: feasible set is the diagonal
        let diag = PatternSet::new(vec![[false, false], [true, true]]).unwrap();
        let slave = one_slave([1.0, 0.0]);
        // q = (1, 0): nearest diagonal point is (0.5, 0.5)
        let z = solve_slave_in(&slave, &[0.0; 2], &[0.0; 2], 1.0, Some(&diag)).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);
        // full box behaves like box mode
        let boxset = PatternSet::full_box();
        let z1 = solve_slave_in(&slave, &[0.2, -0.3], &[0.5, 0.5], 1.3, Some(&boxset)).unwrap();
        let z2 = solve_slave(&slave, &[0.2, -0.3], &[0.5, 0.5], 1.3).unwrap();
        assert!((z1[0] - z2[0]).abs() < 1e-12 && (z1[1] - z2[1]).abs() < 1e-12);
        // interior point stays put
        let tri =
            PatternSet::new(vec![[false, false], [true, false], [false, true]]).unwrap();
        let inside = project_onto_hull([0.2, 0.2], &tri.points());
        assert_eq!(inside, [0.2, 0.2]);
        // point outside the triangle projects onto the hypotenuse
        let out = project_onto_hull([1.0, 1.0], &tri.points());
        assert!((out[0] - 0.5).abs() < 1e-12 && (out[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn consensus_update_is_the_average() {
        let scores = table(3, 0.0);
        let g = build(3, &scores, false, ScoreSplit::Unscaled);
        // arc y12 is covered by GPf1 and SBf1 (delta 2)
        let k12 = g.arc_index(ArcId { head: 1, dep: 2 }).unwrap();
        assert_eq!(g.delta_at(k12), 2);
        let mut z = vec![[0.0; 2]; 2];
        for (s, slave) in g.slaves().iter().enumerate() {
            for r in 0..2 {
                if slave.arcs[r] == (ArcId { head: 1, dep: 2 }) {
                    z[s][r] = if s == 0 { 0.4 } else { 0.8 };
                }
            }
        }
        let u = update_u(&g, &z);
        assert!((u[k12] - 0.6).abs() < 1e-12);
        // delta = 1 arcs just copy their single z
        let k23 = g.arc_index(ArcId { head: 2, dep: 3 }).unwrap();
        assert_eq!(u[k23], 0.0);
        // consensus fixed point
        let ones = vec![[1.0; 2]; 2];
        assert!(update_u(&g, &ones).iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lambda_update_matches_hand_computation_and_preserves_sums() {
        let scores = table(3, 0.0);
        let g = build(3, &scores, false, ScoreSplit::Unscaled);
        let z = vec![[0.8, 0.8], [0.8, 0.8]];
        let u = update_u(&g, &z); // all 0.8 -> z = u, lambda unchanged
        let mut lambda = vec![[0.1, 0.1]; 2];
        update_lambda(&g, &mut lambda, &z, &u, 0.5);
        assert!(lambda.iter().flatten().all(|&l| (l - 0.1).abs() < 1e-12));

        // disagreement case: z = 0.8 vs u = 0.6 with eta 0.5 moves 0.1 down
        let mut z2 = z.clone();
        z2[0][0] = 0.4; // make u(y12) = 0.6 while slave 1's copy stays 0.8
        let u2 = update_u(&g, &z2);
        let mut lambda2 = vec![[0.1, 0.1]; 2];
        update_lambda(&g, &mut lambda2, &z2, &u2, 0.5);
        assert!((lambda2[1][0] - 0.0).abs() < 1e-12);
        let sums = lambda_sums(&g, &lambda2);
        // y12 sum started at 0.2 and stays 0.2 (update shifts are zero-sum);
        // starting from zero it would remain zero.
        assert!((sums[g.arc_index(ArcId { head: 1, dep: 2 }).unwrap()] - 0.2).abs() < 1e-12);
        let mut from_zero = vec![[0.0, 0.0]; 2];
        update_lambda(&g, &mut from_zero, &z2, &u2, 0.5);
        for s in lambda_sums(&g, &from_zero) {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_are_zero_at_consensus() {
        let scores = table(4, 0.0);
        let g = build(4, &scores, false, ScoreSplit::Unscaled);
        let z = vec![[0.7; 2]; g.slaves().len()];
        let u = update_u(&g, &z);
        let (p, d) = residuals(&g, &z, &u, &u, 1.0);
        assert!(p.abs() < 1e-15 && d.abs() < 1e-15);
    }

    #[test]
    fn residual_formulas_match_hand_computation() {
        let scores = table(3, 0.0);
        let g = build(3, &scores, false, ScoreSplit::Unscaled);
        let slots = g.slot_count() as f64; // 4
        let mut z = vec![[0.0; 2]; 2];
        z[0][0] = 1.0; // single disagreeing slot against u = 0
        let u0 = vec![0.0; 3];
        let (p, _) = residuals(&g, &z, &u0, &u0, 1.0);
        assert!((p - 1.0 / libm::sqrt(slots)).abs() < 1e-12);

        // dual: shift u by 0.1 on one delta=1 arc
        let mut u1 = u0.clone();
        let k23 = g.arc_index(ArcId { head: 2, dep: 3 }).unwrap();
        u1[k23] = 0.1;
        let zz = vec![[0.0; 2]; 2];
        let (_, d) = residuals(&g, &zz, &u1, &u0, 1.0);
        assert!((d - 0.1 / libm::sqrt(slots)).abs() < 1e-12);
        // rho scales the dual residual
        let (_, d2) = residuals(&g, &zz, &u1, &u0, 2.0);
        assert!((d2 - 2.0 * d).abs() < 1e-12);
    }

    #[test]
    fn strongly_positive_scores_converge_to_all_ones() {
        let scores = table(3, 5.0);
        let g = build(3, &scores, false, ScoreSplit::Unscaled);
        let res = run(&g, &AdmmConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.integral);
        assert!(res.u_relaxed.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        assert!(res.u_rounded.iter().all(|&b| b));
        // objective = sum over slaves of theta . (1,1) = 6 slots * 5
        assert!((res.objective - 5.0 * g.slot_count() as f64).abs() < 1e-9);
    }

    #[test]
    fn strongly_negative_scores_converge_to_all_zeros() {
        let scores = table(3, -5.0);
        let g = build(3, &scores, false, ScoreSplit::Unscaled);
        let res = run(&g, &AdmmConfig::default()).unwrap();
        assert!(res.converged && res.integral);
        assert!(res.u_relaxed.iter().all(|&v| v.abs() < 1e-9));
        assert!(res.u_rounded.iter().all(|&b| !b));
    }

    #[test]
    fn empty_graph_returns_trivially() {
        let scores = table(2, 1.0);
        let g = build(2, &scores, false, ScoreSplit::Unscaled);
        let res = run(&g, &AdmmConfig::default()).unwrap();
        assert!(res.converged && res.integral);
        assert_eq!(res.iterations, 0);
        assert!(res.u_relaxed.is_empty());
    }

    #[test]
    fn non_finite_scores_name_the_arc() {
        let mut scores = table(3, 0.0);
        scores.set(1, 2, f64::NAN);
        let g = build(3, &scores, false, ScoreSplit::Unscaled);
        match run(&g, &AdmmConfig::default()) {
            Err(AdmmError::NonFiniteScore { arc }) => {
                assert_eq!(arc, ArcId { head: 1, dep: 2 });
            }
            other => panic!("expected NonFiniteScore, got {other:?}"),
        }
    }

    #[test]
    fn iterates_stay_in_the_unit_box_and_lambda_sums_vanish() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(3..7);
            let scores = random_table(n, -2.0, 2.0, &mut rng);
            for patterns in [
                None,
                Some(PatternConfig {
                    grandparent: PatternSet::new(vec![[false, false], [true, true], [true, false]])
                        .unwrap(),
                    sibling: PatternSet::full_box(),
                }),
            ] {
                let g = build(n, &scores, false, ScoreSplit::Unscaled);
                let config = AdmmConfig {
                    patterns,
                    ..AdmmConfig::default()
                };
                config.validate().unwrap();
                // re-run the loop manually to watch every iterate
                let mut state = init_state(&g);
                for t in 0..50 {
                    let mut z_next = vec![[0.0; 2]; g.slaves().len()];
                    for (s, slave) in g.slaves().iter().enumerate() {
                        let u_prev = [
                            state.u[g.arc_index(slave.arcs[0]).unwrap()],
                            state.u[g.arc_index(slave.arcs[1]).unwrap()],
                        ];
                        let pat = config.patterns.as_ref().map(|p| {
                            if slave.kind.is_grandparent() {
                                &p.grandparent
                            } else {
                                &p.sibling
                            }
                        });
                        z_next[s] =
                            solve_slave_in(slave, &state.lambda[s], &u_prev, config.rho, pat)
                                .unwrap();
                    }
                    let u_next = update_u(&g, &z_next);
                    update_lambda(&g, &mut state.lambda, &z_next, &u_next, config.eta(t));
                    for zs in &z_next {
                        for &v in zs {
                            assert!((-1e-12..=1.0 + 1e-12).contains(&v));
                        }
                    }
                    for &v in &u_next {
                        assert!((-1e-12..=1.0 + 1e-12).contains(&v));
                    }
                    for s in lambda_sums(&g, &state.lambda) {
                        assert!(s.abs() < 1e-9, "lambda sum {s} escaped zero");
                    }
                    state.z = z_next;
                    state.u = u_next;
                }
            }
        }
    }

    #[test]
    fn identical_inputs_produce_identical_iterate_sequences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let scores = random_table(5, -2.0, 2.0, &mut rng);
        let g = build(5, &scores, false, ScoreSplit::Unscaled);
        let config = AdmmConfig::default();
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        let r1 = run_traced(&g, &config, Some(&mut |row| t1.push(row))).unwrap();
        let r2 = run_traced(&g, &config, Some(&mut |row| t2.push(row))).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(t1, t2);
        assert!(!t1.is_empty());
    }
}
