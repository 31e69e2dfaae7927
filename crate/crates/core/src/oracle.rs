//! Exact equilibria for linear link costs by support enumeration.
//!
//! With `t(f) = K f + b`, path costs are affine in the path flows:
//! `C^H = M x + Δᵀb` and `C^A = 2 M x + Δᵀb` with `M = ΔᵀKΔ`. Once the sets
//! of paths used by each class are guessed, the equilibrium conditions are a
//! linear system. Candidates are tried by increasing support size and the
//! first one whose solution passes every equilibrium condition wins.
//!
//! A brute-force grid search over the VI gap is provided as a coarse,
//! cost-form-agnostic cross-check for nonlinear instances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs;
use crate::error::{Error, Result};
use crate::netmodel::{columns_independent, IncidenceMatrix, Network, DEFAULT_RANK_TOLERANCE};
use crate::solver::{self, FlowPattern};

/// Largest path count accepted by support enumeration.
pub const MAX_ENUMERATION_PATHS: usize = 20;
/// Absolute slack on cost equalities and inequalities.
pub const COST_SLACK: f64 = 1e-9;
/// Negative flows above this are clamped to zero.
pub const FLOW_CLAMP: f64 = 1e-12;
/// Largest number of grid points evaluated by [`grid_gap_oracle`].
pub const GRID_BUDGET: u128 = 4_000_000;

/// Paths used by the human and the autonomous class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPair {
    pub v_h: Vec<usize>,
    pub v_a: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactEquilibrium {
    pub alpha: f64,
    /// Aggregated path flow, summing to one.
    pub x_agg: Vec<f64>,
    pub lambda_h: f64,
    pub lambda_a: f64,
    pub support: SupportPair,
    /// One feasible class decomposition of `x_agg`.
    pub witness_h: Vec<f64>,
    pub witness_a: Vec<f64>,
    /// Candidates examined before acceptance.
    pub candidates_tried: usize,
    /// Candidates skipped because their linear system was inconsistent.
    pub degenerate_skipped: usize,
}

impl ExactEquilibrium {
    pub fn flow(&self, delta: &IncidenceMatrix) -> Result<FlowPattern> {
        FlowPattern::new(delta, self.alpha, self.witness_h.clone(), self.witness_a.clone())
    }

    pub fn link_flows(&self, delta: &IncidenceMatrix) -> Vec<f64> {
        delta.link_flows(&self.x_agg)
    }
}

/// Cached linear-cost algebra of an instance.
struct LinearModel {
    p: usize,
    m: DMatrix<f64>,
    delta_t_b: Vec<f64>,
}

impl LinearModel {
    fn new(network: &Network, delta: &IncidenceMatrix) -> Result<Self> {
        if !network.is_linear() {
            return Err(Error::RequiresLinearCosts);
        }
        if delta.num_links() != network.links().len() {
            return Err(Error::DimensionMismatch { expected: network.links().len(), actual: delta.num_links() });
        }
        let p = delta.num_paths();
        if p > MAX_ENUMERATION_PATHS {
            return Err(Error::TooManyPaths { paths: p, limit: MAX_ENUMERATION_PATHS });
        }
        let d = delta.matrix();
        let k = DMatrix::from_diagonal(&DVector::from_iterator(d.nrows(), network.links().iter().map(|l| l.cost.k)));
        let m = d.transpose() * k * d;
        let b: Vec<f64> = network.links().iter().map(|l| l.cost.b).collect();
        Ok(LinearModel { p, m, delta_t_b: delta.path_sums(&b) })
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { break };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Minimum-norm least-squares solution, or `None` when the system is
/// inconsistent.
fn least_squares(a: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = 1e-12 * smax.max(1.0);
    let mut z = svd.solve(&rhs, eps).ok()?;
    // iterative refinement; the SVD solve alone loses a few digits
    for _ in 0..2 {
        let r = &rhs - &a * &z;
        z += svd.solve(&r, eps).ok()?;
    }
    let resid = (&a * &z - &rhs).norm();
    (resid <= 1e-9 * (1.0 + rhs.norm())).then_some(z)
}

/// Checks every equilibrium condition for an aggregated path flow supported
/// on `v_h ∪ v_a` and builds a class split.
fn verify(
    network: &Network,
    delta: &IncidenceMatrix,
    alpha: f64,
    mut x: Vec<f64>,
    support: &SupportPair,
) -> Option<ExactEquilibrium> {
    for v in &mut x {
        if *v < -FLOW_CLAMP || !v.is_finite() {
            return None;
        }
        *v = v.max(0.0);
    }
    let f = delta.link_flows(&x);
    let pc = costs::path_costs(network, delta, &f).ok()?;
    let level = |c: &[f64], set: &[usize]| -> Option<f64> {
        if set.is_empty() {
            return Some(c.iter().copied().fold(f64::INFINITY, f64::min));
        }
        let lam = set.iter().map(|&p| c[p]).sum::<f64>() / set.len() as f64;
        let on = set.iter().all(|&p| (c[p] - lam).abs() <= COST_SLACK);
        let off = (0..c.len()).all(|p| set.contains(&p) || c[p] >= lam - COST_SLACK);
        (on && off).then_some(lam)
    };
    let lambda_h = level(&pc.human, &support.v_h)?;
    let lambda_a = level(&pc.auto, &support.v_a)?;

    let p = x.len();
    let mut wa = vec![0.0; p];
    let mut remaining = alpha;
    for &q in &support.v_a {
        if !support.v_h.contains(&q) {
            wa[q] = x[q];
            remaining -= x[q];
        }
    }
    if remaining < -FLOW_CLAMP {
        return None;
    }
    for &q in &support.v_a {
        if support.v_h.contains(&q) && remaining > 0.0 {
            let take = remaining.min(x[q]);
            wa[q] = take;
            remaining -= take;
        }
    }
    if remaining > FLOW_CLAMP {
        return None;
    }
    let wh: Vec<f64> = x.iter().zip(&wa).map(|(t, a)| (t - a).max(0.0)).collect();
    if wh.iter().enumerate().any(|(q, &v)| v > FLOW_CLAMP && !support.v_h.contains(&q)) {
        return None;
    }
    Some(ExactEquilibrium {
        alpha,
        x_agg: x,
        lambda_h,
        lambda_a,
        support: support.clone(),
        witness_h: wh,
        witness_a: wa,
        candidates_tried: 0,
        degenerate_skipped: 0,
    })
}

/// Single-class (all-human) equilibrium.
///
/// For each support `𝒱` with independent columns the closed form
/// `λ = (1 + 1ᵀM_𝒱⁻¹Δ_𝒱ᵀb)/(1ᵀM_𝒱⁻¹1)`, `x_𝒱 = M_𝒱⁻¹(λ1 − Δ_𝒱ᵀb)` is used;
/// dependent supports fall back to least squares.
pub fn exact_baseline(network: &Network, delta: &IncidenceMatrix) -> Result<ExactEquilibrium> {
    let lm = LinearModel::new(network, delta)?;
    let mut tried = 0;
    let mut skipped = 0;
    for size in 1..=lm.p {
        for v in combinations(lm.p, size) {
            tried += 1;
            let dv = delta.restrict(&v);
            let mv = DMatrix::from_fn(size, size, |i, j| lm.m[(v[i], v[j])]);
            let bv = DVector::from_iterator(size, v.iter().map(|&p| lm.delta_t_b[p]));
            let ones = DVector::from_element(size, 1.0);
            let solved = if columns_independent(&dv, DEFAULT_RANK_TOLERANCE)? {
                mv.clone().try_inverse().map(|inv| {
                    let lam = (1.0 + ones.dot(&(&inv * &bv))) / ones.dot(&(&inv * &ones));
                    (&inv * (&ones * lam - &bv), lam)
                })
            } else {
                // [M_𝒱  −1; 1ᵀ 0] [x; λ] = [−Δ_𝒱ᵀb; 1]
                let mut a = DMatrix::zeros(size + 1, size + 1);
                a.view_mut((0, 0), (size, size)).copy_from(&mv);
                for i in 0..size {
                    a[(i, size)] = -1.0;
                    a[(size, i)] = 1.0;
                }
                let mut rhs = DVector::zeros(size + 1);
                rhs.rows_mut(0, size).copy_from(&(-&bv));
                rhs[size] = 1.0;
                least_squares(a, rhs).map(|z| (z.rows(0, size).into_owned(), z[size]))
            };
            let Some((xv, _)) = solved else {
                skipped += 1;
                continue;
            };
            let mut x = vec![0.0; lm.p];
            for (i, &p) in v.iter().enumerate() {
                x[p] = xv[i];
            }
            let support = SupportPair { v_h: v.clone(), v_a: Vec::new() };
            if let Some(mut eq) = verify(network, delta, 0.0, x, &support) {
                eq.candidates_tried = tried;
                eq.degenerate_skipped = skipped;
                return Ok(eq);
            }
        }
    }
    Err(Error::NoValidSupport(format!("{tried} baseline supports tried, {skipped} degenerate")))
}

/// Two-class equilibrium at autonomy fraction `alpha`.
///
/// Unknowns are the class path flows on their supports and the two cost
/// levels; equations are equal human costs on `v_h`, equal autonomous costs
/// on `v_a` and the two class demands. Shared paths make the system
/// rank-deficient, so it is solved in the minimum-norm least-squares sense
/// and the aggregated flow is verified afterwards.
pub fn exact_mixed(network: &Network, delta: &IncidenceMatrix, alpha: f64) -> Result<ExactEquilibrium> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return exact_baseline(network, delta);
    }
    let lm = LinearModel::new(network, delta)?;
    let p = lm.p;
    let mut subsets: Vec<Vec<usize>> = (1..=p).flat_map(|k| combinations(p, k)).collect();
    subsets.sort();
    let human_sets: Vec<Vec<usize>> = if alpha < 1.0 { subsets.clone() } else { vec![Vec::new()] };

    let mut tried = 0;
    let mut skipped = 0;
    for total in 1..=2 * p {
        for v_h in &human_sets {
            if v_h.len() >= total {
                continue;
            }
            let need = total - v_h.len();
            if need > p {
                continue;
            }
            for v_a in subsets.iter().filter(|s| s.len() == need) {
                tried += 1;
                let Some(x) = solve_candidate(&lm, alpha, v_h, v_a) else {
                    skipped += 1;
                    continue;
                };
                let support = SupportPair { v_h: v_h.clone(), v_a: v_a.clone() };
                if let Some(mut eq) = verify(network, delta, alpha, x, &support) {
                    eq.candidates_tried = tried;
                    eq.degenerate_skipped = skipped;
                    return Ok(eq);
                }
            }
        }
    }
    Err(Error::NoValidSupport(format!("{tried} support pairs tried, {skipped} degenerate")))
}

fn solve_candidate(lm: &LinearModel, alpha: f64, v_h: &[usize], v_a: &[usize]) -> Option<Vec<f64>> {
    let (nh, na) = (v_h.len(), v_a.len());
    let has_h = nh > 0;
    let cols = nh + na + usize::from(has_h) + 1;
    let rows = nh + na + usize::from(has_h) + 1;
    let lam_h = nh + na;
    let lam_a = lam_h + usize::from(has_h);
    let mut a = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    let vars: Vec<usize> = v_h.iter().chain(v_a).copied().collect();
    for (r, &p) in v_h.iter().enumerate() {
        for (c, &q) in vars.iter().enumerate() {
            a[(r, c)] = lm.m[(p, q)];
        }
        a[(r, lam_h)] = -1.0;
        rhs[r] = -lm.delta_t_b[p];
    }
    for (i, &p) in v_a.iter().enumerate() {
        let r = nh + i;
        for (c, &q) in vars.iter().enumerate() {
            a[(r, c)] = 2.0 * lm.m[(p, q)];
        }
        a[(r, lam_a)] = -1.0;
        rhs[r] = -lm.delta_t_b[p];
    }
    let mut r = nh + na;
    if has_h {
        for c in 0..nh {
            a[(r, c)] = 1.0;
        }
        rhs[r] = 1.0 - alpha;
        r += 1;
    }
    for c in nh..nh + na {
        a[(r, c)] = 1.0;
    }
    rhs[r] = alpha;
    let z = least_squares(a, rhs)?;
    let mut x = vec![0.0; lm.p];
    for (c, &q) in vars.iter().enumerate() {
        x[q] += z[c];
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOracleResult {
    pub flow: FlowPattern,
    pub gap: f64,
    pub points_evaluated: u128,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// All ways to split `steps` units over `parts` paths, lexicographic.
fn compositions(steps: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(remaining: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(remaining);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=remaining).rev() {
            cur.push(v);
            rec(remaining - v, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Exhaustive search of the VI gap over a simplex grid of class path flows.
/// Coarse by construction; ties keep the first point found.
pub fn grid_gap_oracle(
    network: &Network,
    delta: &IncidenceMatrix,
    alpha: f64,
    grid_steps: usize,
) -> Result<GridOracleResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if grid_steps == 0 || grid_steps > 200 {
        return Err(Error::InvalidConfig(format!("grid_steps must lie in 1..=200, got {grid_steps}")));
    }
    let p = delta.num_paths();
    let per_class = binomial((grid_steps + p - 1) as u128, (p - 1) as u128);
    let count = |demand: f64| if demand > 0.0 { per_class } else { 1 };
    let points = count(1.0 - alpha) * count(alpha);
    if points > GRID_BUDGET {
        return Err(Error::GridBudgetExceeded { points, budget: GRID_BUDGET });
    }
    let grid = |demand: f64| -> Vec<Vec<f64>> {
        if demand > 0.0 {
            compositions(grid_steps, p)
                .into_iter()
                .map(|c| c.into_iter().map(|u| demand * u as f64 / grid_steps as f64).collect())
                .collect()
        } else {
            vec![vec![0.0; p]]
        }
    };
    let (hs, as_) = (grid(1.0 - alpha), grid(alpha));
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, xh) in hs.iter().enumerate() {
        for (j, xa) in as_.iter().enumerate() {
            let flow = FlowPattern::new(delta, alpha, xh.clone(), xa.clone())?;
            let gap = solver::vi_gap(network, delta, &flow)?;
            if best.is_none_or(|(g, _, _)| gap < g) {
                best = Some((gap, i, j));
            }
        }
    }
    let (gap, i, j) = best.expect("grid is nonempty");
    Ok(GridOracleResult {
        flow: FlowPattern::new(delta, alpha, hs[i].clone(), as_[j].clone())?,
        gap,
        points_evaluated: points,
    })
}
