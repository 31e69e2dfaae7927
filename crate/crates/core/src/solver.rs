//! Mixed-autonomy equilibrium by Gauss–Seidel relaxation over the two
//! classes.
//!
//! Each relaxation sweep fixes the autonomous flow and computes the human
//! Wardrop response (minimizing the Beckmann potential), then fixes the human
//! flow and computes the autonomous response (minimizing the social cost).
//! Both subproblems are solved in path space by pairwise Frank–Wolfe with an
//! exact line search. The combined variational-inequality gap is the
//! convergence certificate; relaxation convergence is not guaranteed in
//! general, so a result that stalls is returned with `converged = false`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{self, CostParams, PathCosts};
use crate::error::{Error, Result};
use crate::netmodel::{IncidenceMatrix, Network};

/// Demand and nonnegativity slack accepted by [`vi_gap`].
pub const FEASIBILITY_TOL: f64 = 1e-9;
const LINE_SEARCH_ITERS: usize = 80;

/// Initial path flows for the relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Both classes all-or-nothing on free-flow path costs.
    FreeFlow,
    AllOnFirstPath,
    Uniform,
    Given {
        x_h: Vec<f64>,
        x_a: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    /// Outer stopping rule: combined VI gap relative to the social cost.
    pub outer_tol: f64,
    /// Inner stopping rule: Frank–Wolfe duality gap relative to the class cost.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub init: Init,
}

impl SolverConfig {
    pub fn new(alpha: f64) -> Self {
        SolverConfig {
            alpha,
            outer_tol: 1e-8,
            inner_tol: 1e-10,
            max_outer: 1_000,
            max_inner: 20_000,
            init: Init::FreeFlow,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        SolverConfig { alpha, ..self.clone() }
    }

    /// Sets the outer tolerance and keeps the inner one at least 100 times
    /// tighter; coarser inner solves stall the relaxation above `tol`.
    pub fn with_tolerance(&self, tol: f64) -> Self {
        SolverConfig { outer_tol: tol, inner_tol: self.inner_tol.min(tol * 1e-2), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Path and link flows of both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPattern {
    pub alpha: f64,
    pub x_h: Vec<f64>,
    pub x_a: Vec<f64>,
    pub f_h: Vec<f64>,
    pub f_a: Vec<f64>,
    pub f: Vec<f64>,
}

impl FlowPattern {
    pub fn new(delta: &IncidenceMatrix, alpha: f64, x_h: Vec<f64>, x_a: Vec<f64>) -> Result<Self> {
        let p = delta.num_paths();
        for v in [&x_h, &x_a] {
            if v.len() != p {
                return Err(Error::DimensionMismatch { expected: p, actual: v.len() });
            }
        }
        let f_h = delta.link_flows(&x_h);
        let f_a = delta.link_flows(&x_a);
        let f = f_h.iter().zip(&f_a).map(|(h, a)| h + a).collect();
        Ok(FlowPattern { alpha, x_h, x_a, f_h, f_a, f })
    }

    /// Aggregated path flow `x^H + x^A`.
    pub fn x(&self) -> Vec<f64> {
        self.x_h.iter().zip(&self.x_a).map(|(h, a)| h + a).collect()
    }

    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        let sh: f64 = self.x_h.iter().sum();
        let sa: f64 = self.x_a.iter().sum();
        if (sh - (1.0 - self.alpha)).abs() > tol || (sa - self.alpha).abs() > tol {
            return Err(Error::InfeasibleFlow(format!(
                "class demands are {sh} and {sa}, expected {} and {}",
                1.0 - self.alpha,
                self.alpha
            )));
        }
        if let Some(v) = self.x_h.iter().chain(&self.x_a).find(|&&v| v < -tol || !v.is_finite()) {
            return Err(Error::InfeasibleFlow(format!("negative or non-finite path flow {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub flow: FlowPattern,
    /// Minimum human path cost.
    pub lambda_h: f64,
    /// Minimum autonomous (marginal social) path cost.
    pub lambda_a: f64,
    pub social: f64,
    /// Absolute combined VI gap.
    pub gap: f64,
    /// `gap / social`; compared with `outer_tol`.
    pub relative_gap: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Links do not share one exponent; aggregated-flow uniqueness is not
    /// guaranteed for such networks.
    pub mixed_exponents: bool,
}

/// Which class a Frank–Wolfe subproblem routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Human,
    Autonomous,
}

impl Class {
    #[inline]
    fn link_cost(self, c: &CostParams, f: f64) -> f64 {
        match self {
            Class::Human => c.travel_time(f),
            Class::Autonomous => c.marginal_cost(f),
        }
    }

    /// Slope of the link cost for linear links.
    #[inline]
    fn linear_slope(self, c: &CostParams) -> f64 {
        match self {
            Class::Human => c.k,
            Class::Autonomous => 2.0 * c.k,
        }
    }
}

/// Outcome of one Frank–Wolfe subproblem solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub x: Vec<f64>,
    /// Duality gap `Σ_p x_p (C_p − min C)`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Places all demand on the cheapest path under `Δᵀ link_costs`; ties go to
/// the lowest path index.
pub fn all_or_nothing(delta: &IncidenceMatrix, link_costs: &[f64], demand: f64) -> Vec<f64> {
    let pc = delta.path_sums(link_costs);
    let mut x = vec![0.0; pc.len()];
    if let Some(s) = argmin(&pc) {
        x[s] = demand;
    }
    x
}

fn argmin(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in v.iter().enumerate() {
        if best.is_none_or(|b| c < v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Human Wardrop response to a fixed autonomous link flow, starting from the
/// all-or-nothing assignment.
pub fn frank_wolfe_human(
    network: &Network,
    delta: &IncidenceMatrix,
    f_a_fixed: &[f64],
    demand: f64,
    cfg: &SolverConfig,
) -> Result<InnerResult> {
    frank_wolfe(Class::Human, network, delta, f_a_fixed, demand, None, cfg.inner_tol, cfg.max_inner)
}

/// Autonomous response: minimizes the social cost over the autonomous flow
/// with the human link flow held fixed.
pub fn frank_wolfe_auto(
    network: &Network,
    delta: &IncidenceMatrix,
    f_h_fixed: &[f64],
    demand: f64,
    cfg: &SolverConfig,
) -> Result<InnerResult> {
    frank_wolfe(Class::Autonomous, network, delta, f_h_fixed, demand, None, cfg.inner_tol, cfg.max_inner)
}

/// Pairwise Frank–Wolfe on the demand-scaled simplex of path flows.
///
/// Each step moves flow from the costliest used path to the all-or-nothing
/// path with an exact line search, which keeps every iterate feasible and
/// converges linearly on these polyhedral problems. `warm` must be feasible
/// for `demand` when given.
#[allow(clippy::too_many_arguments)]
pub fn frank_wolfe(
    class: Class,
    network: &Network,
    delta: &IncidenceMatrix,
    fixed: &[f64],
    demand: f64,
    warm: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<InnerResult> {
    let links = network.links();
    if fixed.len() != links.len() {
        return Err(Error::DimensionMismatch { expected: links.len(), actual: fixed.len() });
    }
    if delta.num_links() != links.len() {
        return Err(Error::DimensionMismatch { expected: links.len(), actual: delta.num_links() });
    }
    if !(demand >= 0.0 && demand.is_finite()) {
        return Err(Error::InvalidConfig(format!("demand must be nonnegative, got {demand}")));
    }
    let np = delta.num_paths();
    if demand == 0.0 {
        return Ok(InnerResult { x: vec![0.0; np], gap: 0.0, iterations: 0, converged: true });
    }
    let class_costs = |y: &[f64]| -> Vec<f64> {
        links.iter().enumerate().map(|(a, l)| class.link_cost(&l.cost, fixed[a] + y[a])).collect()
    };
    let mut x = match warm {
        Some(w) => {
            if w.len() != np {
                return Err(Error::DimensionMismatch { expected: np, actual: w.len() });
            }
            w.to_vec()
        }
        None => {
            let zero = vec![0.0; links.len()];
            all_or_nothing(delta, &class_costs(&zero), demand)
        }
    };
    let linear = links.iter().all(|l| l.cost.is_linear());

    let mut gap = f64::INFINITY;
    for it in 0..=max_iter {
        let y = delta.link_flows(&x);
        let lc = class_costs(&y);
        let pc = delta.path_sums(&lc);
        let s = argmin(&pc).expect("path set is nonempty");
        let cmin = pc[s];
        gap = x.iter().zip(&pc).map(|(&xp, &cp)| xp * (cp - cmin)).sum::<f64>().max(0.0);
        if gap <= tol * (demand * cmin.abs()).max(f64::MIN_POSITIVE) {
            return Ok(InnerResult { x, gap, iterations: it, converged: true });
        }
        if it == max_iter {
            break;
        }
        let mut v = None;
        for p in 0..np {
            if x[p] > 0.0 && v.is_none_or(|q: usize| pc[p] > pc[q]) {
                v = Some(p);
            }
        }
        let v = v.expect("positive demand implies a used path");
        if pc[v] <= cmin {
            return Ok(InnerResult { x, gap, iterations: it, converged: true });
        }

        // Links on exactly one of the two paths, with direction ±1.
        let mut dir: Vec<(usize, f64)> = Vec::new();
        for &a in delta.path_links(s) {
            if !delta.get(a, v) {
                dir.push((a, 1.0));
            }
        }
        for &a in delta.path_links(v) {
            if !delta.get(a, s) {
                dir.push((a, -1.0));
            }
        }
        let max_step = x[v];
        let slope = |t: f64| -> f64 {
            dir.iter().map(|&(a, d)| d * class.link_cost(&links[a].cost, fixed[a] + y[a] + t * d)).sum()
        };
        let g0 = cmin - pc[v];
        let step = if linear {
            let curvature: f64 = dir.iter().map(|&(a, _)| class.linear_slope(&links[a].cost)).sum();
            if curvature > 0.0 {
                (-g0 / curvature).min(max_step)
            } else {
                max_step
            }
        } else if slope(max_step) <= 0.0 {
            max_step
        } else {
            let (mut lo, mut hi) = (0.0, max_step);
            for _ in 0..LINE_SEARCH_ITERS {
                let mid = 0.5 * (lo + hi);
                if slope(mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * max_step {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        let step = if step.is_finite() && step > 0.0 { step } else { max_step * 2.0 / (it as f64 + 2.0) };
        if step >= max_step {
            x[s] += max_step;
            x[v] = 0.0;
        } else {
            x[s] += step;
            x[v] -= step;
        }
    }
    Ok(InnerResult { x, gap, iterations: max_iter, converged: false })
}

fn initial_flows(network: &Network, delta: &IncidenceMatrix, cfg: &SolverConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let np = delta.num_paths();
    let (dh, da) = (1.0 - cfg.alpha, cfg.alpha);
    Ok(match &cfg.init {
        Init::FreeFlow => {
            let b: Vec<f64> = network.links().iter().map(|l| l.cost.b).collect();
            (all_or_nothing(delta, &b, dh), all_or_nothing(delta, &b, da))
        }
        Init::AllOnFirstPath => {
            let mut h = vec![0.0; np];
            let mut a = vec![0.0; np];
            h[0] = dh;
            a[0] = da;
            (h, a)
        }
        Init::Uniform => (vec![dh / np as f64; np], vec![da / np as f64; np]),
        Init::Given { x_h, x_a } => {
            let fp = FlowPattern::new(delta, cfg.alpha, x_h.clone(), x_a.clone())
                .map_err(|e| Error::InvalidConfig(format!("initial flow: {e}")))?;
            fp.check_feasible(FEASIBILITY_TOL).map_err(|e| Error::InvalidConfig(format!("initial flow: {e}")))?;
            (rescale(x_h, dh), rescale(x_a, da))
        }
    })
}

fn rescale(x: &[f64], demand: f64) -> Vec<f64> {
    let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = x.iter().sum();
    if demand == 0.0 || s == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| v * demand / s).collect()
}

fn check_dims(network: &Network, delta: &IncidenceMatrix) -> Result<()> {
    if delta.num_links() != network.links().len() {
        return Err(Error::DimensionMismatch { expected: network.links().len(), actual: delta.num_links() });
    }
    Ok(())
}

/// Combined VI gap of a flow pattern:
/// `Σ_p x^H_p (C^H_p − min C^H) + Σ_p x^A_p (C^A_p − min C^A)`,
/// which equals `c^H·f^H − (1−α) min C^H + c^A·f^A − α min C^A` on the
/// feasible set.
pub fn vi_gap(network: &Network, delta: &IncidenceMatrix, flow: &FlowPattern) -> Result<f64> {
    check_dims(network, delta)?;
    flow.check_feasible(FEASIBILITY_TOL)?;
    let pc = costs::path_costs(network, delta, &flow.f)?;
    Ok(gap_from_costs(&pc, flow))
}

fn gap_from_costs(pc: &PathCosts, flow: &FlowPattern) -> f64 {
    let (mh, ma) = (pc.min_human(), pc.min_auto());
    let h: f64 = flow.x_h.iter().zip(&pc.human).map(|(x, c)| x.max(0.0) * (c - mh)).sum();
    let a: f64 = flow.x_a.iter().zip(&pc.auto).map(|(x, c)| x.max(0.0) * (c - ma)).sum();
    h + a
}

/// Builds the result record for a flow pattern.
pub fn evaluate(
    network: &Network,
    delta: &IncidenceMatrix,
    flow: FlowPattern,
    iterations: usize,
    inner_iterations: usize,
    converged: bool,
) -> Result<EquilibriumResult> {
    let pc = costs::path_costs(network, delta, &flow.f)?;
    let gap = gap_from_costs(&pc, &flow);
    let social = costs::social_cost(network, &flow.f)?;
    Ok(EquilibriumResult {
        lambda_h: pc.min_human(),
        lambda_a: pc.min_auto(),
        social,
        gap,
        relative_gap: gap / social.max(f64::MIN_POSITIVE),
        iterations,
        inner_iterations,
        converged,
        mixed_exponents: network.common_exponent().is_none(),
        flow,
    })
}

/// Gauss–Seidel relaxation: human response, then autonomous response, until
/// the combined VI gap relative to the social cost drops below `outer_tol`.
pub fn solve_mixed(network: &Network, delta: &IncidenceMatrix, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    cfg.validate()?;
    check_dims(network, delta)?;
    if network.common_exponent().is_none() {
        log::warn!("links use different exponents; aggregated-flow uniqueness is not guaranteed");
    }
    let alpha = cfg.alpha;
    let (mut x_h, mut x_a) = initial_flows(network, delta, cfg)?;
    let mut inner_total = 0;
    let mut last = None;
    for outer in 1..=cfg.max_outer {
        let f_a = delta.link_flows(&x_a);
        let h = frank_wolfe(Class::Human, network, delta, &f_a, 1.0 - alpha, Some(&x_h), cfg.inner_tol, cfg.max_inner)?;
        x_h = h.x;
        let f_h = delta.link_flows(&x_h);
        let a = frank_wolfe(Class::Autonomous, network, delta, &f_h, alpha, Some(&x_a), cfg.inner_tol, cfg.max_inner)?;
        x_a = a.x;
        inner_total += h.iterations + a.iterations;

        let flow = FlowPattern::new(delta, alpha, x_h.clone(), x_a.clone())?;
        let res = evaluate(network, delta, flow, outer, inner_total, false)?;
        log::trace!("outer {outer}: relative gap {:e}", res.relative_gap);
        if res.relative_gap <= cfg.outer_tol {
            return Ok(EquilibriumResult { converged: true, ..res });
        }
        last = Some(res);
    }
    let res = last.expect("max_outer >= 1");
    log::warn!(
        "relaxation stopped after {} sweeps with relative gap {:e} (alpha = {alpha})",
        cfg.max_outer,
        res.relative_gap
    );
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Largest spread of any aggregated link flow across converged runs.
    pub max_f_deviation: f64,
    /// Spread of the social cost across converged runs.
    pub max_s_deviation: f64,
    pub converged_runs: usize,
    /// Runs excluded because they did not converge.
    pub excluded_runs: usize,
}

/// Random feasible path flow: independent uniforms normalized to `demand`.
pub fn random_feasible(rng: &mut impl Rng, paths: usize, demand: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..paths).map(|_| rng.random::<f64>()).collect();
    rescale(&raw, demand)
}

/// Solves from `n_starts` seeded random initializations and reports how far
/// the aggregated link flows and social costs spread.
pub fn multi_start_uniqueness_check(
    network: &Network,
    delta: &IncidenceMatrix,
    cfg: &SolverConfig,
    n_starts: usize,
    seed: u64,
) -> Result<UniquenessReport> {
    if network.common_exponent().is_none() {
        return Err(Error::InvalidConfig("uniqueness check requires a common exponent on all links".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = delta.num_paths();
    let mut results = Vec::with_capacity(n_starts);
    for _ in 0..n_starts {
        let x_h = random_feasible(&mut rng, np, 1.0 - cfg.alpha);
        let x_a = random_feasible(&mut rng, np, cfg.alpha);
        let start = SolverConfig { init: Init::Given { x_h, x_a }, ..cfg.clone() };
        results.push(solve_mixed(network, delta, &start)?);
    }
    let converged: Vec<&EquilibriumResult> = results.iter().filter(|r| r.converged).collect();
    let excluded = results.len() - converged.len();
    if excluded > 0 {
        log::warn!("{excluded} of {n_starts} starts did not converge and were excluded");
    }
    let spread = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    };
    let links = delta.num_links();
    let max_f = (0..links).map(|a| spread(&mut converged.iter().map(|r| r.flow.f[a]))).fold(0.0, f64::max);
    let max_s = spread(&mut converged.iter().map(|r| r.social));
    Ok(UniquenessReport {
        max_f_deviation: max_f,
        max_s_deviation: max_s,
        converged_runs: converged.len(),
        excluded_runs: excluded,
    })
}
