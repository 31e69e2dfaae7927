//! Instance-level tests for whether autonomy helps, hurts or does nothing.
//!
//! * improvement certificate: if some baseline equilibrium puts at least as
//!   much flow on every path as the humans do in the mixed equilibrium, the
//!   mixed social cost is no larger. On path multigraphs such a baseline is
//!   built constructively from the mixed equilibrium.
//! * deterioration test for linear costs: the sign of
//!   `C_q^H(x̃) − λ̃ + γ`, where `q` is the unique cheapest path for the
//!   autonomous class and lies outside the baseline support.
//! * no-effect test: equal free-flow time on every path.
//! * centralized routing of the autonomous class reaches the same social cost
//!   as the decentralized equilibrium.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{self, CostParams};
use crate::error::{Error, Result};
use crate::netmodel::{bundle_decomposition, columns_independent, IncidenceMatrix, Network, DEFAULT_RANK_TOLERANCE};
use crate::oracle::{self, ExactEquilibrium};
use crate::solver::{self, Class, EquilibriumResult, FlowPattern, SolverConfig};

/// Baseline path flows below this are treated as unused.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;
/// Required separation between the two smallest autonomous path costs.
pub const ARGMIN_MARGIN: f64 = 1e-9;
const DOMINANCE_TOL: f64 = 1e-10;
const NO_EFFECT_TOL: f64 = 1e-10;
const HINT_RESOLUTION: f64 = 1e-6;

/// `true` iff `mixed_x_h ≤ baseline_x` elementwise (slack 1e-10). Sufficient
/// for `S_mixed ≤ S_baseline`, not necessary.
pub fn check_improvement(baseline_x: &[f64], mixed_x_h: &[f64]) -> Result<bool> {
    if baseline_x.len() != mixed_x_h.len() {
        return Err(Error::DimensionMismatch { expected: baseline_x.len(), actual: mixed_x_h.len() });
    }
    Ok(mixed_x_h.iter().zip(baseline_x).all(|(h, b)| *h <= *b + DOMINANCE_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoEffect {
    pub holds: bool,
    /// Common free-flow path time when `holds`.
    pub b0: Option<f64>,
}

/// Whether every path has the same free-flow time `Δᵀb = b₀·1`.
pub fn check_no_effect(network: &Network, delta: &IncidenceMatrix) -> NoEffect {
    let b: Vec<f64> = network.links().iter().map(|l| l.cost.b).collect();
    let free = delta.path_sums(&b);
    let lo = free.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = free.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let holds = hi - lo <= NO_EFFECT_TOL;
    NoEffect { holds, b0: holds.then_some(lo) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub linear_costs: bool,
    pub delta_v_independent: bool,
    pub q_unique: bool,
    pub q_off_support: bool,
    pub strict_off_support_costs: bool,
}

impl Hypotheses {
    pub fn all(&self) -> bool {
        self.linear_costs
            && self.delta_v_independent
            && self.q_unique
            && self.q_off_support
            && self.strict_off_support_costs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeteriorationVerdict {
    DeterioratesForSmallAlpha,
    PredictsImprovementDirection,
    HypothesesNotMet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeteriorationReport {
    /// Baseline used paths.
    pub v: Vec<usize>,
    /// Cheapest path for the autonomous class at the baseline.
    pub q: Option<usize>,
    pub lambda_baseline: f64,
    /// Sensitivity of the human cost level to autonomous flow injected on `q`.
    pub gamma: Option<f64>,
    /// `C_q^H(x̃) − λ̃ + γ`: slope of the social cost at `α = 0⁺` for the
    /// constructed equilibrium.
    pub condition_value: Option<f64>,
    /// Coefficient of `α²` in the constructed social cost.
    pub second_order: Option<f64>,
    /// Direction `d` of the human flow on `v` as autonomy grows.
    pub direction: Option<Vec<f64>>,
    pub hypotheses: Hypotheses,
    pub verdict: DeteriorationVerdict,
    /// Largest `α` for which the constructed equilibrium stays valid, found
    /// by bisection. A hint only; the true deterioration interval may differ.
    pub alpha_validity_hint: Option<f64>,
}

impl DeteriorationReport {
    /// Social cost of the constructed equilibrium, valid for
    /// `α ≤ alpha_validity_hint`.
    pub fn predicted_social_cost(&self, alpha: f64) -> Option<f64> {
        Some(self.lambda_baseline + alpha * self.condition_value? + alpha * alpha * self.second_order?)
    }
}

/// Evaluates the deterioration test at a linear-cost baseline equilibrium.
pub fn deterioration_report(
    network: &Network,
    delta: &IncidenceMatrix,
    baseline: &ExactEquilibrium,
) -> Result<DeteriorationReport> {
    if !network.is_linear() {
        return Err(Error::RequiresLinearCosts);
    }
    let np = delta.num_paths();
    if baseline.x_agg.len() != np {
        return Err(Error::DimensionMismatch { expected: np, actual: baseline.x_agg.len() });
    }
    let x0 = &baseline.x_agg;
    let v: Vec<usize> = (0..np).filter(|&p| x0[p] > SUPPORT_THRESHOLD).collect();
    let pc = costs::path_costs(network, delta, &delta.link_flows(x0))?;
    let lam0 = baseline.lambda_h;

    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| pc.auto[a].total_cmp(&pc.auto[b]).then(a.cmp(&b)));
    let q = order[0];
    let q_unique = np == 1 || pc.auto[order[1]] - pc.auto[q] > ARGMIN_MARGIN;
    let delta_v_independent = !v.is_empty() && columns_independent(&delta.restrict(&v), DEFAULT_RANK_TOLERANCE)?;
    let hypotheses = Hypotheses {
        linear_costs: true,
        delta_v_independent,
        q_unique,
        q_off_support: !v.contains(&q),
        strict_off_support_costs: (0..np).all(|p| v.contains(&p) || pc.human[p] > lam0 + ARGMIN_MARGIN),
    };

    let mut report = DeteriorationReport {
        v: v.clone(),
        q: Some(q),
        lambda_baseline: lam0,
        gamma: None,
        condition_value: None,
        second_order: None,
        direction: None,
        hypotheses,
        verdict: DeteriorationVerdict::HypothesesNotMet,
        alpha_validity_hint: None,
    };
    if !delta_v_independent {
        return Ok(report);
    }

    // M = ΔᵀKΔ over all paths; M_𝒱 and the column of q restricted to 𝒱.
    let d = delta.matrix();
    let k = DMatrix::from_diagonal(&DVector::from_iterator(d.nrows(), network.links().iter().map(|l| l.cost.k)));
    let m = d.transpose() * k * d;
    let nv = v.len();
    let mv = DMatrix::from_fn(nv, nv, |i, j| m[(v[i], v[j])]);
    let Some(mv_inv) = mv.try_inverse() else {
        report.hypotheses.delta_v_independent = false;
        return Ok(report);
    };
    let ones = DVector::from_element(nv, 1.0);
    let w = DVector::from_iterator(nv, v.iter().map(|&p| m[(p, q)]));
    let inv_ones = &mv_inv * &ones;
    let inv_w = &mv_inv * &w;
    let gamma = (ones.dot(&inv_w) - 1.0) / ones.dot(&inv_ones);
    let dir = &inv_ones * gamma - &inv_w;
    let condition = pc.human[q] - lam0 + gamma;
    // g_p = [ΔᵀKΔ_𝒱 d + ΔᵀKΔ e_q]_p: first-order change of C_p^H per unit α
    let g: Vec<f64> = (0..np).map(|p| (0..nv).map(|j| m[(p, v[j])] * dir[j]).sum::<f64>() + m[(p, q)]).collect();
    report.gamma = Some(gamma);
    report.condition_value = Some(condition);
    report.second_order = Some(g[q] - gamma);
    report.direction = Some(dir.iter().copied().collect());

    if !hypotheses.all() {
        return Ok(report);
    }
    report.verdict = if condition > 0.0 {
        DeteriorationVerdict::DeterioratesForSmallAlpha
    } else {
        DeteriorationVerdict::PredictsImprovementDirection
    };

    let valid = |alpha: f64| -> bool {
        let flows_ok = v.iter().enumerate().all(|(i, &p)| x0[p] + alpha * dir[i] >= -1e-12);
        let human_ok =
            (0..np).filter(|p| !v.contains(p)).all(|p| pc.human[p] + alpha * g[p] - (lam0 + alpha * gamma) >= -1e-12);
        let auto_q = pc.auto[q] + 2.0 * alpha * g[q];
        let auto_ok = (0..np).all(|p| pc.auto[p] + 2.0 * alpha * g[p] - auto_q >= -1e-12);
        flows_ok && human_ok && auto_ok
    };
    report.alpha_validity_hint = Some(if valid(1.0) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > HINT_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if valid(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    });
    Ok(report)
}

/// Constructs a baseline equilibrium that dominates the mixed human flow on
/// every path, for path sets forming a series of parallel bundles.
///
/// Within each bundle, autonomous flow is relabeled as human one path at a
/// time, cheapest first. When a path costs more than the current human level,
/// its flow is drained into the human-used links while their common cost
/// rises, stopping when the path empties or another link reaches the level.
pub fn construct_baseline_from_mixed(
    network: &Network,
    delta: &IncidenceMatrix,
    mixed: &EquilibriumResult,
) -> Result<Vec<f64>> {
    let decomposition = bundle_decomposition(network, delta)?;
    let flow = &mixed.flow;
    let alpha = flow.alpha;
    let links = network.links();

    let mut residual: Vec<Vec<f64>> = Vec::with_capacity(decomposition.bundles.len());
    for bundle in &decomposition.bundles {
        let cost: Vec<CostParams> = bundle.iter().map(|&a| links[a].cost).collect();
        let total: Vec<f64> = bundle.iter().map(|&a| flow.f[a]).collect();
        let auto: Vec<f64> = bundle.iter().map(|&a| flow.f_a[a]).collect();
        let relabeled = relabel_bundle(&cost, &total, &auto);
        let mut r: Vec<f64> = bundle.iter().zip(&relabeled).map(|(&a, &g)| (g - flow.f_h[a]).max(0.0)).collect();
        let s: f64 = r.iter().sum();
        if s > 0.0 {
            r.iter_mut().for_each(|v| *v *= alpha / s);
        }
        residual.push(r);
    }

    // Northwest-corner decomposition of the per-bundle residuals into paths.
    let mut path_of = std::collections::HashMap::new();
    for (p, choice) in decomposition.path_choice.iter().enumerate() {
        path_of.insert(choice.clone(), p);
    }
    let mut x = flow.x_h.clone();
    let mut ptr = vec![0usize; residual.len()];
    let mut left = alpha;
    while left > 1e-15 {
        for (i, r) in residual.iter().enumerate() {
            while ptr[i] + 1 < r.len() && r[ptr[i]] <= 0.0 {
                ptr[i] += 1;
            }
        }
        let amount = residual.iter().zip(&ptr).map(|(r, &j)| r[j]).fold(f64::INFINITY, f64::min).min(left);
        if amount <= 0.0 {
            break;
        }
        let p = path_of[&ptr];
        x[p] += amount;
        left -= amount;
        for (r, &j) in residual.iter_mut().zip(&ptr) {
            r[j] -= amount;
        }
    }
    Ok(x)
}

/// Relabeling within one bundle of parallel links. Returns the baseline link
/// flows.
fn relabel_bundle(cost: &[CostParams], total: &[f64], auto: &[f64]) -> Vec<f64> {
    const COST_TOL: f64 = 1e-9;
    let m = cost.len();
    let mut x = total.to_vec();
    let c = |i: usize, x: &[f64]| cost[i].travel_time(x[i]);
    let mut level = (0..m).map(|i| c(i, &x)).fold(f64::INFINITY, f64::min);
    let mut in_h: Vec<bool> = (0..m).map(|i| c(i, &x) <= level + COST_TOL).collect();
    let mut in_a: Vec<bool> = auto.iter().map(|&v| v > 1e-12).collect();

    for _ in 0..4 * m + 4 {
        let Some(q) = (0..m).filter(|&i| in_a[i]).min_by(|&i, &j| c(i, &x).total_cmp(&c(j, &x))) else {
            break;
        };
        if in_h[q] || c(q, &x) <= level + COST_TOL {
            in_h[q] = true;
            in_a[q] = false;
            continue;
        }
        let h_members: Vec<usize> = (0..m).filter(|&i| in_h[i]).collect();
        let h = |lam: f64| -> f64 { h_members.iter().map(|&i| cost[i].inverse_travel_time(lam) - x[i]).sum() };
        let xq = x[q];
        let root = |f: &dyn Fn(f64) -> f64, lo: f64| -> f64 {
            let mut hi = lo.max(1.0) * 2.0;
            while f(hi) < 0.0 {
                hi *= 2.0;
            }
            let mut lo = lo;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * hi.max(1.0) * 1e-3 {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        let lam_drain = root(&|lam| h(lam) - xq, level);
        let lam_other = (0..m).filter(|&i| !in_h[i] && i != q).map(|i| c(i, &x)).fold(f64::INFINITY, f64::min);
        let lam_meet = if cost[q].b < lam_drain {
            // t_q(x_q − h(λ)) − λ decreases from positive at the current level
            let snapshot = x.clone();
            root(&|lam| lam - cost[q].travel_time((snapshot[q] - h(lam)).max(0.0)), level)
        } else {
            f64::INFINITY
        };
        let target = lam_drain.min(lam_other).min(lam_meet);
        let drained = target >= lam_drain;
        let target = if drained { lam_drain } else { target };
        let mut moved: Vec<f64> = h_members.iter().map(|&i| cost[i].inverse_travel_time(target) - x[i]).collect();
        let sum: f64 = moved.iter().sum();
        if drained && sum > 0.0 {
            moved.iter_mut().for_each(|e| *e *= xq / sum);
        }
        let sum: f64 = moved.iter().sum();
        for (&i, e) in h_members.iter().zip(&moved) {
            x[i] += e;
        }
        if drained {
            x[q] = 0.0;
            in_a[q] = false;
        } else {
            x[q] = (x[q] - sum).max(0.0);
        }
        level = target;
        for (i, h) in in_h.iter_mut().enumerate() {
            if !*h && c(i, &x) <= level + COST_TOL {
                *h = true;
            }
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedComparison {
    pub social_decentralized: f64,
    pub social_centralized: f64,
    pub deviation: f64,
    pub decentralized: EquilibriumResult,
    pub centralized: EquilibriumResult,
}

/// Compares the decentralized equilibrium with centralized routing of the
/// autonomous class.
///
/// The centralized fixed point alternates the opposite way from
/// [`solver::solve_mixed`]: the planner first minimizes the social cost over
/// the autonomous flow (Frank–Wolfe, certified by its duality gap), then the
/// humans respond. Both results must converge.
pub fn compare_centralized(
    network: &Network,
    delta: &IncidenceMatrix,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<CentralizedComparison> {
    let cfg = cfg.with_alpha(alpha);
    cfg.validate()?;
    let decentralized = solver::solve_mixed(network, delta, &cfg)?;
    if !decentralized.converged {
        return Err(Error::NonConvergence(format!(
            "decentralized relaxation stopped at relative gap {:e}",
            decentralized.relative_gap
        )));
    }
    let centralized = solve_centralized(network, delta, &cfg)?;
    if !centralized.converged {
        return Err(Error::NonConvergence(format!(
            "centralized fixed point stopped at relative gap {:e}",
            centralized.relative_gap
        )));
    }
    Ok(CentralizedComparison {
        social_decentralized: decentralized.social,
        social_centralized: centralized.social,
        deviation: (decentralized.social - centralized.social).abs(),
        decentralized,
        centralized,
    })
}

/// Planner-first fixed point: autonomous social optimum given the humans,
/// then the human Wardrop response, until the planner's duality gap plus the
/// human gap fall below `outer_tol` relative to the social cost.
pub fn solve_centralized(network: &Network, delta: &IncidenceMatrix, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    cfg.validate()?;
    let alpha = cfg.alpha;
    let free: Vec<f64> = network.links().iter().map(|l| l.cost.b).collect();
    let mut x_h = solver::all_or_nothing(delta, &free, 1.0 - alpha);
    let mut x_a = solver::all_or_nothing(delta, &free, alpha);
    let mut inner = 0;
    let mut last = None;
    for outer in 1..=cfg.max_outer {
        let f_h = delta.link_flows(&x_h);
        let planner = solver::frank_wolfe(
            Class::Autonomous,
            network,
            delta,
            &f_h,
            alpha,
            Some(&x_a),
            cfg.inner_tol,
            cfg.max_inner,
        )?;
        x_a = planner.x;
        let f_a = delta.link_flows(&x_a);
        let humans = solver::frank_wolfe(
            Class::Human,
            network,
            delta,
            &f_a,
            1.0 - alpha,
            Some(&x_h),
            cfg.inner_tol,
            cfg.max_inner,
        )?;
        x_h = humans.x;
        inner += planner.iterations + humans.iterations;

        let flow = FlowPattern::new(delta, alpha, x_h.clone(), x_a.clone())?;
        let res = solver::evaluate(network, delta, flow, outer, inner, false)?;
        // planner certificate: S(f^H, f^A) − min over 𝒦^A of its linearization
        let pc = costs::path_costs(network, delta, &res.flow.f)?;
        let planner_gap: f64 = x_a.iter().zip(&pc.auto).map(|(x, c)| x * (c - pc.min_auto())).sum();
        let human_gap: f64 = x_h.iter().zip(&pc.human).map(|(x, c)| x * (c - pc.min_human())).sum();
        if (planner_gap + human_gap) <= cfg.outer_tol * res.social {
            return Ok(EquilibriumResult { converged: true, ..res });
        }
        last = Some(res);
    }
    Ok(last.expect("max_outer >= 1"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCertificate {
    pub baseline_x: Vec<f64>,
    pub dominates: bool,
    pub social_mixed: f64,
    pub social_baseline: f64,
    /// VI gap of the constructed baseline as an all-human flow.
    pub baseline_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCheck {
    pub check: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisVerdict {
    pub alpha: f64,
    pub improvement: Option<ImprovementCertificate>,
    pub no_effect: NoEffect,
    pub deterioration: Option<DeteriorationReport>,
    pub centralized_match: Option<CentralizedComparison>,
    pub skipped: Vec<SkippedCheck>,
}

/// Runs every applicable check and records the ones whose preconditions fail.
pub fn analyze(network: &Network, delta: &IncidenceMatrix, cfg: &SolverConfig) -> Result<AnalysisVerdict> {
    cfg.validate()?;
    let alpha = cfg.alpha;
    let mut skipped = Vec::new();
    let mut skip = |check: &str, reason: String| skipped.push(SkippedCheck { check: check.into(), reason });

    let no_effect = check_no_effect(network, delta);

    let deterioration = if network.is_linear() {
        match oracle::exact_baseline(network, delta).and_then(|b| deterioration_report(network, delta, &b)) {
            Ok(r) => Some(r),
            Err(e) => {
                skip("deterioration", e.to_string());
                None
            }
        }
    } else {
        skip("deterioration", Error::RequiresLinearCosts.to_string());
        None
    };

    let centralized_match = match compare_centralized(network, delta, alpha, cfg) {
        Ok(c) => Some(c),
        Err(e) => {
            skip("centralized", e.to_string());
            None
        }
    };

    let improvement = match bundle_decomposition(network, delta) {
        Ok(_) => {
            let mixed = solver::solve_mixed(network, delta, cfg)?;
            let baseline_x = construct_baseline_from_mixed(network, delta, &mixed)?;
            let flow = FlowPattern::new(delta, 0.0, baseline_x.clone(), vec![0.0; baseline_x.len()])?;
            Some(ImprovementCertificate {
                dominates: check_improvement(&baseline_x, &mixed.flow.x_h)?,
                social_mixed: mixed.social,
                social_baseline: costs::social_cost(network, &flow.f)?,
                baseline_gap: solver::vi_gap(network, delta, &flow)?,
                baseline_x,
            })
        }
        Err(e) => {
            skip("improvement", e.to_string());
            None
        }
    };

    Ok(AnalysisVerdict { alpha, improvement, no_effect, deterioration, centralized_match, skipped })
}
