//! α sweeps and link-parameter sweeps. Rows are solved independently (no
//! warm start across rows) so the output does not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{IncidenceMatrix, Network};
use crate::solver::{solve_mixed, EquilibriumResult, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Value of the swept link parameter, for parameter sweeps.
    pub parameter: Option<f64>,
    pub alpha: f64,
    pub social_cost: f64,
    pub lambda_h: f64,
    pub lambda_a: f64,
    /// Absolute VI gap.
    pub gap: f64,
    pub converged: bool,
    /// Aggregated path flows.
    pub flows: Vec<f64>,
}

impl SweepRow {
    fn from_result(parameter: Option<f64>, r: &EquilibriumResult) -> Self {
        SweepRow {
            parameter,
            alpha: r.flow.alpha,
            social_cost: r.social,
            lambda_h: r.lambda_h,
            lambda_a: r.lambda_a,
            gap: r.gap,
            converged: r.converged,
            flows: r.flow.x(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Column name of the swept parameter, if any.
    pub parameter: Option<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn alpha_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidConfig(format!("need 0 <= alpha_min <= alpha_max <= 1, got [{lo}, {hi}]")));
    }
    if steps < 2 {
        return Err(Error::InvalidConfig(format!("steps must be at least 2, got {steps}")));
    }
    Ok(crate::braess::grid(lo, hi, steps))
}

/// Solves at every `α` in `alphas`; rows come back in input order.
pub fn alpha_sweep(
    network: &Network,
    delta: &IncidenceMatrix,
    alphas: &[f64],
    cfg: &SolverConfig,
) -> Result<SweepResult> {
    let rows = alphas
        .par_iter()
        .map(|&a| solve_mixed(network, delta, &cfg.with_alpha(a)).map(|r| SweepRow::from_result(None, &r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { parameter: None, rows })
}

/// Solves at a fixed `α` for each parameter value; `build` produces the
/// network and incidence matrix for a value.
pub fn parameter_sweep<F>(name: &str, values: &[f64], cfg: &SolverConfig, build: F) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<(Network, IncidenceMatrix)> + Sync,
{
    let rows = values
        .par_iter()
        .map(|&v| {
            let (net, delta) = build(v)?;
            solve_mixed(&net, &delta, cfg).map(|r| SweepRow::from_result(Some(v), &r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { parameter: Some(name.to_string()), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::braess;
    use crate::io::write_sweep_csv;
    use crate::netmodel::incidence_matrix;

    #[test]
    fn grid_validation() {
        assert_eq!(alpha_grid(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(alpha_grid(0.0, 1.0, 1).is_err());
        assert!(alpha_grid(0.5, 0.2, 5).is_err());
        assert!(alpha_grid(0.0, 1.5, 5).is_err());
    }

    #[test]
    fn csv_is_deterministic_and_ordered() {
        let net = braess::base_network();
        let d = incidence_matrix(&net, &braess::declared_paths(&net)).unwrap();
        let alphas = alpha_grid(0.0, 1.0, 11).unwrap();
        let run = || {
            let s = alpha_sweep(&net, &d, &alphas, &SolverConfig::new(0.0)).unwrap();
            let mut buf = Vec::new();
            write_sweep_csv(&s, &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(
            lines[0],
            "alpha,social_cost,lambda_h,lambda_a,gap,converged,flow_p1,flow_p2,flow_p3,flow_p4,flow_p5"
        );
        assert_eq!(lines.len(), 12);
        assert!(lines[1].starts_with("0.0,") && lines[11].starts_with("1.0,"));
        assert!(!a.contains('\r'));
    }

    #[test]
    fn parameter_sweep_has_leading_column() {
        let cfg = SolverConfig::new(0.02);
        let s = parameter_sweep("k6", &[1.0, 2.0], &cfg, |k6| {
            let net = braess::network(k6, braess::DETERIORATION_B6)?;
            let d = incidence_matrix(&net, &braess::declared_paths(&net))?;
            Ok((net, d))
        })
        .unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k6,alpha,"));
        assert!(text.lines().nth(2).unwrap().starts_with("2.0,0.02,"));
    }
}
