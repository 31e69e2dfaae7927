//! Link travel times, marginal social costs and the potentials minimized by
//! the inner Frank–Wolfe solvers.
//!
//! Every link carries a separable cost `t(f) = k·f^n + b` with `k > 0`,
//! `b ≥ 0` and `n ≥ 1`. BPR parameters are converted to this form when the
//! network is built, so the polynomial triple is the only runtime
//! representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{IncidenceMatrix, Network};

/// Polynomial link cost `t(f) = k·f^n + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub k: f64,
    pub b: f64,
    pub n: f64,
}

/// Bureau of Public Roads delay `t0·(1 + theta·(f/m)^beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BprParams {
    pub t0: f64,
    pub m: f64,
    pub theta: f64,
    pub beta: f64,
}

impl CostParams {
    pub fn new(k: f64, b: f64, n: f64) -> Result<Self> {
        let c = CostParams { k, b, n };
        c.validate()?;
        Ok(c)
    }

    pub fn linear(k: f64, b: f64) -> Result<Self> {
        Self::new(k, b, 1.0)
    }

    /// Converts BPR parameters: `k = t0·theta/m^beta`, `n = beta`, `b = t0`.
    ///
    /// `theta = 0` would give `k = 0`, which falls outside the cost class
    /// and is rejected.
    pub fn from_bpr(bpr: BprParams) -> Result<Self> {
        let BprParams { t0, m, theta, beta } = bpr;
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::InvalidNetwork(format!("bpr t0 must be positive, got {t0}")));
        }
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidNetwork(format!("bpr capacity m must be positive, got {m}")));
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::InvalidNetwork(format!("bpr theta must be nonnegative, got {theta}")));
        }
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(Error::InvalidNetwork(format!("bpr beta must be >= 1, got {beta}")));
        }
        Self::new(t0 * theta / m.powf(beta), t0, beta)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidNetwork(format!("cost k must be positive, got {}", self.k)));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::InvalidNetwork(format!("cost b must be nonnegative, got {}", self.b)));
        }
        if !(self.n.is_finite() && self.n >= 1.0) {
            return Err(Error::InvalidNetwork(format!("cost exponent n must be >= 1, got {}", self.n)));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.n == 1.0
    }

    /// `f^n`, with the free-flow boundary handled explicitly.
    #[inline]
    fn pow_n(&self, f: f64) -> f64 {
        pow(f, self.n)
    }

    #[inline]
    pub fn travel_time(&self, f: f64) -> f64 {
        self.k * self.pow_n(f) + self.b
    }

    /// `t'(f) = n·k·f^(n-1)`.
    #[inline]
    pub fn derivative(&self, f: f64) -> f64 {
        if self.n == 1.0 {
            self.k
        } else {
            self.n * self.k * pow(f, self.n - 1.0)
        }
    }

    /// `d/df [f·t(f)] = (n+1)·k·f^n + b`.
    #[inline]
    pub fn marginal_cost(&self, f: f64) -> f64 {
        (self.n + 1.0) * self.k * self.pow_n(f) + self.b
    }

    /// `f·t(f)`.
    #[inline]
    pub fn total_time(&self, f: f64) -> f64 {
        f * self.travel_time(f)
    }

    /// `∫₀^f t(s) ds = k/(n+1)·f^(n+1) + b·f`.
    #[inline]
    pub fn integral(&self, f: f64) -> f64 {
        self.k / (self.n + 1.0) * pow(f, self.n + 1.0) + self.b * f
    }

    /// Inverse of the travel time on `[b, ∞)`: `((λ − b)/k)^(1/n)`, and 0 below `b`.
    pub fn inverse_travel_time(&self, lambda: f64) -> f64 {
        if lambda <= self.b {
            0.0
        } else {
            pow((lambda - self.b) / self.k, 1.0 / self.n)
        }
    }
}

#[inline]
fn pow(f: f64, e: f64) -> f64 {
    if f <= 0.0 {
        // flows are nonnegative; tiny negative roundoff is treated as zero
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else if e == 1.0 {
        f
    } else if e.fract() == 0.0 && e.abs() <= 64.0 {
        f.powi(e as i32)
    } else {
        (e * f.ln()).exp()
    }
}

/// Free function form of [`CostParams::travel_time`].
pub fn travel_time(cost: &CostParams, f: f64) -> f64 {
    cost.travel_time(f)
}

/// Free function form of [`CostParams::marginal_cost`].
pub fn marginal_cost(cost: &CostParams, f: f64) -> f64 {
    cost.marginal_cost(f)
}

/// Per-link human (`t`) and autonomous (marginal social) costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCosts {
    pub human: Vec<f64>,
    pub auto: Vec<f64>,
}

pub fn link_costs(network: &Network, f: &[f64]) -> Result<ClassCosts> {
    check_len(network.links().len(), f.len())?;
    let (human, auto) =
        network.links().iter().zip(f).map(|(l, &fa)| (l.cost.travel_time(fa), l.cost.marginal_cost(fa))).unzip();
    Ok(ClassCosts { human, auto })
}

/// Per-path costs for both classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCosts {
    pub human: Vec<f64>,
    pub auto: Vec<f64>,
}

impl PathCosts {
    pub fn min_human(&self) -> f64 {
        self.human.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_auto(&self) -> f64 {
        self.auto.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `Δᵀ c^H(f)` and `Δᵀ c^A(f)`.
pub fn path_costs(network: &Network, delta: &IncidenceMatrix, f: &[f64]) -> Result<PathCosts> {
    check_len(delta.num_links(), network.links().len())?;
    let lc = link_costs(network, f)?;
    Ok(PathCosts { human: delta.path_sums(&lc.human), auto: delta.path_sums(&lc.auto) })
}

/// `S(f) = Σ_a f_a·t_a(f_a)`.
pub fn social_cost(network: &Network, f: &[f64]) -> Result<f64> {
    check_len(network.links().len(), f.len())?;
    Ok(network.links().iter().zip(f).map(|(l, &fa)| l.cost.total_time(fa)).sum())
}

/// Beckmann potential of the human class with the autonomous link flow held
/// fixed: `Σ_a ∫_{f^A_a}^{f^A_a + f^H_a} t_a(s) ds`.
pub fn beckmann_human(network: &Network, f_h: &[f64], f_a_fixed: &[f64]) -> Result<f64> {
    check_len(network.links().len(), f_h.len())?;
    check_len(network.links().len(), f_a_fixed.len())?;
    Ok(network
        .links()
        .iter()
        .zip(f_h.iter().zip(f_a_fixed))
        .map(|(l, (&h, &a))| l.cost.integral(a + h) - l.cost.integral(a))
        .sum())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
