//! Built-in modified Braess network: the classic five links plus a direct
//! origin–destination link.
//!
//! | link | from | to | k  | b  |
//! |------|------|----|----|----|
//! | 1    | S    | A  | 10 | 1  |
//! | 2    | A    | T  | 5  | 8  |
//! | 3    | S    | B  | 2  | 7  |
//! | 4    | B    | T  | 5  | 1  |
//! | 5    | A    | B  | 3  | 1  |
//! | 6    | S    | T  | 7  | 11 |

use crate::costs::CostParams;
use crate::netmodel::{Link, Network, PathSet};

pub const K: [f64; 6] = [10.0, 5.0, 2.0, 5.0, 3.0, 7.0];
pub const B: [f64; 6] = [1.0, 8.0, 7.0, 1.0, 1.0, 11.0];
const ENDS: [(&str, &str); 6] = [("S", "A"), ("A", "T"), ("S", "B"), ("B", "T"), ("A", "B"), ("S", "T")];

/// Declared path list. The fourth path traverses link 5 against its drawn
/// direction; declared paths are not checked for arc direction.
pub const DECLARED_PATHS: [&[&str]; 5] = [&["1", "2"], &["3", "4"], &["1", "5", "4"], &["3", "5", "2"], &["6"]];

/// Link-6 parameters of the deterioration variant.
pub const DETERIORATION_K6: f64 = 1.0;
pub const DETERIORATION_B6: f64 = 18.3;

pub fn network(k6: f64, b6: f64) -> crate::Result<Network> {
    let links = (0..6)
        .map(|i| {
            let (k, b) = if i == 5 { (k6, b6) } else { (K[i], B[i]) };
            Ok(Link::new(format!("{}", i + 1), ENDS[i].0, ENDS[i].1, CostParams::linear(k, b)?))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Network::new(["S", "A", "B", "T"].iter().map(|s| s.to_string()).collect(), links, "S", "T", 1.0)
}

pub fn base_network() -> Network {
    network(K[5], B[5]).expect("built-in parameters are valid")
}

pub fn deterioration() -> Network {
    network(DETERIORATION_K6, DETERIORATION_B6).expect("built-in parameters are valid")
}

pub fn declared_paths(network: &Network) -> PathSet {
    PathSet::declared(network, DECLARED_PATHS.iter().map(|p| p.iter().map(|s| s.to_string()).collect()).collect())
        .expect("declared Braess paths reference existing links")
}

/// Evenly spaced grid including both endpoints.
pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| if i == points - 1 { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
            .collect(),
    }
}

/// k₆ grid for the link-6 slope sweep.
pub fn k6_grid() -> Vec<f64> {
    grid(0.5, 10.0, 50)
}

/// b₆ grid for the link-6 free-flow sweep.
pub fn b6_grid() -> Vec<f64> {
    grid(15.0, 25.0, 50)
}
