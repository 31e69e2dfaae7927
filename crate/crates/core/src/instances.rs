//! Seeded random test instances.

use rand::Rng;

use crate::costs::CostParams;
use crate::error::Result;
use crate::netmodel::{enumerate_paths, incidence_matrix, IncidenceMatrix, Link, Network, PathSet};

/// A network together with its path set and incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: Network,
    pub paths: PathSet,
    pub delta: IncidenceMatrix,
}

impl Instance {
    /// Uses the declared paths when given, otherwise enumerates.
    pub fn new(network: Network, paths: Option<PathSet>) -> Result<Self> {
        let paths = match paths {
            Some(p) => p,
            None => enumerate_paths(&network, crate::netmodel::DEFAULT_MAX_PATHS)?,
        };
        let delta = incidence_matrix(&network, &paths)?;
        Ok(Instance { network, paths, delta })
    }
}

/// Parameter ranges for random instances.
#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub min_paths: usize,
    pub max_paths: usize,
    pub k_range: (f64, f64),
    pub b_range: (f64, f64),
    pub exponents: Vec<f64>,
    pub max_nodes: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            min_paths: 2,
            max_paths: 6,
            k_range: (0.1, 10.0),
            b_range: (0.0, 10.0),
            exponents: vec![1.0],
            max_nodes: 5,
        }
    }
}

fn node_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i {
            0 => "S".to_string(),
            _ if i == n - 1 => "T".to_string(),
            _ => format!("v{i}"),
        })
        .collect()
}

/// Random acyclic topology: pairs `i < j` are joined with probability ½,
/// sometimes by two parallel links. Only links on some origin–destination
/// path are kept.
fn random_topology(rng: &mut impl Rng, spec: &RandomSpec) -> (Vec<String>, Vec<(usize, usize)>) {
    loop {
        let n = rng.random_range(2..=spec.max_nodes.max(2));
        let mut arcs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    arcs.push((i, j));
                    if rng.random_bool(0.2) {
                        arcs.push((i, j));
                    }
                }
            }
        }
        // reachable from origin / co-reachable to destination
        let mut fwd = vec![false; n];
        fwd[0] = true;
        for _ in 0..n {
            for &(i, j) in &arcs {
                fwd[j] |= fwd[i];
            }
        }
        let mut bwd = vec![false; n];
        bwd[n - 1] = true;
        for _ in 0..n {
            for &(i, j) in &arcs {
                bwd[i] |= bwd[j];
            }
        }
        if !fwd[n - 1] {
            continue;
        }
        arcs.retain(|&(i, j)| fwd[i] && bwd[j]);
        return (node_names(n), arcs);
    }
}

fn build(names: &[String], arcs: &[(usize, usize)], costs: Vec<CostParams>) -> Result<Instance> {
    let links = arcs
        .iter()
        .zip(costs)
        .enumerate()
        .map(|(a, (&(i, j), c))| Link::new(format!("e{}", a + 1), names[i].clone(), names[j].clone(), c))
        .collect();
    let (o, d) = (names[0].clone(), names[names.len() - 1].clone());
    Instance::new(Network::new(names.to_vec(), links, o, d, 1.0)?, None)
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn draw_exponent(rng: &mut impl Rng, spec: &RandomSpec) -> f64 {
    spec.exponents[rng.random_range(0..spec.exponents.len())]
}

/// Random instance whose path count lies in `[min_paths, max_paths]`. All
/// links share one exponent drawn from `spec.exponents`.
pub fn random_instance(rng: &mut impl Rng, spec: &RandomSpec) -> Instance {
    loop {
        let (names, arcs) = random_topology(rng, spec);
        let n = draw_exponent(rng, spec);
        let costs = arcs
            .iter()
            .map(|_| CostParams::new(draw(rng, spec.k_range), draw(rng, spec.b_range), n).unwrap())
            .collect();
        if let Ok(inst) = build(&names, &arcs, costs) {
            if (spec.min_paths..=spec.max_paths).contains(&inst.delta.num_paths()) {
                return inst;
            }
        }
    }
}

/// Random instance in which every path has the same free-flow time: link
/// constants are potential differences `b = π(head) − π(tail)` with `π`
/// increasing along the node order.
pub fn random_equal_free_flow(rng: &mut impl Rng, spec: &RandomSpec) -> Instance {
    loop {
        let (names, arcs) = random_topology(rng, spec);
        let mut pi = vec![0.0; names.len()];
        for i in 1..names.len() {
            pi[i] = pi[i - 1] + draw(rng, spec.b_range) / 2.0;
        }
        let n = draw_exponent(rng, spec);
        let costs =
            arcs.iter().map(|&(i, j)| CostParams::new(draw(rng, spec.k_range), pi[j] - pi[i], n).unwrap()).collect();
        if let Ok(inst) = build(&names, &arcs, costs) {
            if (spec.min_paths..=spec.max_paths).contains(&inst.delta.num_paths()) {
                return inst;
            }
        }
    }
}

/// Random series chain of parallel bundles (a path multigraph) with one to
/// three bundles of one to four links and at least two paths.
pub fn random_series_parallel(rng: &mut impl Rng, spec: &RandomSpec) -> Instance {
    loop {
        let bundles = rng.random_range(1..=3usize);
        let sizes: Vec<usize> = (0..bundles).map(|_| rng.random_range(1..=4usize)).collect();
        let paths: usize = sizes.iter().product();
        if paths < 2 || paths > spec.max_paths.max(2) {
            continue;
        }
        let names = node_names(bundles + 1);
        let arcs: Vec<(usize, usize)> =
            sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n((i, i + 1), s)).collect();
        let n = draw_exponent(rng, spec);
        let costs = arcs
            .iter()
            .map(|_| CostParams::new(draw(rng, spec.k_range), draw(rng, spec.b_range), n).unwrap())
            .collect();
        return build(&names, &arcs, costs).expect("series-parallel instance is valid");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check_no_effect;
    use crate::netmodel::is_path_multigraph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_respect_their_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = RandomSpec::default();
        for _ in 0..30 {
            let inst = random_instance(&mut rng, &spec);
            assert!((2..=6).contains(&inst.delta.num_paths()));
            let eq = random_equal_free_flow(&mut rng, &spec);
            assert!(check_no_effect(&eq.network, &eq.delta).holds);
            let sp = random_series_parallel(&mut rng, &RandomSpec { max_paths: 24, ..spec.clone() });
            assert!(is_path_multigraph(&sp.network));
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let spec = RandomSpec::default();
        let a = random_instance(&mut ChaCha8Rng::seed_from_u64(11), &spec);
        let b = random_instance(&mut ChaCha8Rng::seed_from_u64(11), &spec);
        assert_eq!(a, b);
    }
}
