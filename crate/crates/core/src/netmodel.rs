//! Road network, origin–destination paths and the link–path incidence matrix.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::costs::CostParams;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_PATHS: usize = 10_000;
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub cost: CostParams,
}

impl Link {
    pub fn new(id: impl Into<String>, tail: impl Into<String>, head: impl Into<String>, cost: CostParams) -> Self {
        Link { id: id.into(), tail: tail.into(), head: head.into(), cost }
    }
}

/// Directed network with a single origin–destination pair and unit demand.
///
/// Immutable once built; all accessors borrow.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<String>,
    links: Vec<Link>,
    origin: String,
    destination: String,
    demand: f64,
    link_index: HashMap<String, usize>,
}

impl Network {
    pub fn new(
        nodes: Vec<String>,
        links: Vec<Link>,
        origin: impl Into<String>,
        destination: impl Into<String>,
        demand: f64,
    ) -> Result<Self> {
        let origin = origin.into();
        let destination = destination.into();
        let node_set: BTreeSet<&str> = nodes.iter().map(String::as_str).collect();
        if node_set.len() != nodes.len() {
            return Err(Error::InvalidNetwork("duplicate node id".into()));
        }
        if !node_set.contains(origin.as_str()) {
            return Err(Error::InvalidNetwork(format!("origin {origin:?} is not a node")));
        }
        if !node_set.contains(destination.as_str()) {
            return Err(Error::InvalidNetwork(format!("destination {destination:?} is not a node")));
        }
        if origin == destination {
            return Err(Error::InvalidNetwork("origin and destination coincide".into()));
        }
        if demand != 1.0 {
            return Err(Error::InvalidNetwork(format!("demand must equal 1, got {demand}")));
        }
        let mut link_index = HashMap::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            if l.tail == l.head {
                return Err(Error::InvalidNetwork(format!("link {:?} is a self-loop", l.id)));
            }
            for end in [&l.tail, &l.head] {
                if !node_set.contains(end.as_str()) {
                    return Err(Error::InvalidNetwork(format!("link {:?} references unknown node {end:?}", l.id)));
                }
            }
            CostParams::new(l.cost.k, l.cost.b, l.cost.n)?;
            if link_index.insert(l.id.clone(), i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate link id {:?}", l.id)));
            }
        }
        Ok(Network { nodes, links, origin, destination, demand, link_index })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn destination(&self) -> &str {
        &self.destination
    }

    pub fn demand(&self) -> f64 {
        self.demand
    }

    pub fn link_position(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    /// True when every link is linear (`n = 1`).
    pub fn is_linear(&self) -> bool {
        self.links.iter().all(|l| l.cost.is_linear())
    }

    /// The common exponent when all links share one.
    pub fn common_exponent(&self) -> Option<f64> {
        let n = self.links.first()?.cost.n;
        self.links.iter().all(|l| l.cost.n == n).then_some(n)
    }

    /// Copy of the network with one link's cost replaced.
    pub fn with_link_cost(&self, id: &str, cost: CostParams) -> Result<Network> {
        let pos = self.link_position(id).ok_or_else(|| Error::UnknownLink(id.to_string()))?;
        let mut links = self.links.clone();
        links[pos].cost = cost;
        Network::new(self.nodes.clone(), links, self.origin.clone(), self.destination.clone(), self.demand)
    }

    fn outgoing_sorted(&self) -> HashMap<&str, Vec<usize>> {
        let mut out: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, l) in self.links.iter().enumerate() {
            out.entry(l.tail.as_str()).or_default().push(i);
        }
        for v in out.values_mut() {
            v.sort_by(|&a, &b| self.links[a].id.cmp(&self.links[b].id));
        }
        out
    }

    /// Depth-first walk over simple origin→destination paths (as link
    /// positions), visiting outgoing links in id order. The visitor returns
    /// `false` to stop the walk.
    fn walk_simple_paths(&self, mut visit: impl FnMut(&[usize]) -> bool) {
        let out = self.outgoing_sorted();
        let mut on_path: BTreeSet<&str> = BTreeSet::new();
        let mut stack: Vec<usize> = Vec::new();
        on_path.insert(self.origin.as_str());

        fn rec<'a>(
            net: &'a Network,
            out: &HashMap<&'a str, Vec<usize>>,
            node: &'a str,
            on_path: &mut BTreeSet<&'a str>,
            stack: &mut Vec<usize>,
            visit: &mut dyn FnMut(&[usize]) -> bool,
        ) -> bool {
            if node == net.destination {
                return visit(stack);
            }
            let Some(next) = out.get(node) else { return true };
            for &li in next {
                let head = net.links[li].head.as_str();
                if on_path.contains(head) {
                    continue;
                }
                on_path.insert(head);
                stack.push(li);
                let keep_going = rec(net, out, head, on_path, stack, visit);
                stack.pop();
                on_path.remove(head);
                if !keep_going {
                    return false;
                }
            }
            true
        }

        rec(self, &out, self.origin.as_str(), &mut on_path, &mut stack, &mut visit);
    }

    fn node_sequence(&self, path: &[usize]) -> Vec<&str> {
        let mut seq = vec![self.origin.as_str()];
        seq.extend(path.iter().map(|&li| self.links[li].head.as_str()));
        seq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    Enumerated,
    Declared,
}

/// Ordered origin→destination paths, each a sequence of link ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<Vec<String>>,
    source: PathSource,
}

impl PathSet {
    /// Validates a declared path list: nonempty, known links, starting at the
    /// origin, ending at the destination, no repeated link. Link direction is
    /// deliberately not checked so that undirected-style path lists can be
    /// reproduced verbatim.
    pub fn declared(network: &Network, paths: Vec<Vec<String>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidPaths("declared path list is empty".into()));
        }
        for (pi, path) in paths.iter().enumerate() {
            if path.is_empty() {
                return Err(Error::InvalidPaths(format!("path {} is empty", pi + 1)));
            }
            let mut seen = BTreeSet::new();
            for id in path {
                if network.link_position(id).is_none() {
                    return Err(Error::UnknownLink(id.clone()));
                }
                if !seen.insert(id) {
                    return Err(Error::InvalidPaths(format!("path {} repeats link {id:?}", pi + 1)));
                }
            }
            let touches = |id: &String, node: &str| {
                let l = &network.links()[network.link_position(id).unwrap()];
                l.tail == node || l.head == node
            };
            if !touches(&path[0], network.origin()) {
                return Err(Error::InvalidPaths(format!("path {} does not start at the origin", pi + 1)));
            }
            if !touches(path.last().unwrap(), network.destination()) {
                return Err(Error::InvalidPaths(format!("path {} does not end at the destination", pi + 1)));
            }
        }
        Ok(PathSet { paths, source: PathSource::Declared })
    }

    pub fn paths(&self) -> &[Vec<String>] {
        &self.paths
    }

    pub fn source(&self) -> PathSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// All simple origin→destination paths, ordered lexicographically by link-id
/// sequence.
pub fn enumerate_paths(network: &Network, max_paths: usize) -> Result<PathSet> {
    if max_paths == 0 {
        return Err(Error::InvalidPaths("max_paths must be at least 1".into()));
    }
    let mut found: Vec<Vec<String>> = Vec::new();
    let mut exceeded = false;
    network.walk_simple_paths(|p| {
        if found.len() == max_paths {
            exceeded = true;
            return false;
        }
        found.push(p.iter().map(|&li| network.links()[li].id.clone()).collect());
        true
    });
    if exceeded {
        return Err(Error::PathBudgetExceeded { max_paths });
    }
    if found.is_empty() {
        return Err(Error::NoPathExists {
            origin: network.origin().to_string(),
            destination: network.destination().to_string(),
        });
    }
    found.sort();
    Ok(PathSet { paths: found, source: PathSource::Enumerated })
}

/// The 0/1 link–path incidence matrix together with per-path link lists.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    delta: DMatrix<f64>,
    path_links: Vec<Vec<usize>>,
}

impl IncidenceMatrix {
    pub fn num_links(&self) -> usize {
        self.delta.nrows()
    }

    pub fn num_paths(&self) -> usize {
        self.delta.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn get(&self, link: usize, path: usize) -> bool {
        self.delta[(link, path)] != 0.0
    }

    /// Link positions on path `p`.
    pub fn path_links(&self, p: usize) -> &[usize] {
        &self.path_links[p]
    }

    /// `Δx`.
    pub fn link_flows(&self, x: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.num_links()];
        for (links, &xp) in self.path_links.iter().zip(x) {
            if xp != 0.0 {
                for &a in links {
                    f[a] += xp;
                }
            }
        }
        f
    }

    /// `Δᵀc`.
    pub fn path_sums(&self, link_values: &[f64]) -> Vec<f64> {
        self.path_links.iter().map(|ls| ls.iter().map(|&a| link_values[a]).sum()).collect()
    }

    /// Columns of `Δ` restricted to the given paths.
    pub fn restrict(&self, paths: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_links(), paths.len(), |a, j| self.delta[(a, paths[j])])
    }
}

pub fn incidence_matrix(network: &Network, paths: &PathSet) -> Result<IncidenceMatrix> {
    let l = network.links().len();
    let mut delta = DMatrix::zeros(l, paths.len());
    let mut path_links = Vec::with_capacity(paths.len());
    for (p, path) in paths.paths().iter().enumerate() {
        let mut ls = Vec::with_capacity(path.len());
        for id in path {
            let a = network.link_position(id).ok_or_else(|| Error::UnknownLink(id.clone()))?;
            delta[(a, p)] = 1.0;
            ls.push(a);
        }
        if ls.is_empty() {
            return Err(Error::InvalidPaths(format!("path {} is empty", p + 1)));
        }
        path_links.push(ls);
    }
    Ok(IncidenceMatrix { delta, path_links })
}

/// True iff every simple origin→destination path visits the same node
/// sequence (a series chain of parallel-link bundles).
pub fn is_path_multigraph(network: &Network) -> bool {
    let mut first: Option<Vec<String>> = None;
    let mut all_same = true;
    network.walk_simple_paths(|p| {
        let seq = network.node_sequence(p);
        match &first {
            None => {
                first = Some(seq.into_iter().map(str::to_string).collect());
                true
            }
            Some(f) => {
                all_same = f.len() == seq.len() && f.iter().zip(&seq).all(|(a, b)| a == b);
                all_same
            }
        }
    });
    first.is_some() && all_same
}

/// Series decomposition of a path set into parallel bundles.
///
/// `bundles[i]` lists the link positions used at step `i`, and
/// `path_choice[p][i]` is the index within `bundles[i]` chosen by path `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleDecomposition {
    pub bundles: Vec<Vec<usize>>,
    pub path_choice: Vec<Vec<usize>>,
}

/// Decomposes a path set whose paths all traverse one node sequence and which
/// contains every combination of per-step links.
pub fn bundle_decomposition(network: &Network, delta: &IncidenceMatrix) -> Result<BundleDecomposition> {
    let p_count = delta.num_paths();
    let links = network.links();
    let seq_of = |p: usize| -> Vec<&str> {
        let mut s = vec![network.origin()];
        for &a in delta.path_links(p) {
            s.push(links[a].head.as_str());
        }
        s
    };
    let reference = seq_of(0);
    for p in 0..p_count {
        let ls = delta.path_links(p);
        let seq = seq_of(p);
        if seq != reference {
            return Err(Error::NotPathMultigraph(format!(
                "path {} visits {:?}, path 1 visits {:?}",
                p + 1,
                seq,
                reference
            )));
        }
        for (i, &a) in ls.iter().enumerate() {
            if links[a].tail != reference[i] {
                return Err(Error::NotPathMultigraph(format!("path {} is not a directed walk", p + 1)));
            }
        }
    }
    let steps = reference.len() - 1;
    let mut bundles: Vec<Vec<usize>> = vec![Vec::new(); steps];
    for p in 0..p_count {
        for (i, &a) in delta.path_links(p).iter().enumerate() {
            if !bundles[i].contains(&a) {
                bundles[i].push(a);
            }
        }
    }
    for b in &mut bundles {
        b.sort_unstable();
    }
    let expected: usize = bundles.iter().map(Vec::len).product();
    let mut combos = BTreeSet::new();
    let path_choice: Vec<Vec<usize>> = (0..p_count)
        .map(|p| delta.path_links(p).iter().enumerate().map(|(i, a)| bundles[i].binary_search(a).unwrap()).collect())
        .collect();
    for c in &path_choice {
        combos.insert(c.clone());
    }
    if combos.len() != p_count || expected != p_count {
        return Err(Error::NotPathMultigraph(format!(
            "path set has {} distinct paths, the bundle product has {expected}",
            combos.len()
        )));
    }
    Ok(BundleDecomposition { bundles, path_choice })
}

/// Whether the columns of `delta_v` are linearly independent, using singular
/// values relative to the largest one.
pub fn columns_independent(delta_v: &DMatrix<f64>, rank_tolerance: f64) -> Result<bool> {
    if delta_v.ncols() == 0 {
        return Err(Error::EmptySupport);
    }
    if delta_v.ncols() > delta_v.nrows() {
        return Ok(false);
    }
    let sv = delta_v.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(false);
    }
    Ok(sv.iter().filter(|&&s| s > rank_tolerance * max).count() == delta_v.ncols())
}
