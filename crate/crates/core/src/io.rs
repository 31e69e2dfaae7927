//! Network JSON files and CSV result tables.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{BprParams, CostParams};
use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::netmodel::{Link, Network, PathSet, PathSource};
use crate::sweep::SweepResult;

/// On-disk network description.
///
/// ```json
/// {
///   "nodes": ["S", "T"],
///   "links": [{"id": "1", "from": "S", "to": "T", "k": 1, "b": 0, "n": 1}],
///   "od": {"origin": "S", "destination": "T", "demand": 1},
///   "paths": [["1"]]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<String>,
    pub links: Vec<LinkSpec>,
    pub od: OdSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<String>>>,
}

/// A link given either by `k`, `b`, `n` or by a `bpr` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpr: Option<BprParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdSpec {
    pub origin: String,
    pub destination: String,
    pub demand: f64,
}

impl LinkSpec {
    fn cost(&self, index: usize) -> Result<CostParams> {
        let at = |msg: String| Error::InvalidNetwork(format!("links[{index}] (id {:?}): {msg}", self.id));
        match (self.k, self.b, self.n, self.bpr) {
            (Some(k), Some(b), Some(n), None) => CostParams::new(k, b, n).map_err(|e| at(e.to_string())),
            (None, None, None, Some(bpr)) => CostParams::from_bpr(bpr).map_err(|e| at(e.to_string())),
            (_, _, _, Some(_)) => Err(at("give either k, b, n or bpr, not both".into())),
            _ => {
                let missing: Vec<&str> = [("k", self.k), ("b", self.b), ("n", self.n)]
                    .iter()
                    .filter(|(_, v)| v.is_none())
                    .map(|(name, _)| *name)
                    .collect();
                Err(at(format!("missing field(s) {}", missing.join(", "))))
            }
        }
    }
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network file serializes")
    }

    /// Validates the file into a network and, when present, its declared
    /// paths.
    pub fn build(&self) -> Result<(Network, Option<PathSet>)> {
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| Ok(Link::new(l.id.clone(), l.from.clone(), l.to.clone(), l.cost(i)?)))
            .collect::<Result<Vec<_>>>()?;
        if self.od.demand != 1.0 {
            return Err(Error::InvalidNetwork(format!("od.demand must equal 1, got {}", self.od.demand)));
        }
        let network = Network::new(
            self.nodes.clone(),
            links,
            self.od.origin.clone(),
            self.od.destination.clone(),
            self.od.demand,
        )?;
        let paths = self.paths.as_ref().map(|p| PathSet::declared(&network, p.clone())).transpose()?;
        Ok((network, paths))
    }

    /// File for a network; costs are written in `k`, `b`, `n` form.
    pub fn from_network(network: &Network, paths: Option<&PathSet>) -> Self {
        NetworkFile {
            nodes: network.nodes().to_vec(),
            links: network
                .links()
                .iter()
                .map(|l| LinkSpec {
                    id: l.id.clone(),
                    from: l.tail.clone(),
                    to: l.head.clone(),
                    k: Some(l.cost.k),
                    b: Some(l.cost.b),
                    n: Some(l.cost.n),
                    bpr: None,
                })
                .collect(),
            od: OdSpec {
                origin: network.origin().to_string(),
                destination: network.destination().to_string(),
                demand: network.demand(),
            },
            paths: paths.filter(|p| p.source() == PathSource::Declared).map(|p| p.paths().to_vec()),
        }
    }
}

/// Reads a network file. With `enumerate` set, declared paths are ignored
/// and all simple paths are used instead.
pub fn load_instance(path: &Path, enumerate: bool) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (network, paths) = NetworkFile::from_json(&text)?.build()?;
    Instance::new(network, if enumerate { None } else { paths })
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a sweep as CSV. A parameter sweep gets a leading column named after
/// the parameter.
pub fn write_sweep_csv<W: Write>(sweep: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let paths = sweep.rows.first().map_or(0, |r| r.flows.len());
    let mut header: Vec<String> = sweep.parameter.iter().cloned().collect();
    header.extend(["alpha", "social_cost", "lambda_h", "lambda_a", "gap", "converged"].map(String::from));
    header.extend((1..=paths).map(|p| format!("flow_p{p}")));
    w.write_record(&header).map_err(csv_err)?;
    for row in &sweep.rows {
        let mut rec: Vec<String> = row.parameter.iter().map(|&v| fmt_f64(v)).collect();
        rec.extend([row.alpha, row.social_cost, row.lambda_h, row.lambda_a, row.gap].map(fmt_f64));
        rec.push(row.converged.to_string());
        rec.extend(row.flows.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::braess;

    const TWO_LINKS: &str = r#"{
        "nodes": ["S", "T"],
        "links": [
            {"id": "a", "from": "S", "to": "T", "k": 1, "b": 0, "n": 1},
            {"id": "b", "from": "S", "to": "T", "bpr": {"t0": 1, "m": 2, "theta": 0.15, "beta": 4}}
        ],
        "od": {"origin": "S", "destination": "T", "demand": 1}
    }"#;

    #[test]
    fn parses_both_link_forms() {
        let (net, paths) = NetworkFile::from_json(TWO_LINKS).unwrap().build().unwrap();
        assert!(paths.is_none());
        let c = net.links()[1].cost;
        assert_eq!((c.b, c.n), (1.0, 4.0));
        assert!((c.k - 0.15 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = TWO_LINKS.replace("\"demand\": 1", "\"demand\": 1, \"extra\": 0");
        assert!(matches!(NetworkFile::from_json(&bad), Err(Error::Parse(m)) if m.contains("extra")));
    }

    #[test]
    fn field_level_errors() {
        let bad = TWO_LINKS.replace("\"k\": 1, ", "");
        let err = NetworkFile::from_json(&bad).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("links[0]") && err.to_string().contains("missing field(s) k"));
        let bad = TWO_LINKS.replace("\"demand\": 1", "\"demand\": 2");
        assert!(NetworkFile::from_json(&bad).unwrap().build().unwrap_err().to_string().contains("demand"));
        let bad = TWO_LINKS.replace("\"k\": 1", "\"k\": -1");
        assert!(NetworkFile::from_json(&bad).unwrap().build().is_err());
    }

    #[test]
    fn round_trip_preserves_network_and_paths() {
        let net = braess::base_network();
        let paths = braess::declared_paths(&net);
        let file = NetworkFile::from_network(&net, Some(&paths));
        let (net2, paths2) = NetworkFile::from_json(&file.to_json()).unwrap().build().unwrap();
        assert_eq!(net, net2);
        assert_eq!(Some(paths), paths2);
    }

    #[test]
    fn float_text_is_shortest_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 17.066298, 0.0, 2.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.1), "0.1");
    }
}
