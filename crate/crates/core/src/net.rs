//! Network topology, validation and monitoring-path pre-processing.
//!
//! Nodes are identified by name in documents and by [`NodeId`] internally.
//! Node order is the order in which nodes are declared; every tie-break in
//! this crate ("smaller node id") refers to that declared order.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Werner parameters at or above this value are rejected on load.
pub const WERNER_MAX: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("node `{0}` declared twice")]
    DuplicateNode(String),
    #[error("link references unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("duplicate link between `{a}` and `{b}`")]
    DuplicateLink { a: String, b: String },
    #[error("werner parameter {value} of link {link} outside [0, 1 - 1e-9)")]
    WernerOutOfRange { link: usize, value: f64 },
    #[error("network is disconnected; unreachable from `{root}`: {unreachable:?}")]
    DisconnectedGraph {
        root: String,
        unreachable: Vec<String>,
    },
}

/// On-disk network description.
///
/// ```json
/// { "nodes": ["v0", "v1"], "links": [{ "a": "v0", "b": "v1", "w": 0.9 }] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub nodes: Vec<String>,
    pub links: Vec<LinkDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDocument {
    pub a: String,
    pub b: String,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub werner: f64,
}

impl Link {
    pub fn has_endpoint(&self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }

    pub fn other(&self, node: NodeId) -> NodeId {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TopologyClass {
    Star { hub: NodeId },
    Tree,
    General,
}

/// Routing path used by a monitor at `monitor` to probe `target`.
///
/// `links` runs from the monitor outwards and always ends with `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonitorPath {
    pub monitor: NodeId,
    pub target: LinkId,
    pub links: Vec<LinkId>,
}

impl MonitorPath {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn is_direct(&self) -> bool {
        self.links.len() == 1
    }
}

/// Connected, simple, undirected graph whose links carry Werner parameters.
#[derive(Debug, Clone)]
pub struct Network {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    links: Vec<Link>,
    // neighbours sorted by node id
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
}

impl Network {
    pub fn new<S: AsRef<str>>(nodes: &[S], links: &[(S, S, f64)]) -> Result<Self, NetError> {
        let doc = NetworkDocument {
            nodes: nodes.iter().map(|n| n.as_ref().to_string()).collect(),
            links: links
                .iter()
                .map(|(a, b, w)| LinkDocument {
                    a: a.as_ref().to_string(),
                    b: b.as_ref().to_string(),
                    w: *w,
                })
                .collect(),
        };
        Self::from_document(&doc)
    }

    /// Star with hub `v0` and leaf `v{i+1}` on link `i`.
    pub fn star(weights: &[f64]) -> Result<Self, NetError> {
        let nodes: Vec<String> = (0..=weights.len()).map(|i| format!("v{i}")).collect();
        let links: Vec<(String, String, f64)> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| ("v0".to_string(), format!("v{}", i + 1), w))
            .collect();
        Self::new(&nodes, &links)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let doc: NetworkDocument =
            serde_json::from_str(text).map_err(|e| NetError::Parse(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self, NetError> {
        if doc.nodes.is_empty() {
            return Err(NetError::EmptyNetwork);
        }
        let mut index = HashMap::with_capacity(doc.nodes.len());
        for (i, name) in doc.nodes.iter().enumerate() {
            if index.insert(name.clone(), NodeId(i)).is_some() {
                return Err(NetError::DuplicateNode(name.clone()));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| NetError::UnknownNode(name.to_string()))
        };

        let mut links = Vec::with_capacity(doc.links.len());
        let mut seen = HashSet::with_capacity(doc.links.len());
        let mut adjacency = vec![Vec::new(); doc.nodes.len()];
        for (i, l) in doc.links.iter().enumerate() {
            let a = lookup(&l.a)?;
            let b = lookup(&l.b)?;
            if a == b {
                return Err(NetError::SelfLoop(l.a.clone()));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(NetError::DuplicateLink {
                    a: l.a.clone(),
                    b: l.b.clone(),
                });
            }
            if !(0.0..WERNER_MAX).contains(&l.w) {
                return Err(NetError::WernerOutOfRange { link: i, value: l.w });
            }
            adjacency[a.0].push((b, LinkId(i)));
            adjacency[b.0].push((a, LinkId(i)));
            links.push(Link { a, b, werner: l.w });
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let net = Network {
            names: doc.nodes.clone(),
            index,
            links,
            adjacency,
        };
        let dist = net.bfs(NodeId(0));
        let unreachable: Vec<String> = dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none())
            .map(|(i, _)| net.names[i].clone())
            .collect();
        if !unreachable.is_empty() {
            return Err(NetError::DisconnectedGraph {
                root: net.names[0].clone(),
                unreachable,
            });
        }
        Ok(net)
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            nodes: self.names.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkDocument {
                    a: self.names[l.a.0].clone(),
                    b: self.names[l.b.0].clone(),
                    w: l.werner,
                })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(NodeId)
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).map(LinkId)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn werner(&self, id: LinkId) -> f64 {
        self.links[id.0].werner
    }

    pub fn werners(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.werner).collect()
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.0].len()
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[node.0]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.adjacency[a.0]
            .binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|pos| self.adjacency[a.0][pos].1)
    }

    /// Hop distances from `root`; `None` for unreachable nodes.
    pub fn bfs(&self, root: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.names.len()];
        let mut queue = VecDeque::new();
        dist[root.0] = Some(0);
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let d = dist[v.0].unwrap_or_default();
            for &(n, _) in &self.adjacency[v.0] {
                if dist[n.0].is_none() {
                    dist[n.0] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    fn distances(&self, root: NodeId) -> Vec<usize> {
        // connected by construction
        self.bfs(root)
            .into_iter()
            .map(|d| d.unwrap_or(usize::MAX))
            .collect()
    }

    pub fn classify(&self) -> TopologyClass {
        let n = self.links.len();
        let v = self.names.len();
        if n + 1 == v && n >= 2 {
            let mut hubs = self.nodes().filter(|&k| self.degree(k) == n);
            if let (Some(hub), None) = (hubs.next(), hubs.next()) {
                if self.nodes().filter(|&k| k != hub).all(|k| self.degree(k) == 1) {
                    return TopologyClass::Star { hub };
                }
            }
        }
        if n + 1 == v {
            TopologyClass::Tree
        } else {
            TopologyClass::General
        }
    }

    /// Endpoint of `link` nearer to the node whose distances are `dist_from`
    /// (ties go to the smaller node id).
    pub fn nearer_endpoint(&self, link: LinkId, dist_from: &[usize]) -> NodeId {
        let l = &self.links[link.0];
        let key = |n: NodeId| (dist_from[n.0], n);
        if key(l.a) <= key(l.b) {
            l.a
        } else {
            l.b
        }
    }

    /// Hop-shortest path from `monitor` to the nearer endpoint of `target`,
    /// followed by `target` itself. Among equal-length paths the
    /// lexicographically smallest node sequence wins.
    pub fn shortest_monitor_path(&self, monitor: NodeId, target: LinkId) -> MonitorPath {
        let from_monitor = self.distances(monitor);
        let u = self.nearer_endpoint(target, &from_monitor);
        let to_u = self.distances(u);
        self.walk_path(monitor, target, u, &to_u)
    }

    fn walk_path(&self, monitor: NodeId, target: LinkId, u: NodeId, to_u: &[usize]) -> MonitorPath {
        let mut links = Vec::with_capacity(to_u[monitor.0] + 1);
        let mut at = monitor;
        while at != u {
            // adjacency is sorted, so the first descending neighbour is the smallest id
            let &(next, link) = self.adjacency[at.0]
                .iter()
                .find(|(n, _)| to_u[n.0] + 1 == to_u[at.0])
                .expect("connected graph has a descending neighbour");
            links.push(link);
            at = next;
        }
        links.push(target);
        MonitorPath {
            monitor,
            target,
            links,
        }
    }

    /// Effective Werner parameter of a probe along `path`: product of squared link parameters.
    pub fn path_product(&self, path: &MonitorPath) -> f64 {
        self.product_of(&path.links)
    }

    pub fn product_of(&self, links: &[LinkId]) -> f64 {
        links.iter().map(|&l| self.werner(l).powi(2)).product()
    }
}

/// All monitor paths `P(k, i)` for every node `k` and link `i`, computed once.
#[derive(Debug, Clone)]
pub struct PathTable {
    link_count: usize,
    paths: Vec<MonitorPath>,
}

impl PathTable {
    pub fn build(net: &Network) -> Self {
        let all: Vec<Vec<usize>> = net.nodes().map(|k| net.distances(k)).collect();
        let mut paths = Vec::with_capacity(net.node_count() * net.link_count());
        for k in net.nodes() {
            for i in net.link_ids() {
                let u = net.nearer_endpoint(i, &all[k.0]);
                paths.push(net.walk_path(k, i, u, &all[u.0]));
            }
        }
        PathTable {
            link_count: net.link_count(),
            paths,
        }
    }

    pub fn get(&self, monitor: NodeId, target: LinkId) -> &MonitorPath {
        &self.paths[monitor.0 * self.link_count + target.0]
    }
}
