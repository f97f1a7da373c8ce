//! Unrolled (variable, time) DAGs, their rolled summaries and d-separation.
//!
//! Nodes are 0-based internally. The JSON form and `Display` use the 1-based
//! `(component, time)` convention.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

/// Node `(var, time)` of the unrolled window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node {
    pub var: usize,
    pub time: usize,
}

impl Node {
    #[inline]
    pub const fn new(var: usize, time: usize) -> Self {
        Self { var, time }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.var + 1, self.time + 1)
    }
}

pub type UnrolledEdge = (Node, Node);

/// DAG over the nodes `(v, t)`, `t` in `0..2 tau + 1`, with edges forward in time.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledDag<T> {
    p: usize,
    tau: usize,
    edges: BTreeSet<UnrolledEdge>,
    weights: Option<BTreeMap<UnrolledEdge, T>>,
}

impl<T: Real> UnrolledDag<T> {
    pub fn empty(p: usize, tau: usize) -> Self {
        Self {
            p,
            tau,
            edges: BTreeSet::new(),
            weights: None,
        }
    }

    pub fn new(
        p: usize,
        tau: usize,
        edges: impl IntoIterator<Item = UnrolledEdge>,
    ) -> Result<Self> {
        let mut dag = Self::empty(p, tau);
        for (a, b) in edges {
            dag.add_edge(a, b)?;
        }
        Ok(dag)
    }

    /// Unrolls a time-invariant lag structure over the window: `(u, v, lag)`
    /// puts `(u, t - lag) -> (v, t)` at every `t` where the source fits.
    pub fn from_lags(p: usize, tau: usize, lags: &[(usize, usize, usize)]) -> Result<Self> {
        let w = 2 * tau + 1;
        let mut dag = Self::empty(p, tau);
        for &(u, v, lag) in lags {
            if lag == 0 || lag > tau {
                return Err(Error::InvalidEdge(format!("lag {lag} outside 1..={tau}")));
            }
            for t in lag..w {
                dag.add_edge(Node::new(u, t - lag), Node::new(v, t))?;
            }
        }
        Ok(dag)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn tau(&self) -> usize {
        self.tau
    }

    #[inline]
    pub fn window_len(&self) -> usize {
        2 * self.tau + 1
    }

    /// The last time slice `2 tau` (0-based), whose parents define the rolled graph.
    #[inline]
    pub fn target_time(&self) -> usize {
        2 * self.tau
    }

    pub fn num_nodes(&self) -> usize {
        self.p * self.window_len()
    }

    pub fn check_node(&self, n: Node) -> Result<()> {
        if n.var >= self.p || n.time >= self.window_len() {
            return Err(Error::InvalidNode {
                var: n.var + 1,
                time: n.time + 1,
                p: self.p,
                window: self.window_len(),
            });
        }
        Ok(())
    }

    pub fn add_edge(&mut self, from: Node, to: Node) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from.time >= to.time {
            return Err(Error::InvalidEdge(format!(
                "{from} -> {to} is not forward in time"
            )));
        }
        if to.time - from.time > self.tau {
            return Err(Error::InvalidEdge(format!(
                "{from} -> {to} exceeds the Markov order {}",
                self.tau
            )));
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn has_edge(&self, from: Node, to: Node) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = UnrolledEdge> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn parents(&self, node: Node) -> Vec<Node> {
        self.edges
            .iter()
            .filter(|(_, b)| *b == node)
            .map(|(a, _)| *a)
            .collect()
    }

    pub fn children(&self, node: Node) -> Vec<Node> {
        self.edges
            .iter()
            .filter(|(a, _)| *a == node)
            .map(|(_, b)| *b)
            .collect()
    }

    pub fn weights(&self) -> Option<&BTreeMap<UnrolledEdge, T>> {
        self.weights.as_ref()
    }

    pub fn weight(&self, from: Node, to: Node) -> Option<T> {
        self.weights
            .as_ref()
            .and_then(|w| w.get(&(from, to)).copied())
    }

    pub(crate) fn set_weights(&mut self, weights: BTreeMap<UnrolledEdge, T>) {
        self.weights = Some(weights);
    }

    #[inline]
    fn index(&self, n: Node) -> usize {
        n.time * self.p + n.var
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            schema_version: GRAPH_SCHEMA_VERSION,
            p: self.p,
            tau: Some(self.tau),
            edges: self
                .edges
                .iter()
                .map(|(a, b)| vec![a.var + 1, a.time + 1, b.var + 1, b.time + 1])
                .collect(),
            weights: self.weights.as_ref().map(|w| {
                w.iter()
                    .map(|((a, b), v)| {
                        (
                            format!("{},{}->{},{}", a.var + 1, a.time + 1, b.var + 1, b.time + 1),
                            v.to_f64_lossy(),
                        )
                    })
                    .collect()
            }),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let tau = json
            .tau
            .ok_or_else(|| Error::InvalidInput("unrolled graph JSON needs 'tau'".into()))?;
        let mut dag = Self::empty(json.p, tau);
        for e in &json.edges {
            if e.len() != 4 || e.contains(&0) {
                return Err(Error::InvalidEdge(format!(
                    "{e:?} is not a 1-based [u,s,v,t] tuple"
                )));
            }
            dag.add_edge(Node::new(e[0] - 1, e[1] - 1), Node::new(e[2] - 1, e[3] - 1))?;
        }
        Ok(dag)
    }
}

/// Summary graph over components; self-loops allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct RolledGraph<T> {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
    weights: Option<BTreeMap<(usize, usize), T>>,
}

impl<T: Real> RolledGraph<T> {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
            weights: None,
        }
    }

    /// Builds from 0-based `(u, v)` pairs.
    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(p);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.p || v >= self.p {
            return Err(Error::InvalidEdge(format!(
                "{} -> {} out of range for p = {}",
                u + 1,
                v + 1,
                self.p
            )));
        }
        self.edges.insert((u, v));
        Ok(())
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weights(&self) -> Option<&BTreeMap<(usize, usize), T>> {
        self.weights.as_ref()
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<T> {
        self.weights.as_ref().and_then(|w| w.get(&(u, v)).copied())
    }

    pub(crate) fn set_weights(&mut self, weights: BTreeMap<(usize, usize), T>) {
        self.weights = Some(weights);
    }

    /// Number of ordered pairs (self-pairs included) on which the graphs disagree.
    pub fn hamming_distance(&self, other: &Self) -> usize {
        self.edges.symmetric_difference(&other.edges).count()
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            schema_version: GRAPH_SCHEMA_VERSION,
            p: self.p,
            tau: None,
            edges: self
                .edges
                .iter()
                .map(|&(u, v)| vec![u + 1, v + 1])
                .collect(),
            weights: self.weights.as_ref().map(|w| {
                w.iter()
                    .map(|(&(u, v), x)| (format!("{}->{}", u + 1, v + 1), x.to_f64_lossy()))
                    .collect()
            }),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let mut g = Self::empty(json.p);
        for e in &json.edges {
            if e.len() != 2 || e.contains(&0) {
                return Err(Error::InvalidEdge(format!(
                    "{e:?} is not a 1-based [u,v] pair"
                )));
            }
            g.add_edge(e[0] - 1, e[1] - 1)?;
        }
        if let Some(ws) = &json.weights {
            let mut map = BTreeMap::new();
            for (key, &w) in ws {
                let (u, v) = key
                    .split_once("->")
                    .and_then(|(a, b)| {
                        Some((
                            a.trim().parse::<usize>().ok()?,
                            b.trim().parse::<usize>().ok()?,
                        ))
                    })
                    .filter(|&(a, b)| a > 0 && b > 0)
                    .ok_or_else(|| Error::InvalidEdge(format!("bad weight key '{key}'")))?;
                map.insert((u - 1, v - 1), T::lit(w));
            }
            g.set_weights(map);
        }
        Ok(g)
    }
}

impl<T: Real> fmt::Display for RolledGraph<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .edges
            .iter()
            .map(|&(u, v)| format!("{}->{}", u + 1, v + 1))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Serialized graph: `edges` are 1-based `[u, v]` (rolled) or `[u, s, v, t]` (unrolled).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub schema_version: u32,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    pub edges: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
}

/// Rolls an unrolled DAG: `u -> v` iff some `(u, s)` with `s` in `tau..2 tau`
/// is a parent of `(v, 2 tau)`.
pub fn roll<T: Real>(dag: &UnrolledDag<T>) -> RolledGraph<T> {
    let target = dag.target_time();
    let mut g = RolledGraph::empty(dag.p());
    for (a, b) in dag.edges() {
        if b.time == target && a.time >= dag.tau() {
            g.edges.insert((a.var, b.var));
        }
    }
    g
}

/// Whether `a` and `b` are d-separated by `given` in `dag`.
///
/// For many queries against one DAG, build a [`DSeparation`] once instead.
pub fn d_separated<T: Real>(
    dag: &UnrolledDag<T>,
    a: Node,
    b: Node,
    given: &[Node],
) -> Result<bool> {
    DSeparation::new(dag).query(a, b, given)
}

/// Adjacency of an unrolled DAG prepared for repeated d-separation queries.
///
/// Queries run a reachability ("Bayes ball") search over `(node, direction)`
/// states: a trail may pass a non-collider outside the conditioning set, and a
/// collider that is in the set or has a descendant in it.
#[derive(Clone, Debug)]
pub struct DSeparation {
    p: usize,
    window: usize,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl DSeparation {
    pub fn new<T: Real>(dag: &UnrolledDag<T>) -> Self {
        let n = dag.num_nodes();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (x, y) in dag.edges() {
            parents[dag.index(y)].push(dag.index(x));
            children[dag.index(x)].push(dag.index(y));
        }
        Self {
            p: dag.p(),
            window: dag.window_len(),
            parents,
            children,
        }
    }

    fn index(&self, node: Node) -> Result<usize> {
        if node.var >= self.p || node.time >= self.window {
            return Err(Error::InvalidNode {
                var: node.var + 1,
                time: node.time + 1,
                p: self.p,
                window: self.window,
            });
        }
        Ok(node.time * self.p + node.var)
    }

    pub fn query(&self, a: Node, b: Node, given: &[Node]) -> Result<bool> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        if a == b {
            return Err(Error::InvalidInput(format!(
                "query endpoints coincide at {a}"
            )));
        }
        let n = self.parents.len();
        let mut in_given = vec![false; n];
        for &z in given {
            in_given[self.index(z)?] = true;
        }
        if in_given[ia] || in_given[ib] {
            return Err(Error::InvalidInput(
                "query endpoints must not be in the conditioning set".into(),
            ));
        }
        // Adjacent nodes are d-connected under every conditioning set.
        if self.parents[ib].contains(&ia) || self.parents[ia].contains(&ib) {
            return Ok(false);
        }
        // Nodes with a descendant (or themselves) in `given`.
        let mut opens_collider = in_given.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&i| in_given[i]).collect();
        while let Some(i) = stack.pop() {
            for &pa in &self.parents[i] {
                if !opens_collider[pa] {
                    opens_collider[pa] = true;
                    stack.push(pa);
                }
            }
        }

        const UP: usize = 0; // arrived from a child
        const DOWN: usize = 1; // arrived from a parent
        let mut visited = vec![[false; 2]; n];
        let mut queue = VecDeque::new();
        queue.push_back((ia, UP));
        while let Some((i, dir)) = queue.pop_front() {
            if visited[i][dir] {
                continue;
            }
            visited[i][dir] = true;
            if i == ib {
                return Ok(false);
            }
            if dir == UP {
                if !in_given[i] {
                    queue.extend(self.parents[i].iter().map(|&j| (j, UP)));
                    queue.extend(self.children[i].iter().map(|&j| (j, DOWN)));
                }
            } else {
                if !in_given[i] {
                    queue.extend(self.children[i].iter().map(|&j| (j, DOWN)));
                }
                if opens_collider[i] {
                    queue.extend(self.parents[i].iter().map(|&j| (j, UP)));
                }
            }
        }
        Ok(true)
    }
}
