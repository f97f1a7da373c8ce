#![allow(dead_code)]

use cits_core::{Node, UnrolledDag};
use rand::Rng;

/// All lag edges `(u, v, lag)` with `lag` in `1..=tau`, each kept with probability `prob`.
pub fn random_lags<R: Rng>(
    rng: &mut R,
    p: usize,
    tau: usize,
    prob: f64,
) -> Vec<(usize, usize, usize)> {
    let mut lags = Vec::new();
    for u in 0..p {
        for v in 0..p {
            for lag in 1..=tau {
                if rng.random_bool(prob) {
                    lags.push((u, v, lag));
                }
            }
        }
    }
    lags
}

/// A general DAG on `m` nodes embedded in a window: node `i` sits at
/// `(var i, time i)`, so any forward edge `i -> j` is a valid window edge.
pub fn embedded_dag<R: Rng>(rng: &mut R, m: usize, prob: f64) -> (UnrolledDag<f64>, Vec<Node>) {
    let tau = m.max(2) - 1;
    let nodes: Vec<Node> = (0..m).map(|i| Node::new(i, i)).collect();
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.random_bool(prob) {
                edges.push((nodes[i], nodes[j]));
            }
        }
    }
    (UnrolledDag::new(m, tau, edges).unwrap(), nodes)
}

/// Reference d-separation by enumerating every simple path of the skeleton
/// between the queried nodes, restricted to the node list `nodes`.
pub struct PathOracle {
    nodes: Vec<Node>,
    adj: Vec<Vec<bool>>,
    descendants: Vec<Vec<bool>>,
}

impl PathOracle {
    pub fn new(dag: &UnrolledDag<f64>, nodes: &[Node]) -> Self {
        let m = nodes.len();
        let pos = |x: Node| nodes.iter().position(|&y| y == x);
        let mut adj = vec![vec![false; m]; m];
        for (a, b) in dag.edges() {
            let (i, j) = (
                pos(a).expect("edge inside node list"),
                pos(b).expect("edge inside node list"),
            );
            adj[i][j] = true;
        }
        let mut descendants = vec![vec![false; m]; m];
        for (s, row) in descendants.iter_mut().enumerate() {
            let mut stack = vec![s];
            row[s] = true;
            while let Some(i) = stack.pop() {
                for j in 0..m {
                    if adj[i][j] && !row[j] {
                        row[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        Self {
            nodes: nodes.to_vec(),
            adj,
            descendants,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> Node {
        self.nodes[i]
    }

    /// Every simple path between `a` and `b` in the skeleton.
    pub fn paths(&self, a: usize, b: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = vec![a];
        let mut on = vec![false; self.len()];
        on[a] = true;
        self.extend(b, &mut path, &mut on, &mut out);
        out
    }

    fn extend(&self, b: usize, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == b {
            out.push(path.clone());
            return;
        }
        for next in 0..self.len() {
            if !on[next] && (self.adj[last][next] || self.adj[next][last]) {
                on[next] = true;
                path.push(next);
                self.extend(b, path, on, out);
                path.pop();
                on[next] = false;
            }
        }
    }

    /// Whether `path` is active given the node set `given` (indexed by position).
    pub fn active(&self, path: &[usize], given: &[bool]) -> bool {
        path.windows(3).all(|w| {
            let (x, m, y) = (w[0], w[1], w[2]);
            let collider = self.adj[x][m] && self.adj[y][m];
            if collider {
                (0..self.len()).any(|d| given[d] && self.descendants[m][d])
            } else {
                !given[m]
            }
        })
    }

    pub fn separated(&self, a: usize, b: usize, given: &[bool]) -> bool {
        !self.paths(a, b).iter().any(|p| self.active(p, given))
    }
}

/// Edges of `dag` into its last time slice.
pub fn target_edges(dag: &UnrolledDag<f64>) -> Vec<(Node, Node)> {
    dag.edges()
        .filter(|(_, b)| b.time == dag.target_time())
        .collect()
}
