//! Graph types shared by every stage of the learner.
//!
//! All graphs are stored densely: `D` never exceeds a few hundred nodes in
//! practice, and the skeleton and search phases probe adjacency far more
//! often than they enumerate it.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square boolean matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl BitMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.n + j] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::new(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Packs the matrix into 64-bit words; used as a structure fingerprint.
    pub fn to_words(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.bits.len().div_ceil(64)];
        for (k, &b) in self.bits.iter().enumerate() {
            if b {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        words
    }
}

/// Returns a topological order of the directed graph `arrows`
/// (`arrows[i][j]` means `i -> j`).
///
/// Among the nodes ready at each step the smallest index is emitted first,
/// so the empty graph yields the identity permutation.
pub fn topological_order(arrows: &BitMatrix) -> Result<Vec<usize>> {
    let n = arrows.dim();
    let mut indeg = vec![0usize; n];
    for i in 0..n {
        for (j, d) in indeg.iter_mut().enumerate() {
            if arrows.get(i, j) {
                *d += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for w in 0..n {
            if arrows.get(v, w) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(Error::CycleDetected {
        cycle: find_cycle(arrows, &indeg),
    })
}

/// Walks backwards through nodes with unresolved in-degree until a node
/// repeats; every such node has a predecessor that is also unresolved.
fn find_cycle(arrows: &BitMatrix, indeg: &[usize]) -> Vec<usize> {
    let n = arrows.dim();
    let start = match (0..n).find(|&v| indeg[v] > 0) {
        Some(v) => v,
        None => return Vec::new(),
    };
    let mut seen = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = path.len();
        path.push(v);
        v = (0..n)
            .find(|&u| indeg[u] > 0 && arrows.get(u, v))
            .expect("unresolved node has an unresolved parent");
    }
    let mut cycle = path[seen[v]..].to_vec();
    cycle.reverse();
    cycle
}

/// Undirected adjacency produced by the skeleton phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    adj: BitMatrix,
}

impl Skeleton {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: BitMatrix::new(n),
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                s.add_edge(i, j);
            }
        }
        s
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &(a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
            s.add_edge(a, b);
        }
        Ok(s)
    }

    /// Accepts a matrix only if it is symmetric with an empty diagonal.
    pub fn from_matrix(adj: BitMatrix) -> Result<Self> {
        if !adj.is_symmetric() {
            return Err(Error::InvalidGraph("skeleton must be symmetric".into()));
        }
        if (0..adj.dim()).any(|i| adj.get(i, i)) {
            return Err(Error::InvalidGraph("skeleton has a self loop".into()));
        }
        Ok(Self { adj })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.adj.dim()
    }

    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj.get(a, b)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert_ne!(a, b, "self loops are not allowed");
        self.adj.set(a, b, true);
        self.adj.set(b, a, true);
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.adj.set(a, b, false);
        self.adj.set(b, a, false);
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&u| self.adj.get(v, u)).collect()
    }

    /// Edges as `(a, b)` with `a < b`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if self.adj.get(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.adj.count_ones() / 2
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.adj
    }

    pub fn is_subgraph_of(&self, other: &Skeleton) -> bool {
        self.edges().iter().all(|&(a, b)| other.has_edge(a, b))
    }
}

/// Directed acyclic graph; `arrows[i][j]` means `i -> j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dag {
    arrows: BitMatrix,
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Self {
            arrows: BitMatrix::new(n),
        }
    }

    pub fn from_arrows(n: usize, arrows: &[(usize, usize)]) -> Result<Self> {
        let mut m = BitMatrix::new(n);
        for &(a, b) in arrows {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("arrow ({a}, {b}) out of range")));
            }
            m.set(a, b, true);
        }
        Self::from_matrix(m)
    }

    pub fn from_matrix(arrows: BitMatrix) -> Result<Self> {
        let n = arrows.dim();
        for i in 0..n {
            if arrows.get(i, i) {
                return Err(Error::CycleDetected { cycle: vec![i] });
            }
        }
        topological_order(&arrows)?;
        Ok(Self { arrows })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.arrows.dim()
    }

    #[inline]
    pub fn has_arrow(&self, from: usize, to: usize) -> bool {
        self.arrows.get(from, to)
    }

    #[inline]
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.arrows.get(a, b) || self.arrows.get(b, a)
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&u| self.arrows.get(u, v)).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&u| self.arrows.get(v, u)).collect()
    }

    /// Arrows sorted lexicographically by `(from, to)`.
    pub fn arrows(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if self.arrows.get(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn n_arrows(&self) -> usize {
        self.arrows.count_ones()
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.arrows
    }

    pub fn skeleton(&self) -> Skeleton {
        let mut s = Skeleton::empty(self.n_nodes());
        for (a, b) in self.arrows() {
            s.add_edge(a, b);
        }
        s
    }

    pub fn topological_order(&self) -> Vec<usize> {
        topological_order(&self.arrows).expect("Dag invariant: acyclic")
    }

    /// Unshielded colliders `a -> c <- b` with `a < b`, as `(a, c, b)`.
    pub fn v_structures(&self) -> Vec<(usize, usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for c in 0..n {
            let pa = self.parents(c);
            for (x, &a) in pa.iter().enumerate() {
                for &b in &pa[x + 1..] {
                    if !self.adjacent(a, b) {
                        out.push((a, c, b));
                    }
                }
            }
        }
        out
    }
}

/// Completed partially directed graph representing a Markov equivalence class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cpdag {
    n: usize,
    directed: BTreeSet<(usize, usize)>,
    /// Stored as `(a, b)` with `a < b`.
    undirected: BTreeSet<(usize, usize)>,
}

impl Cpdag {
    pub fn new(
        n: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        undirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let directed: BTreeSet<_> = directed.into_iter().collect();
        let undirected: BTreeSet<_> = undirected
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        for &(a, b) in directed.iter().chain(undirected.iter()) {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
        }
        for &(a, b) in &directed {
            if directed.contains(&(b, a)) || undirected.contains(&(a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!(
                    "pair ({a}, {b}) carries more than one edge"
                )));
            }
        }
        Ok(Self {
            n,
            directed,
            undirected,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn undirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    /// State of the unordered pair `{a, b}` as seen from `a`.
    pub fn pair_state(&self, a: usize, b: usize) -> PairState {
        if self.directed.contains(&(a, b)) {
            PairState::Forward
        } else if self.directed.contains(&(b, a)) {
            PairState::Backward
        } else if self.undirected.contains(&(a.min(b), a.max(b))) {
            PairState::Undirected
        } else {
            PairState::Absent
        }
    }

    pub fn skeleton(&self) -> Skeleton {
        let mut s = Skeleton::empty(self.n);
        for &(a, b) in self.directed.iter().chain(self.undirected.iter()) {
            s.add_edge(a, b);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairState {
    Absent,
    Undirected,
    Forward,
    Backward,
}

/// Prior knowledge on arrow directions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeConstraints {
    pub blacklist: BTreeSet<(usize, usize)>,
    pub whitelist: BTreeSet<(usize, usize)>,
}

impl EdgeConstraints {
    pub fn new(
        blacklist: impl IntoIterator<Item = (usize, usize)>,
        whitelist: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        Self {
            blacklist: blacklist.into_iter().collect(),
            whitelist: whitelist.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.blacklist.is_empty() && self.whitelist.is_empty()
    }

    #[inline]
    pub fn forbids(&self, from: usize, to: usize) -> bool {
        self.blacklist.contains(&(from, to))
    }

    #[inline]
    pub fn requires(&self, from: usize, to: usize) -> bool {
        self.whitelist.contains(&(from, to))
    }

    /// Checks disjointness, index range and acyclicity of the whitelist.
    pub fn validate(&self, n: usize) -> Result<()> {
        for &(a, b) in self.blacklist.iter().chain(self.whitelist.iter()) {
            if a >= n || b >= n || a == b {
                return Err(Error::InconsistentConstraints(format!(
                    "arrow ({a}, {b}) is not a valid pair of distinct nodes"
                )));
            }
        }
        if let Some(&(a, b)) = self.blacklist.intersection(&self.whitelist).next() {
            return Err(Error::InconsistentConstraints(format!(
                "arrow {a} -> {b} is both blacklisted and whitelisted"
            )));
        }
        let mut m = BitMatrix::new(n);
        for &(a, b) in &self.whitelist {
            m.set(a, b, true);
        }
        if let Err(Error::CycleDetected { cycle }) = topological_order(&m) {
            return Err(Error::InconsistentConstraints(format!(
                "whitelist forces the cycle {cycle:?}"
            )));
        }
        Ok(())
    }
}

/// Read-only edge view used by the renderers.
pub trait EdgeView {
    fn n_nodes(&self) -> usize;
    /// Directed edges, sorted.
    fn directed_edges(&self) -> Vec<(usize, usize)>;
    /// Undirected edges as `(a, b)` with `a < b`, sorted.
    fn undirected_edges(&self) -> Vec<(usize, usize)>;
}

impl EdgeView for Dag {
    fn n_nodes(&self) -> usize {
        Dag::n_nodes(self)
    }
    fn directed_edges(&self) -> Vec<(usize, usize)> {
        self.arrows()
    }
    fn undirected_edges(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }
}

impl EdgeView for Skeleton {
    fn n_nodes(&self) -> usize {
        Skeleton::n_nodes(self)
    }
    fn directed_edges(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }
    fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.edges()
    }
}

impl EdgeView for Cpdag {
    fn n_nodes(&self) -> usize {
        self.n
    }
    fn directed_edges(&self) -> Vec<(usize, usize)> {
        self.directed.iter().copied().collect()
    }
    fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.undirected.iter().copied().collect()
    }
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders a graph as DOT. Arrows use `->`, undirected edges `--`; edge
/// statements are emitted in lexicographic order of their endpoints.
///
/// Mixed graphs cannot use the `digraph`/`graph` split, so everything goes
/// into a `digraph` and undirected edges carry `dir=none`.
pub fn graph_to_dot<G: EdgeView + ?Sized>(g: &G, names: &[String]) -> String {
    assert_eq!(names.len(), g.n_nodes(), "one name per node");
    let mut out = String::from("digraph bn {\n");
    for name in names {
        let _ = writeln!(out, "  {};", dot_quote(name));
    }
    let mut lines: Vec<((usize, usize), String)> = Vec::new();
    for (a, b) in g.directed_edges() {
        lines.push((
            (a, b),
            format!("  {} -> {};", dot_quote(&names[a]), dot_quote(&names[b])),
        ));
    }
    for (a, b) in g.undirected_edges() {
        lines.push((
            (a, b),
            format!(
                "  {} -- {} [dir=none];",
                dot_quote(&names[a]),
                dot_quote(&names[b])
            ),
        ));
    }
    lines.sort();
    for (_, line) in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// On-disk JSON graph: node names plus index pairs into `nodes`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub directed: Vec<[usize; 2]>,
    #[serde(default)]
    pub undirected: Vec<[usize; 2]>,
}

impl GraphJson {
    pub fn from_graph<G: EdgeView + ?Sized>(g: &G, names: &[String]) -> Self {
        assert_eq!(names.len(), g.n_nodes(), "one name per node");
        Self {
            nodes: names.to_vec(),
            directed: g.directed_edges().into_iter().map(|(a, b)| [a, b]).collect(),
            undirected: g.undirected_edges().into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }

    pub fn to_cpdag(&self) -> Result<Cpdag> {
        Cpdag::new(
            self.nodes.len(),
            self.directed.iter().map(|e| (e[0], e[1])),
            self.undirected.iter().map(|e| (e[0], e[1])),
        )
    }

    pub fn to_dag(&self) -> Result<Dag> {
        if !self.undirected.is_empty() {
            return Err(Error::InvalidGraph("a DAG has no undirected edges".into()));
        }
        let arrows: Vec<_> = self.directed.iter().map(|e| (e[0], e[1])).collect();
        Dag::from_arrows(self.nodes.len(), &arrows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
