//! Finite graphs: truncated trees and random regular graphs.
//!
//! Vertices are numbered `0..n`. Trees are numbered in breadth-first order
//! from the root `0`, so every child has a larger index than its parent and a
//! reverse sweep over the indices visits leaves before their ancestors.

mod hamiltonian;
mod resolvent;
mod transport;

use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exact::TreeParams;
use crate::rng::{index, RngHandle};
use crate::{Error, Result};

pub use hamiltonian::{assemble_hamiltonian, diagonalize, DisorderRealization, Hamiltonian, SpectralDecomposition, DENSE_CAP};
pub use resolvent::{
    check_im_propagation, exact_resolvent_root, resonance_count, resonance_ensemble, ImPropagation, ResonanceConfig,
    ResonanceCount, ResonanceRow, TreeResolvent,
};
pub use transport::{
    default_time_grid, dynamical_localization_profile, evolve_second_moment, fit_localization_length, EnergyWindow,
    LocalizationFit,
};

/// Largest graph the builders will construct.
pub const MAX_VERTICES: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeFlavor {
    /// Every vertex has `K` children (root degree `K`).
    Rooted,
    /// Ball in the Bethe lattice (root degree `K + 1`).
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    TruncatedTree { k: u32, depth: u32, flavor: TreeFlavor },
    RandomRegular { n: usize, degree: u32, seed: String },
    Custom,
}

/// Undirected simple graph with adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGraph {
    kind: GraphKind,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    distances: Option<Vec<u32>>,
    parent: Option<Vec<u32>>,
}

const NO_PARENT: u32 = u32::MAX;

/// Number of vertices of the rooted tree or ball of depth `depth`.
pub fn tree_size(k: u32, depth: u32, flavor: TreeFlavor) -> Option<usize> {
    let k = k as u128;
    let mut total: u128 = 1;
    let mut layer: u128 = 1;
    for level in 1..=depth {
        layer = layer.checked_mul(if level == 1 && flavor == TreeFlavor::Ball { k + 1 } else { k })?;
        total = total.checked_add(layer)?;
        if total > MAX_VERTICES as u128 {
            return None;
        }
    }
    usize::try_from(total).ok()
}

impl FiniteGraph {
    /// Graph from an explicit edge list (checked for range, loops and duplicates).
    pub fn from_edges(n_vertices: usize, edges: Vec<(u32, u32)>, kind: GraphKind) -> Result<Self> {
        if n_vertices > MAX_VERTICES {
            return Err(Error::Size(format!("{n_vertices} vertices exceed the cap {MAX_VERTICES}")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut degree = vec![0usize; n_vertices];
        for &(u, v) in &edges {
            if u as usize >= n_vertices || v as usize >= n_vertices {
                return Err(Error::Config(format!("edge ({u}, {v}) out of range for {n_vertices} vertices")));
            }
            if u == v {
                return Err(Error::Config(format!("self-loop at vertex {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::Config(format!("duplicate edge ({u}, {v})")));
            }
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0usize; n_vertices + 1];
        for i in 0..n_vertices {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n_vertices]];
        for &(u, v) in &edges {
            targets[fill[u as usize]] = v;
            fill[u as usize] += 1;
            targets[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        Ok(Self { kind, edges, offsets, targets, distances: None, parent: None })
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    pub fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Distances from vertex `0`, recorded for trees.
    pub fn distances_from_root(&self) -> Option<&[u32]> {
        self.distances.as_deref()
    }

    /// Tree depth (`None` for non-tree graphs).
    pub fn depth(&self) -> Option<u32> {
        match self.kind {
            GraphKind::TruncatedTree { depth, .. } => Some(depth),
            _ => None,
        }
    }

    pub fn is_tree(&self) -> bool {
        self.parent.is_some()
    }

    /// Parent of `v` in a tree (`None` for the root or non-tree graphs).
    pub fn parent(&self, v: usize) -> Option<usize> {
        let p = self.parent.as_ref()?[v];
        (p != NO_PARENT).then_some(p as usize)
    }

    /// Children of `v` in a tree.
    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let parent = self.parent.as_ref().map(|p| p[v]);
        self.neighbors(v)
            .iter()
            .copied()
            .filter(move |&w| Some(w) != parent)
            .map(|w| w as usize)
    }

    /// Breadth-first distances from `source` (`u32::MAX` for unreachable vertices).
    pub fn bfs_distances(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n_vertices()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &w in self.neighbors(u) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u] + 1;
                    queue.push_back(w as usize);
                }
            }
        }
        dist
    }

    /// Writes `# graph ...` metadata, a `u,v` header and one edge per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        let meta = match &self.kind {
            GraphKind::TruncatedTree { k, depth, flavor } => format!(
                "kind=truncated_tree K={k} L={depth} flavor={} n={}",
                match flavor {
                    TreeFlavor::Rooted => "rooted",
                    TreeFlavor::Ball => "ball",
                },
                self.n_vertices()
            ),
            GraphKind::RandomRegular { n, degree, seed } => {
                format!("kind=random_regular K={} N={n} seed={seed} n={n}", degree - 1)
            }
            GraphKind::Custom => format!("kind=custom n={}", self.n_vertices()),
        };
        writeln!(out, "# graph {meta}")?;
        writeln!(out, "u,v")?;
        for (u, v) in &self.edges {
            writeln!(out, "{u},{v}")?;
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_edge_list(f)
    }

    /// Reads the format written by [`write_edge_list`](Self::write_edge_list).
    /// Trees are rebuilt with their metadata; other graphs come back as `Custom`
    /// unless they are regular random graphs.
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let meta = lines.next().ok_or_else(|| Error::Config("empty edge list".into()))??;
        let fields: std::collections::HashMap<&str, &str> = meta
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|f| f.split_once('='))
            .collect();
        let get = |key: &str| -> Result<&str> {
            fields.get(key).copied().ok_or_else(|| Error::Config(format!("edge list header lacks `{key}`")))
        };
        let parse_u = |key: &str| -> Result<u64> {
            get(key)?.parse::<u64>().map_err(|_| Error::Config(format!("bad `{key}` in edge list header")))
        };
        let n = parse_u("n")? as usize;
        let mut edges = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "u,v" {
                continue;
            }
            let (u, v) = line.split_once(',').ok_or_else(|| Error::Config(format!("bad edge line `{line}`")))?;
            let parse = |s: &str| s.trim().parse::<u32>().map_err(|_| Error::Config(format!("bad vertex `{s}`")));
            edges.push((parse(u)?, parse(v)?));
        }
        match get("kind")? {
            "truncated_tree" => {
                let flavor = match get("flavor")? {
                    "rooted" => TreeFlavor::Rooted,
                    "ball" => TreeFlavor::Ball,
                    other => return Err(Error::Config(format!("unknown tree flavor `{other}`"))),
                };
                let g = build_truncated_tree(TreeParams::new(parse_u("K")? as u32)?, parse_u("L")? as u32, flavor)?;
                let mut a: Vec<(u32, u32)> = g.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
                let mut b: Vec<(u32, u32)> = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    return Err(Error::Config("edge list does not match its tree header".into()));
                }
                Ok(g)
            }
            "random_regular" => {
                let kind = GraphKind::RandomRegular {
                    n,
                    degree: parse_u("K")? as u32 + 1,
                    seed: get("seed")?.to_string(),
                };
                Self::from_edges(n, edges, kind)
            }
            _ => Self::from_edges(n, edges, GraphKind::Custom),
        }
    }

    pub fn load_edge_list(path: &Path) -> Result<Self> {
        Self::read_edge_list(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Rooted tree `T_L` or Bethe-lattice ball of radius `depth`.
pub fn build_truncated_tree(tree: TreeParams, depth: u32, flavor: TreeFlavor) -> Result<FiniteGraph> {
    let k = tree.k();
    let n = tree_size(k, depth, flavor).ok_or_else(|| {
        Error::Size(format!("tree with K = {k}, L = {depth} exceeds {MAX_VERTICES} vertices"))
    })?;
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut parent = vec![NO_PARENT; n];
    let mut distances = vec![0u32; n];
    let mut next = 1usize;
    for u in 0..n {
        if distances[u] == depth {
            continue;
        }
        let n_children = if u == 0 && flavor == TreeFlavor::Ball { k + 1 } else { k };
        for _ in 0..n_children {
            edges.push((u as u32, next as u32));
            parent[next] = u as u32;
            distances[next] = distances[u] + 1;
            next += 1;
        }
    }
    debug_assert_eq!(next, n);
    let mut g = FiniteGraph::from_edges(n, edges, GraphKind::TruncatedTree { k, depth, flavor })?;
    g.distances = Some(distances);
    g.parent = Some(parent);
    Ok(g)
}

/// Maximum number of pairings attempted before giving up.
pub const MAX_PAIRING_ATTEMPTS: usize = 10_000;

/// Uniform simple `(K+1)`-regular graph on `n` vertices by the pairing model
/// with full restart on loops or multi-edges.
pub fn build_random_regular(tree: TreeParams, n: usize, rng: &RngHandle) -> Result<FiniteGraph> {
    let d = tree.k() as usize + 1;
    if n <= d {
        return Err(Error::Config(format!("need N > K + 1 = {d}, got {n}")));
    }
    if (n * d) % 2 != 0 {
        return Err(Error::Config(format!("N (K + 1) must be even, got N = {n}, K + 1 = {d}")));
    }
    if n > MAX_VERTICES {
        return Err(Error::Size(format!("{n} vertices exceed the cap {MAX_VERTICES}")));
    }
    let mut r = rng.rng();
    let mut stubs: Vec<u32> = Vec::with_capacity(n * d);
    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(n * d / 2);
    'attempt: for _ in 0..MAX_PAIRING_ATTEMPTS {
        stubs.clear();
        for v in 0..n as u32 {
            stubs.extend(std::iter::repeat_n(v, d));
        }
        for i in (1..stubs.len()).rev() {
            let j = index(&mut r, i + 1);
            stubs.swap(i, j);
        }
        seen.clear();
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || !seen.insert((u, v)) {
                continue 'attempt;
            }
            edges.push((u, v));
        }
        let kind = GraphKind::RandomRegular { n, degree: d as u32, seed: rng.describe() };
        return FiniteGraph::from_edges(n, edges, kind);
    }
    Err(Error::Sampling(format!(
        "no simple pairing found for N = {n}, degree {d} after {MAX_PAIRING_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(k: u32) -> TreeParams {
        TreeParams::new(k).unwrap()
    }

    #[test]
    fn tree_sizes() {
        let g = build_truncated_tree(k(2), 0, TreeFlavor::Rooted).unwrap();
        assert_eq!((g.n_vertices(), g.edges().len()), (1, 0));
        assert_eq!(build_truncated_tree(k(2), 3, TreeFlavor::Rooted).unwrap().n_vertices(), 15);
        assert_eq!(build_truncated_tree(k(2), 2, TreeFlavor::Ball).unwrap().n_vertices(), 10);
        assert_eq!(tree_size(3, 4, TreeFlavor::Ball), Some(1 + 4 * (81 - 1) / 2));
    }

    #[test]
    fn oversized_tree_is_rejected() {
        assert!(matches!(build_truncated_tree(k(2), 30, TreeFlavor::Rooted), Err(Error::Size(_))));
    }

    #[test]
    fn tree_structure() {
        let g = build_truncated_tree(k(3), 4, TreeFlavor::Ball).unwrap();
        let d = g.distances_from_root().unwrap();
        assert_eq!(d, g.bfs_distances(0).as_slice());
        assert_eq!(g.degree(0), 4);
        for v in 1..g.n_vertices() {
            let p = g.parent(v).unwrap();
            assert!(p < v);
            assert_eq!(d[v], d[p] + 1);
            assert!(g.degree(v) <= 4);
        }
        assert_eq!(g.edges().len(), g.n_vertices() - 1);
    }

    #[test]
    fn random_regular_is_simple_and_regular() {
        let g = build_random_regular(k(2), 10, &RngHandle::new(3)).unwrap();
        assert!((0..10).all(|v| g.degree(v) == 3));
        let g = build_random_regular(k(4), 101 * 2, &RngHandle::new(4)).unwrap();
        assert!((0..g.n_vertices()).all(|v| g.degree(v) == 5));
    }

    #[test]
    fn random_regular_preconditions() {
        assert!(build_random_regular(k(2), 3, &RngHandle::new(1)).is_err());
        assert!(build_random_regular(k(2), 11, &RngHandle::new(1)).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build_truncated_tree(k(2), 3, TreeFlavor::Ball).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(FiniteGraph::read_edge_list(buf.as_slice()).unwrap(), g);
        let r = build_random_regular(k(2), 50, &RngHandle::new(8)).unwrap();
        let mut buf = Vec::new();
        r.write_edge_list(&mut buf).unwrap();
        assert_eq!(FiniteGraph::read_edge_list(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert!(FiniteGraph::from_edges(2, vec![(0, 0)], GraphKind::Custom).is_err());
        assert!(FiniteGraph::from_edges(2, vec![(0, 1), (1, 0)], GraphKind::Custom).is_err());
        assert!(FiniteGraph::from_edges(2, vec![(0, 2)], GraphKind::Custom).is_err());
    }
}
