//! Skeleton graph: endpoint/junction nodes joined by pixel chains.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::PixelSkeleton;
use crate::geometry::Vec2;

pub type Px = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Isolated,
    Endpoint,
    Junction,
    /// Pixel promoted to a node to anchor a closed loop without junctions.
    Loop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonNode {
    pub kind: NodeKind,
    /// Adjacent junction pixels are merged into one node.
    pub pixels: Vec<Px>,
    /// Cluster pixel closest to the cluster centroid.
    pub pos: Px,
}

impl SkeletonNode {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.pos.0 as f64, self.pos.1 as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonEdge {
    /// Stable across orientation, so directed and undirected views can be related.
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Chain from a pixel of `from` to a pixel of `to`, inclusive.
    pub pixels: Vec<Px>,
}

impl SkeletonEdge {
    pub fn mean_y(&self) -> f64 {
        self.pixels.iter().map(|p| p.1 as f64).sum::<f64>() / self.pixels.len().max(1) as f64
    }

    pub fn other(&self, node: usize) -> usize {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }

    /// Pixels ordered starting at `node`.
    pub fn pixels_from(&self, node: usize) -> Vec<Px> {
        if self.from == node {
            self.pixels.clone()
        } else {
            self.pixels.iter().rev().copied().collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGraph {
    pub nodes: Vec<SkeletonNode>,
    pub edges: Vec<SkeletonEdge>,
    /// When set, every edge points from `from` (lower in the image) to `to`.
    pub directed: bool,
}

impl SkeletonGraph {
    pub fn incident(&self, node: usize) -> impl Iterator<Item = &SkeletonEdge> {
        self.edges.iter().filter(move |e| e.from == node || e.to == node)
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &SkeletonEdge> {
        self.edges.iter().filter(move |e| e.from == node)
    }

    pub fn edge_by_id(&self, id: usize) -> Option<&SkeletonEdge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// True when some undirected cycle (including self-loops) exists.
    pub fn has_cycle(&self) -> bool {
        let mut uf = UnionFind::new(self.nodes.len());
        self.edges.iter().any(|e| !uf.union(e.from, e.to))
    }

    /// Kahn topological sort over the directed edges.
    pub fn is_acyclic_directed(&self) -> bool {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for e in self.edges.iter().filter(|e| e.from == v) {
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    stack.push(e.to);
                }
            }
        }
        seen == n
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

const NONE: u32 = u32::MAX;

pub fn build_graph(skel: &PixelSkeleton) -> SkeletonGraph {
    let (w, h) = (skel.width(), skel.height());
    let idx = |p: Px| (p.1 * w + p.0) as usize;
    let neighbors = |p: Px| skel.neighbors(p);

    let pixels = skel.pixels();
    let degree: Vec<usize> = pixels.iter().map(|&p| neighbors(p).len()).collect();
    let mut node_of = vec![NONE; (w * h) as usize];
    let mut nodes: Vec<SkeletonNode> = Vec::new();

    // Endpoints and isolated pixels.
    for (i, &p) in pixels.iter().enumerate() {
        let kind = match degree[i] {
            0 => NodeKind::Isolated,
            1 => NodeKind::Endpoint,
            _ => continue,
        };
        node_of[idx(p)] = nodes.len() as u32;
        nodes.push(SkeletonNode { kind, pixels: vec![p], pos: p });
    }
    // Junction clusters.
    let is_junction: HashSet<Px> =
        pixels.iter().zip(&degree).filter(|(_, &d)| d >= 3).map(|(&p, _)| p).collect();
    for (i, &p) in pixels.iter().enumerate() {
        if degree[i] < 3 || node_of[idx(p)] != NONE {
            continue;
        }
        let id = nodes.len() as u32;
        let mut cluster = vec![p];
        node_of[idx(p)] = id;
        let mut k = 0;
        while k < cluster.len() {
            for q in neighbors(cluster[k]) {
                if is_junction.contains(&q) && node_of[idx(q)] == NONE {
                    node_of[idx(q)] = id;
                    cluster.push(q);
                }
            }
            k += 1;
        }
        let cx = cluster.iter().map(|p| p.0 as f64).sum::<f64>() / cluster.len() as f64;
        let cy = cluster.iter().map(|p| p.1 as f64).sum::<f64>() / cluster.len() as f64;
        let pos = *cluster
            .iter()
            .min_by(|a, b| {
                let da = (a.0 as f64 - cx).powi(2) + (a.1 as f64 - cy).powi(2);
                let db = (b.0 as f64 - cx).powi(2) + (b.1 as f64 - cy).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        nodes.push(SkeletonNode { kind: NodeKind::Junction, pixels: cluster, pos });
    }

    let mut edges: Vec<SkeletonEdge> = Vec::new();
    let mut visited = vec![false; (w * h) as usize];
    let mut direct_links: HashSet<(Px, Px)> = HashSet::new();

    for (n, node) in nodes.iter().enumerate() {
        for &p in &node.pixels {
            for q in skel.neighbors(p) {
                let owner = node_of[idx(q)];
                if owner as usize == n {
                    continue;
                }
                if owner != NONE {
                    // Adjacent nodes: a chain with no interior pixels.
                    let key = if p <= q { (p, q) } else { (q, p) };
                    if direct_links.insert(key) {
                        edges.push(SkeletonEdge { id: edges.len(), from: n, to: owner as usize, pixels: vec![p, q] });
                    }
                } else if !visited[idx(q)] {
                    let e = trace_chain(skel, &node_of, &mut visited, n, p, q, edges.len());
                    edges.push(e);
                }
            }
        }
    }

    // Remaining unvisited pixels lie on junction-free loops.
    for &p in pixels {
        if node_of[idx(p)] != NONE || visited[idx(p)] {
            continue;
        }
        let id = nodes.len();
        node_of[idx(p)] = id as u32;
        nodes.push(SkeletonNode { kind: NodeKind::Loop, pixels: vec![p], pos: p });
        if let Some(q) = skel.neighbors(p).into_iter().find(|&q| !visited[idx(q)]) {
            let e = trace_chain(skel, &node_of, &mut visited, id, p, q, edges.len());
            edges.push(e);
        }
    }

    SkeletonGraph { nodes, edges, directed: false }
}

/// Walks degree-2 pixels from `first` until another node pixel is reached.
fn trace_chain(
    skel: &PixelSkeleton,
    node_of: &[u32],
    visited: &mut [bool],
    start_node: usize,
    start: Px,
    first: Px,
    id: usize,
) -> SkeletonEdge {
    let w = skel.width();
    let idx = |p: Px| (p.1 * w + p.0) as usize;
    let mut chain = vec![start];
    let mut prev = start;
    let mut cur = first;
    loop {
        let owner = node_of[idx(cur)];
        if owner != NONE {
            chain.push(cur);
            return SkeletonEdge { id, from: start_node, to: owner as usize, pixels: chain };
        }
        visited[idx(cur)] = true;
        chain.push(cur);
        let next = skel
            .neighbors(cur)
            .into_iter()
            .find(|&q| q != prev && (node_of[idx(q)] != NONE || !visited[idx(q)]));
        match next {
            Some(n) => {
                prev = cur;
                cur = n;
            }
            None => {
                // Spur that ends without an endpoint pixel; close it on the start node.
                return SkeletonEdge { id, from: start_node, to: start_node, pixels: chain };
            }
        }
    }
}

/// Orders two node positions: the one higher in the image (smaller y, then
/// smaller x) is the head.
fn is_above(a: Px, b: Px) -> bool {
    (a.1, a.0) < (b.1, b.0)
}

/// Directs every edge upward (toward `-Y`) and removes cycle-closing edges,
/// dropping on each cycle the edge lowest in the image (largest mean y).
pub fn orient_up(graph: &SkeletonGraph) -> SkeletonGraph {
    let mut order: Vec<&SkeletonEdge> = graph.edges.iter().filter(|e| e.from != e.to).collect();
    order.sort_by(|a, b| a.mean_y().total_cmp(&b.mean_y()).then(a.id.cmp(&b.id)));
    let mut uf = UnionFind::new(graph.nodes.len());
    let mut kept: Vec<SkeletonEdge> = order
        .into_iter()
        .filter(|e| uf.union(e.from, e.to))
        .map(|e| {
            let (pa, pb) = (graph.nodes[e.from].pos, graph.nodes[e.to].pos);
            if is_above(pb, pa) {
                e.clone()
            } else {
                SkeletonEdge { id: e.id, from: e.to, to: e.from, pixels: e.pixels.iter().rev().copied().collect() }
            }
        })
        .collect();
    kept.sort_by_key(|e| e.id);
    SkeletonGraph { nodes: graph.nodes.clone(), edges: kept, directed: true }
}
