//! Primary and secondary branch curves from the skeleton graph.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::graph::{build_graph, orient_up, Px, SkeletonGraph};
use super::{medial_axis, BinaryMask, PixelSkeleton};
use crate::geometry::{CubicBezier2D, Polyline, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    /// Distance from the fitted curve within which a skeletal pixel is an inlier (px).
    pub inlier_px: f64,
    /// Arc-length spacing of the representative samples (px).
    pub sample_spacing_px: f64,
    /// Minimum number of distinct inlier rows for a primary detection.
    pub min_primary_score: usize,
    /// Upper bound on candidate paths examined per search.
    pub max_paths: usize,
    pub secondary_min_length_px: f64,
    pub secondary_min_inlier_rate: f64,
    /// Primary-curve parameter range counted as the branch interior.
    pub attach_t_min: f64,
    pub attach_t_max: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            inlier_px: 4.0,
            sample_spacing_px: 30.0,
            min_primary_score: 50,
            max_paths: 10_000,
            secondary_min_length_px: 40.0,
            secondary_min_inlier_rate: 0.75,
            attach_t_min: 0.05,
            attach_t_max: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample2D {
    pub pixel: Vec2,
    pub radius_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub kind: BranchKind,
    pub curve: CubicBezier2D,
    pub samples: Vec<CurveSample2D>,
    /// Parameter on the primary curve where a secondary attaches.
    pub attachment_t: Option<f64>,
    pub attachment_px: Option<Vec2>,
    /// Primary: distinct rows among inliers. Secondary: inlier pixel count.
    pub score: usize,
    pub inliers: Vec<Px>,
    pub inlier_rate: f64,
    pub length_px: f64,
    pub path_nodes: Vec<usize>,
    pub path_edges: Vec<usize>,
    /// Set when the path enumeration hit its cap.
    pub truncated: bool,
}

impl Detection2D {
    /// Dense polyline of the curve, about four vertices per pixel of length.
    pub fn polyline(&self) -> Polyline<2> {
        dense_polyline(&self.curve)
    }

    pub fn distance(&self, p: &Vec2) -> f64 {
        self.curve.distance(p)
    }
}

/// Per-frame 2D detection result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame2D {
    pub primary: Option<Detection2D>,
    pub secondaries: Vec<Detection2D>,
    pub truncated: bool,
}

pub fn detect(mask: &BinaryMask, params: &DetectParams) -> Frame2D {
    let skel = medial_axis(mask);
    let graph = build_graph(&skel);
    let directed = orient_up(&graph);
    let primary = find_primary(&directed, &skel, params);
    let secondaries = primary
        .as_ref()
        .map(|p| find_secondaries(&graph, &skel, p, params))
        .unwrap_or_default();
    let truncated = primary.as_ref().is_some_and(|p| p.truncated)
        || secondaries.iter().any(|s| s.truncated);
    Frame2D { primary, secondaries, truncated }
}

fn dense_polyline(curve: &CubicBezier2D) -> Polyline<2> {
    let n = ((curve.arc_length() * 4.0).ceil() as usize).clamp(8, 8192);
    Polyline::new(curve.sample(n))
}

/// Pixel chain for a sequence of edges, joined without repeating shared pixels.
fn path_pixels(graph: &SkeletonGraph, start: usize, edges: &[usize]) -> Vec<Px> {
    let mut node = start;
    let mut out: Vec<Px> = Vec::new();
    for &eid in edges {
        let e = graph.edge_by_id(eid).expect("edge id in graph");
        for p in e.pixels_from(node) {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        node = e.other(node);
    }
    out
}

fn to_vec2(p: &Px) -> Vec2 {
    Vec2::new(p.0 as f64, p.1 as f64)
}

fn fit_pixels(pixels: &[Px]) -> Option<CubicBezier2D> {
    if pixels.len() < 4 {
        return None;
    }
    let pts: Vec<Vec2> = pixels.iter().map(to_vec2).collect();
    CubicBezier2D::fit(&pts, None).ok()
}

/// Skeletal pixels within `tol` of the curve.
fn curve_inliers(curve: &CubicBezier2D, candidates: &[Px], tol: f64) -> Vec<Px> {
    let (mut lo, mut hi) = (curve.ctrl[0], curve.ctrl[0]);
    for c in &curve.ctrl[1..] {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    candidates
        .iter()
        .filter(|p| {
            let (x, y) = (p.0 as f64, p.1 as f64);
            x >= lo.x - tol && x <= hi.x + tol && y >= lo.y - tol && y <= hi.y + tol
        })
        .filter(|p| curve.distance(&to_vec2(p)) <= tol)
        .copied()
        .collect()
}

fn unique_rows(pixels: &[Px]) -> usize {
    pixels.iter().map(|p| p.1).collect::<HashSet<_>>().len()
}

/// Samples every `spacing` px of arc length, keeping those on the foreground;
/// each takes the radius of the nearest pixel in `radius_source`.
fn subsample(
    curve: &CubicBezier2D,
    skel: &PixelSkeleton,
    radius_source: &[Px],
    spacing: f64,
) -> Vec<CurveSample2D> {
    let line = dense_polyline(curve);
    line.resample(spacing)
        .into_iter()
        .filter(|p| skel.mask().contains(p))
        .filter_map(|p| {
            let nearest = radius_source.iter().min_by(|a, b| {
                (to_vec2(a) - p).norm_squared().total_cmp(&(to_vec2(b) - p).norm_squared())
            })?;
            Some(CurveSample2D { pixel: p, radius_px: skel.radius(*nearest)? })
        })
        .collect()
}

/// Best root-to-leaf path of the upward-directed graph, scored by the number
/// of distinct image rows among skeletal pixels near its fitted curve.
pub fn find_primary(
    graph: &SkeletonGraph,
    skel: &PixelSkeleton,
    params: &DetectParams,
) -> Option<Detection2D> {
    debug_assert!(graph.directed, "primary search runs on the oriented graph");
    let n = graph.nodes.len();
    let mut indeg = vec![0usize; n];
    for e in &graph.edges {
        indeg[e.to] += 1;
    }

    struct Best {
        score: usize,
        nodes: Vec<usize>,
        edges: Vec<usize>,
        curve: CubicBezier2D,
        inliers: Vec<Px>,
    }
    let mut best: Option<Best> = None;
    let mut examined = 0usize;
    let mut truncated = false;

    'roots: for root in (0..n).filter(|&i| indeg[i] == 0) {
        // Iterative DFS over (node, edge path) to every leaf.
        let mut stack: Vec<(usize, Vec<usize>, Vec<usize>)> = vec![(root, vec![root], Vec::new())];
        while let Some((node, nodes, edges)) = stack.pop() {
            let out: Vec<_> = graph.outgoing(node).collect();
            if out.is_empty() {
                if edges.is_empty() {
                    continue;
                }
                if examined >= params.max_paths {
                    truncated = true;
                    break 'roots;
                }
                examined += 1;
                let pixels = path_pixels(graph, root, &edges);
                let Some(curve) = fit_pixels(&pixels) else { continue };
                let inliers = curve_inliers(&curve, skel.pixels(), params.inlier_px);
                let score = unique_rows(&inliers);
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Best { score, nodes, edges, curve, inliers });
                }
                continue;
            }
            for e in out.into_iter().rev() {
                let mut nn = nodes.clone();
                nn.push(e.to);
                let mut ee = edges.clone();
                ee.push(e.id);
                stack.push((e.to, nn, ee));
            }
        }
    }

    let best = best?;
    if best.score < params.min_primary_score {
        return None;
    }
    let samples = subsample(&best.curve, skel, &best.inliers, params.sample_spacing_px);
    if samples.len() < 2 {
        return None;
    }
    Some(Detection2D {
        kind: BranchKind::Primary,
        length_px: best.curve.arc_length(),
        curve: best.curve,
        samples,
        attachment_t: None,
        attachment_px: None,
        score: best.score,
        inlier_rate: 1.0,
        inliers: best.inliers,
        path_nodes: best.nodes,
        path_edges: best.edges,
        truncated,
    })
}

/// Side branches leaving interior junctions of the primary path.
///
/// `graph` is the undirected skeleton graph the primary's oriented graph was
/// derived from.
/// Inlier count, inlier rate, curve, pixels, node path and edge path of a side-branch path.
type Candidate = (usize, f64, CubicBezier2D, Vec<Px>, Vec<usize>, Vec<usize>);

pub fn find_secondaries(
    graph: &SkeletonGraph,
    skel: &PixelSkeleton,
    primary: &Detection2D,
    params: &DetectParams,
) -> Vec<Detection2D> {
    let on_primary: HashSet<usize> = primary.path_nodes.iter().copied().collect();
    let primary_edges: HashSet<usize> = primary.path_edges.iter().copied().collect();
    let mut out = Vec::new();
    let mut examined = 0usize;
    let mut truncated = false;

    for &junction in &primary.path_nodes {
        if graph.incident(junction).count() < 3 {
            continue;
        }
        let (t_attach, _) = primary.curve.closest(&graph.nodes[junction].position());
        if !(params.attach_t_min..=params.attach_t_max).contains(&t_attach) {
            continue;
        }
        let junction_pixels: HashSet<Px> = graph.nodes[junction].pixels.iter().copied().collect();
        for start_edge in graph.incident(junction) {
            if primary_edges.contains(&start_edge.id) || start_edge.from == start_edge.to {
                continue;
            }
            // Every simple path leaving through `start_edge` and never touching
            // the primary path again is a candidate.
            let mut best: Option<Candidate> = None;
            let mut stack = vec![(vec![junction, start_edge.other(junction)], vec![start_edge.id])];
            while let Some((nodes, edges)) = stack.pop() {
                let tip = *nodes.last().unwrap();
                if on_primary.contains(&tip) {
                    continue;
                }
                if examined >= params.max_paths {
                    truncated = true;
                    break;
                }
                examined += 1;
                let pixels = path_pixels(graph, junction, &edges);
                if let Some(curve) = fit_pixels(&pixels) {
                    let inliers = curve_inliers(&curve, &pixels, params.inlier_px);
                    let rate = inliers.len() as f64 / pixels.len() as f64;
                    let better = best.as_ref().is_none_or(|b| {
                        inliers.len() > b.0 || (inliers.len() == b.0 && rate > b.1)
                    });
                    if rate >= params.secondary_min_inlier_rate && better {
                        best = Some((inliers.len(), rate, curve, pixels, nodes.clone(), edges.clone()));
                    }
                }
                for e in graph.incident(tip) {
                    let next = e.other(tip);
                    if e.from == e.to || edges.contains(&e.id) || nodes.contains(&next) {
                        continue;
                    }
                    let mut nn = nodes.clone();
                    nn.push(next);
                    let mut ee = edges.clone();
                    ee.push(e.id);
                    stack.push((nn, ee));
                }
            }
            let Some((count, rate, curve, pixels, nodes, edges)) = best else { continue };
            let length = curve.arc_length();
            if length < params.secondary_min_length_px {
                continue;
            }
            let radius_source: Vec<Px> =
                pixels.iter().filter(|p| !junction_pixels.contains(p)).copied().collect();
            let samples = subsample(&curve, skel, &radius_source, params.sample_spacing_px);
            if samples.len() < 2 {
                continue;
            }
            out.push(Detection2D {
                kind: BranchKind::Secondary,
                curve,
                samples,
                attachment_t: Some(t_attach),
                attachment_px: Some(primary.curve.point(t_attach)),
                score: count,
                inliers: pixels,
                inlier_rate: rate,
                length_px: length,
                path_nodes: nodes,
                path_edges: edges,
                truncated,
            });
        }
    }
    out
}
