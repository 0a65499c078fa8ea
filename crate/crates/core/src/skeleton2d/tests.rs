use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use super::*;
use crate::geometry::Vec2;

fn rect(w: u32, h: u32, x0: u32, x1: u32, y0: u32, y1: u32) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y))
}

fn union(a: &BinaryMask, b: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(a.width(), a.height(), |x, y| {
        a.get(x as i64, y as i64) || b.get(x as i64, y as i64)
    })
}

/// Skeleton built directly from a pixel list, bypassing thinning.
fn skeleton_of(w: u32, h: u32, pixels: &[Px]) -> PixelSkeleton {
    let set: HashSet<Px> = pixels.iter().copied().collect();
    let mask = BinaryMask::from_fn(w, h, |x, y| set.contains(&(x, y)));
    let mut px: Vec<Px> = set.into_iter().collect();
    px.sort_by_key(|p| (p.1, p.0));
    let radii = vec![1.0; px.len()];
    PixelSkeleton::from_parts(mask, px, radii)
}

/// Breadth-first count of 8-connected components among foreground pixels.
fn components(pixels: &[Px]) -> usize {
    let set: HashSet<Px> = pixels.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut count = 0;
    for &p in pixels {
        if !seen.insert(p) {
            continue;
        }
        count += 1;
        let mut queue = vec![p];
        while let Some(q) = queue.pop() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (q.0 as i64 + dx, q.1 as i64 + dy);
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let n = (nx as u32, ny as u32);
                    if set.contains(&n) && seen.insert(n) {
                        queue.push(n);
                    }
                }
            }
        }
    }
    count
}

fn topo_sortable(g: &SkeletonGraph) -> bool {
    let mut indeg = vec![0usize; g.nodes.len()];
    for e in &g.edges {
        indeg[e.to] += 1;
    }
    let mut ready: Vec<usize> = (0..g.nodes.len()).filter(|&i| indeg[i] == 0).collect();
    let mut done = 0;
    while let Some(n) = ready.pop() {
        done += 1;
        for e in g.outgoing(n) {
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                ready.push(e.to);
            }
        }
    }
    done == g.nodes.len()
}

#[test]
fn bar_skeleton_is_center_column() {
    let mask = rect(60, 120, 20, 30, 0, 119);
    let sk = medial_axis(&mask);
    assert!(!sk.is_empty());
    let interior: Vec<_> =
        sk.pixels().iter().zip(sk.radii()).filter(|(p, _)| (10..110).contains(&p.1)).collect();
    assert!(interior.len() >= 95);
    for (p, r) in interior {
        assert_eq!(p.0, 25, "pixel {p:?} off center");
        assert!((5.0..=6.0).contains(r), "radius {r}");
    }
}

#[test]
fn single_pixel_skeleton() {
    let mut mask = BinaryMask::new(9, 9);
    mask.set(4, 4, true);
    let sk = medial_axis(&mask);
    assert_eq!(sk.pixels(), &[(4, 4)]);
    assert!((0.5..=1.0).contains(&sk.radii()[0]));
}

#[test]
fn empty_mask_gives_empty_skeleton() {
    let sk = medial_axis(&BinaryMask::new(20, 20));
    assert!(sk.is_empty());
    let g = build_graph(&sk);
    assert!(g.nodes.is_empty() && g.edges.is_empty());
    assert!(detect(&BinaryMask::new(20, 20), &DetectParams::default()).primary.is_none());
}

#[test]
fn plus_has_one_junction_region_at_crossing() {
    let mask = union(&rect(101, 101, 45, 55, 5, 95), &rect(101, 101, 5, 95, 45, 55));
    let sk = medial_axis(&mask);
    let g = build_graph(&sk);
    let junctions: Vec<_> = g.nodes.iter().filter(|n| n.kind == NodeKind::Junction).collect();
    assert_eq!(junctions.len(), 1, "{junctions:?}");
    let j = junctions[0];
    let pos = j.position();
    assert!((pos.x - 50.0).abs() <= 2.0 && (pos.y - 50.0).abs() <= 2.0, "{pos:?}");
    assert_eq!(g.incident(g.nodes.iter().position(|n| std::ptr::eq(n, j)).unwrap()).count(), 4);
    assert_eq!(g.nodes.iter().filter(|n| n.kind == NodeKind::Endpoint).count(), 4);
}

#[test]
fn skeleton_pixels_are_foreground_and_radii_bounded() {
    let mask = union(&rect(80, 80, 10, 20, 5, 70), &rect(80, 80, 10, 70, 30, 36));
    let sk = medial_axis(&mask);
    for (p, r) in sk.pixels().iter().zip(sk.radii()) {
        assert!(mask.get(p.0 as i64, p.1 as i64));
        assert!(*r >= 0.5);
    }
    assert_eq!(components(sk.pixels()), 1);
}

#[test]
fn straight_line_graph() {
    let px: Vec<Px> = (5..40).map(|y| (10, y)).collect();
    let g = build_graph(&skeleton_of(20, 50, &px));
    assert_eq!(g.nodes.len(), 2);
    assert_eq!(g.edges.len(), 1);
    assert_eq!(g.edges[0].pixels.len(), px.len());
}

#[test]
fn y_shape_graph() {
    let mut px: Vec<Px> = (20..50).map(|y| (30, y)).collect();
    for k in 1..15 {
        px.push((30 - k, 20 - k));
        px.push((30 + k, 20 - k));
    }
    let g = build_graph(&skeleton_of(60, 60, &px));
    assert_eq!(g.nodes.iter().filter(|n| n.kind == NodeKind::Endpoint).count(), 3);
    assert_eq!(g.nodes.iter().filter(|n| n.kind == NodeKind::Junction).count(), 1);
    assert_eq!(g.nodes.len(), 4);
    assert_eq!(g.edges.len(), 3);
    for e in &g.edges {
        for p in &e.pixels[1..e.pixels.len() - 1] {
            assert_eq!(skeleton_of(60, 60, &px).neighbors(*p).len(), 2);
        }
    }
}

#[test]
fn isolated_pixel_is_single_node() {
    let g = build_graph(&skeleton_of(10, 10, &[(3, 3)]));
    assert_eq!(g.nodes.len(), 1);
    assert_eq!(g.nodes[0].kind, NodeKind::Isolated);
    assert!(g.edges.is_empty());
}

#[test]
fn torus_cycle_is_broken_by_orientation() {
    let outer = rect(80, 120, 20, 60, 10, 110);
    let mask = BinaryMask::from_fn(80, 120, |x, y| {
        outer.get(x as i64, y as i64) && !((33..=47).contains(&x) && (40..=80).contains(&y))
    });
    let sk = medial_axis(&mask);
    let g = build_graph(&sk);
    assert!(g.has_cycle());
    let d = orient_up(&g);
    assert!(d.directed);
    assert!(d.is_acyclic_directed());
    assert!(topo_sortable(&d));
    assert!(d.edges.len() < g.edges.len());
}

#[test]
fn lone_ring_is_broken_by_orientation() {
    let mut px = Vec::new();
    for x in 10..30 {
        px.push((x, 10));
        px.push((x, 30));
    }
    for y in 11..30 {
        px.push((10, y));
        px.push((29, y));
    }
    let g = build_graph(&skeleton_of(40, 40, &px));
    assert!(g.has_cycle());
    let d = orient_up(&g);
    assert!(topo_sortable(&d));
}

#[test]
fn vertical_edge_points_up() {
    let px: Vec<Px> = (50..=200).map(|y| (10, y)).collect();
    let d = orient_up(&build_graph(&skeleton_of(20, 210, &px)));
    assert_eq!(d.edges.len(), 1);
    let e = &d.edges[0];
    assert_eq!(d.nodes[e.to].pos, (10, 50));
    assert_eq!(d.nodes[e.from].pos, (10, 200));
}

#[test]
fn horizontal_edge_points_to_smaller_x() {
    let px: Vec<Px> = (5..=60).map(|x| (x, 12)).collect();
    let d = orient_up(&build_graph(&skeleton_of(70, 20, &px)));
    let e = &d.edges[0];
    assert_eq!(d.nodes[e.to].pos, (5, 12));
}

#[test]
fn cycle_drops_its_lowest_edge() {
    // Ring with a junction at top-left and bottom-right via spurs; the other
    // two corners are cut diagonally so the ring stays one pixel thin.
    let mut px = Vec::new();
    for x in 10..40 {
        px.push((x, 10));
        px.push((x + 1, 40));
    }
    for y in 11..40 {
        px.push((10, y));
        px.push((40, y));
    }
    for k in 1..8 {
        px.push((10 - k, 10 - k));
        px.push((40 + k, 40 + k));
    }
    let g = build_graph(&skeleton_of(60, 60, &px));
    let max_mean_y = g
        .edges
        .iter()
        .filter(|e| e.from != e.to)
        .filter(|e| {
            let (a, b) = (&g.nodes[e.from], &g.nodes[e.to]);
            a.kind == NodeKind::Junction && b.kind == NodeKind::Junction
        })
        .map(|e| (e.id, e.mean_y()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let d = orient_up(&g);
    assert!(d.edge_by_id(max_mean_y.0).is_none());
    assert_eq!(d.edges.len(), g.edges.len() - 1);
    assert!(topo_sortable(&d));
}

fn vertical_bar(width: u32) -> BinaryMask {
    let x0 = 160 - width / 2;
    rect(320, 240, x0, x0 + width - 1, 0, 239)
}

#[test]
fn primary_on_vertical_bar() {
    let mask = vertical_bar(7);
    let f = detect(&mask, &DetectParams::default());
    let p = f.primary.expect("primary");
    assert!(p.score >= 230, "score {}", p.score);
    for t in 0..=20 {
        let q = p.curve.point(t as f64 / 20.0);
        assert!((q.x - 160.0).abs() <= 1.0, "{q:?}");
    }
    assert!(f.secondaries.is_empty());
    assert!(!f.truncated);
}

#[test]
fn primary_prefers_vertical_over_stub() {
    // 200 px vertical bar with a 100 px 45-degree stub leaving its middle.
    let mut mask = rect(320, 240, 157, 163, 20, 219);
    for s in 0..100 {
        let c = Vec2::new(160.0 + s as f64 / 2f64.sqrt(), 120.0 - s as f64 / 2f64.sqrt());
        mask.fill_disk(&c, 3.0);
    }
    let sk = medial_axis(&mask);
    let g = orient_up(&build_graph(&sk));
    let params = DetectParams::default();
    let p = find_primary(&g, &sk, &params).expect("primary");
    // Independent scoring of the two hand-built candidate paths.
    let score = |pts: Vec<Vec2>| {
        let c = crate::geometry::CubicBezier2D::fit(&pts, None).unwrap();
        sk.pixels()
            .iter()
            .filter(|q| c.distance(&Vec2::new(q.0 as f64, q.1 as f64)) <= 4.0)
            .map(|q| q.1)
            .collect::<HashSet<_>>()
            .len()
    };
    let vertical = score((25..215).map(|y| Vec2::new(160.0, y as f64)).collect());
    let via_stub = score(
        (120..215)
            .rev()
            .map(|y| Vec2::new(160.0, y as f64))
            .chain((1..95).map(|s| Vec2::new(160.0 + s as f64 / 2f64.sqrt(), 120.0 - s as f64 / 2f64.sqrt())))
            .collect(),
    );
    assert!(vertical > via_stub, "{vertical} vs {via_stub}");
    let top = p.curve.point(1.0).x.max(p.curve.point(0.0).x);
    assert!((p.curve.point(0.5).x - 160.0).abs() <= 2.0);
    assert!(top < 165.0, "primary bent into the stub: {:?}", p.curve);
}

#[test]
fn t_shape_has_one_secondary() {
    let mask = union(&vertical_bar(9), &rect(320, 240, 160, 244, 116, 124));
    let f = detect(&mask, &DetectParams::default());
    let p = f.primary.as_ref().expect("primary");
    assert_eq!(f.secondaries.len(), 1, "{:?}", f.secondaries);
    let s = &f.secondaries[0];
    assert_eq!(s.kind, BranchKind::Secondary);
    let junction = Vec2::new(160.0, 120.0);
    let a = s.attachment_px.unwrap();
    assert!((a - junction).norm() <= 5.0, "{a:?}");
    let t = s.attachment_t.unwrap();
    assert!((p.curve.point(t) - junction).norm() <= 5.0);
    assert!(s.length_px >= 40.0);
    assert!(s.samples.len() >= 2);
}

#[test]
fn short_arm_is_rejected() {
    let mask = union(&vertical_bar(9), &rect(320, 240, 160, 184, 116, 124));
    let f = detect(&mask, &DetectParams::default());
    assert!(f.primary.is_some());
    assert!(f.secondaries.is_empty(), "{:?}", f.secondaries);
}

#[test]
fn detection_invariants_on_curved_branch() {
    let mut mask = BinaryMask::new(320, 240);
    for k in 0..=2400 {
        let y = k as f64 / 10.0;
        let x = 160.0 + 40.0 * (y / 240.0 * std::f64::consts::PI).sin();
        mask.fill_disk(&Vec2::new(x, y), 6.0);
    }
    for k in 0..=900 {
        let s = k as f64 / 10.0;
        mask.fill_disk(&Vec2::new(200.0 - s * 0.8, 120.0 - s * 0.6), 3.5);
    }
    let sk = medial_axis(&mask);
    let f = detect(&mask, &DetectParams::default());
    let p = f.primary.as_ref().expect("primary");
    let rows: HashSet<u32> = p.inliers.iter().map(|q| q.1).collect();
    assert_eq!(p.score, rows.len());
    let sk_px: HashSet<Px> = sk.pixels().iter().copied().collect();
    let sk_radius: HashMap<Px, f64> =
        sk.pixels().iter().copied().zip(sk.radii().iter().copied()).collect();
    for q in &p.inliers {
        assert!(sk_px.contains(q));
        assert!(p.curve.distance(&Vec2::new(q.0 as f64, q.1 as f64)) <= 4.0);
    }
    for d in std::iter::once(p).chain(&f.secondaries) {
        assert!(d.samples.len() >= 2);
        for s in &d.samples {
            assert!(mask.contains(&s.pixel));
            assert!(sk_radius.values().any(|r| (r - s.radius_px).abs() < 1e-12));
        }
        let line = d.polyline();
        let arcs: Vec<f64> = d.samples.iter().map(|s| line.closest(&s.pixel).1).collect();
        for w in arcs.windows(2).take(arcs.len().saturating_sub(2)) {
            let gap = w[1] - w[0];
            assert!((28.0..=32.0).contains(&gap), "gap {gap}");
        }
    }
    // Primary radii come from the closest primary inlier.
    for s in &p.samples {
        let nearest = p
            .inliers
            .iter()
            .min_by(|a, b| {
                let da = (Vec2::new(a.0 as f64, a.1 as f64) - s.pixel).norm_squared();
                let db = (Vec2::new(b.0 as f64, b.1 as f64) - s.pixel).norm_squared();
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(s.radius_px, sk_radius[nearest]);
    }
}

/// Symmetric Hausdorff distance between two pixel sets.
fn hausdorff(a: &[Px], b: &[Px]) -> f64 {
    let one_way = |a: &[Px], b: &[Px]| {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| ((p.0 as f64 - q.0 as f64).powi(2) + (p.1 as f64 - q.1 as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[test]
fn reskeletonizing_rendered_skeleton_is_stable() {
    for (w, h) in [(11u32, 120u32), (7, 90), (15, 60)] {
        let mask = rect(100, 160, 50 - w / 2, 50 - w / 2 + w - 1, 20, 20 + h - 1);
        let sk = medial_axis(&mask);
        let mut redrawn = BinaryMask::new(100, 160);
        for (p, r) in sk.pixels().iter().zip(sk.radii()) {
            redrawn.fill_disk(&Vec2::new(p.0 as f64, p.1 as f64), *r);
        }
        let again = medial_axis(&redrawn);
        let d = hausdorff(sk.pixels(), again.pixels());
        assert!(d <= 1.5, "bar {w}x{h}: hausdorff {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_masks_orient_acyclic(seed in any::<u64>(), blobs in 1usize..12) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mask = BinaryMask::new(96, 96);
        for _ in 0..blobs {
            let a = Vec2::new(rng.random_range(0.0..96.0), rng.random_range(0.0..96.0));
            let b = Vec2::new(rng.random_range(0.0..96.0), rng.random_range(0.0..96.0));
            let r = rng.random_range(0.5..6.0);
            for k in 0..=100 {
                mask.fill_disk(&(a + (b - a) * (k as f64 / 100.0)), r);
            }
        }
        let sk = medial_axis(&mask);
        for p in sk.pixels() {
            prop_assert!(mask.get(p.0 as i64, p.1 as i64));
        }
        prop_assert_eq!(components(sk.pixels()), components(&mask_pixels(&mask)));
        let g = build_graph(&sk);
        let d = orient_up(&g);
        prop_assert!(topo_sortable(&d));
        for e in &g.edges {
            for p in &e.pixels[1..e.pixels.len().saturating_sub(1)] {
                prop_assert_eq!(sk.neighbors(*p).len(), 2);
            }
        }
        for e in &d.edges {
            let (head, tail) = (d.nodes[e.to].pos, d.nodes[e.from].pos);
            prop_assert!((head.1, head.0) <= (tail.1, tail.0));
        }
    }
}

fn mask_pixels(mask: &BinaryMask) -> Vec<Px> {
    let mut v = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x as i64, y as i64) {
                v.push((x, y));
            }
        }
    }
    v
}
