//! Binary mask → pixel skeleton → skeleton graph → primary and secondary 2D
//! branch curves with per-sample pixel radii.

mod detect;
mod edt;
mod graph;
mod mask;
mod thinning;

pub use detect::{
    detect, find_primary, find_secondaries, BranchKind, CurveSample2D, DetectParams, Detection2D,
    Frame2D,
};
pub use edt::squared_distance_to_background;
pub use graph::{build_graph, orient_up, NodeKind, Px, SkeletonEdge, SkeletonGraph, SkeletonNode};
pub use mask::BinaryMask;
pub use thinning::thin;

use thinning::RING;

/// Thin skeleton with a pixel radius at every skeletal pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSkeleton {
    mask: BinaryMask,
    pixels: Vec<Px>,
    radii: Vec<f64>,
    index: Vec<u32>,
}

impl PixelSkeleton {
    fn from_parts(mask: BinaryMask, pixels: Vec<Px>, radii: Vec<f64>) -> Self {
        let mut index = vec![u32::MAX; mask.width() as usize * mask.height() as usize];
        for (i, p) in pixels.iter().enumerate() {
            index[(p.1 * mask.width() + p.0) as usize] = i as u32;
        }
        Self { mask, pixels, radii, index }
    }

    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }

    /// The foreground mask the skeleton was extracted from.
    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// Skeletal pixels in raster order.
    pub fn pixels(&self) -> &[Px] {
        &self.pixels
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width() && y < self.height() && self.index[(y * self.width() + x) as usize] != u32::MAX
    }

    pub fn radius(&self, p: Px) -> Option<f64> {
        if !self.contains(p.0, p.1) {
            return None;
        }
        Some(self.radii[self.index[(p.1 * self.width() + p.0) as usize] as usize])
    }

    /// 8-neighbors of `p` that are skeletal.
    pub fn neighbors(&self, p: Px) -> Vec<Px> {
        RING.iter()
            .filter_map(|(dx, dy)| {
                let (x, y) = (p.0 as i64 + dx, p.1 as i64 + dy);
                (x >= 0 && y >= 0 && self.contains_i(x, y)).then_some((x as u32, y as u32))
            })
            .collect()
    }

    fn contains_i(&self, x: i64, y: i64) -> bool {
        x < self.width() as i64 && y < self.height() as i64 && self.contains(x as u32, y as u32)
    }
}

/// Thinning to a one-pixel skeleton, endpoints pushed out along the distance
/// ridge, and a radius at each skeletal pixel from the exact distance
/// transform, `r = d - 0.5` (half-pixel center-to-edge offset).
pub fn medial_axis(mask: &BinaryMask) -> PixelSkeleton {
    let mut sk = thin(mask);
    let d2 = squared_distance_to_background(mask);
    let cap = (mask.width().max(mask.height())) as f64;
    let dist: Vec<f64> = d2.iter().map(|v| v.sqrt().min(cap)).collect();
    extend_endpoints(&mut sk, &dist);
    let mut pixels = Vec::new();
    let mut radii = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if sk.get(x as i64, y as i64) {
                pixels.push((x, y));
                radii.push((dist[(y * mask.width() + x) as usize] - 0.5).max(0.5));
            }
        }
    }
    PixelSkeleton::from_parts(mask.clone(), pixels, radii)
}

/// Thinning eats roughly one radius off every free end. Each endpoint is
/// walked forward along the distance-transform ridge while the distance stays
/// within half a pixel of its value at the original endpoint.
fn extend_endpoints(sk: &mut BinaryMask, dist: &[f64]) {
    let (w, h) = (sk.width() as i64, sk.height() as i64);
    let at = |x: i64, y: i64| dist[(y * w + x) as usize];
    let degree = |sk: &BinaryMask, x: i64, y: i64| RING.iter().filter(|(dx, dy)| sk.get(x + dx, y + dy)).count();

    let endpoints: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| sk.get(x, y) && degree(sk, x, y) == 1)
        .collect();

    for (ex, ey) in endpoints {
        if !sk.get(ex, ey) || degree(sk, ex, ey) != 1 {
            continue;
        }
        // Direction from a pixel a few steps back along the chain.
        let (mut px, mut py) = (ex, ey);
        let (mut bx, mut by) = (ex, ey);
        for _ in 0..5 {
            let next = RING
                .iter()
                .map(|(dx, dy)| (bx + dx, by + dy))
                .find(|&(x, y)| (x, y) != (px, py) && sk.get(x, y));
            let Some(n) = next else { break };
            if degree(sk, n.0, n.1) > 2 {
                break;
            }
            (px, py) = (bx, by);
            (bx, by) = n;
        }
        let (dirx, diry) = ((ex - bx) as f64, (ey - by) as f64);
        let norm = dirx.hypot(diry);
        if norm < 1.5 {
            continue;
        }
        let (dirx, diry) = (dirx / norm, diry / norm);
        let reference = at(ex, ey);
        let limit = (2.0 * reference).ceil() as usize + 2;
        let (mut cx, mut cy) = (ex, ey);
        for _ in 0..limit {
            let step = RING
                .iter()
                .filter(|(dx, dy)| {
                    let len = ((dx * dx + dy * dy) as f64).sqrt();
                    (*dx as f64 * dirx + *dy as f64 * diry) / len > 0.64
                })
                .map(|(dx, dy)| (cx + dx, cy + dy))
                .filter(|&(x, y)| x >= 0 && y >= 0 && x < w && y < h && !sk.get(x, y))
                .filter(|&(x, y)| at(x, y) >= reference - 0.5)
                .filter(|&(x, y)| {
                    RING.iter().all(|(dx, dy)| {
                        let (nx, ny) = (x + dx, y + dy);
                        (nx, ny) == (cx, cy) || !sk.get(nx, ny)
                    })
                })
                .max_by(|a, b| at(a.0, a.1).total_cmp(&at(b.0, b.1)));
            let Some((nx, ny)) = step else { break };
            sk.set(nx as u32, ny as u32, true);
            (cx, cy) = (nx, ny);
        }
    }
}

#[cfg(test)]
mod tests;
