//! Two-subiteration parallel thinning followed by removal of redundant
//! staircase pixels, giving an 8-connected one-pixel-wide skeleton.

use super::BinaryMask;

// Neighbor order: N, NE, E, SE, S, SW, W, NW.
pub(crate) const RING: [(i64, i64); 8] =
    [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn ring(mask: &BinaryMask, x: i64, y: i64) -> [bool; 8] {
    let mut n = [false; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        n[k] = mask.get(x + dx, y + dy);
    }
    n
}

/// 8-connectivity Yokoi number; 1 means the pixel is simple.
fn yokoi8(n: &[bool; 8]) -> u32 {
    // Reindex to E, NE, N, NW, W, SW, S, SE.
    let x = [n[2], n[1], n[0], n[7], n[6], n[5], n[4], n[3]];
    let c = |i: usize| u32::from(!x[i % 8]);
    [0usize, 2, 4, 6].iter().map(|&k| c(k) - c(k) * c(k + 1) * c(k + 2)).sum()
}

pub fn thin(mask: &BinaryMask) -> BinaryMask {
    let mut img = mask.clone();
    let mut fg: Vec<(u32, u32)> = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x as i64, y as i64))
        .collect();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_clear.clear();
            for &(x, y) in &fg {
                let n = ring(&img, x as i64, y as i64);
                let b = n.iter().filter(|&&v| v).count();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count();
                if a != 1 {
                    continue;
                }
                let (north, east, south, west) = (n[0], n[2], n[4], n[6]);
                let ok = if step == 0 {
                    !(north && east && south) && !(east && south && west)
                } else {
                    !(north && east && west) && !(north && south && west)
                };
                if ok {
                    to_clear.push((x, y));
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &(x, y) in &to_clear {
                    img.set(x, y, false);
                }
                fg.retain(|&(x, y)| img.get(x as i64, y as i64));
            }
        }
        if !changed {
            break;
        }
    }
    remove_staircase(&mut img, &fg);
    restore_vanished_components(mask, &mut img);
    img
}

/// Small blobs (a 2x2 square, say) can thin away entirely; each such
/// component gets back the pixel nearest its centroid.
fn restore_vanished_components(mask: &BinaryMask, img: &mut BinaryMask) {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as i64, y as i64) || seen[mask.index(x, y)] {
                continue;
            }
            seen[mask.index(x, y)] = true;
            let mut comp = vec![(x, y)];
            let mut k = 0;
            while k < comp.len() {
                let (cx, cy) = comp[k];
                for (dx, dy) in RING {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if mask.get(nx, ny) && !seen[mask.index(nx as u32, ny as u32)] {
                        seen[mask.index(nx as u32, ny as u32)] = true;
                        comp.push((nx as u32, ny as u32));
                    }
                }
                k += 1;
            }
            if comp.iter().any(|&(px, py)| img.get(px as i64, py as i64)) {
                continue;
            }
            let n = comp.len() as f64;
            let mx = comp.iter().map(|p| p.0 as f64).sum::<f64>() / n;
            let my = comp.iter().map(|p| p.1 as f64).sum::<f64>() / n;
            let best = comp
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 as f64 - mx).powi(2) + (a.1 as f64 - my).powi(2);
                    let db = (b.0 as f64 - mx).powi(2) + (b.1 as f64 - my).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            img.set(best.0, best.1, true);
        }
    }
}

/// Deletes simple, non-terminal pixels (corner pixels of diagonal steps).
fn remove_staircase(img: &mut BinaryMask, pixels: &[(u32, u32)]) {
    loop {
        let mut changed = false;
        for &(x, y) in pixels {
            if !img.get(x as i64, y as i64) {
                continue;
            }
            let n = ring(img, x as i64, y as i64);
            let count = n.iter().filter(|&&v| v).count();
            if count >= 2 && yokoi8(&n) == 1 {
                img.set(x, y, false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neighbors(m: &BinaryMask, x: i64, y: i64) -> usize {
        RING.iter().filter(|(dx, dy)| m.get(x + dx, y + dy)).count()
    }

    #[test]
    fn yokoi_cases() {
        // Straight line through the pixel: not simple.
        let mut n = [false; 8];
        n[0] = true;
        n[4] = true;
        assert_eq!(yokoi8(&n), 2);
        // Corner with N and E neighbors: simple.
        let mut n = [false; 8];
        n[0] = true;
        n[2] = true;
        assert_eq!(yokoi8(&n), 1);
        // Cross center: removing would open a hole.
        let n = [true, false, true, false, true, false, true, false];
        assert_eq!(yokoi8(&n), 0);
    }

    #[test]
    fn odd_bar_thins_to_center_column() {
        let bar = BinaryMask::from_fn(41, 80, |x, _| (15..26).contains(&x));
        let sk = thin(&bar);
        for y in 10..70 {
            let cols: Vec<i64> = (0..41).filter(|&x| sk.get(x, y)).collect();
            assert_eq!(cols, vec![20], "row {y}");
        }
    }

    #[test]
    fn diagonal_band_is_one_pixel_thin() {
        let band = BinaryMask::from_fn(60, 60, |x, y| (x as i64 - y as i64).abs() <= 3);
        let sk = thin(&band);
        for y in 8..52i64 {
            for x in 8..52i64 {
                if sk.get(x, y) {
                    assert!(neighbors(&sk, x, y) <= 2, "thick at {x},{y}");
                }
            }
        }
    }

    #[test]
    fn thinning_preserves_connectivity_of_a_ring() {
        let ring_mask = BinaryMask::from_fn(50, 50, |x, y| {
            let d = ((x as f64 - 25.0).powi(2) + (y as f64 - 25.0).powi(2)).sqrt();
            (10.0..16.0).contains(&d)
        });
        let sk = thin(&ring_mask);
        // All skeleton pixels have exactly two neighbors on a closed loop.
        let pts: Vec<(i64, i64)> =
            (0..50).flat_map(|y| (0..50).map(move |x| (x, y))).filter(|&(x, y)| sk.get(x, y)).collect();
        assert!(pts.len() > 40);
        assert!(pts.iter().all(|&(x, y)| neighbors(&sk, x, y) == 2));
    }
}
