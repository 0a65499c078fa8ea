//! Exact Euclidean distance transform (lower envelope of parabolas, two passes).

use super::BinaryMask;

/// Squared distance from each pixel to the nearest background pixel.
///
/// Only in-image background counts; an all-foreground mask yields `f64::INFINITY`.
pub fn squared_distance_to_background(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut grid: Vec<f64> =
        mask.data().iter().map(|&fg| if fg { f64::INFINITY } else { 0.0 }).collect();
    let mut buf_f = vec![0.0; w.max(h)];
    let mut buf_d = vec![0.0; w.max(h)];
    let mut v = vec![0usize; w.max(h)];
    let mut z = vec![0.0; w.max(h) + 1];

    for x in 0..w {
        for y in 0..h {
            buf_f[y] = grid[y * w + x];
        }
        transform_1d(&buf_f[..h], &mut buf_d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = buf_d[y];
        }
    }
    for y in 0..h {
        buf_f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        transform_1d(&buf_f[..w], &mut buf_d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&buf_d[..w]);
    }
    grid
}

fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // Skip leading infinite samples; they never form the envelope.
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.fill(f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this stops at k == 0.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}
