use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Vec2};

/// Row-major binary foreground grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![false; width as usize * height as usize] }
    }

    pub fn for_camera(intr: &CameraIntrinsics) -> Self {
        Self::new(intr.width, intr.height)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && self.data[(y as u32 * self.width + x as u32) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.index(x, y);
        self.data[i] = v;
    }

    /// Foreground test at the pixel nearest a sub-pixel position.
    pub fn contains(&self, p: &Vec2) -> bool {
        self.get(p.x.round() as i64, p.y.round() as i64)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn matches(&self, intr: &CameraIntrinsics) -> bool {
        self.width == intr.width && self.height == intr.height
    }

    /// Fills every pixel whose center lies within `radius` of `center`.
    pub fn fill_disk(&mut self, center: &Vec2, radius: f64) {
        if !(radius >= 0.0) {
            return;
        }
        let r2 = radius * radius;
        let x0 = (center.x - radius).ceil().max(0.0);
        let x1 = (center.x + radius).floor().min(self.width as f64 - 1.0);
        let y0 = (center.y - radius).ceil().max(0.0);
        let y1 = (center.y + radius).floor().min(self.height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return;
        }
        for y in y0 as u32..=y1 as u32 {
            let dy = y as f64 - center.y;
            for x in x0 as u32..=x1 as u32 {
                let dx = x as f64 - center.x;
                if dx * dx + dy * dy <= r2 {
                    let i = self.index(x, y);
                    self.data[i] = true;
                }
            }
        }
    }

    /// Morphological dilation (`radius > 0`) or erosion (`radius < 0`) with a disk.
    pub fn morph(&self, radius: i32) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius.unsigned_abs() as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let dilate = radius > 0;
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            if dilate {
                offsets.iter().any(|(dx, dy)| self.get(x + dx, y + dy))
            } else {
                // Pixels outside the image do not erode the border.
                offsets.iter().all(|(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    let outside =
                        nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64;
                    outside || self.get(nx, ny)
                })
            }
        })
    }
}
