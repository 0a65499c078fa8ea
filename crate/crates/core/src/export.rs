//! Model documents and diagnostic images.
//!
//! Masks are written as 8-bit grayscale; overlays as RGB. The output format is
//! picked from the file extension (`.pgm`, `.ppm` or `.png`).

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::arc_samples;
use crate::geometry::{CameraIntrinsics, CubicBezier2D, CubicBezier3D, Pose, Vec2, Vec3};
use crate::model3d::{Attachment, BranchKind, BranchModel, ModelPoint, TreeModel};
use crate::simulator::SceneSpec;
use crate::skeleton2d::{BinaryMask, Frame2D};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Spacing of exported centerline samples (m).
pub const CENTERLINE_STEP: f64 = 0.005;

pub const PRIMARY_COLOR: Rgb<u8> = Rgb([40, 90, 255]);
pub const SECONDARY_COLOR: Rgb<u8> = Rgb([40, 210, 60]);
pub const MODEL_COLOR: Rgb<u8> = Rgb([230, 30, 30]);
pub const TRUTH_COLOR: Rgb<u8> = Rgb([150, 150, 150]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDocument {
    pub id: usize,
    pub kind: BranchKind,
    pub control_points: [[f64; 3]; 4],
    pub centerline: Vec<[f64; 3]>,
    /// Radius at each centerline sample (m).
    pub radii: Vec<f64>,
    /// Parameter on the primary curve where this branch attaches.
    pub attachment_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub branches: Vec<BranchDocument>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn branch_document(branch: &BranchModel) -> BranchDocument {
    let samples = arc_samples(&branch.curve, CENTERLINE_STEP);
    let radii = samples
        .iter()
        .map(|s| {
            branch
                .points
                .iter()
                .min_by(|a, b| (a.position - s).norm_squared().total_cmp(&(b.position - s).norm_squared()))
                .map_or(0.0, |p| p.radius)
        })
        .collect();
    BranchDocument {
        id: branch.id,
        kind: branch.kind,
        control_points: branch.curve.ctrl.map(|c| arr(&c)),
        centerline: samples.iter().map(arr).collect(),
        radii,
        attachment_t: branch.attachment.map(|a| a.primary_t),
    }
}

impl ModelDocument {
    pub fn from_model(model: &TreeModel) -> Self {
        let branches = model.primary.iter().chain(&model.secondaries).map(branch_document).collect();
        Self { schema_version: MODEL_SCHEMA_VERSION, branches }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a document, rejecting unknown schema versions.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Serde(format!("unsupported model schema version {}", doc.schema_version)));
        }
        Ok(doc)
    }

    pub fn curve(branch: &BranchDocument) -> CubicBezier3D {
        let c = branch.control_points.map(|p| Vec3::new(p[0], p[1], p[2]));
        CubicBezier3D { ctrl: c }
    }

    /// Rebuilds a model whose points are the exported centerline samples.
    pub fn to_model(&self) -> TreeModel {
        let branch = |d: &BranchDocument, primary: Option<&CubicBezier3D>| BranchModel {
            id: d.id,
            kind: d.kind,
            points: d
                .centerline
                .iter()
                .zip(&d.radii)
                .map(|(p, &radius)| ModelPoint { position: Vec3::new(p[0], p[1], p[2]), radius })
                .collect(),
            curve: Self::curve(d),
            attachment: d.attachment_t.zip(primary).map(|(t, c)| Attachment {
                point: c.point(t.clamp(0.0, 1.0)),
                primary_t: t,
                ray_distance: 0.0,
            }),
        };
        let primary = self.branches.iter().find(|b| b.kind == BranchKind::Primary).map(|d| branch(d, None));
        let primary_curve = primary.as_ref().map(|p| p.curve);
        let secondaries = self
            .branches
            .iter()
            .filter(|b| b.kind == BranchKind::Secondary)
            .map(|d| branch(d, primary_curve.as_ref()))
            .collect();
        TreeModel::from_branches(primary, secondaries)
    }
}

pub fn mask_image(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width(), mask.height(), |x, y| Luma([if mask.get(x as i64, y as i64) { 255 } else { 0 }]))
}

fn plot(img: &mut RgbImage, p: &Vec2, color: Rgb<u8>, thickness: i64) {
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    let r = thickness / 2;
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn draw_polyline(img: &mut RgbImage, points: &[Vec2], color: Rgb<u8>, thickness: i64) {
    for w in points.windows(2) {
        let steps = ((w[1] - w[0]).norm() * 2.0).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let p = w[0] + (w[1] - w[0]) * (k as f64 / steps as f64);
            plot(img, &p, color, thickness);
        }
    }
}

fn curve_pixels(curve: &CubicBezier2D) -> Vec<Vec2> {
    let n = (curve.arc_length().ceil() as usize).clamp(8, 4096);
    curve.sample(n)
}

/// The mask in gray with the detected primary in blue and secondaries in green.
pub fn detection_overlay(mask: &BinaryMask, frame: &Frame2D) -> RgbImage {
    let mut img = RgbImage::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.get(x as i64, y as i64) { Rgb([110, 110, 110]) } else { Rgb([0, 0, 0]) }
    });
    for s in &frame.secondaries {
        draw_polyline(&mut img, &curve_pixels(&s.curve), SECONDARY_COLOR, 1);
    }
    if let Some(p) = &frame.primary {
        draw_polyline(&mut img, &curve_pixels(&p.curve), PRIMARY_COLOR, 1);
        for s in &p.samples {
            plot(&mut img, &s.pixel, PRIMARY_COLOR, 3);
        }
    }
    img
}

/// Model branches reprojected through a camera, drawn over the mask.
pub fn model_overlay(mask: &BinaryMask, model: &TreeModel, intr: &CameraIntrinsics, pose: &Pose) -> RgbImage {
    let mut img = detection_overlay(mask, &Frame2D { primary: None, secondaries: Vec::new(), truncated: false });
    let project = |b: &BranchModel| -> Vec<Vec2> {
        b.centerline().points().iter().filter_map(|p| intr.project(pose, p).ok().map(|(px, _)| px)).collect()
    };
    for s in &model.secondaries {
        draw_polyline(&mut img, &project(s), SECONDARY_COLOR, 1);
    }
    if let Some(p) = &model.primary {
        draw_polyline(&mut img, &project(p), PRIMARY_COLOR, 1);
    }
    img
}

/// Orthographic front view onto the world x–z plane, with z up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontView {
    pub px_per_m: f64,
    pub x_min: f64,
    pub z_max: f64,
    pub width: u32,
    pub height: u32,
}

impl FrontView {
    /// Smallest view holding all `points` with `margin` meters of border.
    pub fn fitting(points: &[Vec3], px_per_m: f64, margin: f64) -> Result<Self> {
        if points.is_empty() || !(px_per_m > 0.0) {
            return Err(Error::Config("front view needs points and a positive scale".into()));
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&Vec3) -> f64| points.iter().map(g).fold(init, f);
        let x_min = fold(f64::min, f64::INFINITY, |p| p.x) - margin;
        let x_max = fold(f64::max, f64::NEG_INFINITY, |p| p.x) + margin;
        let z_min = fold(f64::min, f64::INFINITY, |p| p.z) - margin;
        let z_max = fold(f64::max, f64::NEG_INFINITY, |p| p.z) + margin;
        let width = ((x_max - x_min) * px_per_m).ceil().clamp(1.0, 8192.0) as u32;
        let height = ((z_max - z_min) * px_per_m).ceil().clamp(1.0, 8192.0) as u32;
        Ok(Self { px_per_m, x_min, z_max, width, height })
    }

    pub fn to_pixel(&self, p: &Vec3) -> Vec2 {
        Vec2::new((p.x - self.x_min) * self.px_per_m, (self.z_max - p.z) * self.px_per_m)
    }
}

/// Ground truth in gray with the reconstruction in red, seen from the front.
pub fn evaluation_overlay(scene: &SceneSpec, model: &TreeModel, px_per_m: f64) -> Result<RgbImage> {
    let mut truth: Vec<&CubicBezier3D> = vec![&scene.primary];
    truth.extend(scene.side_branches.iter().map(|b| &b.curve));
    let modeled: Vec<&CubicBezier3D> = model.primary.iter().chain(&model.secondaries).map(|b| &b.curve).collect();

    let step = 0.002;
    let dense = |c: &CubicBezier3D| arc_samples(c, step);
    let all: Vec<Vec3> = truth.iter().chain(&modeled).flat_map(|c| dense(c)).collect();
    let view = FrontView::fitting(&all, px_per_m, 0.05)?;
    let mut img = RgbImage::from_pixel(view.width, view.height, Rgb([255, 255, 255]));
    let draw = |img: &mut RgbImage, c: &CubicBezier3D, color, thick| {
        let px: Vec<Vec2> = dense(c).iter().map(|p| view.to_pixel(p)).collect();
        draw_polyline(img, &px, color, thick);
    };
    for c in &truth {
        draw(&mut img, c, TRUTH_COLOR, 5);
    }
    for c in &modeled {
        draw(&mut img, c, MODEL_COLOR, 1);
    }
    Ok(img)
}

fn image_err(e: image::ImageError) -> Error {
    Error::Io(e.to_string())
}

/// Writes binary PGM for `.pgm` paths and lets the extension decide otherwise.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let img = mask_image(mask);
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if !is_pgm {
        return img.save(path).map_err(image_err);
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .map_err(image_err)
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(image_err)
}
