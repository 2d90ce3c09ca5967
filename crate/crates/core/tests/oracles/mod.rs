//! Reference implementations used to check the library. Each one is written
//! from the definition, independently of the code under test, and favours
//! obviousness over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use reefforge_core::evalbench::{Detection, GroundTruth, PixelBox};
use reefforge_core::oystermesh::TriangleMesh;
use reefforge_core::rasterizer::InstanceMask;
use reefforge_core::scenegen::CameraModel;

/// Uniform cubic B-spline basis on integer knots, `s = t - i` in `[0, 4)`.
pub fn uniform_cubic(s: f64) -> f64 {
    if !(0.0..4.0).contains(&s) {
        0.0
    } else if s < 1.0 {
        s * s * s / 6.0
    } else if s < 2.0 {
        (-3.0 * s * s * s + 12.0 * s * s - 12.0 * s + 4.0) / 6.0
    } else if s < 3.0 {
        (3.0 * s * s * s - 24.0 * s * s + 60.0 * s - 44.0) / 6.0
    } else {
        (4.0 - s).powi(3) / 6.0
    }
}

/// Ray/triangle intersection (Möller–Trumbore) with inclusive edges.
/// Returns the ray parameter.
fn intersect(orig: &Vector3<f64>, dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let s = orig - tri[0].coords;
    let u = s.dot(&p) / det;
    if u < 0.0 {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) / det)
}

/// Casts one ray per pixel centre through every triangle and keeps the
/// nearest hit beyond the near plane. Earlier triangles win exact ties.
pub fn brute_force_render(meshes: &[TriangleMesh], camera: &CameraModel, near: f64) -> (Vec<f64>, Vec<u32>) {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let tris: Vec<([Point3<f64>; 3], u32)> = meshes
        .iter()
        .flat_map(|m| {
            m.triangles.iter().map(move |t| {
                let verts = t.map(|i| camera.pose.apply(&m.vertices[i as usize]));
                (verts, m.instance_id)
            })
        })
        .collect();
    let mut depth = vec![f64::INFINITY; w * h];
    let mut ids = vec![0u32; w * h];
    let origin = Vector3::zeros();
    for y in 0..h {
        for x in 0..w {
            let dir = Vector3::new(
                (x as f64 + 0.5 - camera.cx) / camera.fx,
                (y as f64 + 0.5 - camera.cy) / camera.fy,
                1.0,
            );
            for (tri, id) in &tris {
                if let Some(t) = intersect(&origin, &dir, tri) {
                    // dir.z == 1, so the ray parameter is the camera-frame depth
                    if t >= near && t < depth[y * w + x] {
                        depth[y * w + x] = t;
                        ids[y * w + x] = *id;
                    }
                }
            }
        }
    }
    (depth, ids)
}

/// Inclusive pixel extents and counts per id from a plain scan.
pub fn rescan_extents(mask: &InstanceMask) -> BTreeMap<u32, ([u32; 4], u64)> {
    let mut out: BTreeMap<u32, ([u32; 4], u64)> = BTreeMap::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            let id = mask.data[(y * mask.width + x) as usize];
            if id == 0 {
                continue;
            }
            let e = out.entry(id).or_insert(([u32::MAX, u32::MAX, 0, 0], 0));
            e.0[0] = e.0[0].min(x);
            e.0[1] = e.0[1].min(y);
            e.0[2] = e.0[2].max(x);
            e.0[3] = e.0[3].max(y);
            e.1 += 1;
        }
    }
    out
}

fn box_iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let ua = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
    if inter == 0.0 {
        0.0
    } else {
        inter / ua
    }
}

/// AP at one IoU threshold by enumerating every prefix of the ranked
/// detection list and taking, for each of the 101 recall levels, the best
/// precision at any prefix reaching that recall.
pub fn reference_ap(dets: &[Detection], gts: &[GroundTruth], threshold: f64, max_det: usize) -> f64 {
    let mut images: Vec<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()))
        .collect();
    images.sort();
    images.dedup();

    // (confidence, is_tp) in per-image ranked order, images by id
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for img in images {
        let mut idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].image_id == img).collect();
        // descending confidence, input position breaks ties
        idx.sort_by(|&a, &b| {
            dets[b]
                .confidence
                .partial_cmp(&dets[a].confidence)
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.truncate(max_det);
        let img_gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.image_id == img).collect();
        let mut used = vec![false; img_gts.len()];
        for i in idx {
            let mut best = None;
            let mut best_iou = threshold;
            for (j, g) in img_gts.iter().enumerate() {
                let v = box_iou(&dets[i].rect, &g.rect);
                if !used[j] && v >= best_iou && best.is_none_or(|_| v > best_iou) {
                    best = Some(j);
                    best_iou = v;
                }
            }
            if let Some(j) = best {
                used[j] = true;
            }
            ranked.push((dets[i].confidence, best.is_some()));
        }
    }
    // global stable ranking
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].0.partial_cmp(&ranked[a].0).unwrap().then(a.cmp(&b)));

    let n_gt = gts.len() as f64;
    let mut points = Vec::new();
    let (mut tp, mut n) = (0.0, 0.0);
    for &k in &order {
        n += 1.0;
        if ranked[k].1 {
            tp += 1.0;
        }
        points.push((tp / n_gt, tp / n));
    }
    let mut total = 0.0;
    for j in 0..=100 {
        let level = j as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

/// `(mAP@50, mAP@50-95)` from [`reference_ap`].
pub fn reference_map(dets: &[Detection], gts: &[GroundTruth], max_det: usize) -> (f64, f64) {
    let aps: Vec<f64> = (0..10)
        .map(|j| reference_ap(dets, gts, (50 + 5 * j) as f64 / 100.0, max_det))
        .collect();
    (aps[0], aps.iter().sum::<f64>() / 10.0)
}
