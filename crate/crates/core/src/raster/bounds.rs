//! Per-sphere screen rectangles, draw records and the global depth order.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{Camera, Projection};
use crate::scene::SphereScene;

/// Spheres whose projected radius is at most this many pixels are checked
/// for a pixel-center hit; if none exists they fall back to the sub-pixel
/// rule. The value is just above half a pixel diagonal.
pub const SUBPIXEL_RADIUS_PX: f64 = 0.7072;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundsRecord {
    pub x_min: u16,
    pub x_max: u16,
    pub y_min: u16,
    pub y_max: u16,
    pub off_sensor: bool,
}

impl BoundsRecord {
    pub const OFF: BoundsRecord = BoundsRecord {
        x_min: 0,
        x_max: 0,
        y_min: 0,
        y_max: 0,
        off_sensor: true,
    };

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        !self.off_sensor
            && x >= self.x_min as u32
            && x <= self.x_max as u32
            && y >= self.y_min as u32
            && y <= self.y_max as u32
    }

    /// Whether the rectangle overlaps the inclusive pixel range.
    #[inline]
    pub fn overlaps(&self, x0: u32, x1: u32, y0: u32, y1: u32) -> bool {
        !self.off_sensor
            && (self.x_min as u32) <= x1
            && (self.x_max as u32) >= x0
            && (self.y_min as u32) <= y1
            && (self.y_max as u32) >= y0
    }

    pub fn pixel_area(&self) -> u64 {
        if self.off_sensor {
            0
        } else {
            (self.x_max - self.x_min + 1) as u64 * (self.y_max - self.y_min + 1) as u64
        }
    }
}

/// Everything the draw stage needs about one sphere, in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawRecord {
    /// Index of the sphere in the scene.
    pub index: u32,
    pub position: Vector3<f64>,
    pub radius: f64,
    /// Radius used for hit tests; larger than `radius` only for sub-pixel
    /// spheres, where it is the pixel footprint at the sphere's distance.
    pub effective_radius: f64,
    pub opacity: f64,
    /// Distance to the nearest possible intersection; `inf` when off-sensor.
    pub earliest_depth: f64,
    /// NDC depth of `earliest_depth`, an upper bound on any hit's `z`.
    pub max_ndc: f64,
    pub subpixel: bool,
    /// Projected radius in pixels, used for gradient gating.
    pub projected_radius: f64,
}

/// Camera-frame geometry of a ray against a sphere center.
#[derive(Debug, Clone, Copy)]
pub struct RayGeometry {
    /// Center minus ray origin.
    pub v: Vector3<f64>,
    /// Distance along the ray to the foot of the perpendicular from the center.
    pub lambda: f64,
    /// Perpendicular offset from the ray to the center.
    pub offset: Vector3<f64>,
    pub dist2: f64,
}

#[inline]
pub fn ray_geometry(center: &Vector3<f64>, origin: &Vector3<f64>, dir: &Vector3<f64>) -> RayGeometry {
    let v = center - origin;
    let lambda = v.dot(dir);
    let offset = v - dir * lambda;
    RayGeometry {
        v,
        lambda,
        offset,
        dist2: offset.norm_squared(),
    }
}

impl RayGeometry {
    /// Hit test against radius `r`: the center lies in front of the origin and
    /// the ray passes strictly inside the sphere.
    #[inline]
    pub fn hits(&self, r: f64) -> bool {
        self.lambda > 0.0 && self.dist2 < r * r
    }

    #[inline]
    pub fn closeness(&self, r: f64) -> f64 {
        1.0 - self.dist2.sqrt() / r
    }
}

/// Pixel footprint (one pixel width) at the sphere's distance.
pub fn pixel_footprint(camera: &Camera, q: &Vector3<f64>) -> f64 {
    let px = camera.sensor_width() / camera.width() as f64;
    match camera.projection() {
        Projection::Pinhole => q.norm() * px / camera.focal_length(),
        Projection::Orthographic => px,
    }
}

fn pixel_range(lo: f64, hi: f64, n: u32) -> Option<(u16, u16)> {
    let a = (lo - 0.5).floor();
    let b = (hi - 0.5).ceil();
    if b < 0.0 || a > (n - 1) as f64 || a.is_nan() || b.is_nan() {
        return None;
    }
    Some((a.max(0.0) as u16, b.min((n - 1) as f64) as u16))
}

/// Bounds and draw record of one sphere, given its camera-frame center.
pub fn sphere_bounds(
    camera: &Camera,
    index: u32,
    q: Vector3<f64>,
    radius: f64,
    opacity: f64,
) -> (BoundsRecord, DrawRecord) {
    let (w, h) = (camera.width(), camera.height());
    let k = camera.pixel_scale();
    let f = camera.focal_length();
    let (cx, cy) = (0.5 * w as f64, 0.5 * h as f64);
    let mut draw = DrawRecord {
        index,
        position: q,
        radius,
        effective_radius: radius,
        opacity,
        earliest_depth: f64::INFINITY,
        max_ndc: 0.0,
        subpixel: false,
        projected_radius: 0.0,
    };
    if opacity <= 0.0 {
        return (BoundsRecord::OFF, draw);
    }

    // rectangle and sub-pixel candidate position
    let (rect, center_px, proj_px) = match camera.projection() {
        Projection::Pinhole => {
            if q.z + radius <= 0.0 {
                return (BoundsRecord::OFF, draw);
            }
            if q.z <= radius {
                // the sphere reaches the camera plane: no finite projection
                let full = BoundsRecord {
                    x_min: 0,
                    x_max: (w - 1) as u16,
                    y_min: 0,
                    y_max: (h - 1) as u16,
                    off_sensor: false,
                };
                (Some(full), None, f64::INFINITY)
            } else {
                let den = q.z * q.z - radius * radius;
                let span = |a: f64| {
                    let root = radius * (a * a + q.z * q.z - radius * radius).sqrt();
                    ((a * q.z - root) / den, (a * q.z + root) / den)
                };
                let (kx0, kx1) = span(q.x);
                let (ky0, ky1) = span(q.y);
                let s = k * f;
                let rect = match (
                    pixel_range(cx + s * kx0, cx + s * kx1, w),
                    pixel_range(cy + s * ky0, cy + s * ky1, h),
                ) {
                    (Some((x0, x1)), Some((y0, y1))) => Some(BoundsRecord {
                        x_min: x0,
                        x_max: x1,
                        y_min: y0,
                        y_max: y1,
                        off_sensor: false,
                    }),
                    _ => None,
                };
                let p = (cx + s * q.x / q.z, cy + s * q.y / q.z);
                (rect, Some(p), s * radius / q.z)
            }
        }
        Projection::Orthographic => {
            if q.z <= 0.0 {
                return (BoundsRecord::OFF, draw);
            }
            let rect = match (
                pixel_range(cx + (q.x - radius) * k, cx + (q.x + radius) * k, w),
                pixel_range(cy + (q.y - radius) * k, cy + (q.y + radius) * k, h),
            ) {
                (Some((x0, x1)), Some((y0, y1))) => Some(BoundsRecord {
                    x_min: x0,
                    x_max: x1,
                    y_min: y0,
                    y_max: y1,
                    off_sensor: false,
                }),
                _ => None,
            };
            (rect, Some((cx + q.x * k, cy + q.y * k)), radius * k)
        }
    };
    draw.projected_radius = proj_px;

    let mut bounds = rect.unwrap_or(BoundsRecord::OFF);
    if let Some((pu, pv)) = center_px {
        let in_image = pu >= 0.0 && pu < w as f64 && pv >= 0.0 && pv < h as f64;
        let delta = match camera.projection() {
            Projection::Pinhole => f * radius / q.norm() * k,
            Projection::Orthographic => radius * k,
        };
        if in_image && delta <= SUBPIXEL_RADIUS_PX && !any_pixel_hit(camera, &q, radius, &bounds) {
            let (px, py) = (pu.floor() as u16, pv.floor() as u16);
            bounds = BoundsRecord {
                x_min: px,
                x_max: px,
                y_min: py,
                y_max: py,
                off_sensor: false,
            };
            draw.subpixel = true;
            draw.effective_radius = radius.max(pixel_footprint(camera, &q));
        }
    }
    if bounds.off_sensor {
        return (bounds, draw);
    }
    draw.earliest_depth = match camera.projection() {
        Projection::Pinhole => q.norm() - draw.effective_radius,
        Projection::Orthographic => q.z - draw.effective_radius,
    };
    draw.max_ndc = camera.ndc_depth(draw.earliest_depth);
    (bounds, draw)
}

fn any_pixel_hit(camera: &Camera, q: &Vector3<f64>, radius: f64, rect: &BoundsRecord) -> bool {
    if rect.off_sensor {
        return false;
    }
    for y in rect.y_min..=rect.y_max {
        for x in rect.x_min..=rect.x_max {
            let (o, d) = camera.camera_ray(x as f64 + 0.5, y as f64 + 0.5);
            if ray_geometry(q, &o, &d).hits(radius) {
                return true;
            }
        }
    }
    false
}

/// Step 0: bounds and draw records for every sphere, in scene order.
pub fn compute_bounds(scene: &SphereScene, camera: &Camera) -> (Vec<BoundsRecord>, Vec<DrawRecord>) {
    scene
        .spheres()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let q = camera.world_to_camera(&s.position);
            sphere_bounds(camera, i as u32, q, s.radius, s.clamped_opacity())
        })
        .unzip()
}

/// Order of records by `(earliest_depth, index)`; off-sensor records last.
pub fn depth_order(draws: &[DrawRecord]) -> Vec<u32> {
    // Sorting compact (key, position) pairs is much faster than comparing
    // through the records; keys follow f64::total_cmp.
    let mut keys: Vec<(i64, u32, u32)> = draws
        .iter()
        .enumerate()
        .map(|(i, d)| (total_order_key(d.earliest_depth), d.index, i as u32))
        .collect();
    keys.par_sort_unstable();
    keys.into_iter().map(|(_, _, i)| i).collect()
}

/// Integer key with the same order as `f64::total_cmp`.
fn total_order_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ ((((b >> 63) as u64) >> 1) as i64)
}

/// Sorts both arrays by earliest depth, ties broken by sphere index.
pub fn sort_draw_records(bounds: Vec<BoundsRecord>, draws: Vec<DrawRecord>) -> (Vec<BoundsRecord>, Vec<DrawRecord>) {
    assert_eq!(bounds.len(), draws.len(), "parallel arrays must have equal length");
    let order = depth_order(&draws);
    order.iter().map(|&i| (bounds[i as usize], draws[i as usize])).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Sensor;
    use crate::scene::Sphere;
    use proptest::prelude::*;

    fn camera(w: u32, projection: Projection) -> Camera {
        Camera::from_vector(
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 2.0],
            Sensor::new(w, w)
                .with_depth_range(0.1, 45.0)
                .with_projection(projection),
        )
        .unwrap()
    }

    fn one(q: Vector3<f64>, r: f64, cam: &Camera) -> (BoundsRecord, DrawRecord) {
        sphere_bounds(cam, 0, q, r, 1.0)
    }

    #[test]
    fn on_axis_half_width() {
        let cam = camera(1024, Projection::Pinhole);
        let (b, d) = one(Vector3::new(0.0, 0.0, 25.0), 1.0, &cam);
        let half = 512.0 * 5.0 / (624f64).sqrt();
        assert!((half - 102.5).abs() < 0.05);
        assert!(!b.off_sensor);
        assert_eq!(b.x_min as f64, (512.0 - half - 0.5).floor());
        assert_eq!(b.x_max as f64, (512.0 + half - 0.5).ceil());
        assert_eq!((b.x_min, b.x_max), (b.y_min, b.y_max));
        assert_eq!(b.x_min + b.x_max, 1023);
        assert_eq!(d.earliest_depth, 24.0);
        assert!(!d.subpixel);
    }

    #[test]
    fn behind_camera_is_off_sensor() {
        let cam = camera(64, Projection::Pinhole);
        let (b, d) = one(Vector3::new(0.0, 0.0, -5.0), 1.0, &cam);
        assert!(b.off_sensor);
        assert_eq!(d.earliest_depth, f64::INFINITY);
        let ortho = camera(64, Projection::Orthographic);
        assert!(one(Vector3::new(0.0, 0.0, -5.0), 1.0, &ortho).0.off_sensor);
    }

    #[test]
    fn outside_frustum_and_transparent_are_off_sensor() {
        let cam = camera(64, Projection::Pinhole);
        assert!(one(Vector3::new(30.0, 0.0, 10.0), 1.0, &cam).0.off_sensor);
        let (b, _) = sphere_bounds(&cam, 0, Vector3::new(0.0, 0.0, 10.0), 1.0, 0.0);
        assert!(b.off_sensor);
    }

    #[test]
    fn subpixel_sphere_gets_single_pixel() {
        let cam = camera(64, Projection::Pinhole);
        // projected radius = f r / z * W / s = 5 * r / 25 * 32 = 0.1 px
        let r = 0.1 * 25.0 / (5.0 * 32.0);
        let q = Vector3::new(0.13, -0.07, 25.0);
        let (b, d) = one(q, r, &cam);
        assert!(d.subpixel);
        assert_eq!((b.x_max - b.x_min, b.y_max - b.y_min), (0, 0));
        let p = cam.project_camera_point(&q).unwrap();
        assert_eq!((b.x_min as f64, b.y_min as f64), (p.u.floor(), p.v.floor()));
        assert!(d.effective_radius > r);
        assert!((d.projected_radius - 0.1).abs() < 1e-12);
    }

    #[test]
    fn small_sphere_on_pixel_center_is_regular() {
        let cam = camera(64, Projection::Pinhole);
        // center exactly on the ray of pixel (40, 20)
        let ray = cam.pixel_ray(40, 20);
        let q = ray.direction * 25.0;
        let (b, d) = one(q, 0.005, &cam);
        assert!(!d.subpixel);
        assert!(b.contains(40, 20));
    }

    #[test]
    fn sort_orders_by_depth_then_index() {
        let mk = |i: u32, e: f64| DrawRecord {
            index: i,
            position: Vector3::zeros(),
            radius: 1.0,
            effective_radius: 1.0,
            opacity: 1.0,
            earliest_depth: e,
            max_ndc: 0.0,
            subpixel: false,
            projected_radius: 1.0,
        };
        let draws = vec![mk(0, 3.0), mk(1, 1.0), mk(2, f64::INFINITY), mk(3, 2.0)];
        let bounds = vec![BoundsRecord::OFF; 4];
        let (_, sorted) = sort_draw_records(bounds, draws);
        let idx: Vec<u32> = sorted.iter().map(|d| d.index).collect();
        assert_eq!(idx, vec![1, 3, 0, 2]);

        let draws: Vec<DrawRecord> = (0..6).map(|i| mk(i, 5.0)).collect();
        let (_, sorted) = sort_draw_records(vec![BoundsRecord::OFF; 6], draws);
        assert!(sorted.iter().enumerate().all(|(i, d)| d.index == i as u32));
    }

    #[test]
    fn large_index_space_sorts() {
        let n = 233_872u32;
        let draws: Vec<DrawRecord> = (0..n)
            .map(|i| DrawRecord {
                index: i,
                position: Vector3::zeros(),
                radius: 1.0,
                effective_radius: 1.0,
                opacity: 1.0,
                earliest_depth: ((i * 7919) % 1000) as f64,
                max_ndc: 0.0,
                subpixel: false,
                projected_radius: 1.0,
            })
            .collect();
        let order = depth_order(&draws);
        assert_eq!(order.len(), n as usize);
        assert!(order.windows(2).all(|w| {
            let (a, b) = (&draws[w[0] as usize], &draws[w[1] as usize]);
            (a.earliest_depth, a.index) < (b.earliest_depth, b.index)
        }));
    }

    proptest! {
        #[test]
        fn order_key_matches_total_cmp(a in proptest::num::f64::ANY, b in proptest::num::f64::ANY) {
            prop_assert_eq!(total_order_key(a).cmp(&total_order_key(b)), a.total_cmp(&b));
        }

        #[test]
        fn rectangles_are_conservative(
            x in -6.0f64..6.0, y in -6.0f64..6.0, z in -2.0f64..30.0, r in 0.05f64..3.0,
            ortho in proptest::bool::ANY,
        ) {
            let cam = camera(48, if ortho { Projection::Orthographic } else { Projection::Pinhole });
            let mut scene = SphereScene::new(1, vec![0.0]).unwrap();
            scene.push(Sphere::new(Vector3::new(x, y, z), r, 1.0, vec![1.0])).unwrap();
            let (b, d) = compute_bounds(&scene, &cam);
            for py in 0..48 {
                for px in 0..48 {
                    let (o, dir) = cam.camera_ray(px as f64 + 0.5, py as f64 + 0.5);
                    let g = ray_geometry(&d[0].position, &o, &dir);
                    // Sub-pixel spheres are drawn only at their own pixel with
                    // an enlarged radius; their real radius hits no pixel center.
                    if d[0].subpixel {
                        prop_assert!(!g.hits(d[0].radius));
                        prop_assert!(b[0].x_min == b[0].x_max && b[0].y_min == b[0].y_max);
                        continue;
                    }
                    if g.hits(d[0].effective_radius) {
                        prop_assert!(b[0].contains(px, py), "pixel ({px},{py}) outside {:?}", b[0]);
                        // earliest depth bounds the hit distance
                        prop_assert!(g.lambda >= d[0].earliest_depth - 1e-9);
                    }
                }
            }
            if !b[0].off_sensor {
                prop_assert!(b[0].x_min <= b[0].x_max && b[0].y_min <= b[0].y_max);
            }
        }
    }
}
