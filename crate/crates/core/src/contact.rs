//! Rigid indenters pressed into the gel and the resulting inner-surface maps.
//!
//! Depth maps store the camera-frame forward coordinate (z-depth) of the gel
//! surface at each pixel, so a flat pad facing the camera has constant depth.
//! Deformation is geometric penetration followed by a mass-preserving
//! Gaussian blur of the indentation field.

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, SensorConfig, Vec3};
use crate::grid::Grid;

pub type Pose = Isometry3<f64>;

/// Default elastic smoothing width.
pub const DEFAULT_SIGMA_MM: f64 = 0.5;

/// Margin kept between the deepest admissible indentation and the skin
/// thickness.
pub const OVER_PENETRATION_MARGIN_MM: f64 = 1.0;

/// Rigid indenter geometry in its local frame. Every variant describes a solid
/// region; the gel surface is pushed back to where each pixel ray first
/// enters that region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Indenter {
    /// Half-space `normal · p <= offset`; `normal` is the solid's outward
    /// normal.
    Plane {
        normal: Vec3,
        offset: f64,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Sinusoidal ridges rising from the base plane `normal · p <= offset`
    /// along `normal`: the solid is
    /// `normal · p <= offset + depth · (1 + cos(2π (across · p - phase) / period)) / 2`.
    Grating {
        normal: Vec3,
        offset: f64,
        across: Vec3,
        period_mm: f64,
        depth_mm: f64,
        phase_mm: f64,
    },
    /// Wedge with apex line through `apex` along `axis`, tip pointing along
    /// `ridge_dir` and opening angle `dihedral_deg`.
    Edge {
        apex: Vec3,
        axis: Vec3,
        ridge_dir: Vec3,
        dihedral_deg: f64,
    },
    /// Rigid union of its parts.
    Composite(Vec<Indenter>),
}

/// Where a ray meets an indenter within a search window.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Hit {
    /// The window start is already inside the solid.
    InsideAtStart,
    Enter(f64),
    Miss,
}

impl Hit {
    fn min(self, other: Hit) -> Hit {
        match (self, other) {
            (Hit::InsideAtStart, _) | (_, Hit::InsideAtStart) => Hit::InsideAtStart,
            (Hit::Enter(a), Hit::Enter(b)) => Hit::Enter(a.min(b)),
            (Hit::Enter(a), Hit::Miss) | (Hit::Miss, Hit::Enter(a)) => Hit::Enter(a),
            (Hit::Miss, Hit::Miss) => Hit::Miss,
        }
    }
}

/// Marching step for implicit surfaces without a closed-form ray hit.
const MARCH_STEP_MM: f64 = 0.02;

impl Indenter {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(format!("indenter: {m}")));
        match self {
            Indenter::Plane { normal, .. } if (normal.norm() - 1.0).abs() > 1e-9 => {
                bad("plane normal must be unit length")
            }
            Indenter::Sphere { radius, .. } if !(*radius > 0.0) => bad("sphere radius must be positive"),
            Indenter::Grating {
                normal,
                across,
                period_mm,
                depth_mm,
                ..
            } => {
                if (normal.norm() - 1.0).abs() > 1e-9 || (across.norm() - 1.0).abs() > 1e-9 {
                    return bad("grating directions must be unit length");
                }
                if normal.dot(across).abs() > 1e-9 {
                    return bad("grating ridge direction must lie in the base plane");
                }
                if !(*depth_mm >= 0.0 && *period_mm > 2.0 * depth_mm) {
                    return bad("grating period must exceed twice the ridge depth");
                }
                Ok(())
            }
            Indenter::Edge {
                axis,
                ridge_dir,
                dihedral_deg,
                ..
            } => {
                if (axis.norm() - 1.0).abs() > 1e-9 || (ridge_dir.norm() - 1.0).abs() > 1e-9 {
                    return bad("edge directions must be unit length");
                }
                if axis.dot(ridge_dir).abs() > 1e-9 {
                    return bad("edge ridge direction must be orthogonal to its axis");
                }
                if !(*dihedral_deg > 0.0 && *dihedral_deg < 180.0) {
                    return bad("edge dihedral angle must lie in (0, 180)");
                }
                Ok(())
            }
            Indenter::Composite(parts) if parts.is_empty() => bad("composite must not be empty"),
            Indenter::Composite(parts) => parts.iter().try_for_each(Indenter::validate),
            _ => Ok(()),
        }
    }

    /// Point membership in the local frame.
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Indenter::Plane { normal, offset } => normal.dot(p) <= *offset,
            Indenter::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Indenter::Grating {
                normal,
                offset,
                across,
                period_mm,
                depth_mm,
                phase_mm,
            } => normal.dot(p) <= offset + ridge_height(across.dot(p), *period_mm, *depth_mm, *phase_mm),
            Indenter::Edge { .. } => self.edge_half_spaces().iter().all(|(n, o)| n.dot(p) <= *o),
            Indenter::Composite(parts) => parts.iter().any(|i| i.contains(p)),
        }
    }

    /// The two bounding half-spaces `n · p <= o` of an edge wedge.
    fn edge_half_spaces(&self) -> [(Vec3, f64); 2] {
        let Indenter::Edge {
            apex,
            axis,
            ridge_dir,
            dihedral_deg,
        } = self
        else {
            unreachable!("edge_half_spaces on non-edge indenter");
        };
        let h = 0.5 * dihedral_deg.to_radians();
        let lateral = axis.cross(ridge_dir);
        let n_plus = ridge_dir * h.sin() + lateral * h.cos();
        let n_minus = ridge_dir * h.sin() - lateral * h.cos();
        [(n_plus, n_plus.dot(apex)), (n_minus, n_minus.dot(apex))]
    }

    fn hit(&self, o: &Vec3, d: &Vec3, t_lo: f64, t_hi: f64) -> Hit {
        match self {
            Indenter::Plane { normal, offset } => convex_hit(&[(*normal, *offset)], o, d, t_lo, t_hi),
            Indenter::Edge { .. } => convex_hit(&self.edge_half_spaces(), o, d, t_lo, t_hi),
            Indenter::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return Hit::Miss;
                }
                let s = disc.sqrt();
                let (t0, t1) = (-b - s, -b + s);
                if t0 <= t_lo && t1 >= t_lo {
                    Hit::InsideAtStart
                } else if t0 > t_lo && t0 <= t_hi {
                    Hit::Enter(t0)
                } else {
                    Hit::Miss
                }
            }
            Indenter::Grating {
                normal,
                offset,
                depth_mm,
                ..
            } => {
                // Restrict marching to the slab that can contain ridge material.
                let (lo, hi) = match clip_half_space(normal, offset + depth_mm, o, d, t_lo, t_hi) {
                    Some(w) => w,
                    None => return Hit::Miss,
                };
                march(self, o, d, t_lo, lo, hi)
            }
            Indenter::Composite(parts) => parts.iter().map(|p| p.hit(o, d, t_lo, t_hi)).fold(Hit::Miss, Hit::min),
        }
    }
}

fn ridge_height(s: f64, period: f64, depth: f64, phase: f64) -> f64 {
    let arg = std::f64::consts::TAU * (s - phase) / period;
    0.5 * depth * (1.0 + arg.cos())
}

/// Portion of `[t_lo, t_hi]` where `n · (o + t d) <= offset`.
fn clip_half_space(n: &Vec3, offset: f64, o: &Vec3, d: &Vec3, t_lo: f64, t_hi: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (t_lo, t_hi);
    let nd = n.dot(d);
    let no = n.dot(o);
    if nd.abs() < 1e-15 {
        if no > offset {
            return None;
        }
    } else {
        let t = (offset - no) / nd;
        if nd > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn convex_hit(planes: &[(Vec3, f64)], o: &Vec3, d: &Vec3, t_lo: f64, t_hi: f64) -> Hit {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (n, off) in planes {
        match clip_half_space(n, *off, o, d, lo, hi) {
            Some((a, b)) => {
                lo = a;
                hi = b;
            }
            None => return Hit::Miss,
        }
    }
    if lo <= t_lo && hi >= t_lo {
        Hit::InsideAtStart
    } else if lo > t_lo && lo <= t_hi {
        Hit::Enter(lo)
    } else {
        Hit::Miss
    }
}

/// First entry by fixed-step marching over `[lo, hi]` plus bisection.
fn march(shape: &Indenter, o: &Vec3, d: &Vec3, t_lo: f64, lo: f64, hi: f64) -> Hit {
    let at = |t: f64| shape.contains(&(o + d * t));
    if lo <= t_lo && at(t_lo) {
        return Hit::InsideAtStart;
    }
    let mut prev = lo;
    if at(prev) {
        return Hit::Enter(prev);
    }
    let steps = ((hi - lo) / MARCH_STEP_MM).ceil().max(1.0) as usize;
    for k in 1..=steps {
        let t = (lo + (hi - lo) * k as f64 / steps as f64).min(hi);
        if at(t) {
            let (mut a, mut b) = (prev, t);
            for _ in 0..40 {
                let m = 0.5 * (a + b);
                if at(m) {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Hit::Enter(b);
        }
        prev = t;
    }
    Hit::Miss
}

/// Z-depth map of the gel surface seen by one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub camera_index: usize,
    /// Focal length in pixels, used to convert millimetres to pixels.
    pub focal_px: f64,
    pub values: Grid<f64>,
}

impl DepthMap {
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// Depth at the optical axis (mean of the central pixels for even sizes).
    pub fn center_value(&self) -> f64 {
        let (rows, cols) = self.shape();
        let rs = if rows % 2 == 0 {
            vec![rows / 2 - 1, rows / 2]
        } else {
            vec![rows / 2]
        };
        let cs = if cols % 2 == 0 {
            vec![cols / 2 - 1, cols / 2]
        } else {
            vec![cols / 2]
        };
        let mut sum = 0.0;
        for &r in &rs {
            for &c in &cs {
                sum += self.values.get(r, c);
            }
        }
        sum / (rs.len() * cs.len()) as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Pointwise `rest - self`, in millimetres of z-depth.
    pub fn indentation_from(&self, rest: &DepthMap) -> Grid<f64> {
        let data = rest.values.iter().zip(self.values.iter()).map(|(r, d)| r - d).collect();
        Grid::from_vec(self.values.rows(), self.values.cols(), data)
    }

    /// Camera-frame surface point at `(row, col)`.
    pub fn point(&self, cam: &CameraModel, row: usize, col: usize) -> Vec3 {
        cam.pixel_ray_camera(row, col) * *self.values.get(row, col)
    }
}

/// Unit surface normals in the camera frame, oriented towards the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMap {
    pub camera_index: usize,
    pub values: Grid<Vec3>,
}

pub fn undeformed_depth(config: &SensorConfig, camera_index: usize) -> Result<DepthMap> {
    let cam = config.camera(camera_index)?;
    let mut values = Grid::filled(cam.rows(), cam.cols(), 0.0);
    for r in 0..cam.rows() {
        for c in 0..cam.cols() {
            let ray_cam = cam.pixel_ray_camera(r, c);
            let len = ray_cam.norm();
            let dir = cam.to_sensor_frame(&ray_cam) / len;
            let t = config
                .gel
                .ray_exit(&cam.position_mm, &dir)
                .ok_or_else(|| Error::Config(format!("camera {} pixel ({r}, {c}) misses the gel surface", cam.name)))?;
            *values.get_mut(r, c) = t / len;
        }
    }
    Ok(DepthMap {
        camera_index,
        focal_px: cam.focal_px(),
        values,
    })
}

/// Pushes the rest surface back to where each pixel ray first enters the
/// posed indenter. Pixels the indenter does not reach keep their rest depth.
pub fn apply_indenter(
    config: &SensorConfig,
    camera_index: usize,
    rest: &DepthMap,
    indenter: &Indenter,
    pose: &Pose,
) -> Result<DepthMap> {
    let cam = config.camera(camera_index)?;
    if rest.camera_index != camera_index || rest.shape() != (cam.rows(), cam.cols()) {
        return Err(Error::Input("rest depth map does not match camera".into()));
    }
    indenter.validate()?;
    let inv = pose.inverse();
    let origin = inv.transform_point(&cam.position_mm.into()).coords;
    if indenter.contains(&origin) {
        return Err(Error::Simulation(format!(
            "over-penetration: indenter engulfs camera {}",
            cam.name
        )));
    }
    let limit = config.gel.skin_thickness_mm - OVER_PENETRATION_MARGIN_MM;
    let mut out = rest.clone();
    for r in 0..cam.rows() {
        for c in 0..cam.cols() {
            let ray_cam = cam.pixel_ray_camera(r, c);
            let len = ray_cam.norm();
            let dir_sensor = cam.to_sensor_frame(&ray_cam) / len;
            let dir = inv.transform_vector(&dir_sensor);
            let t_rest = rest.values.get(r, c) * len;
            let t_lo = (t_rest - limit).max(0.0);
            match indenter.hit(&origin, &dir, t_lo, t_rest) {
                Hit::InsideAtStart => {
                    return Err(Error::Simulation(format!(
                        "over-penetration: indentation exceeds {limit:.2} mm at camera {} pixel ({r}, {c})",
                        cam.name
                    )))
                }
                Hit::Enter(t) if t < t_rest => *out.values.get_mut(r, c) = t / len,
                _ => {}
            }
        }
    }
    Ok(out)
}

/// Blurs the indentation field `rest - raw` with a normalised Gaussian of
/// physical width `sigma_mm` and returns `rest - blurred`.
///
/// The pixel width is taken at the optical axis. Borders use half-sample
/// symmetric reflection, under which a normalised kernel conserves the
/// field's total exactly.
pub fn elastic_smooth(raw: &DepthMap, rest: &DepthMap, sigma_mm: f64) -> Result<DepthMap> {
    if raw.camera_index != rest.camera_index || raw.shape() != rest.shape() {
        return Err(Error::Input("raw and rest depth maps differ in camera or size".into()));
    }
    if !(sigma_mm > 0.0) {
        return Err(Error::Input(format!("sigma_mm must be positive, got {sigma_mm}")));
    }
    let indentation = raw.indentation_from(rest);
    if indentation.iter().all(|&v| v == 0.0) {
        return Ok(rest.clone());
    }
    let sigma_px = sigma_mm * rest.focal_px / rest.center_value();
    let blurred = gaussian_blur(&indentation, sigma_px);
    let data = rest.values.iter().zip(blurred.iter()).map(|(r, i)| r - i).collect();
    Ok(DepthMap {
        camera_index: rest.camera_index,
        focal_px: rest.focal_px,
        values: Grid::from_vec(rest.values.rows(), rest.values.cols(), data),
    })
}

pub(crate) fn gaussian_kernel(sigma_px: f64, max_radius: usize) -> Vec<f64> {
    let radius = ((3.0 * sigma_px).ceil() as usize).min(max_radius);
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma_px * sigma_px)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric reflection of an index into `[0, n)`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

pub(crate) fn gaussian_blur(field: &Grid<f64>, sigma_px: f64) -> Grid<f64> {
    let (rows, cols) = field.shape();
    let kx = gaussian_kernel(sigma_px, cols.saturating_sub(1));
    let ky = gaussian_kernel(sigma_px, rows.saturating_sub(1));
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = Grid::filled(rows, cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, w) in kx.iter().enumerate() {
                let cc = reflect(c as isize + k as isize - rx, cols);
                acc += w * field.get(r, cc);
            }
            *tmp.get_mut(r, c) = acc;
        }
    }
    let mut out = Grid::filled(rows, cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, w) in ky.iter().enumerate() {
                let rr = reflect(r as isize + k as isize - ry, rows);
                acc += w * tmp.get(rr, c);
            }
            *out.get_mut(r, c) = acc;
        }
    }
    out
}

/// Normals from central differences of the reconstructed surface points
/// (one-sided at the image border), oriented to face the camera.
pub fn surface_normals(config: &SensorConfig, depth: &DepthMap) -> Result<NormalMap> {
    let cam = config.camera(depth.camera_index)?;
    let (rows, cols) = depth.shape();
    if (rows, cols) != (cam.rows(), cam.cols()) {
        return Err(Error::Input("depth map does not match camera resolution".into()));
    }
    let p = |r: usize, c: usize| depth.point(cam, r, c);
    let values = Grid::from_fn(rows, cols, |r, c| {
        let (c0, c1) = (c.saturating_sub(1), (c + 1).min(cols - 1));
        let (r0, r1) = (r.saturating_sub(1), (r + 1).min(rows - 1));
        let du = p(r, c1) - p(r, c0);
        let dv = p(r1, c) - p(r0, c);
        let n = du.cross(&dv);
        let norm = n.norm();
        if norm == 0.0 || !norm.is_finite() {
            return -Vec3::z();
        }
        let n = n / norm;
        if n.dot(&p(r, c)) > 0.0 {
            -n
        } else {
            n
        }
    });
    Ok(NormalMap {
        camera_index: depth.camera_index,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_flat_baseline_config, build_omnitact_config, SIDE_POS_X, TOP};

    fn flat(n: usize) -> SensorConfig {
        build_flat_baseline_config().with_resolution(n)
    }

    fn pad_plane(depth_mm: f64) -> Indenter {
        // Solid above the pad surface z = 10, pushed `depth_mm` towards the camera.
        Indenter::Plane {
            normal: -Vec3::z(),
            offset: -(10.0 - depth_mm),
        }
    }

    #[test]
    fn flat_rest_depth_is_constant() {
        let cfg = flat(33);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        for v in rest.values.iter() {
            assert!((v - cfg.gel.skin_thickness_mm).abs() < 1e-12);
        }
    }

    #[test]
    fn side_camera_center_depth_is_gel_radius() {
        let cfg = build_omnitact_config().with_resolution(41);
        let rest = undeformed_depth(&cfg, SIDE_POS_X).unwrap();
        assert!((rest.values.get(20, 20) - cfg.gel.radius_mm()).abs() < 1e-12);
        assert!(rest.values.iter().all(|&v| v >= 5.0));
    }

    #[test]
    fn top_rest_depth_has_rotational_symmetry() {
        let cfg = build_omnitact_config().with_resolution(48);
        let rest = undeformed_depth(&cfg, TOP).unwrap();
        let n = 48;
        for r in 0..n {
            for c in 0..n {
                let rot = rest.values.get(c, n - 1 - r);
                assert!((rest.values.get(r, c) - rot).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_contact_leaves_rest_unchanged() {
        let cfg = flat(32);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let far = Indenter::Sphere {
            center: Vec3::new(0.0, 0.0, 30.0),
            radius: 4.0,
        };
        let out = apply_indenter(&cfg, 0, &rest, &far, &Pose::identity()).unwrap();
        assert_eq!(out, rest);
    }

    #[test]
    fn parallel_plane_indents_uniformly() {
        let cfg = flat(32);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let out = apply_indenter(&cfg, 0, &rest, &pad_plane(1.0), &Pose::identity()).unwrap();
        for (a, b) in rest.values.iter().zip(out.values.iter()) {
            assert!((a - b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_contact_disc_radius() {
        // r = 4 mm sphere pressed 1 mm: contact radius sqrt(2*4*1 - 1) = sqrt(7).
        let cfg = flat(400);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let sphere = Indenter::Sphere {
            center: Vec3::new(0.0, 0.0, 10.0 - 1.0 + 4.0),
            radius: 4.0,
        };
        let out = apply_indenter(&cfg, 0, &rest, &sphere, &Pose::identity()).unwrap();
        let ind = out.indentation_from(&rest);
        let mm_per_px = 20.0 / 400.0;
        let count = ind.iter().filter(|&&v| v > 0.0).count() as f64;
        let radius = (count * mm_per_px * mm_per_px / std::f64::consts::PI).sqrt();
        assert!((radius - 7f64.sqrt()).abs() < 0.03, "{radius}");
    }

    #[test]
    fn engulfed_camera_is_over_penetration() {
        let cfg = flat(16);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let ball = Indenter::Sphere {
            center: Vec3::zeros(),
            radius: 1.0,
        };
        let err = apply_indenter(&cfg, 0, &rest, &ball, &Pose::identity()).unwrap_err();
        assert!(matches!(err, Error::Simulation(_)));
    }

    #[test]
    fn deep_press_is_over_penetration() {
        let cfg = flat(16);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let err = apply_indenter(&cfg, 0, &rest, &pad_plane(9.5), &Pose::identity()).unwrap_err();
        assert!(matches!(err, Error::Simulation(_)));
    }

    #[test]
    fn composite_is_pointwise_min() {
        let cfg = flat(40);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let a = Indenter::Sphere {
            center: Vec3::new(-4.0, 0.0, 12.0),
            radius: 3.0,
        };
        let b = Indenter::Sphere {
            center: Vec3::new(4.0, 1.0, 12.5),
            radius: 3.0,
        };
        let id = Pose::identity();
        let da = apply_indenter(&cfg, 0, &rest, &a, &id).unwrap();
        let db = apply_indenter(&cfg, 0, &rest, &b, &id).unwrap();
        let both = apply_indenter(&cfg, 0, &rest, &Indenter::Composite(vec![a, b]), &id).unwrap();
        for ((x, y), z) in da.values.iter().zip(db.values.iter()).zip(both.values.iter()) {
            assert!((x.min(*y) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_wedge_indents_a_line() {
        let cfg = flat(64);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let edge = Indenter::Edge {
            apex: Vec3::new(2.0, 0.0, 9.0),
            axis: Vec3::y(),
            ridge_dir: -Vec3::z(),
            dihedral_deg: 90.0,
        };
        let out = apply_indenter(&cfg, 0, &rest, &edge, &Pose::identity()).unwrap();
        let ind = out.indentation_from(&rest);
        // A 90° wedge pressed 1 mm contacts a 2 mm wide strip centred at x = 2.
        let row = 32;
        let touched: Vec<usize> = (0..64).filter(|&c| *ind.get(row, c) > 0.0).collect();
        // Image columns run towards sensor -x for this camera.
        let x = |c: usize| -(c as f64 + 0.5 - 32.0) * 20.0 / 64.0;
        assert!((x(*touched.last().unwrap()) - 1.0).abs() < 0.35);
        assert!((x(*touched.first().unwrap()) - 3.0).abs() < 0.35);
        assert!((ind.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 0.2);
    }

    #[test]
    fn grating_has_ridge_period() {
        let cfg = flat(200);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let grating = Indenter::Grating {
            normal: -Vec3::z(),
            offset: -(10.0 + 0.6),
            across: Vec3::x(),
            period_mm: 5.0,
            depth_mm: 1.0,
            phase_mm: 0.0,
        };
        let out = apply_indenter(&cfg, 0, &rest, &grating, &Pose::identity()).unwrap();
        let ind = out.indentation_from(&rest);
        let row = 100;
        let profile: Vec<f64> = (0..200).map(|c| *ind.get(row, c)).collect();
        // Crest on the axis with 0.4 mm penetration; troughs miss the gel.
        let col = |x: f64| ((x + 10.0) / 0.1 - 0.5).round() as usize;
        assert!((profile[col(0.0)] - 0.4).abs() < 0.01, "{}", profile[col(0.0)]);
        for x in [-2.5, 2.5] {
            assert_eq!(profile[col(x)], 0.0);
        }
        // Raised crests sit nearer the camera, so they image slightly wider.
        let peak = (col(3.5)..col(6.5))
            .max_by(|&a, &b| profile[a].total_cmp(&profile[b]))
            .unwrap();
        let x_peak = (peak as f64 + 0.5) * 0.1 - 10.0;
        assert!(x_peak > 5.0 && x_peak < 5.4, "{x_peak}");
    }

    #[test]
    fn invalid_indenters_rejected() {
        assert!(Indenter::Sphere {
            center: Vec3::zeros(),
            radius: 0.0
        }
        .validate()
        .is_err());
        assert!(Indenter::Composite(vec![]).validate().is_err());
        assert!(Indenter::Grating {
            normal: Vec3::z(),
            offset: 0.0,
            across: Vec3::x(),
            period_mm: 1.0,
            depth_mm: 0.6,
            phase_mm: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn smoothing_zero_field_is_identity() {
        let cfg = flat(24);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        assert_eq!(elastic_smooth(&rest, &rest, 0.5).unwrap(), rest);
    }

    #[test]
    fn smoothing_conserves_point_volume() {
        let cfg = flat(64);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        for (r, c) in [(32, 32), (0, 0), (63, 10), (2, 61)] {
            let mut raw = rest.clone();
            *raw.values.get_mut(r, c) -= 0.8;
            let out = elastic_smooth(&raw, &rest, 1.0).unwrap();
            let vol: f64 = out.indentation_from(&rest).iter().sum();
            assert!((vol - 0.8).abs() < 0.8 * 0.01, "{vol}");
        }
    }

    #[test]
    fn smoothing_step_edge_width() {
        // 1-D oracle: the 10–90 % width of a blurred step is 2·1.2816·sigma.
        let cfg = flat(401);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let mut raw = rest.clone();
        for r in 0..401 {
            for c in 200..401 {
                *raw.values.get_mut(r, c) -= 1.0;
            }
        }
        let sigma_mm = 0.5;
        let out = elastic_smooth(&raw, &rest, sigma_mm).unwrap();
        let ind = out.indentation_from(&rest);
        let mm_per_px = 20.0 / 401.0;
        let profile: Vec<f64> = (0..401).map(|c| *ind.get(200, c)).collect();
        let crossing = |level: f64| {
            let i = profile.iter().position(|&v| v >= level).unwrap();
            let (a, b) = (profile[i - 1], profile[i]);
            (i - 1) as f64 + (level - a) / (b - a)
        };
        let width = (crossing(0.9) - crossing(0.1)) * mm_per_px;
        assert!((width - 2.5631 * sigma_mm).abs() < 0.03, "{width}");
    }

    #[test]
    fn flat_rest_normals_face_camera() {
        let cfg = flat(16);
        let n = surface_normals(&cfg, &undeformed_depth(&cfg, 0).unwrap()).unwrap();
        for v in n.values.iter() {
            assert!((v - (-Vec3::z())).norm() < 1e-12);
        }
    }

    #[test]
    fn tilted_plane_normals_match_analytic() {
        let cfg = flat(96);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let theta = 12f64.to_radians();
        // Outward normal tilted by theta about the image x-axis.
        let normal = Vec3::new(0.0, theta.sin(), -theta.cos());
        let plane = Indenter::Plane {
            normal,
            offset: normal.dot(&Vec3::new(0.0, 0.0, 8.0)),
        };
        let normal = cfg.cameras[0].to_camera_frame(&normal);
        let out = apply_indenter(&cfg, 0, &rest, &plane, &Pose::identity()).unwrap();
        let normals = surface_normals(&cfg, &out).unwrap();
        let ind = out.indentation_from(&rest);
        // Interior pixels whose whole stencil is in contact.
        let mut checked = 0;
        for r in 1..95 {
            for c in 1..95 {
                let stencil = [(r, c), (r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)];
                if stencil.iter().all(|&(a, b)| *ind.get(a, b) > 0.0) {
                    let n = normals.values.get(r, c);
                    let ang = n.dot(&normal).clamp(-1.0, 1.0).acos().to_degrees();
                    assert!(ang < 0.5, "{ang}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn sphere_cap_normals_match_analytic() {
        let cfg = build_omnitact_config().with_resolution(64);
        let rest = undeformed_depth(&cfg, TOP).unwrap();
        let normals = surface_normals(&cfg, &rest).unwrap();
        let cam = &cfg.cameras[TOP];
        // Camera sits at the sphere centre: the normal is minus the ray.
        for r in 0..64 {
            for c in 0..64 {
                let expected = -cam.pixel_ray_camera(r, c).normalize();
                let ang = normals.values.get(r, c).dot(&expected).clamp(-1.0, 1.0).acos();
                assert!(ang.to_degrees() < 1.0);
            }
        }
    }

    #[test]
    fn sphere_poke_center_normal_faces_camera() {
        let cfg = flat(101);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let sphere = Indenter::Sphere {
            center: Vec3::new(0.0, 0.0, 13.0),
            radius: 4.0,
        };
        let raw = apply_indenter(&cfg, 0, &rest, &sphere, &Pose::identity()).unwrap();
        let out = elastic_smooth(&raw, &rest, 0.5).unwrap();
        let n = surface_normals(&cfg, &out).unwrap();
        assert!((n.values.get(50, 50) - (-Vec3::z())).norm() < 1e-9);
    }
}
