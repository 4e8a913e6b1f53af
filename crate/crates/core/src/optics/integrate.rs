use rustdct::DctPlanner;

use crate::contact::{undeformed_depth, DepthMap, NormalMap};
use crate::error::{Error, Result};
use crate::geometry::SensorConfig;
use crate::grid::Grid;

/// Smallest `|n · ray|` admitted when converting normals to gradients.
const MIN_FACING: f64 = 0.05;

/// Recovers a depth map from camera-facing normals.
///
/// Under perspective projection the log-depth gradients are
/// `∂ln z/∂col = -n_x / (f n·r)` and `∂ln z/∂row = -n_y / (f n·r)` with
/// `r = (u/f, v/f, 1)`. These are integrated in the least-squares sense with
/// natural boundary conditions, exponentiated, and scaled so the mean matches
/// the rest surface.
pub fn integrate_normals(normals: &NormalMap, config: &SensorConfig, camera_index: usize) -> Result<DepthMap> {
    let cam = config.camera(camera_index)?;
    if normals.camera_index != camera_index || normals.values.shape() != (cam.rows(), cam.cols()) {
        return Err(Error::Input("normal map does not match camera".into()));
    }
    let f = cam.focal_px();
    let (gx, gy) = log_depth_gradients(normals, |r, c| cam.pixel_ray_camera(r, c), f);
    let w = solve_poisson(&gx, &gy);
    let rest_mean = undeformed_depth(config, camera_index)?.mean();
    let mut z = w.map(|v| v.exp());
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let scale = rest_mean / mean;
    z.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    Ok(DepthMap {
        camera_index,
        focal_px: f,
        values: z,
    })
}

fn log_depth_gradients(
    normals: &NormalMap,
    ray: impl Fn(usize, usize) -> nalgebra::Vector3<f64>,
    f: f64,
) -> (Grid<f64>, Grid<f64>) {
    let (rows, cols) = normals.values.shape();
    let mut gx = Grid::filled(rows, cols, 0.0);
    let mut gy = Grid::filled(rows, cols, 0.0);
    for (r, c, n) in normals.values.indexed() {
        let nr = n.dot(&ray(r, c)).min(-MIN_FACING);
        *gx.get_mut(r, c) = -n.x / (f * nr);
        *gy.get_mut(r, c) = -n.y / (f * nr);
    }
    (gx, gy)
}

/// Right-hand side of the normal equations `L w = b` for
/// `min Σ (w[j] - w[i] - g_ij)²` over 4-neighbour pairs, where `g_ij` is the
/// mean of the two pixel gradients.
pub(crate) fn divergence(gx: &Grid<f64>, gy: &Grid<f64>) -> Grid<f64> {
    let (rows, cols) = gx.shape();
    let mut b = Grid::filled(rows, cols, 0.0);
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            let g = 0.5 * (gx.get(r, c) + gx.get(r, c + 1));
            *b.get_mut(r, c) -= g;
            *b.get_mut(r, c + 1) += g;
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            let g = 0.5 * (gy.get(r, c) + gy.get(r + 1, c));
            *b.get_mut(r, c) -= g;
            *b.get_mut(r + 1, c) += g;
        }
    }
    b
}

/// Exact zero-mean solution of the grid least-squares integration problem.
///
/// The 4-neighbour graph Laplacian with free boundaries is diagonalised by the
/// type-II DCT with eigenvalues `(2 - 2cos(πp/W)) + (2 - 2cos(πq/H))`.
pub(crate) fn solve_poisson(gx: &Grid<f64>, gy: &Grid<f64>) -> Grid<f64> {
    let (rows, cols) = gx.shape();
    let mut data = divergence(gx, gy).into_vec();
    let mut planner = DctPlanner::new();
    let dct_c = planner.plan_dct2(cols);
    let dct_r = planner.plan_dct2(rows);
    for row in data.chunks_mut(cols) {
        dct_c.process_dct2(row);
    }
    let mut column = vec![0.0; rows];
    let mut by_columns = |data: &mut [f64], forward: bool| {
        for c in 0..cols {
            for r in 0..rows {
                column[r] = data[r * cols + c];
            }
            if forward {
                dct_r.process_dct2(&mut column);
            } else {
                dct_r.process_dct3(&mut column);
            }
            for r in 0..rows {
                data[r * cols + c] = column[r];
            }
        }
    };
    by_columns(&mut data, true);
    let eig = |k: usize, n: usize| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos();
    for q in 0..rows {
        for p in 0..cols {
            let lambda = eig(p, cols) + eig(q, rows);
            let v = &mut data[q * cols + p];
            *v = if lambda == 0.0 { 0.0 } else { *v / lambda };
        }
    }
    by_columns(&mut data, false);
    for row in data.chunks_mut(cols) {
        dct_c.process_dct3(row);
    }
    // DCT-III of DCT-II scales by n/2 along each axis.
    let norm = 4.0 / (rows * cols) as f64;
    data.iter_mut().for_each(|v| *v *= norm);
    Grid::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{apply_indenter, elastic_smooth, surface_normals, Indenter, Pose};
    use crate::geometry::{build_flat_baseline_config, build_omnitact_config, Vec3, TOP};
    use crate::optics::{calibrate_photometric, invert_photometric, render};

    fn laplacian(w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let mut acc = 0.0;
                for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                        acc += w[i] - w[rr as usize * cols + cc as usize];
                    }
                }
                out[i] = acc;
            }
        }
        out
    }

    /// Conjugate gradients on the same singular system, restricted to
    /// zero-mean vectors.
    fn cg_solve(b: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = vec![0.0; b.len()];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        for _ in 0..10_000 {
            let ap = laplacian(&p, rows, cols);
            let alpha = rs / dot(&p, &ap);
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new = dot(&r, &r);
            if rs_new.sqrt() < 1e-13 {
                break;
            }
            for i in 0..p.len() {
                p[i] = r[i] + rs_new / rs * p[i];
            }
            rs = rs_new;
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| v - mean).collect()
    }

    #[test]
    fn dct_solver_matches_conjugate_gradients() {
        let (rows, cols) = (13, 17);
        let gx = Grid::from_fn(rows, cols, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.01 - 0.02);
        let gy = Grid::from_fn(rows, cols, |r, c| ((r * 2 + c * 5) % 7) as f64 * 0.01 - 0.03);
        let w = solve_poisson(&gx, &gy);
        let cg = cg_solve(divergence(&gx, &gy).as_slice(), rows, cols);
        for (a, b) in w.iter().zip(&cg) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(w.iter().sum::<f64>().abs() < 1e-9);
    }

    fn rmse(a: &DepthMap, b: &DepthMap) -> f64 {
        (a.values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / a.values.len() as f64)
            .sqrt()
    }

    #[test]
    fn rest_normals_recover_rest_depth() {
        for cfg in [
            build_flat_baseline_config().with_resolution(64),
            build_omnitact_config().with_resolution(64),
        ] {
            let rest = undeformed_depth(&cfg, TOP).unwrap();
            let n = surface_normals(&cfg, &rest).unwrap();
            let z = integrate_normals(&n, &cfg, TOP).unwrap();
            assert!(rmse(&z, &rest) < 0.05, "{}", rmse(&z, &rest));
        }
    }

    #[test]
    fn tilted_plane_normals_recover_plane() {
        let cfg = build_flat_baseline_config().with_resolution(64);
        let cam = &cfg.cameras[0];
        let theta = 10f64.to_radians();
        let normal = Vec3::new(theta.sin(), 0.0, -theta.cos());
        let n = NormalMap {
            camera_index: 0,
            values: Grid::filled(64, 64, normal),
        };
        let z = integrate_normals(&n, &cfg, 0).unwrap();
        // The recovered surface is the plane normal·p = k with the same mean depth.
        let depth_for = |k: f64| {
            Grid::from_fn(64, 64, |r, c| {
                let ray = cam.pixel_ray_camera(r, c);
                k / normal.dot(&ray)
            })
        };
        let unit = depth_for(1.0);
        let k = z.mean() / (unit.iter().sum::<f64>() / unit.len() as f64);
        let plane = DepthMap {
            camera_index: 0,
            focal_px: z.focal_px,
            values: depth_for(k),
        };
        assert!(rmse(&z, &plane) < 0.05, "{}", rmse(&z, &plane));
    }

    #[test]
    fn depth_normals_round_trip() {
        let cfg = build_flat_baseline_config().with_resolution(96);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let s = Indenter::Sphere {
            center: Vec3::new(0.5, -0.5, 12.0),
            radius: 3.0,
        };
        let d = elastic_smooth(
            &apply_indenter(&cfg, 0, &rest, &s, &Pose::identity()).unwrap(),
            &rest,
            0.5,
        )
        .unwrap();
        let n = surface_normals(&cfg, &d).unwrap();
        let z = integrate_normals(&n, &cfg, 0).unwrap();
        // Compare shapes: the anchor fixes the mean to the rest surface.
        let centred = |m: &DepthMap| {
            let mean = m.mean();
            DepthMap {
                values: m.values.map(|v| v - mean),
                ..m.clone()
            }
        };
        let rel = rmse(&centred(&z), &centred(&d)) / d.mean();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn sphere_poke_depth_through_images() {
        let cfg = build_flat_baseline_config().with_resolution(101);
        let rest = undeformed_depth(&cfg, 0).unwrap();
        let poke = |x: f64, y: f64, d: f64| {
            let s = Indenter::Sphere {
                center: Vec3::new(x, y, 10.0 - d + 4.0),
                radius: 4.0,
            };
            let raw = apply_indenter(&cfg, 0, &rest, &s, &Pose::identity()).unwrap();
            let depth = elastic_smooth(&raw, &rest, 0.5).unwrap();
            let n = surface_normals(&cfg, &depth).unwrap();
            let img = render(&cfg, 0, &n, &depth).unwrap();
            (depth, n, img)
        };
        let (_, n1, i1) = poke(-3.0, 3.0, 1.5);
        let (_, n2, i2) = poke(3.0, -2.0, 1.0);
        let cal = calibrate_photometric(&cfg, 0, &[n1, n2], &[i1, i2]).unwrap();
        let (truth, _, img) = poke(0.0, 0.0, 1.0);
        let z = integrate_normals(&invert_photometric(&cal, &img).unwrap(), &cfg, 0).unwrap();
        let true_ind = rest.values.get(50, 50) - truth.values.get(50, 50);
        let got = rest.values.get(50, 50) - z.values.get(50, 50);
        assert!(((got - true_ind) / true_ind).abs() < 0.15, "{got} vs {true_ind}");
    }
}
