use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::GpsTrack;
use crate::error::{Error, Result};

/// One calibration marker: a ground-plane point in meters and its pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub x_m: f64,
    pub y_m: f64,
    pub u_px: f64,
    pub v_px: f64,
}

/// Ground-plane meters to image pixels, homogeneous, with `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    pub rms_px: f64,
}

/// Pixel trajectory of one GPS track. Fixes that land behind the camera are
/// listed in `excluded` by their index in the source track.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTrack {
    pub cattle_id: String,
    pub points: Vec<(f64, f64, f64)>,
    pub excluded: Vec<usize>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn new(h: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(&Matrix3::from_fn(|r, c| h[r][c]))
    }

    fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let scale = m[(2, 2)];
        if !m.iter().all(|v| v.is_finite()) || scale.abs() < 1e-12 * m.norm() {
            return Err(Error::DegenerateConfiguration(
                "homography cannot be normalized so that H[2][2] = 1".into(),
            ));
        }
        let m = m / scale;
        if m.determinant().abs() < 1e-12 * m.norm().powi(3) {
            return Err(Error::DegenerateConfiguration("homography is singular".into()));
        }
        Ok(Self {
            h: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.h[r][c])
    }

    /// Returns `None` when the point maps to `w <= 0`.
    pub fn project(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let p = self.matrix() * Vector3::new(x, y, 1.0);
        if p.z <= 0.0 {
            return None;
        }
        Some((p.x / p.z, p.y / p.z))
    }
}

// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(points: &[(f64, f64)]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let v = t * Vector3::new(p.0, p.1, 1.0);
    (v.x / v.z, v.y / v.z)
}

fn has_collinear_triple(points: &[(f64, f64)]) -> bool {
    let extent = points
        .iter()
        .flat_map(|p| [p.0.abs(), p.1.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if cross.abs() <= 1e-9 * extent * extent {
                    return true;
                }
            }
        }
    }
    false
}

/// Direct linear transform over Hartley-normalized coordinates.
pub fn fit_homography(correspondences: &[Correspondence]) -> Result<HomographyFit> {
    let n = correspondences.len();
    if n < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: n });
    }
    if correspondences
        .iter()
        .any(|c| !(c.x_m.is_finite() && c.y_m.is_finite() && c.u_px.is_finite() && c.v_px.is_finite()))
    {
        return Err(Error::DegenerateConfiguration("non-finite correspondence".into()));
    }
    let ground: Vec<(f64, f64)> = correspondences.iter().map(|c| (c.x_m, c.y_m)).collect();
    let image: Vec<(f64, f64)> = correspondences.iter().map(|c| (c.u_px, c.v_px)).collect();
    if n == 4 && (has_collinear_triple(&ground) || has_collinear_triple(&image)) {
        return Err(Error::DegenerateConfiguration(
            "three of the four correspondences are collinear".into(),
        ));
    }
    let tg = normalizer(&ground);
    let ti = normalizer(&image);

    // Zero rows pad the system to 9x9 so the SVD always exposes the full right basis.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (g, p)) in ground.iter().zip(&image).enumerate() {
        let (x, y) = apply(&tg, *g);
        let (u, v) = apply(&ti, *p);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * k, c)] = r0[c];
            a[(2 * k + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("SVD did not converge".into()))?;
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&p, &q| sigma[q].total_cmp(&sigma[p]));
    let (smallest, second) = (order[8], order[7]);
    if sigma[second] <= 1e-10 * sigma[order[0]] {
        return Err(Error::DegenerateConfiguration(
            "correspondences do not determine a unique homography".into(),
        ));
    }
    let hn = Matrix3::from_fn(|r, c| v_t[(smallest, 3 * r + c)]);
    let ti_inv = ti
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("image points coincide".into()))?;
    let homography = Homography::from_matrix(&(ti_inv * hn * tg))?;

    let mut sq = 0.0;
    for c in correspondences {
        let (u, v) = homography.project(c.x_m, c.y_m).ok_or_else(|| {
            Error::DegenerateConfiguration("a calibration point projects behind the camera".into())
        })?;
        sq += (u - c.u_px).powi(2) + (v - c.v_px).powi(2);
    }
    Ok(HomographyFit {
        homography,
        rms_px: (sq / n as f64).sqrt(),
    })
}

pub fn project_gps(track: &GpsTrack, h: &Homography) -> ProjectedTrack {
    let mut points = Vec::with_capacity(track.fixes.len());
    let mut excluded = Vec::new();
    for (k, f) in track.fixes.iter().enumerate() {
        match h.project(f.x, f.y) {
            Some((u, v)) => points.push((f.t, u, v)),
            None => excluded.push(k),
        }
    }
    ProjectedTrack {
        cattle_id: track.cattle_id.clone(),
        points,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::GpsFix;

    fn corr(x: f64, y: f64, u: f64, v: f64) -> Correspondence {
        Correspondence { x_m: x, y_m: y, u_px: u, v_px: v }
    }

    fn track(points: &[(f64, f64)]) -> GpsTrack {
        let fixes = points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| GpsFix { t: k as f64, x, y })
            .collect();
        GpsTrack::new("c", fixes).unwrap()
    }

    #[test]
    fn identity_correspondences_recover_identity() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let cs: Vec<_> = pts.iter().map(|&(x, y)| corr(x, y, x, y)).collect();
        let fit = fit_homography(&cs).unwrap();
        assert!(fit.rms_px < 1e-9);
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((fit.homography.h[r][c] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn collinear_triple_is_degenerate() {
        let cs = [corr(0.0, 0.0, 0.0, 0.0), corr(1.0, 1.0, 3.0, 1.0), corr(2.0, 2.0, 5.0, 7.0), corr(0.0, 3.0, 1.0, 9.0)];
        assert!(matches!(fit_homography(&cs), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn too_few_points() {
        let cs = [corr(0.0, 0.0, 0.0, 0.0), corr(1.0, 0.0, 1.0, 0.0), corr(0.0, 1.0, 0.0, 1.0)];
        assert!(matches!(
            fit_homography(&cs),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn all_points_on_a_line_is_degenerate() {
        let cs: Vec<_> = (0..6).map(|k| corr(k as f64, 2.0 * k as f64, k as f64, 0.5 * k as f64)).collect();
        assert!(matches!(fit_homography(&cs), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn simple_projections() {
        let t = track(&[(1.0, 2.0), (-3.0, 4.5)]);
        let id = project_gps(&t, &Homography::identity());
        assert_eq!(id.points, vec![(0.0, 1.0, 2.0), (1.0, -3.0, 4.5)]);

        let shift = Homography::new([[1.0, 0.0, 10.0], [0.0, 1.0, -5.0], [0.0, 0.0, 1.0]]).unwrap();
        let p = project_gps(&t, &shift);
        assert_eq!(p.points, vec![(0.0, 11.0, -3.0), (1.0, 7.0, -0.5)]);

        let double = Homography::new([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let p = project_gps(&t, &double);
        assert_eq!(p.points, vec![(0.0, 2.0, 4.0), (1.0, -6.0, 9.0)]);
    }

    #[test]
    fn fixes_behind_camera_are_excluded() {
        // w = 1 - x/10 is negative beyond x = 10
        let h = Homography::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.1, 0.0, 1.0]]).unwrap();
        let p = project_gps(&track(&[(0.0, 0.0), (20.0, 0.0), (5.0, 1.0)]), &h);
        assert_eq!(p.excluded, vec![1]);
        assert_eq!(p.points.len(), 2);
        assert_eq!(p.points[1].0, 2.0);
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(Homography::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }
}
