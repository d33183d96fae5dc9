//! Synthetic GPS collars and the matching ground-truth camera tracklets.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::{BoundingBox, SyntheticSceneSpec};
use crate::association::{Correspondence, GpsFix, GpsTrack, Homography, Tracklet};
use crate::error::{Error, Result};

/// Per-axis amplitude of each animal's wander around its anchor, in meters.
pub const WANDER_AMPLITUDE_M: f64 = 0.75;
/// Minimum ground distance between any two animals at any time, in meters.
pub const MIN_SPACING_M: f64 = 3.0;
const BODY_HALF_LENGTH_M: f64 = 1.25;
const IMAGE_SIZE: (f64, f64) = (1920.0, 1080.0);
const FOCAL_PX: f64 = 1200.0;

/// One synthetic recording: noisy collars, clean tracklets and the camera.
#[derive(Debug, Clone)]
pub struct GpsScene {
    pub tracks: Vec<GpsTrack>,
    pub tracklets: Vec<Tracklet>,
    pub homography: Homography,
    /// track_id -> cattle_id.
    pub truth: BTreeMap<u64, String>,
    /// Exact ground-marker correspondences for calibration.
    pub correspondences: Vec<Correspondence>,
    /// Noise-free ground positions, parallel to `tracks`.
    pub clean_tracks: Vec<GpsTrack>,
}

// Pinhole camera behind and above the arena looking at its center; restricted to z = 0.
fn camera_homography(arena: [f64; 2]) -> Result<Homography> {
    let target = Vector3::new(arena[0] / 2.0, arena[1] / 2.0, 0.0);
    let eye = Vector3::new(arena[0] / 2.0, -0.6 * arena[1], 0.5 * arena[1].max(arena[0] / 2.0));
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vector3::z()).normalize();
    let down = forward.cross(&right);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let k = Matrix3::new(
        FOCAL_PX, 0.0, IMAGE_SIZE.0 / 2.0,
        0.0, FOCAL_PX, IMAGE_SIZE.1 / 2.0,
        0.0, 0.0, 1.0,
    );
    let t = -(r * eye);
    let m = k * Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t]);
    Homography::new(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
}

fn place_anchors(n: usize, arena: [f64; 2], rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let min_dist = MIN_SPACING_M + 2.0 * std::f64::consts::SQRT_2 * WANDER_AMPLITUDE_M + 0.1;
    let margin = WANDER_AMPLITUDE_M + 1.0;
    if arena[0] <= 2.0 * margin || arena[1] <= 2.0 * margin {
        return Err(Error::InvalidSpec("arena is too small for GPS tracks".into()));
    }
    let mut anchors: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while anchors.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::InvalidSpec(format!(
                "cannot place {n} animals {min_dist:.2} m apart in a {}x{} m arena",
                arena[0], arena[1]
            )));
        }
        let p = (
            rng.random_range(margin..arena[0] - margin),
            rng.random_range(margin..arena[1] - margin),
        );
        if anchors
            .iter()
            .all(|a| ((a.0 - p.0).powi(2) + (a.1 - p.1).powi(2)).sqrt() >= min_dist)
        {
            anchors.push(p);
        }
    }
    Ok(anchors)
}

fn ground_box(h: &Homography, x: f64, y: f64) -> Result<BoundingBox> {
    let behind = || Error::InvalidSpec("animal projects behind the camera".into());
    let (u, v) = h.project(x, y).ok_or_else(behind)?;
    let (ul, _) = h.project(x - BODY_HALF_LENGTH_M, y).ok_or_else(behind)?;
    let (ur, _) = h.project(x + BODY_HALF_LENGTH_M, y).ok_or_else(behind)?;
    let half = (0.5 * (ur - ul).abs()).max(2.0);
    BoundingBox::new(u - half, v - 1.2 * half, u + half, v)
}

/// Fixes at `t_k = k / rate` for `k < round(duration * rate)`. Each animal
/// wanders sinusoidally around an anchor; anchors are spaced so that animals
/// never come closer than [`MIN_SPACING_M`]. Noise is added to GPS only.
pub fn generate_synthetic_gps_tracks(spec: &SyntheticSceneSpec, duration: f64, rate: f64) -> Result<GpsScene> {
    spec.validate()?;
    if !(duration > 0.0 && duration.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidSpec("duration and rate must be positive".into()));
    }
    if spec.n_cattle == 0 {
        return Err(Error::InvalidSpec("n_cattle must be at least 1".into()));
    }
    let n_fixes = (duration * rate).round() as usize;
    if n_fixes == 0 {
        return Err(Error::InvalidSpec("duration * rate yields no fixes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6770_735f_7363_656e);
    let homography = camera_homography(spec.arena_size)?;
    let anchors = place_anchors(spec.n_cattle, spec.arena_size, &mut rng)?;
    let noise = Normal::new(0.0, spec.gps_noise_sigma)
        .map_err(|e| Error::InvalidSpec(format!("gps_noise_sigma: {e}")))?;

    let mut track_ids: Vec<u64> = (0..spec.n_cattle as u64).map(|k| 100 + k).collect();
    track_ids.shuffle(&mut rng);

    let mut tracks = Vec::with_capacity(spec.n_cattle);
    let mut clean_tracks = Vec::with_capacity(spec.n_cattle);
    let mut tracklets = Vec::with_capacity(spec.n_cattle);
    let mut truth = BTreeMap::new();
    for (k, &(ax, ay)) in anchors.iter().enumerate() {
        let cattle_id = format!("cow{k:02}");
        let period = [rng.random_range(20.0..60.0), rng.random_range(20.0..60.0)];
        let phase = [
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        ];
        let mut clean = Vec::with_capacity(n_fixes);
        let mut noisy = Vec::with_capacity(n_fixes);
        let mut frames = Vec::with_capacity(n_fixes);
        for i in 0..n_fixes {
            let t = i as f64 / rate;
            let x = ax + WANDER_AMPLITUDE_M * (std::f64::consts::TAU * t / period[0] + phase[0]).sin();
            let y = ay + WANDER_AMPLITUDE_M * (std::f64::consts::TAU * t / period[1] + phase[1]).sin();
            clean.push(GpsFix { t, x, y });
            let (nx, ny) = if spec.gps_noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            noisy.push(GpsFix { t, x: x + nx, y: y + ny });
            frames.push((t, ground_box(&homography, x, y)?));
        }
        tracks.push(GpsTrack::new(cattle_id.clone(), noisy)?);
        clean_tracks.push(GpsTrack::new(cattle_id.clone(), clean)?);
        tracklets.push(Tracklet::new(track_ids[k], frames)?);
        truth.insert(track_ids[k], cattle_id);
    }
    tracklets.sort_by_key(|t| t.track_id);

    let [w, h] = spec.arena_size;
    let correspondences = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h), (w / 2.0, 0.0), (w / 2.0, h)]
        .iter()
        .map(|&(x, y)| {
            let (u, v) = homography
                .project(x, y)
                .ok_or_else(|| Error::InvalidSpec("marker behind the camera".into()))?;
            Ok(Correspondence { x_m: x, y_m: y, u_px: u, v_px: v })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GpsScene {
        tracks,
        tracklets,
        homography,
        truth,
        correspondences,
        clean_tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::project_gps;

    fn spec(n: usize, sigma: f64, seed: u64) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            n_cattle: n,
            gps_noise_sigma: sigma,
            seed,
            ..SyntheticSceneSpec::default()
        }
    }

    #[test]
    fn counts_tracks_and_fixes() {
        let s = generate_synthetic_gps_tracks(&spec(3, 0.5, 1), 10.0, 1.0).unwrap();
        assert_eq!(s.tracks.len(), 3);
        assert!(s.tracks.iter().all(|t| t.fixes.len() == 10));
        assert_eq!(s.tracklets.len(), 3);
        assert_eq!(s.truth.len(), 3);
    }

    #[test]
    fn noiseless_projection_coincides_with_tracklets() {
        let s = generate_synthetic_gps_tracks(&spec(4, 0.0, 9), 12.0, 2.0).unwrap();
        for tracklet in &s.tracklets {
            let cow = &s.truth[&tracklet.track_id];
            let track = s.tracks.iter().find(|t| &t.cattle_id == cow).unwrap();
            let p = project_gps(track, &s.homography);
            assert!(p.excluded.is_empty());
            for ((t, (x, y)), (pt, u, v)) in tracklet.anchors().zip(&p.points) {
                assert_eq!(t, *pt);
                assert!((x - u).abs() < 1e-9 && (y - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn animals_keep_their_distance() {
        for seed in 0..20 {
            let s = generate_synthetic_gps_tracks(&spec(5, 0.0, seed), 30.0, 1.0).unwrap();
            for i in 0..s.clean_tracks.len() {
                for j in i + 1..s.clean_tracks.len() {
                    for (a, b) in s.clean_tracks[i].fixes.iter().zip(&s.clean_tracks[j].fixes) {
                        assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() >= MIN_SPACING_M);
                    }
                }
            }
        }
    }

    #[test]
    fn fix_noise_matches_folded_normal_mean() {
        // per-axis |error| of N(0, sigma) has mean sigma * sqrt(2/pi)
        let sigma = 0.5;
        let s = generate_synthetic_gps_tracks(&spec(5, sigma, 11), 1000.0, 1.0).unwrap();
        let mut errs = Vec::new();
        for (noisy, clean) in s.tracks.iter().zip(&s.clean_tracks) {
            assert_eq!(noisy.cattle_id, clean.cattle_id);
            for (a, b) in noisy.fixes.iter().zip(&clean.fixes) {
                errs.push((a.x - b.x).abs());
                errs.push((a.y - b.y).abs());
            }
        }
        assert!(errs.len() >= 10_000);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let scale = (std::f64::consts::PI / 2.0).sqrt() * sigma;
        assert!((0.3 * scale..=0.7 * scale).contains(&mean), "mean {mean}");
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expected).abs() < 0.02, "mean {mean} vs {expected}");
    }

    #[test]
    fn calibration_markers_are_in_front_of_camera() {
        let s = generate_synthetic_gps_tracks(&spec(2, 0.5, 3), 5.0, 1.0).unwrap();
        assert_eq!(s.correspondences.len(), 6);
        assert!(s.correspondences.iter().all(|c| c.v_px.is_finite()));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            generate_synthetic_gps_tracks(&spec(2, 0.5, 0), 0.0, 1.0),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            generate_synthetic_gps_tracks(&spec(2, -0.5, 0), 1.0, 1.0),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            generate_synthetic_gps_tracks(&spec(500, 0.5, 0), 1.0, 1.0),
            Err(Error::InvalidSpec(_))
        ));
    }
}
