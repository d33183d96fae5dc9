use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::homography::{project_gps, Homography, ProjectedTrack};
use super::hungarian::assign_min_cost;
use super::{GpsTrack, Tracklet};
use crate::error::{Error, Result};

pub const DEFAULT_TIME_TOLERANCE_S: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub matching: BTreeMap<u64, String>,
    pub total_cost: f64,
    pub unmatched_tracklets: Vec<u64>,
    pub unmatched_gps: Vec<String>,
    /// Row per tracklet (input order), column per GPS track; `null` for no overlap.
    pub cost_matrix: Vec<Vec<Option<f64>>>,
}

// Linear interpolation at `t`; valid when the nearest fix is within `tol`.
fn interpolate(points: &[(f64, f64, f64)], t: f64, tol: f64) -> Option<(f64, f64)> {
    let first = points.first()?;
    let last = points.last()?;
    if t <= first.0 {
        return (first.0 - t <= tol).then_some((first.1, first.2));
    }
    if t >= last.0 {
        return (t - last.0 <= tol).then_some((last.1, last.2));
    }
    let k = points.partition_point(|p| p.0 <= t);
    let (a, b) = (points[k - 1], points[k]);
    if (t - a.0).min(b.0 - t) > tol {
        return None;
    }
    let w = (t - a.0) / (b.0 - a.0);
    Some((a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2)))
}

/// Mean pixel distance between the tracklet anchors and the projected GPS
/// trajectory over the timestamps where both exist, or infinity if none.
pub fn tracklet_gps_cost(tracklet: &Tracklet, projected: &ProjectedTrack, time_tolerance_s: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, (x, y)) in tracklet.anchors() {
        if let Some((u, v)) = interpolate(&projected.points, t, time_tolerance_s) {
            sum += ((x - u).powi(2) + (y - v).powi(2)).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

pub fn match_gps_to_tracklets(
    tracklets: &[Tracklet],
    gps_tracks: &[GpsTrack],
    h: &Homography,
    time_tolerance_s: f64,
) -> Result<AssignmentResult> {
    let projected: Vec<ProjectedTrack> = gps_tracks.iter().map(|g| project_gps(g, h)).collect();
    let cost: Vec<Vec<f64>> = tracklets
        .iter()
        .map(|tr| {
            projected
                .iter()
                .map(|p| tracklet_gps_cost(tr, p, time_tolerance_s))
                .collect()
        })
        .collect();
    if !cost.iter().flatten().any(|c| c.is_finite()) {
        return Err(Error::NoTemporalOverlap);
    }
    let assignment = assign_min_cost(&cost);
    let mut matching = BTreeMap::new();
    let mut row_used = vec![false; tracklets.len()];
    let mut col_used = vec![false; gps_tracks.len()];
    for &(i, j) in &assignment.pairs {
        matching.insert(tracklets[i].track_id, gps_tracks[j].cattle_id.clone());
        row_used[i] = true;
        col_used[j] = true;
    }
    Ok(AssignmentResult {
        matching,
        total_cost: assignment.total_cost,
        unmatched_tracklets: tracklets
            .iter()
            .zip(&row_used)
            .filter(|(_, used)| !**used)
            .map(|(t, _)| t.track_id)
            .collect(),
        unmatched_gps: gps_tracks
            .iter()
            .zip(&col_used)
            .filter(|(_, used)| !**used)
            .map(|(g, _)| g.cattle_id.clone())
            .collect(),
        cost_matrix: cost
            .iter()
            .map(|r| r.iter().map(|c| c.is_finite().then_some(*c)).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::GpsFix;
    use crate::data::BoundingBox;

    fn tracklet(id: u64, pts: &[(f64, f64, f64)]) -> Tracklet {
        let frames = pts
            .iter()
            .map(|&(t, x, y)| (t, BoundingBox::new(x - 1.0, y - 2.0, x + 1.0, y).unwrap()))
            .collect();
        Tracklet::new(id, frames).unwrap()
    }

    fn gps(id: &str, pts: &[(f64, f64, f64)]) -> GpsTrack {
        GpsTrack::new(id, pts.iter().map(|&(t, x, y)| GpsFix { t, x, y }).collect()).unwrap()
    }

    #[test]
    fn interpolation_respects_tolerance() {
        let p = [(0.0, 0.0, 0.0), (10.0, 10.0, 20.0)];
        assert_eq!(interpolate(&p, 1.0, 2.0), Some((1.0, 2.0)));
        assert_eq!(interpolate(&p, 5.0, 2.0), None);
        assert_eq!(interpolate(&p, 11.5, 2.0), Some((10.0, 20.0)));
        assert_eq!(interpolate(&p, -3.0, 2.0), None);
    }

    #[test]
    fn singleton_noiseless_match_has_zero_cost() {
        let pts = [(0.0, 3.0, 4.0), (1.0, 4.0, 4.5), (2.0, 5.0, 5.0)];
        let r = match_gps_to_tracklets(
            &[tracklet(7, &pts)],
            &[gps("cow", &pts)],
            &Homography::identity(),
            DEFAULT_TIME_TOLERANCE_S,
        )
        .unwrap();
        assert_eq!(r.matching.get(&7).map(String::as_str), Some("cow"));
        assert!(r.total_cost.abs() < 1e-12);
    }

    #[test]
    fn disjoint_time_ranges_fail() {
        let r = match_gps_to_tracklets(
            &[tracklet(1, &[(0.0, 0.0, 0.0)])],
            &[gps("c", &[(100.0, 0.0, 0.0)])],
            &Homography::identity(),
            DEFAULT_TIME_TOLERANCE_S,
        );
        assert!(matches!(r, Err(Error::NoTemporalOverlap)));
    }

    #[test]
    fn extra_tracks_are_reported_unmatched() {
        let a = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)];
        let b = [(0.0, 50.0, 0.0), (1.0, 50.0, 0.0)];
        let late = [(500.0, 0.0, 0.0)];
        let r = match_gps_to_tracklets(
            &[tracklet(1, &b), tracklet(2, &late)],
            &[gps("x", &a), gps("y", &b)],
            &Homography::identity(),
            DEFAULT_TIME_TOLERANCE_S,
        )
        .unwrap();
        assert_eq!(r.matching.len(), 1);
        assert_eq!(r.matching[&1], "y");
        assert_eq!(r.unmatched_tracklets, vec![2]);
        assert_eq!(r.unmatched_gps, vec!["x".to_string()]);
    }
}
