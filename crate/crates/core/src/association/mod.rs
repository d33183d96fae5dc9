//! Deployment-side geometry: pair candidates from detections, ground-plane to
//! image homography, and optimal tracklet to GPS identity assignment.

mod candidates;
mod files;
mod homography;
mod hungarian;
mod matching;

pub use candidates::{build_interaction_candidates, PairCandidate, DEFAULT_PAIR_THRESHOLD};
pub use files::{read_correspondences, read_gps_csv, read_tracklets, write_correspondences, write_gps_csv, write_tracklets};
pub use homography::{fit_homography, project_gps, Correspondence, Homography, HomographyFit, ProjectedTrack};
pub use hungarian::{assign_min_cost, Assignment};
pub use matching::{match_gps_to_tracklets, tracklet_gps_cost, AssignmentResult, DEFAULT_TIME_TOLERANCE_S};

use serde::{Deserialize, Serialize};

use crate::data::BoundingBox;
use crate::error::{Error, Result};

/// How a detection box maps to the ground-contact pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    #[default]
    BottomCenter,
    Center,
}

impl AnchorRule {
    pub fn anchor(&self, b: &BoundingBox) -> (f64, f64) {
        match self {
            AnchorRule::BottomCenter => b.bottom_center(),
            AnchorRule::Center => (0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max)),
        }
    }
}

/// Time-stamped boxes of one tracked animal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub track_id: u64,
    pub frames: Vec<(f64, BoundingBox)>,
    pub anchor_rule: AnchorRule,
}

impl Tracklet {
    pub fn new(track_id: u64, frames: Vec<(f64, BoundingBox)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidConfig(format!("tracklet {track_id} has no frames")));
        }
        if frames.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidConfig(format!(
                "tracklet {track_id}: timestamps must be strictly increasing"
            )));
        }
        Ok(Self {
            track_id,
            frames,
            anchor_rule: AnchorRule::default(),
        })
    }

    pub fn anchors(&self) -> impl Iterator<Item = (f64, (f64, f64))> + '_ {
        self.frames.iter().map(|(t, b)| (*t, self.anchor_rule.anchor(b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsTrack {
    pub cattle_id: String,
    pub fixes: Vec<GpsFix>,
}

impl GpsTrack {
    pub fn new(cattle_id: impl Into<String>, fixes: Vec<GpsFix>) -> Result<Self> {
        let cattle_id = cattle_id.into();
        if fixes.iter().any(|f| !(f.t.is_finite() && f.x.is_finite() && f.y.is_finite())) {
            return Err(Error::InvalidConfig(format!("GPS track {cattle_id}: non-finite fix")));
        }
        if fixes.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidConfig(format!(
                "GPS track {cattle_id}: timestamps must be strictly increasing"
            )));
        }
        Ok(Self { cattle_id, fixes })
    }
}
