//! Dataset records, manifest I/O, crop geometry and the synthetic pasture
//! generator.

mod crop;
mod gps;
mod manifest;
mod render;
mod synth;

pub use crop::split_interaction_crop;
pub use gps::{generate_synthetic_gps_tracks, GpsScene};
pub use manifest::{
    load_manifest, ActionRecord, ClassCounts, Dataset, DatasetManifest, InteractionRecord,
    MemberRecord, Record, MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use synth::{generate_synthetic_dataset, member_actions_allowed, ClassMix, SyntheticSceneSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidBox(format!("non-finite coordinate in {self:?}")));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidBox(format!("empty extent in {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn bottom_center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), self.y_max)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x_min >= self.x_min
            && other.y_min >= self.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Euclidean distance between the closest points of two boxes; zero when
    /// they touch or overlap.
    pub fn gap(&self, other: &BoundingBox) -> f64 {
        let dx = (other.x_min - self.x_max).max(self.x_min - other.x_max).max(0.0);
        let dy = (other.y_min - self.y_max).max(self.y_min - other.y_max).max(0.0);
        dx.hypot(dy)
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const NAMES: &'static [&'static str] = &[$($text),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            pub fn index(&self) -> usize {
                *self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::UnknownLabel(other.to_string())),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(
    /// Fixed keypoint vocabulary shared by the pose files and the cutout
    /// protection rules.
    KeypointId {
        Head => "head",
        Neck => "neck",
        TorsoCenter => "torso_center",
        Buttocks => "buttocks",
        FrontLegLeft => "front_leg_left",
        FrontLegRight => "front_leg_right",
        HindLegLeft => "hind_leg_left",
        HindLegRight => "hind_leg_right",
    }
);

impl KeypointId {
    /// Left/right counterpart; self for midline points.
    pub fn mirrored(&self) -> KeypointId {
        match self {
            KeypointId::FrontLegLeft => KeypointId::FrontLegRight,
            KeypointId::FrontLegRight => KeypointId::FrontLegLeft,
            KeypointId::HindLegLeft => KeypointId::HindLegRight,
            KeypointId::HindLegRight => KeypointId::HindLegLeft,
            other => *other,
        }
    }
}

named_enum!(
    /// Single-animal behavior classes.
    ActionClass {
        Grazing => "grazing",
        Standing => "standing",
        Lying => "lying",
        Riding => "riding",
    }
);

named_enum!(
    /// Pairwise behavior classes.
    InteractionClass {
        NoInteraction => "no_interaction",
        Interest => "interest",
        Conflict => "conflict",
        Mount => "mount",
    }
);

/// Number of classes in both label sets.
pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(KeypointId, f64, f64, f64)", into = "(KeypointId, f64, f64, f64)")]
pub struct Keypoint {
    pub id: KeypointId,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl From<(KeypointId, f64, f64, f64)> for Keypoint {
    fn from((id, x, y, confidence): (KeypointId, f64, f64, f64)) -> Self {
        Self {
            id,
            x,
            y,
            confidence,
        }
    }
}

impl From<Keypoint> for (KeypointId, f64, f64, f64) {
    fn from(k: Keypoint) -> Self {
        (k.id, k.x, k.y, k.confidence)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Skeleton {
    pub keypoints: Vec<Keypoint>,
}

impl Skeleton {
    pub fn new(keypoints: Vec<Keypoint>) -> Result<Self> {
        let s = Self { keypoints };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 8];
        for k in &self.keypoints {
            if std::mem::replace(&mut seen[k.id.index()], true) {
                return Err(Error::InvalidConfig(format!("duplicate keypoint `{}`", k.id)));
            }
            if !(0.0..=1.0).contains(&k.confidence) {
                return Err(Error::InvalidConfig(format!(
                    "keypoint `{}` confidence {} outside [0, 1]",
                    k.id, k.confidence
                )));
            }
            if !k.x.is_finite() || !k.y.is_finite() {
                return Err(Error::InvalidConfig(format!("keypoint `{}` not finite", k.id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: KeypointId) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.id == id)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Skeleton {
        Skeleton {
            keypoints: self
                .keypoints
                .iter()
                .map(|k| Keypoint {
                    x: k.x + dx,
                    y: k.y + dy,
                    ..*k
                })
                .collect(),
        }
    }
}

/// A single-animal crop with pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub id: String,
    pub image: Image,
    /// Location of the crop in its source frame.
    pub bbox: BoundingBox,
    /// Keypoints in crop-local pixel coordinates.
    pub skeleton: Skeleton,
    pub label: Option<ActionClass>,
}

/// One member of an interaction pair, in union-crop coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub bbox: BoundingBox,
    pub skeleton: Skeleton,
    pub label: Option<ActionClass>,
}

/// A pair crop covering both members.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSample {
    pub id: String,
    pub union_image: Image,
    pub member_a: Member,
    pub member_b: Member,
    pub label: InteractionClass,
    /// Region (union-crop coordinates) carrying the class evidence, when the
    /// generator knows it.
    pub cue_region: Option<BoundingBox>,
}

impl InteractionSample {
    pub fn image_box(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: self.union_image.width() as f64,
            y_max: self.union_image.height() as f64,
        }
    }
}

/// Train/validation/test membership of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}
