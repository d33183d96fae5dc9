//! Label-preserving augmentations: skeleton-aware cutout, plain cutout,
//! horizontal flip and brightness/contrast jitter.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    ActionSample, BoundingBox, InteractionSample, Keypoint, KeypointId, Member, Skeleton,
};
use crate::error::{Error, Result};
use crate::image::Image;

/// Keypoints below this confidence are not protected.
pub const PROTECTION_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoutConfig {
    pub n_masks: usize,
    /// Mask side as a fraction of `min(H, W)`.
    pub mask_size_frac: f64,
    /// Protected disc radius as a fraction of `min(H, W)`.
    pub protection_radius_frac: f64,
    pub max_resample_attempts: usize,
    pub seed: u64,
    /// Value written into masked pixels.
    pub fill: [f32; 3],
}

impl Default for CutoutConfig {
    fn default() -> Self {
        Self {
            n_masks: 1,
            mask_size_frac: 0.3,
            protection_radius_frac: 0.12,
            max_resample_attempts: 20,
            seed: 0,
            fill: [0.0; 3],
        }
    }
}

impl CutoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_size_frac > 0.0 && self.mask_size_frac < 1.0) {
            return Err(Error::InvalidConfig("mask_size_frac must lie in (0, 1)".into()));
        }
        if !(self.protection_radius_frac >= 0.0 && self.protection_radius_frac.is_finite()) {
            return Err(Error::InvalidConfig("protection_radius_frac must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectionMode {
    Action,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedRegionSpec {
    pub mode: ProtectionMode,
    pub protected_keypoints: BTreeSet<KeypointId>,
}

impl ProtectedRegionSpec {
    pub fn required(mode: ProtectionMode) -> BTreeSet<KeypointId> {
        match mode {
            ProtectionMode::Action => [KeypointId::Head, KeypointId::FrontLegLeft, KeypointId::FrontLegRight],
            ProtectionMode::Interaction => [KeypointId::Head, KeypointId::Buttocks, KeypointId::TorsoCenter],
        }
        .into_iter()
        .collect()
    }

    pub fn action() -> Self {
        Self {
            mode: ProtectionMode::Action,
            protected_keypoints: Self::required(ProtectionMode::Action),
        }
    }

    pub fn interaction() -> Self {
        Self {
            mode: ProtectionMode::Interaction,
            protected_keypoints: Self::required(ProtectionMode::Interaction),
        }
    }

    /// Adds extra keypoints on top of the mode's mandatory set.
    pub fn with_extra(mut self, extra: impl IntoIterator<Item = KeypointId>) -> Self {
        self.protected_keypoints.extend(extra);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let required = Self::required(self.mode);
        if !required.is_subset(&self.protected_keypoints) {
            return Err(Error::InvalidConfig(format!(
                "{:?} protection must include {:?}",
                self.mode, required
            )));
        }
        Ok(())
    }
}

/// Square mask in pixel indices, `[row0, row0 + size) x [col0, col0 + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

/// Pixels whose centers lie within `radius` of `(x, y)` are never modified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtectedDisc {
    pub keypoint: KeypointId,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl ProtectedDisc {
    pub fn covers_pixel(&self, row: usize, col: usize) -> bool {
        let (cx, cy) = (col as f64 + 0.5, row as f64 + 0.5);
        (cx - self.x).powi(2) + (cy - self.y).powi(2) <= self.radius * self.radius
    }

    fn touches(&self, m: &MaskRect) -> bool {
        // nearest pixel center of the mask to the disc center
        let lo_x = m.col0 as f64 + 0.5;
        let hi_x = (m.col0 + m.size) as f64 - 0.5;
        let lo_y = m.row0 as f64 + 0.5;
        let hi_y = (m.row0 + m.size) as f64 - 0.5;
        let nx = self.x.clamp(lo_x, hi_x);
        let ny = self.y.clamp(lo_y, hi_y);
        (nx - self.x).powi(2) + (ny - self.y).powi(2) <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoutOutcome {
    pub image: Image,
    pub masks: Vec<MaskRect>,
    pub discs: Vec<ProtectedDisc>,
    /// Masks abandoned after exhausting the resample budget.
    pub skipped: usize,
}

fn protected_discs(
    image: &Image,
    skeletons: &[&Skeleton],
    spec: &ProtectedRegionSpec,
    radius: f64,
) -> Vec<ProtectedDisc> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let in_bounds = |k: &Keypoint| k.x >= 0.0 && k.x <= w && k.y >= 0.0 && k.y <= h;
    skeletons
        .iter()
        .flat_map(|s| s.keypoints.iter())
        .filter(|k| spec.protected_keypoints.contains(&k.id))
        .filter(|k| k.confidence >= PROTECTION_MIN_CONFIDENCE && in_bounds(k))
        .map(|k| ProtectedDisc {
            keypoint: k.id,
            x: k.x,
            y: k.y,
            radius,
        })
        .collect()
}

/// Pastes up to `n_masks` squares of the fill value, resampling any square
/// that touches a protected disc. Keypoints outside the image or below
/// [`PROTECTION_MIN_CONFIDENCE`] are ignored.
pub fn skeleton_aware_cutout(
    image: &Image,
    skeletons: &[&Skeleton],
    spec: &ProtectedRegionSpec,
    cfg: &CutoutConfig,
) -> CutoutOutcome {
    let (h, w) = (image.height(), image.width());
    let mut out = CutoutOutcome {
        image: image.clone(),
        masks: Vec::new(),
        discs: Vec::new(),
        skipped: 0,
    };
    if image.is_empty() || cfg.n_masks == 0 || cfg.validate().is_err() {
        return out;
    }
    let short = h.min(w) as f64;
    let size = ((cfg.mask_size_frac * short).round() as usize).clamp(1, h.min(w));
    out.discs = protected_discs(image, skeletons, spec, cfg.protection_radius_frac * short);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.n_masks {
        let mut placed = None;
        for _ in 0..=cfg.max_resample_attempts {
            let m = MaskRect {
                row0: rng.random_range(0..=h - size),
                col0: rng.random_range(0..=w - size),
                size,
            };
            if !out.discs.iter().any(|d| d.touches(&m)) {
                placed = Some(m);
                break;
            }
        }
        match placed {
            Some(m) => {
                out.image.fill_rect(m.row0, m.col0, m.row0 + size, m.col0 + size, cfg.fill);
                out.masks.push(m);
            }
            None => out.skipped += 1,
        }
    }
    out
}

/// Cutout with nothing protected.
pub fn standard_cutout(image: &Image, cfg: &CutoutConfig) -> CutoutOutcome {
    let nothing = ProtectedRegionSpec {
        mode: ProtectionMode::Action,
        protected_keypoints: BTreeSet::new(),
    };
    skeleton_aware_cutout(image, &[], &nothing, cfg)
}

fn flip_skeleton(s: &Skeleton, width: f64) -> Skeleton {
    Skeleton {
        keypoints: s
            .keypoints
            .iter()
            .map(|k| Keypoint {
                id: k.id.mirrored(),
                x: width - k.x,
                ..*k
            })
            .collect(),
    }
}

fn flip_box(b: &BoundingBox, width: f64) -> BoundingBox {
    BoundingBox {
        x_min: width - b.x_max,
        y_min: b.y_min,
        x_max: width - b.x_min,
        y_max: b.y_max,
    }
}

/// Mirrors the crop and its keypoints, swapping left/right names. The box
/// locates the crop in its source frame and fills the crop, so it is kept.
pub fn flip_action(s: &ActionSample) -> ActionSample {
    ActionSample {
        id: s.id.clone(),
        image: s.image.flip_horizontal(),
        bbox: s.bbox,
        skeleton: flip_skeleton(&s.skeleton, s.image.width() as f64),
        label: s.label,
    }
}

pub fn flip_interaction(s: &InteractionSample) -> InteractionSample {
    let w = s.union_image.width() as f64;
    let member = |m: &Member| Member {
        bbox: flip_box(&m.bbox, w),
        skeleton: flip_skeleton(&m.skeleton, w),
        label: m.label,
    };
    InteractionSample {
        id: s.id.clone(),
        union_image: s.union_image.flip_horizontal(),
        member_a: member(&s.member_a),
        member_b: member(&s.member_b),
        label: s.label,
        cue_region: s.cue_region.map(|b| flip_box(&b, w)),
    }
}

/// Brightness offset and contrast factor ranges for [`jitter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    pub brightness: f32,
    pub contrast: f32,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            brightness: 0.08,
            contrast: 0.15,
        }
    }
}

/// `x' = clamp((x - mean) * c + mean + b)` with `c ~ U[1-contrast, 1+contrast]`
/// and `b ~ U[-brightness, brightness]`, shared across channels.
pub fn jitter(image: &Image, cfg: &JitterConfig, rng: &mut impl Rng) -> Image {
    let c = 1.0 + cfg.contrast * (2.0 * rng.random::<f32>() - 1.0);
    let b = cfg.brightness * (2.0 * rng.random::<f32>() - 1.0);
    let n = image.data().len().max(1) as f32;
    let mean = image.data().iter().sum::<f32>() / n;
    let data = image
        .data()
        .iter()
        .map(|&x| ((x - mean) * c + mean + b).clamp(0.0, 1.0))
        .collect();
    Image::from_raw(image.height(), image.width(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker(h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for r in 0..h {
            for c in 0..w {
                let v = ((r * 7 + c * 13) % 17) as f32 / 17.0 + 0.01;
                img.set(r, c, [v, 1.0 - v, 0.5]);
            }
        }
        img
    }

    fn skeleton_at(id: KeypointId, x: f64, y: f64, conf: f64) -> Skeleton {
        Skeleton::new(vec![Keypoint { id, x, y, confidence: conf }]).unwrap()
    }

    fn changed_pixels(a: &Image, b: &Image) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..a.height() {
            for c in 0..a.width() {
                if a.get(r, c) != b.get(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    #[test]
    fn fully_protected_image_is_untouched() {
        let img = checker(40, 40);
        let sk = skeleton_at(KeypointId::Head, 20.0, 20.0, 0.9);
        let cfg = CutoutConfig {
            protection_radius_frac: 2.0,
            n_masks: 3,
            ..CutoutConfig::default()
        };
        let out = skeleton_aware_cutout(&img, &[&sk], &ProtectedRegionSpec::action(), &cfg);
        assert_eq!(out.image, img);
        assert_eq!(out.skipped, 3);
    }

    #[test]
    fn single_mask_changes_exactly_one_square() {
        let img = checker(50, 50);
        let cfg = CutoutConfig {
            n_masks: 1,
            mask_size_frac: 0.2,
            seed: 4,
            fill: [0.0, 0.0, 0.0],
            ..CutoutConfig::default()
        };
        let out = skeleton_aware_cutout(&img, &[], &ProtectedRegionSpec::action(), &cfg);
        let diff = changed_pixels(&img, &out.image);
        assert_eq!(diff.len(), 100);
        let m = out.masks[0];
        assert!(diff.iter().all(|&(r, c)| r >= m.row0 && r < m.row0 + 10 && c >= m.col0 && c < m.col0 + 10));
    }

    #[test]
    fn low_confidence_and_out_of_bounds_keypoints_are_ignored() {
        let img = checker(30, 30);
        let spec = ProtectedRegionSpec::action();
        let cfg = CutoutConfig::default();
        let weak = skeleton_at(KeypointId::Head, 15.0, 15.0, 0.49);
        assert!(skeleton_aware_cutout(&img, &[&weak], &spec, &cfg).discs.is_empty());
        let outside = skeleton_at(KeypointId::Head, 45.0, 15.0, 0.99);
        assert!(skeleton_aware_cutout(&img, &[&outside], &spec, &cfg).discs.is_empty());
        let unlisted = skeleton_at(KeypointId::Buttocks, 15.0, 15.0, 0.99);
        assert!(skeleton_aware_cutout(&img, &[&unlisted], &spec, &cfg).discs.is_empty());
    }

    #[test]
    fn zero_masks_is_identity_and_output_is_deterministic() {
        let img = checker(32, 32);
        let none = CutoutConfig { n_masks: 0, ..CutoutConfig::default() };
        assert_eq!(standard_cutout(&img, &none).image, img);
        let cfg = CutoutConfig { n_masks: 2, seed: 11, ..CutoutConfig::default() };
        assert_eq!(standard_cutout(&img, &cfg), standard_cutout(&img, &cfg));
    }

    #[test]
    fn standard_equals_skeleton_aware_with_empty_set() {
        let img = checker(33, 41);
        let sk = skeleton_at(KeypointId::Head, 10.0, 10.0, 1.0);
        let empty = ProtectedRegionSpec {
            mode: ProtectionMode::Interaction,
            protected_keypoints: BTreeSet::new(),
        };
        for seed in 0..20 {
            let cfg = CutoutConfig { n_masks: 3, seed, ..CutoutConfig::default() };
            assert_eq!(
                standard_cutout(&img, &cfg).image,
                skeleton_aware_cutout(&img, &[&sk], &empty, &cfg).image
            );
        }
    }

    #[test]
    fn protected_specs_validate_required_sets() {
        assert!(ProtectedRegionSpec::action().validate().is_ok());
        assert!(ProtectedRegionSpec::interaction().with_extra([KeypointId::Neck]).validate().is_ok());
        let mut bad = ProtectedRegionSpec::interaction();
        bad.protected_keypoints.remove(&KeypointId::Buttocks);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flip_reflects_and_swaps_names() {
        let sk = Skeleton::new(vec![
            Keypoint { id: KeypointId::FrontLegLeft, x: 10.0, y: 5.0, confidence: 1.0 },
            Keypoint { id: KeypointId::Head, x: 30.0, y: 5.0, confidence: 1.0 },
        ])
        .unwrap();
        let s = ActionSample {
            id: "x".into(),
            image: checker(20, 100),
            bbox: BoundingBox::new(0.0, 0.0, 100.0, 20.0).unwrap(),
            skeleton: sk,
            label: None,
        };
        let f = flip_action(&s);
        assert_eq!(f.skeleton.keypoints[0].id, KeypointId::FrontLegRight);
        assert_eq!(f.skeleton.keypoints[0].x, 90.0);
        assert_eq!(f.image.get(3, 0), s.image.get(3, 99));
        assert_eq!(flip_action(&f), s);
    }

    proptest! {
        #[test]
        fn protected_discs_are_never_modified(
            seed in any::<u64>(),
            hx in 0.0..48.0f64, hy in 0.0..40.0f64,
            bx in 0.0..48.0f64, by in 0.0..40.0f64,
            n_masks in 1usize..5,
            frac in 0.05..0.6f64,
            radius in 0.0..0.3f64,
        ) {
            let img = checker(40, 48);
            let sk = Skeleton::new(vec![
                Keypoint { id: KeypointId::Head, x: hx, y: hy, confidence: 0.9 },
                Keypoint { id: KeypointId::Buttocks, x: bx, y: by, confidence: 0.6 },
            ]).unwrap();
            let cfg = CutoutConfig {
                n_masks, mask_size_frac: frac, protection_radius_frac: radius, seed,
                fill: [0.5; 3], ..CutoutConfig::default()
            };
            let out = skeleton_aware_cutout(&img, &[&sk], &ProtectedRegionSpec::interaction(), &cfg);
            prop_assert_eq!(out.discs.len(), 2);
            for (r, c) in changed_pixels(&img, &out.image) {
                for d in &out.discs {
                    prop_assert!(!d.covers_pixel(r, c));
                }
            }
        }

        #[test]
        fn interaction_flip_is_an_involution(w in 20usize..80, x in 0.0..1.0f64) {
            let img = checker(10, w);
            let wf = w as f64;
            let member = Member {
                bbox: BoundingBox::new(x * wf * 0.5, 0.0, wf * 0.5 + x * wf * 0.5, 10.0).unwrap(),
                skeleton: skeleton_at(KeypointId::HindLegLeft, x * wf, 3.0, 0.8),
                label: None,
            };
            let s = InteractionSample {
                id: "p".into(),
                union_image: img,
                member_a: member.clone(),
                member_b: member,
                label: crate::data::InteractionClass::Mount,
                cue_region: None,
            };
            let back = flip_interaction(&flip_interaction(&s));
            prop_assert_eq!(&back.union_image, &s.union_image);
            prop_assert_eq!(back.member_a.skeleton.keypoints[0].id, KeypointId::HindLegLeft);
            prop_assert!((back.member_a.skeleton.keypoints[0].x - x * wf).abs() < 1e-9);
            prop_assert!((back.member_b.bbox.x_min - s.member_b.bbox.x_min).abs() < 1e-9);
            prop_assert_eq!(back.label, s.label);
        }
    }
}
