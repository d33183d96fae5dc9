use super::{ActionSample, BoundingBox, InteractionSample, Member};
use crate::error::{Error, Result};
use crate::image::Image;

/// Pixel window `(row0, col0, h, w)` covered by `bbox`, edges rounded to the
/// pixel grid and clipped to an `height x width` image.
pub(crate) fn pixel_window(bbox: &BoundingBox, height: usize, width: usize) -> (usize, usize, usize, usize) {
    let clip = |v: f64, hi: usize| (v.round().max(0.0) as usize).min(hi);
    let c0 = clip(bbox.x_min, width);
    let c1 = clip(bbox.x_max, width);
    let r0 = clip(bbox.y_min, height);
    let r1 = clip(bbox.y_max, height);
    (r0, c0, r1.saturating_sub(r0), c1.saturating_sub(c0))
}

fn crop_member(image: &Image, member: &Member, id: String) -> Result<ActionSample> {
    let (r0, c0, h, w) = pixel_window(&member.bbox, image.height(), image.width());
    if h == 0 || w == 0 {
        return Err(Error::DegenerateBox(format!(
            "member box {:?} covers no pixels of the {}x{} union image",
            member.bbox.to_array(),
            image.height(),
            image.width()
        )));
    }
    Ok(ActionSample {
        id,
        image: image.crop(r0, c0, h, w)?,
        bbox: member.bbox,
        skeleton: member.skeleton.translate(-(c0 as f64), -(r0 as f64)),
        label: member.label,
    })
}

/// Cuts the two member crops out of a pair crop. Skeletons come back in
/// crop-local coordinates.
pub fn split_interaction_crop(sample: &InteractionSample) -> Result<(ActionSample, ActionSample)> {
    let a = crop_member(&sample.union_image, &sample.member_a, format!("{}/a", sample.id))?;
    let b = crop_member(&sample.union_image, &sample.member_b, format!("{}/b", sample.id))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{InteractionClass, Keypoint, KeypointId, Skeleton};

    fn sample(a: [f64; 4], b: [f64; 4], kp_b: Option<(f64, f64)>) -> InteractionSample {
        let mut img = Image::new(200, 200);
        for r in 0..200 {
            for c in 0..200 {
                img.set(r, c, [c as f32 / 200.0, r as f32 / 200.0, 0.0]);
            }
        }
        let skeleton_b = kp_b
            .map(|(x, y)| {
                Skeleton::new(vec![Keypoint {
                    id: KeypointId::Head,
                    x,
                    y,
                    confidence: 1.0,
                }])
                .unwrap()
            })
            .unwrap_or_default();
        InteractionSample {
            id: "s".into(),
            union_image: img,
            member_a: Member {
                bbox: BoundingBox::try_from(a).unwrap(),
                skeleton: Skeleton::default(),
                label: None,
            },
            member_b: Member {
                bbox: BoundingBox::try_from(b).unwrap(),
                skeleton: skeleton_b,
                label: None,
            },
            label: InteractionClass::Interest,
            cue_region: None,
        }
    }

    #[test]
    fn identical_boxes_give_identical_crops() {
        let s = sample([20.0, 30.0, 90.0, 120.0], [20.0, 30.0, 90.0, 120.0], None);
        let (a, b) = split_interaction_crop(&s).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn left_half_crop() {
        let s = sample([0.0, 0.0, 100.0, 200.0], [100.0, 0.0, 200.0, 200.0], None);
        let (a, _) = split_interaction_crop(&s).unwrap();
        assert_eq!(a.image, s.union_image.crop(0, 0, 200, 100).unwrap());
    }

    #[test]
    fn skeleton_is_translated_to_crop_frame() {
        let s = sample([0.0, 0.0, 100.0, 200.0], [100.0, 0.0, 200.0, 200.0], Some((150.0, 50.0)));
        let (_, b) = split_interaction_crop(&s).unwrap();
        let head = b.skeleton.get(KeypointId::Head).unwrap();
        assert_eq!((head.x, head.y), (50.0, 50.0));
        assert_eq!((b.image.height(), b.image.width()), (200, 100));
    }

    #[test]
    fn degenerate_member_box_is_rejected() {
        let s = sample([0.0, 0.0, 100.0, 200.0], [199.8, 0.0, 199.9, 200.0], None);
        assert!(matches!(split_interaction_crop(&s), Err(Error::DegenerateBox(_))));
    }
}
