//! Side-view cattle rasterizer for the synthetic generator.
//!
//! A cow is a pitched body ellipse, a neck/head capsule and four leg capsules.
//! Action classes differ in head placement, body pitch and leg layout; the
//! pair classes differ in where the two animals touch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ActionClass, BoundingBox, Keypoint, KeypointId, Skeleton};
use crate::image::Image;

#[derive(Debug, Clone)]
pub(crate) struct CowPose {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub height: f64,
    /// Radians; positive raises the front.
    pub pitch: f64,
    /// +1 faces right, -1 faces left.
    pub facing: f64,
    pub ground_y: f64,
    pub action: ActionClass,
    pub coat: [f32; 3],
    /// Riding only: where the front hooves rest.
    pub front_rest: Option<(f64, f64)>,
}

impl CowPose {
    pub fn new(action: ActionClass, length: f64, facing: f64, coat: [f32; 3]) -> Self {
        let height = 0.42 * length;
        let pitch = if action == ActionClass::Riding { 0.56 } else { 0.0 };
        Self {
            cx: 0.0,
            cy: 0.0,
            length,
            height,
            pitch,
            facing,
            ground_y: 0.0,
            action,
            coat,
            front_rest: None,
        }
    }

    /// Places the body so the animal stands on `ground_y` with its body
    /// center at horizontal position `cx`.
    pub fn stand_on(&mut self, cx: f64, ground_y: f64) {
        self.cx = cx;
        self.ground_y = ground_y;
        self.cy = match self.action {
            ActionClass::Lying => ground_y - 0.5 * self.height - 0.5,
            _ => ground_y - 0.5 * self.height - self.leg_length(),
        };
    }

    pub fn leg_length(&self) -> f64 {
        0.36 * self.length
    }

    fn forward(&self) -> (f64, f64) {
        (self.facing * self.pitch.cos(), -self.pitch.sin())
    }

    fn up(&self) -> (f64, f64) {
        (-self.facing * self.pitch.sin(), -self.pitch.cos())
    }

    /// Body-frame point (`s` along the facing axis, `t` upward) in pixels.
    pub fn world(&self, s: f64, t: f64) -> (f64, f64) {
        let (fx, fy) = self.forward();
        let (ux, uy) = self.up();
        (self.cx + s * fx + t * ux, self.cy + s * fy + t * uy)
    }

    fn neck_base(&self) -> (f64, f64) {
        self.world(0.42 * self.length, 0.15 * self.height)
    }

    pub fn head(&self) -> (f64, f64) {
        let l = self.length;
        let h = self.height;
        match self.action {
            ActionClass::Grazing => {
                let (fx, _) = self.world(0.5 * l, 0.0);
                (fx + self.facing * 0.16 * l, self.ground_y - 0.07 * l)
            }
            ActionClass::Standing => self.world(0.66 * l, 0.75 * h),
            ActionClass::Lying => self.world(0.62 * l, 0.55 * h),
            ActionClass::Riding => self.world(0.62 * l, 0.45 * h),
        }
    }

    pub fn buttocks(&self) -> (f64, f64) {
        self.world(-0.46 * self.length, 0.1 * self.height)
    }

    fn leg_attach(&self, front: bool) -> (f64, f64) {
        let s = if front { 0.3 } else { -0.3 } * self.length;
        self.world(s, -0.3 * self.height)
    }

    /// Hoof positions: (left, right) for front or hind legs.
    fn leg_ends(&self, front: bool) -> [(f64, f64); 2] {
        let (ax, ay) = self.leg_attach(front);
        let spread = 0.05 * self.length;
        match (self.action, front) {
            (ActionClass::Lying, _) => {
                let tuck = self.facing * 0.14 * self.length;
                let y = self.ground_y - 0.5;
                [(ax + tuck - spread, y), (ax + tuck + spread, y)]
            }
            (ActionClass::Riding, true) => {
                let (rx, ry) = self.front_rest.unwrap_or_else(|| {
                    let (fx, fy) = self.forward();
                    (ax + fx * 0.3 * self.length, ay + fy * 0.3 * self.length + 0.25 * self.length)
                });
                [(rx - spread, ry), (rx + spread, ry + 0.5)]
            }
            _ => [(ax - spread, self.ground_y), (ax + spread, self.ground_y)],
        }
    }

    pub fn skeleton(&self, rng: &mut ChaCha8Rng) -> Skeleton {
        let front = self.leg_ends(true);
        let hind = self.leg_ends(false);
        let points = [
            (KeypointId::Head, self.head()),
            (KeypointId::Neck, self.neck_base()),
            (KeypointId::TorsoCenter, (self.cx, self.cy)),
            (KeypointId::Buttocks, self.buttocks()),
            (KeypointId::FrontLegLeft, front[0]),
            (KeypointId::FrontLegRight, front[1]),
            (KeypointId::HindLegLeft, hind[0]),
            (KeypointId::HindLegRight, hind[1]),
        ];
        Skeleton {
            keypoints: points
                .iter()
                .map(|&(id, (x, y))| {
                    let confidence = if rng.random::<f64>() < 0.04 {
                        rng.random_range(0.1..0.5)
                    } else {
                        rng.random_range(0.7..1.0)
                    };
                    Keypoint {
                        id,
                        x,
                        y,
                        confidence: (confidence * 1000.0f64).round() / 1000.0,
                    }
                })
                .collect(),
        }
    }

    /// Rasterizes the animal and returns the tight box of painted pixels.
    pub fn draw(&self, img: &mut Image) -> Option<BoundingBox> {
        let mut painter = Painter::new(img, self.coat);
        let l = self.length;
        let legs_w = 0.085 * l;
        let darker = self.coat.map(|c| c * 0.75);
        for front in [false, true] {
            let attach = self.leg_attach(front);
            let ends = self.leg_ends(front);
            painter.capsule(attach, ends[0], legs_w, darker);
            painter.capsule(attach, ends[1], legs_w, self.coat);
        }
        painter.ellipse((self.cx, self.cy), 0.5 * l, 0.5 * self.height, self.pitch * self.facing);
        let head = self.head();
        painter.capsule(self.neck_base(), head, 0.17 * l, self.coat);
        painter.ellipse_color(head, 0.11 * l, 0.085 * l, 0.0, self.coat.map(|c| c * 0.85));
        painter.bounds()
    }
}

struct Painter<'a> {
    img: &'a mut Image,
    color: [f32; 3],
    min: (usize, usize),
    max: (usize, usize),
    any: bool,
}

impl<'a> Painter<'a> {
    fn new(img: &'a mut Image, color: [f32; 3]) -> Self {
        Self {
            img,
            color,
            min: (usize::MAX, usize::MAX),
            max: (0, 0),
            any: false,
        }
    }

    fn paint_where(&mut self, bbox: (f64, f64, f64, f64), color: [f32; 3], inside: impl Fn(f64, f64) -> bool) {
        let (h, w) = (self.img.height() as f64, self.img.width() as f64);
        let c0 = bbox.0.floor().clamp(0.0, w) as usize;
        let c1 = bbox.2.ceil().clamp(0.0, w) as usize;
        let r0 = bbox.1.floor().clamp(0.0, h) as usize;
        let r1 = bbox.3.ceil().clamp(0.0, h) as usize;
        for r in r0..r1 {
            for c in c0..c1 {
                if inside(c as f64 + 0.5, r as f64 + 0.5) {
                    self.img.set(r, c, color);
                    self.min = (self.min.0.min(r), self.min.1.min(c));
                    self.max = (self.max.0.max(r), self.max.1.max(c));
                    self.any = true;
                }
            }
        }
    }

    fn ellipse(&mut self, center: (f64, f64), a: f64, b: f64, angle: f64) {
        self.ellipse_color(center, a, b, angle, self.color);
    }

    /// `angle` rotates the major axis counter-clockwise in image coordinates
    /// (y down), matching the body pitch convention.
    fn ellipse_color(&mut self, center: (f64, f64), a: f64, b: f64, angle: f64, color: [f32; 3]) {
        let (sin, cos) = angle.sin_cos();
        let r = a.max(b);
        self.paint_where(
            (center.0 - r, center.1 - r, center.0 + r, center.1 + r),
            color,
            |x, y| {
                let dx = x - center.0;
                let dy = y - center.1;
                let u = dx * cos - dy * sin;
                let v = dx * sin + dy * cos;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            },
        );
    }

    fn capsule(&mut self, p: (f64, f64), q: (f64, f64), width: f64, color: [f32; 3]) {
        let r = 0.5 * width;
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let len2 = (dx * dx + dy * dy).max(1e-12);
        self.paint_where(
            (p.0.min(q.0) - r, p.1.min(q.1) - r, p.0.max(q.0) + r, p.1.max(q.1) + r),
            color,
            |x, y| {
                let t = (((x - p.0) * dx + (y - p.1) * dy) / len2).clamp(0.0, 1.0);
                let (cx, cy) = (p.0 + t * dx, p.1 + t * dy);
                (x - cx).powi(2) + (y - cy).powi(2) <= r * r
            },
        );
    }

    fn bounds(&self) -> Option<BoundingBox> {
        self.any.then(|| BoundingBox {
            x_min: self.min.1 as f64,
            y_min: self.min.0 as f64,
            x_max: (self.max.1 + 1) as f64,
            y_max: (self.max.0 + 1) as f64,
        })
    }
}

/// Grass texture with per-pixel noise and a soft horizontal gradient.
pub(crate) fn pasture(height: usize, width: usize, rng: &mut ChaCha8Rng) -> Image {
    let base = [
        rng.random_range(0.30..0.40f32),
        rng.random_range(0.48..0.58f32),
        rng.random_range(0.20..0.28f32),
    ];
    let tilt = rng.random_range(-0.06..0.06f32);
    let mut img = Image::new(height, width);
    for r in 0..height {
        let g = tilt * (r as f32 / height.max(1) as f32 - 0.5);
        for c in 0..width {
            let n: f32 = rng.random_range(-0.035..0.035);
            img.set(r, c, [base[0] + g + n, base[1] + g + n, base[2] + g + 0.5 * n]);
        }
    }
    img
}

pub(crate) fn random_coat(rng: &mut ChaCha8Rng) -> [f32; 3] {
    let v = rng.random_range(0.08..0.24f32);
    [v + rng.random_range(0.0..0.05), v + rng.random_range(0.0..0.02), v]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn standing_cow_has_hooves_on_the_ground() {
        let mut pose = CowPose::new(ActionClass::Standing, 26.0, 1.0, [0.1; 3]);
        pose.stand_on(32.0, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sk = pose.skeleton(&mut rng);
        let hoof = sk.get(KeypointId::FrontLegLeft).unwrap();
        assert!((hoof.y - 50.0).abs() < 1e-9);
        let head = sk.get(KeypointId::Head).unwrap();
        assert!(head.y < pose.cy, "standing head above the torso");
    }

    #[test]
    fn grazing_head_is_low_and_riding_front_is_raised() {
        let mut grazing = CowPose::new(ActionClass::Grazing, 26.0, 1.0, [0.1; 3]);
        grazing.stand_on(32.0, 50.0);
        assert!(grazing.head().1 > grazing.cy + 0.5 * grazing.height);
        let riding = CowPose::new(ActionClass::Riding, 26.0, -1.0, [0.1; 3]);
        let front = riding.world(0.5 * riding.length, 0.0);
        assert!(front.1 < riding.cy && front.0 < riding.cx);
    }

    #[test]
    fn drawing_reports_tight_bounds() {
        let mut img = Image::filled(64, 64, [1.0; 3]);
        let mut pose = CowPose::new(ActionClass::Standing, 26.0, 1.0, [0.0; 3]);
        pose.stand_on(32.0, 50.0);
        let b = pose.draw(&mut img).unwrap();
        let (r0, c0) = (b.y_min as usize, b.x_min as usize);
        let (r1, c1) = (b.y_max as usize, b.x_max as usize);
        for r in 0..64 {
            for c in 0..64 {
                if img.get(r, c) != [1.0; 3] {
                    assert!(r >= r0 && r < r1 && c >= c0 && c < c1);
                }
            }
        }
    }
}
