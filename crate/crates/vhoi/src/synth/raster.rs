//! Z-order rasterization of scenes: class maps, palette masks, flat-shaded
//! RGB frames, contact flags, and exact per-part rigid transforms.

use ndarray::{Array3, Array4};

use super::{add2, simulate, sub2, Pose, SceneSpec};
use crate::hoi::palette::{self, PartPalette};
use crate::hoi::render::composite_hoi;
use crate::hoi::video::MaskVideo;
use crate::synth::prompts::make_prompts;
use crate::{Error, Result};

/// Rigid 2D transform `x -> M x + t` mapping frame-0 pixel coordinates of a
/// part to its frame-t pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine2 {
    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0], [0.0, 1.0]], t: [0.0, 0.0] }
    }

    pub fn translation(d: [f64; 2]) -> Self {
        Self { m: [[1.0, 0.0], [0.0, 1.0]], t: d }
    }

    /// Rotation by `theta` about `c0`, then translation taking `c0` to `c1`.
    pub fn rigid(c0: [f64; 2], c1: [f64; 2], theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let m = [[c, -s], [s, c]];
        // t = c1 - M c0
        let t = [
            c1[0] - (m[0][0] * c0[0] + m[0][1] * c0[1]),
            c1[1] - (m[1][0] * c0[0] + m[1][1] * c0[1]),
        ];
        Self { m, t }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.t[0],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.t[1],
        ]
    }
}

/// Everything the trainers and evaluators need from one scene.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub spec: SceneSpec,
    /// `[T, H, W, 3]` flat-shaded frames over a textured background.
    pub rgb: Array4<u8>,
    pub human_masks: MaskVideo,
    pub object_masks: MaskVideo,
    pub hoi_masks: MaskVideo,
    /// `[T, H, W]` class ids after z-order resolution.
    pub class_maps: Array3<u8>,
    /// Per-frame hand-object contact (mask distance <= 1 px).
    pub contact: Vec<bool>,
    /// Per frame: rigid transform for every part class present at t=0.
    pub transforms: Vec<Vec<(u8, Affine2)>>,
    pub motion_tokens: Vec<u16>,
    pub full_tokens: Vec<u16>,
}

enum Shape {
    Disk { c: [f64; 2], r: f64 },
    Capsule { a: [f64; 2], b: [f64; 2], r: f64 },
    Rect { c: [f64; 2], half_w: f64, half_h: f64 },
}

impl Shape {
    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Disk { c, r } => {
                let d = sub2(p, *c);
                d[0] * d[0] + d[1] * d[1] <= r * r
            }
            Shape::Capsule { a, b, r } => {
                let ab = sub2(*b, *a);
                let ap = sub2(p, *a);
                let denom = ab[0] * ab[0] + ab[1] * ab[1];
                let t = if denom < 1e-12 {
                    0.0
                } else {
                    ((ap[0] * ab[0] + ap[1] * ab[1]) / denom).clamp(0.0, 1.0)
                };
                let closest = add2(*a, [ab[0] * t, ab[1] * t]);
                let d = sub2(p, closest);
                d[0] * d[0] + d[1] * d[1] <= r * r
            }
            Shape::Rect { c, half_w, half_h } => {
                (p[0] - c[0]).abs() <= *half_w && (p[1] - c[1]).abs() <= *half_h
            }
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Shape::Disk { c, r } => ([c[0] - r, c[1] - r], [c[0] + r, c[1] + r]),
            Shape::Capsule { a, b, r } => (
                [a[0].min(b[0]) - r, a[1].min(b[1]) - r],
                [a[0].max(b[0]) + r, a[1].max(b[1]) + r],
            ),
            Shape::Rect { c, half_w, half_h } => (
                [c[0] - half_w, c[1] - half_h],
                [c[0] + half_w, c[1] + half_h],
            ),
        }
    }
}

fn head_center(pose: &Pose, spec: &SceneSpec) -> [f64; 2] {
    [
        pose.root[0],
        pose.root[1] - spec.figure.torso_h / 2.0 - spec.figure.head_r - 1.0,
    ]
}

/// Back-to-front list of (class id, shape) in camera (pixel) coordinates.
fn frame_shapes(pose: &Pose, spec: &SceneSpec) -> Vec<(u8, Shape)> {
    let fig = &spec.figure;
    let cam = pose.cam;
    let px = |p: [f64; 2]| sub2(p, cam);

    let head = head_center(pose, spec);
    let hair_c = px(add2(head, [0.0, -1.6]));
    let s_r = pose.r_shoulder(fig);
    let s_l = pose.l_shoulder(fig);

    let object_shape = || match spec.object.shape {
        super::ObjectShape::Square => Shape::Rect {
            c: px(pose.obj_center),
            half_w: spec.object.half,
            half_h: spec.object.half,
        },
        super::ObjectShape::Disk => Shape::Disk { c: px(pose.obj_center), r: spec.object.half },
    };

    let mut shapes: Vec<(u8, Shape)> = Vec::with_capacity(11);
    shapes.push((palette::HAIR, Shape::Disk { c: hair_c, r: fig.hair_r }));
    shapes.push((palette::FACE_NECK, Shape::Disk { c: px(head), r: fig.head_r }));
    if !spec.object_in_front {
        shapes.push((palette::OBJECT, object_shape()));
        shapes.push((
            palette::TORSO,
            Shape::Rect { c: px(pose.root), half_w: fig.torso_w / 2.0, half_h: fig.torso_h / 2.0 },
        ));
    } else {
        shapes.push((
            palette::TORSO,
            Shape::Rect { c: px(pose.root), half_w: fig.torso_w / 2.0, half_h: fig.torso_h / 2.0 },
        ));
    }
    shapes.push((
        palette::LEFT_UPPER_ARM,
        Shape::Capsule { a: px(s_l), b: px(pose.l_elbow), r: fig.arm_w / 2.0 },
    ));
    shapes.push((
        palette::LEFT_LOWER_ARM,
        Shape::Capsule { a: px(pose.l_elbow), b: px(pose.l_wrist), r: fig.arm_w / 2.0 },
    ));
    shapes.push((palette::LEFT_HAND, Shape::Disk { c: px(pose.l_wrist), r: fig.hand_r }));
    shapes.push((
        palette::RIGHT_UPPER_ARM,
        Shape::Capsule { a: px(s_r), b: px(pose.r_elbow), r: fig.arm_w / 2.0 },
    ));
    shapes.push((
        palette::RIGHT_LOWER_ARM,
        Shape::Capsule { a: px(pose.r_elbow), b: px(pose.r_wrist), r: fig.arm_w / 2.0 },
    ));
    shapes.push((palette::RIGHT_HAND, Shape::Disk { c: px(pose.r_wrist), r: fig.hand_r }));
    if spec.object_in_front {
        shapes.push((palette::OBJECT, object_shape()));
    }
    shapes
}

fn paint_class_map(map: &mut ndarray::ArrayViewMut2<u8>, shapes: &[(u8, Shape)], h: usize, w: usize) {
    for (class, shape) in shapes {
        let (lo, hi) = shape.bounds();
        let y0 = lo[1].floor().max(0.0) as usize;
        let y1 = (hi[1].ceil() as isize).min(h as isize - 1);
        let x0 = lo[0].floor().max(0.0) as usize;
        let x1 = (hi[0].ceil() as isize).min(w as isize - 1);
        if hi[1] < 0.0 || hi[0] < 0.0 || y1 < 0 || x1 < 0 {
            continue;
        }
        for y in y0..=(y1 as usize) {
            for x in x0..=(x1 as usize) {
                if shape.contains([x as f64, y as f64]) {
                    map[[y, x]] = *class;
                }
            }
        }
    }
}

/// Hash-based bilinear value noise in [0, 1).
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    fn h(ix: i64, iy: i64, seed: u64) -> f64 {
        let mut z = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z >> 11) as f64) / ((1u64 << 53) as f64)
    }
    let (ix, iy) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    let v00 = h(ix, iy, seed);
    let v10 = h(ix + 1, iy, seed);
    let v01 = h(ix, iy + 1, seed);
    let v11 = h(ix + 1, iy + 1, seed);
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fy
}

fn background_pixel(xw: f64, yw: f64, h: usize, style: u8, seed: u64) -> [u8; 3] {
    let g = (yw / h as f64).clamp(0.0, 1.5);
    let n = value_noise(xw * 0.35, yw * 0.35, seed);
    let (base, grad, amp) = match style % 4 {
        0 => ([70.0, 78.0, 92.0], [40.0, 36.0, 24.0], 22.0),
        1 => ([96.0, 84.0, 66.0], [-30.0, -18.0, -10.0], 18.0),
        2 => ([52.0, 64.0, 58.0], [26.0, 30.0, 38.0], 26.0),
        _ => ([84.0, 70.0, 84.0], [18.0, 26.0, -16.0], 20.0),
    };
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = base[c] + grad[c] * g + amp * (n - 0.5) * 2.0;
        out[c] = v.clamp(0.0, 255.0) as u8;
    }
    out
}

fn part_rgb(class: u8, app: &super::Appearance) -> [u8; 3] {
    let dim = |c: [u8; 3], f: f64| {
        [
            (c[0] as f64 * f).clamp(0.0, 255.0) as u8,
            (c[1] as f64 * f).clamp(0.0, 255.0) as u8,
            (c[2] as f64 * f).clamp(0.0, 255.0) as u8,
        ]
    };
    match class {
        palette::FACE_NECK => app.skin,
        palette::HAIR => app.hair,
        palette::TORSO => app.shirt,
        palette::LEFT_UPPER_ARM | palette::RIGHT_UPPER_ARM => dim(app.shirt, 0.88),
        palette::LEFT_LOWER_ARM | palette::RIGHT_LOWER_ARM => dim(app.skin, 0.92),
        palette::LEFT_HAND | palette::RIGHT_HAND => app.skin,
        palette::OBJECT => app.object,
        _ => [0, 0, 0],
    }
}

const HUMAN_CLASSES: [u8; 9] = [
    palette::FACE_NECK,
    palette::HAIR,
    palette::TORSO,
    palette::LEFT_UPPER_ARM,
    palette::LEFT_LOWER_ARM,
    palette::LEFT_HAND,
    palette::RIGHT_UPPER_ARM,
    palette::RIGHT_LOWER_ARM,
    palette::RIGHT_HAND,
];

pub fn is_human_class(class: u8) -> bool {
    class != palette::BACKGROUND && class != palette::OBJECT
}

/// Per-frame contact: true iff some hand pixel is within `<= 1` px
/// (Euclidean, pixel centers) of some object pixel.
pub fn contact_from_class_map(map: &ndarray::ArrayView2<u8>) -> bool {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut hands = Vec::new();
    let mut objs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            match map[[y, x]] {
                c if c == palette::LEFT_HAND || c == palette::RIGHT_HAND => {
                    hands.push((x as f64, y as f64))
                }
                c if c == palette::OBJECT => objs.push((x as f64, y as f64)),
                _ => {}
            }
        }
    }
    for &(hx, hy) in &hands {
        for &(ox, oy) in &objs {
            let d2 = (hx - ox) * (hx - ox) + (hy - oy) * (hy - oy);
            if d2 <= 1.0 {
                return true;
            }
        }
    }
    false
}

/// Rasterizes a scene into masks, RGB frames, contact flags and transforms.
pub fn rasterize(
    spec: &SceneSpec,
    t: usize,
    h: usize,
    w: usize,
    pal: &PartPalette,
) -> Result<SceneSample> {
    if t != spec.t || h != spec.h || w != spec.w {
        return Err(Error::Invalid(format!(
            "rasterize dims ({t},{h},{w}) disagree with spec ({},{},{})",
            spec.t, spec.h, spec.w
        )));
    }
    let poses = simulate(spec)?;

    let mut class_maps = Array3::zeros((t, h, w));
    let mut rgb = Array4::zeros((t, h, w, 3));
    let mut human = Array4::zeros((t, h, w, 3));
    let mut object = Array4::zeros((t, h, w, 3));
    let mut contact = Vec::with_capacity(t);

    for (ti, pose) in poses.iter().enumerate() {
        let shapes = frame_shapes(pose, spec);
        let mut map = class_maps.index_axis_mut(ndarray::Axis(0), ti);
        paint_class_map(&mut map, &shapes, h, w);

        for y in 0..h {
            for x in 0..w {
                let class = map[[y, x]];
                let mcolor = pal.rgb(class);
                if class != palette::BACKGROUND {
                    let target = if class == palette::OBJECT {
                        &mut object
                    } else {
                        &mut human
                    };
                    for c in 0..3 {
                        target[[ti, y, x, c]] = mcolor[c];
                    }
                }
                let px = if class == palette::BACKGROUND {
                    background_pixel(
                        x as f64 + pose.cam[0],
                        y as f64 + pose.cam[1],
                        h,
                        spec.appearance.bg_style,
                        spec.seed >> 1,
                    )
                } else {
                    part_rgb(class, &spec.appearance)
                };
                for c in 0..3 {
                    rgb[[ti, y, x, c]] = px[c];
                }
            }
        }
        contact.push(contact_from_class_map(&map.view()));
    }

    // rigid transforms: frame-0 pixel coords -> frame-t pixel coords
    let p0 = &poses[0];
    let fig = &spec.figure;
    let transforms: Vec<Vec<(u8, Affine2)>> = poses
        .iter()
        .map(|p| {
            let cam = p.cam;
            let shift = |world: Affine2| -> Affine2 {
                // frame-0 camera shift is zero, so pixel(t=0) == world(t=0)
                Affine2 { m: world.m, t: [world.t[0] - cam[0], world.t[1] - cam[1]] }
            };
            let root_delta = sub2(p.root, p0.root);
            let mut v: Vec<(u8, Affine2)> = Vec::with_capacity(10);
            let trans = shift(Affine2::translation(root_delta));
            v.push((palette::HAIR, trans));
            v.push((palette::FACE_NECK, trans));
            v.push((palette::TORSO, trans));
            v.push((palette::LEFT_UPPER_ARM, trans));
            v.push((palette::LEFT_LOWER_ARM, trans));
            v.push((palette::LEFT_HAND, trans));
            let s0 = p0.r_shoulder(fig);
            let s1 = p.r_shoulder(fig);
            v.push((
                palette::RIGHT_UPPER_ARM,
                shift(Affine2::rigid(s0, s1, p.r_upper_angle - p0.r_upper_angle)),
            ));
            let fore = Affine2::rigid(p0.r_elbow, p.r_elbow, p.r_fore_angle - p0.r_fore_angle);
            v.push((palette::RIGHT_LOWER_ARM, shift(fore)));
            v.push((palette::RIGHT_HAND, shift(fore)));
            v.push((
                palette::OBJECT,
                shift(Affine2::translation(sub2(p.obj_center, p0.obj_center))),
            ));
            v
        })
        .collect();

    let human_masks = MaskVideo::new(human)?;
    let object_masks = MaskVideo::new(object)?;
    let hoi_masks = composite_hoi(&human_masks, &object_masks)?;
    let (motion_tokens, full_tokens) = make_prompts(spec);

    Ok(SceneSample {
        spec: spec.clone(),
        rgb,
        human_masks,
        object_masks,
        hoi_masks,
        class_maps,
        contact,
        transforms,
        motion_tokens,
        full_tokens,
    })
}

impl SceneSample {
    pub fn transform_for(&self, t: usize, class: u8) -> Option<&Affine2> {
        self.transforms[t].iter().find(|(c, _)| *c == class).map(|(_, a)| a)
    }

    /// Classes present anywhere in frame 0, background excluded.
    pub fn classes_at_t0(&self) -> Vec<u8> {
        let mut present = [false; palette::NUM_CLASSES];
        for &c in self.class_maps.index_axis(ndarray::Axis(0), 0).iter() {
            present[c as usize] = true;
        }
        (1..palette::NUM_CLASSES as u8).filter(|&c| present[c as usize]).collect()
    }

    pub fn human_class_list() -> &'static [u8] {
        &HUMAN_CLASSES
    }
}
