//! Rasterization of sparse trajectories into mask videos, mask
//! compositing, and palette quantization.

use ndarray::Array4;

use super::palette::PartPalette;
use super::video::{MaskVideo, RealVideo, TrajectorySet};
use crate::{Error, Result};

/// Draws each visible track point as a filled disk of its class color.
///
/// Later tracks overwrite earlier ones on overlap (painter's order by track
/// index). Disks are clipped at the canvas border.
pub fn render_trajectories(
    traj: &TrajectorySet,
    palette: &PartPalette,
    h: usize,
    w: usize,
    disk_radius: f64,
) -> Result<MaskVideo> {
    traj.validate()?;
    if disk_radius < 1.0 {
        return Err(Error::Invalid(format!("disk radius must be >= 1, got {disk_radius}")));
    }
    let (k, t) = (traj.num_tracks(), traj.num_frames());
    let mut data = Array4::zeros((t, h, w, 3));
    for ti in 0..t {
        for ki in 0..k {
            if !traj.visibility[[ki, ti]] {
                continue;
            }
            let cx = traj.points[[ki, ti, 0]];
            let cy = traj.points[[ki, ti, 1]];
            let rgb = palette.rgb(traj.labels[ki]);
            paint_disk(&mut data, ti, cx, cy, disk_radius, h, w, |px| {
                px.copy_from_slice(&rgb)
            });
        }
    }
    MaskVideo::new(data)
}

/// Draws value-1 disks at every visible track point; union over tracks.
pub fn render_visibility(
    traj: &TrajectorySet,
    h: usize,
    w: usize,
    disk_radius: f64,
) -> Result<MaskVideo> {
    traj.validate()?;
    if disk_radius < 1.0 {
        return Err(Error::Invalid(format!("disk radius must be >= 1, got {disk_radius}")));
    }
    let (k, t) = (traj.num_tracks(), traj.num_frames());
    let mut data = Array4::zeros((t, h, w, 1));
    for ti in 0..t {
        for ki in 0..k {
            if !traj.visibility[[ki, ti]] {
                continue;
            }
            let cx = traj.points[[ki, ti, 0]];
            let cy = traj.points[[ki, ti, 1]];
            paint_disk(&mut data, ti, cx, cy, disk_radius, h, w, |px| px[0] = 1);
        }
    }
    MaskVideo::new(data)
}

fn paint_disk<F: FnMut(&mut [u8])>(
    data: &mut Array4<u8>,
    t: usize,
    cx: f64,
    cy: f64,
    r: f64,
    h: usize,
    w: usize,
    mut set: F,
) {
    let y0 = ((cy - r).ceil().max(0.0)) as usize;
    let y1 = ((cy + r).floor().min(h as f64 - 1.0)) as usize;
    let x0 = ((cx - r).ceil().max(0.0)) as usize;
    let x1 = ((cx + r).floor().min(w as f64 - 1.0)) as usize;
    if (cy + r) < 0.0 || (cx + r) < 0.0 {
        return;
    }
    for y in y0..=y1.min(h.saturating_sub(1)) {
        for x in x0..=x1.min(w.saturating_sub(1)) {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                let mut px = data.slice_mut(ndarray::s![t, y, x, ..]);
                set(px.as_slice_mut().unwrap());
            }
        }
    }
}

/// Element-wise per-channel maximum of two mask videos.
pub fn composite_hoi(human: &MaskVideo, object: &MaskVideo) -> Result<MaskVideo> {
    if human.data.shape() != object.data.shape() {
        return Err(Error::Shape(format!(
            "composite inputs differ: {:?} vs {:?}",
            human.data.shape(),
            object.data.shape()
        )));
    }
    let mut out = human.data.clone();
    ndarray::Zip::from(&mut out)
        .and(&object.data)
        .for_each(|a, &b| *a = (*a).max(b));
    MaskVideo::new(out)
}

/// Maps every pixel to the nearest palette color (squared Euclidean
/// distance in RGB, ties to the lowest class id). Input is expected in
/// `[0, 255]` color units.
pub fn quantize_to_palette(video: &RealVideo, palette: &PartPalette) -> Result<MaskVideo> {
    let s = video.data.shape();
    if s[3] != 3 {
        return Err(Error::Shape("quantize expects a 3-channel video".into()));
    }
    let (t, h, w) = (s[0], s[1], s[2]);
    let mut out = Array4::zeros((t, h, w, 3));
    for ti in 0..t {
        for y in 0..h {
            for x in 0..w {
                let px = [
                    video.data[[ti, y, x, 0]],
                    video.data[[ti, y, x, 1]],
                    video.data[[ti, y, x, 2]],
                ];
                let rgb = palette.rgb(palette.nearest_class(px));
                for c in 0..3 {
                    out[[ti, y, x, c]] = rgb[c];
                }
            }
        }
    }
    MaskVideo::new(out)
}

/// Per-frame class-id map of a palette-valid 3-channel mask video.
pub fn class_map(video: &MaskVideo, palette: &PartPalette) -> Result<ndarray::Array3<u8>> {
    let s = video.data.shape();
    if s[3] != 3 {
        return Err(Error::Shape("class map needs a 3-channel video".into()));
    }
    let mut out = ndarray::Array3::zeros((s[0], s[1], s[2]));
    for ti in 0..s[0] {
        for y in 0..s[1] {
            for x in 0..s[2] {
                let rgb = [
                    video.data[[ti, y, x, 0]],
                    video.data[[ti, y, x, 1]],
                    video.data[[ti, y, x, 2]],
                ];
                out[[ti, y, x]] = palette.class_of_exact(rgb).ok_or_else(|| {
                    Error::Data(format!("pixel ({ti},{y},{x}) = {rgb:?} is not a palette color"))
                })?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hoi::palette::{build_palette, RIGHT_HAND, TORSO};
    use ndarray::{Array2, Array3};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn traj(points: Vec<(f64, f64)>, labels: Vec<u8>, t: usize, vis: Option<Array2<bool>>) -> TrajectorySet {
        let k = points.len();
        let mut p = Array3::zeros((k, t, 2));
        for ki in 0..k {
            for ti in 0..t {
                p[[ki, ti, 0]] = points[ki].0;
                p[[ki, ti, 1]] = points[ki].1;
            }
        }
        TrajectorySet {
            points: p,
            visibility: vis.unwrap_or_else(|| Array2::from_elem((k, t), true)),
            labels,
            height: 32,
            width: 32,
        }
    }

    #[test]
    fn static_track_renders_red_disk_both_frames() {
        let pal = build_palette();
        let t = traj(vec![(10.0, 10.0)], vec![RIGHT_HAND], 2, None);
        let mv = render_trajectories(&t, &pal, 32, 32, 3.0).unwrap();
        for ti in 0..2 {
            assert_eq!(
                [mv.data[[ti, 10, 10, 0]], mv.data[[ti, 10, 10, 1]], mv.data[[ti, 10, 10, 2]]],
                [255, 0, 0]
            );
            // far corner stays black
            assert_eq!(mv.data[[ti, 31, 31, 0]], 0);
        }
        assert_eq!(mv.data.index_axis(ndarray::Axis(0), 0), mv.data.index_axis(ndarray::Axis(0), 1));
    }

    #[test]
    fn invisible_frame_is_black() {
        let pal = build_palette();
        let mut vis = Array2::from_elem((1, 2), true);
        vis[[0, 1]] = false;
        let t = traj(vec![(10.0, 10.0)], vec![RIGHT_HAND], 2, Some(vis));
        let mv = render_trajectories(&t, &pal, 32, 32, 3.0).unwrap();
        assert!(mv.data.index_axis(ndarray::Axis(0), 1).iter().all(|&v| v == 0));
        assert!(mv.data.index_axis(ndarray::Axis(0), 0).iter().any(|&v| v != 0));
    }

    /// Brute-force painter's-order rasterizer used as the overlap oracle.
    fn oracle_render(t: &TrajectorySet, pal: &PartPalette, h: usize, w: usize, r: f64) -> Array4<u8> {
        let mut out = Array4::zeros((t.num_frames(), h, w, 3));
        for ti in 0..t.num_frames() {
            for y in 0..h {
                for x in 0..w {
                    // last visible track covering this pixel wins
                    for ki in 0..t.num_tracks() {
                        if !t.visibility[[ki, ti]] {
                            continue;
                        }
                        let dx = x as f64 - t.points[[ki, ti, 0]];
                        let dy = y as f64 - t.points[[ki, ti, 1]];
                        if dx * dx + dy * dy <= r * r {
                            let rgb = pal.rgb(t.labels[ki]);
                            for c in 0..3 {
                                out[[ti, y, x, c]] = rgb[c];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn overlapping_tracks_take_second_color_matching_oracle() {
        let pal = build_palette();
        let t = traj(vec![(10.0, 10.0), (12.0, 10.0)], vec![RIGHT_HAND, TORSO], 1, None);
        let mv = render_trajectories(&t, &pal, 32, 32, 3.0).unwrap();
        assert_eq!(mv.data, oracle_render(&t, &pal, 32, 32, 3.0));
        // the overlap column at x=11 belongs to the later (torso) track
        assert_eq!(
            [mv.data[[0, 10, 11, 0]], mv.data[[0, 10, 11, 1]], mv.data[[0, 10, 11, 2]]],
            pal.rgb(TORSO)
        );
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        let pal = build_palette();
        let mut t = traj(vec![(10.0, 10.0)], vec![RIGHT_HAND], 2, None);
        t.points[[0, 1, 0]] = f64::INFINITY;
        assert!(render_trajectories(&t, &pal, 32, 32, 3.0).is_err());
        assert!(render_visibility(&t, 32, 32, 3.0).is_err());
    }

    #[test]
    fn visibility_disk_pixel_count_near_area() {
        let t = traj(vec![(16.0, 16.0)], vec![RIGHT_HAND], 1, None);
        for r in [2.0, 3.0, 5.0] {
            let mv = render_visibility(&t, 32, 32, r).unwrap();
            let count = mv.data.iter().filter(|&&v| v == 1).count();
            // brute-force circle membership oracle
            let mut oracle = 0usize;
            for y in 0..32 {
                for x in 0..32 {
                    let dx = x as f64 - 16.0;
                    let dy = y as f64 - 16.0;
                    if dx * dx + dy * dy <= r * r {
                        oracle += 1;
                    }
                }
            }
            assert_eq!(count, oracle);
            let area = std::f64::consts::PI * r * r;
            assert!((count as f64 - area).abs() <= 2.0 * r + 4.0, "r={r} count={count}");
        }
    }

    #[test]
    fn visibility_union_and_empty_frames() {
        let mut vis = Array2::from_elem((2, 2), true);
        vis[[0, 1]] = false;
        vis[[1, 1]] = false;
        let t = traj(vec![(8.0, 8.0), (20.0, 20.0)], vec![RIGHT_HAND, TORSO], 2, Some(vis));
        let mv = render_visibility(&t, 32, 32, 2.0).unwrap();
        assert!(mv.data[[0, 8, 8, 0]] == 1 && mv.data[[0, 20, 20, 0]] == 1);
        assert!(mv.data.index_axis(ndarray::Axis(0), 1).iter().all(|&v| v == 0));
    }

    #[test]
    fn composite_basics_and_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..8 {
            let a = MaskVideo::new(Array4::from_shape_fn((4, 8, 8, 3), |_| rng.random::<u8>())).unwrap();
            let b = MaskVideo::new(Array4::from_shape_fn((4, 8, 8, 3), |_| rng.random::<u8>())).unwrap();
            let c = composite_hoi(&a, &b).unwrap();
            // triple-loop max oracle
            for t in 0..4 {
                for y in 0..8 {
                    for x in 0..8 {
                        for ch in 0..3 {
                            assert_eq!(
                                c.data[[t, y, x, ch]],
                                a.data[[t, y, x, ch]].max(b.data[[t, y, x, ch]])
                            );
                        }
                    }
                }
            }
            // commutativity
            assert_eq!(c, composite_hoi(&b, &a).unwrap());
        }
        // max with all-black leaves input unchanged
        let a = MaskVideo::new(Array4::from_shape_fn((2, 4, 4, 3), |_| rng.random::<u8>())).unwrap();
        let zero = MaskVideo::zeros(2, 4, 4, 3);
        assert_eq!(composite_hoi(&a, &zero).unwrap(), a);
        // shape mismatch rejected
        assert!(composite_hoi(&a, &MaskVideo::zeros(2, 4, 5, 3)).is_err());
    }

    #[test]
    fn quantize_palette_colors_unchanged_and_nearest() {
        let pal = build_palette();
        // build a video out of exact palette colors
        let mut v = RealVideo::zeros(1, 2, 2, 3);
        for (i, id) in [0u8, 14, 21, 28].iter().enumerate() {
            let rgb = pal.rgb(*id);
            let (y, x) = (i / 2, i % 2);
            for c in 0..3 {
                v.data[[0, y, x, c]] = rgb[c] as f64;
            }
        }
        let q = quantize_to_palette(&v, &pal).unwrap();
        assert_eq!(q.data.mapv(|u| u as f64), v.data);

        // (250, 5, 5) snaps to right-hand red; verified against an argmin oracle
        let mut v = RealVideo::zeros(1, 1, 1, 3);
        v.data[[0, 0, 0, 0]] = 250.0;
        v.data[[0, 0, 0, 1]] = 5.0;
        v.data[[0, 0, 0, 2]] = 5.0;
        let mut best = (f64::INFINITY, 0u8);
        for e in pal.entries() {
            let d = (250.0 - e.rgb[0] as f64).powi(2)
                + (5.0 - e.rgb[1] as f64).powi(2)
                + (5.0 - e.rgb[2] as f64).powi(2);
            if d < best.0 {
                best = (d, e.id);
            }
        }
        assert_eq!(best.1, RIGHT_HAND);
        let q = quantize_to_palette(&v, &pal).unwrap();
        assert_eq!(
            [q.data[[0, 0, 0, 0]], q.data[[0, 0, 0, 1]], q.data[[0, 0, 0, 2]]],
            [255, 0, 0]
        );
    }

    #[test]
    fn quantize_uniform_gray_is_single_class_and_idempotent() {
        let pal = build_palette();
        let mut v = RealVideo::zeros(2, 3, 3, 3);
        v.data.fill(90.0);
        let q = quantize_to_palette(&v, &pal).unwrap();
        let first = [q.data[[0, 0, 0, 0]], q.data[[0, 0, 0, 1]], q.data[[0, 0, 0, 2]]];
        for t in 0..2 {
            for y in 0..3 {
                for x in 0..3 {
                    assert_eq!(
                        [q.data[[t, y, x, 0]], q.data[[t, y, x, 1]], q.data[[t, y, x, 2]]],
                        first
                    );
                }
            }
        }
        let q2 = quantize_to_palette(&q.to_real_raw(), &pal).unwrap();
        assert_eq!(q2, q);
    }

    #[test]
    fn render_then_quantize_round_trips_class_map() {
        let pal = build_palette();
        let t = traj(vec![(10.0, 10.0), (14.0, 10.0)], vec![RIGHT_HAND, TORSO], 2, None);
        let mv = render_trajectories(&t, &pal, 32, 32, 3.0).unwrap();
        let q = quantize_to_palette(&mv.to_real_raw(), &pal).unwrap();
        assert_eq!(q.data, mv.data);
        assert_eq!(class_map(&q, &pal).unwrap(), class_map(&mv, &pal).unwrap());
    }
}
