//! Ground-truth trajectory sampling from synthetic scenes.

use ndarray::{Array2, Array3};
use rand::Rng;

use super::video::TrajectorySet;
use crate::synth::raster::{is_human_class, SceneSample};
use crate::{Error, Result};

/// Samples `k_h` points inside human-part regions and `k_o` inside the
/// object at t=0, then propagates them by the scene's exact rigid
/// transforms. A point is visible while it stays in frame and its pixel
/// still belongs to its class after z-order resolution (occlusion and
/// out-of-frame motion mark it invisible). Labels come from the part class
/// under the point at t=0.
pub fn sample_track_points(
    sample: &SceneSample,
    k_h: usize,
    k_o: usize,
    rng: &mut impl Rng,
) -> Result<TrajectorySet> {
    if !(1..=8).contains(&k_h) || !(1..=8).contains(&k_o) {
        return Err(Error::Invalid(format!(
            "track counts must be in 1..=8, got k_h={k_h}, k_o={k_o}"
        )));
    }
    let map0 = sample.class_maps.index_axis(ndarray::Axis(0), 0);
    let (h, w) = (map0.shape()[0], map0.shape()[1]);

    // candidate pixels: strictly interior to their class (8-neighborhood)
    let mut human_candidates: Vec<(usize, usize, u8)> = Vec::new();
    let mut object_candidates: Vec<(usize, usize, u8)> = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let c = map0[[y, x]];
            if c == 0 {
                continue;
            }
            let interior = (-1..=1).all(|dy: isize| {
                (-1..=1).all(|dx: isize| {
                    map0[[(y as isize + dy) as usize, (x as isize + dx) as usize]] == c
                })
            });
            if !interior {
                continue;
            }
            if is_human_class(c) {
                human_candidates.push((x, y, c));
            } else {
                object_candidates.push((x, y, c));
            }
        }
    }
    if human_candidates.is_empty() {
        return Err(Error::Data("no interior human-part pixels at t=0".into()));
    }
    if object_candidates.is_empty() {
        return Err(Error::Data("no interior object pixels at t=0".into()));
    }

    let t = sample.class_maps.shape()[0];
    let k = k_h + k_o;
    let mut points = Array3::zeros((k, t, 2));
    let mut visibility = Array2::from_elem((k, t), false);
    let mut labels = Vec::with_capacity(k);

    let pick = |cands: &[(usize, usize, u8)], rng: &mut dyn rand::RngCore| {
        cands[rng.random_range(0..cands.len())]
    };

    for ki in 0..k {
        let (x0, y0, class) = if ki < k_h {
            pick(&human_candidates, rng)
        } else {
            pick(&object_candidates, rng)
        };
        labels.push(class);
        let p0 = [x0 as f64, y0 as f64];
        for ti in 0..t {
            let a = sample
                .transform_for(ti, class)
                .ok_or_else(|| Error::Data(format!("no transform for class {class} at t={ti}")))?;
            let p = a.apply(p0);
            points[[ki, ti, 0]] = p[0];
            points[[ki, ti, 1]] = p[1];
            let (xr, yr) = (p[0].round(), p[1].round());
            let in_frame = xr >= 0.0 && yr >= 0.0 && (xr as usize) < w && (yr as usize) < h;
            let vis = in_frame && sample.class_maps[[ti, yr as usize, xr as usize]] == class;
            visibility[[ki, ti]] = vis;
        }
    }

    let out = TrajectorySet { points, visibility, labels, height: h, width: w };
    out.validate()?;
    Ok(out)
}
