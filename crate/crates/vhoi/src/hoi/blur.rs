//! Separable Gaussian smoothing for rendered control videos.

use ndarray::Array4;

use super::video::RealVideo;
use crate::{Error, Result};

/// Blurs every frame and channel with a normalized separable Gaussian.
///
/// `radius` is the full (odd) kernel window width, e.g. 99 at 720p scale or
/// 9 at desk scale. Borders use reflect padding (mirror about the edge
/// pixel). Output values stay within `[min(input), max(input)]` because the
/// kernel is normalized to sum 1.
pub fn gaussian_blur(video: &RealVideo, radius: usize, sigma: f64) -> Result<RealVideo> {
    if radius % 2 == 0 || radius == 0 {
        return Err(Error::Invalid(format!("blur radius must be odd and positive, got {radius}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Invalid(format!("blur sigma must be > 0, got {sigma}")));
    }
    let s = video.data.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    let half = radius / 2;
    if half >= h || half >= w {
        return Err(Error::Invalid(format!(
            "blur window {radius} too large for {h}x{w} frames"
        )));
    }
    let kernel = gaussian_kernel(radius, sigma);

    let mut tmp = Array4::zeros((t, h, w, c));
    // horizontal pass
    for ti in 0..t {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (ki, &kv) in kernel.iter().enumerate() {
                        let xi = reflect(x as isize + ki as isize - half as isize, w);
                        acc += kv * video.data[[ti, y, xi, ch]];
                    }
                    tmp[[ti, y, x, ch]] = acc;
                }
            }
        }
    }
    // vertical pass
    let mut out = Array4::zeros((t, h, w, c));
    for ti in 0..t {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (ki, &kv) in kernel.iter().enumerate() {
                        let yi = reflect(y as isize + ki as isize - half as isize, h);
                        acc += kv * tmp[[ti, yi, x, ch]];
                    }
                    out[[ti, y, x, ch]] = acc;
                }
            }
        }
    }
    Ok(RealVideo { data: out })
}

/// Normalized 1D Gaussian taps for an odd window of `radius` samples.
pub fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let half = radius as isize / 2;
    let mut k: Vec<f64> = (-half..=half)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    debug_assert!(i >= 0 && i < n);
    i as usize
}
