//! Invertible video <-> latent transform.
//!
//! A pure space-to-depth (p x p) and time-to-depth (q) rearrangement of
//! `[-1, 1]`-scaled videos. Bit-exact and linear by construction, so the
//! augmentor/dense-model losses act directly on (rearranged) pixels.
//! Channel index order is `((dt * p + dh) * p + dw) * 3 + rgb`.

use ndarray::Array4;

use crate::tensor::Real;
use crate::{Error, Result};

/// Default spatial factor (C = 3 * p^2 * q = 48 with q = 1).
pub const DEFAULT_P: usize = 4;
/// Default temporal factor.
pub const DEFAULT_Q: usize = 1;

/// `[T', H', W', C]` latent grid with its rearrangement factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo<S: Real> {
    pub data: Array4<S>,
    pub p: usize,
    pub q: usize,
}

impl<S: Real> LatentVideo<S> {
    pub fn t(&self) -> usize {
        self.data.shape()[0]
    }
    pub fn h(&self) -> usize {
        self.data.shape()[1]
    }
    pub fn w(&self) -> usize {
        self.data.shape()[2]
    }
    pub fn c(&self) -> usize {
        self.data.shape()[3]
    }
    /// Number of latent cells (tokens at patch size 1).
    pub fn cells(&self) -> usize {
        self.t() * self.h() * self.w()
    }

    pub fn zeros_like(&self) -> Self {
        Self { data: Array4::zeros(self.data.raw_dim()), p: self.p, q: self.q }
    }
}

/// Channel count of a latent produced with factors (p, q).
pub fn latent_channels(p: usize, q: usize) -> usize {
    3 * p * p * q
}

/// Encodes an RGB video `[T, H, W, 3]` (values in `[-1, 1]`) into a latent
/// grid `[T/q, H/p, W/p, 3*p*p*q]`.
pub fn encode_video<S: Real>(rgb: &Array4<S>, p: usize, q: usize) -> Result<LatentVideo<S>> {
    let s = rgb.shape();
    let (t, h, w, ch) = (s[0], s[1], s[2], s[3]);
    if ch != 3 {
        return Err(Error::Shape(format!("encode expects 3 channels, got {ch}")));
    }
    if p == 0 || q == 0 {
        return Err(Error::Invalid("codec factors must be positive".into()));
    }
    if t % q != 0 || h % p != 0 || w % p != 0 {
        return Err(Error::Shape(format!(
            "dims ({t},{h},{w}) not divisible by (q={q}, p={p})"
        )));
    }
    let (tq, hp, wp) = (t / q, h / p, w / p);
    let c = latent_channels(p, q);
    let mut out = Array4::zeros((tq, hp, wp, c));
    for t1 in 0..tq {
        for y1 in 0..hp {
            for x1 in 0..wp {
                for dt in 0..q {
                    for dh in 0..p {
                        for dw in 0..p {
                            for k in 0..3 {
                                let cc = ((dt * p + dh) * p + dw) * 3 + k;
                                out[[t1, y1, x1, cc]] =
                                    rgb[[t1 * q + dt, y1 * p + dh, x1 * p + dw, k]];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LatentVideo { data: out, p, q })
}

/// Exact inverse of [`encode_video`].
pub fn decode_video<S: Real>(lat: &LatentVideo<S>) -> Result<Array4<S>> {
    let (p, q) = (lat.p, lat.q);
    let s = lat.data.shape();
    let (tq, hp, wp, c) = (s[0], s[1], s[2], s[3]);
    if c != latent_channels(p, q) {
        return Err(Error::Shape(format!(
            "latent has {c} channels, factors (p={p}, q={q}) need {}",
            latent_channels(p, q)
        )));
    }
    let mut out = Array4::zeros((tq * q, hp * p, wp * p, 3));
    for t1 in 0..tq {
        for y1 in 0..hp {
            for x1 in 0..wp {
                for dt in 0..q {
                    for dh in 0..p {
                        for dw in 0..p {
                            for k in 0..3 {
                                let cc = ((dt * p + dh) * p + dw) * 3 + k;
                                out[[t1 * q + dt, y1 * p + dh, x1 * p + dw, k]] =
                                    lat.data[[t1, y1, x1, cc]];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Encodes a single image as a one-latent-frame clip and zero-pads it to
/// `t_latent` frames along latent time. With q > 1 the image is zero-padded
/// to a q-frame clip before encoding, which reduces to the plain one-frame
/// encoding at q = 1.
pub fn encode_image_padded<S: Real>(
    img: &ndarray::Array3<S>,
    t_latent: usize,
    p: usize,
    q: usize,
) -> Result<LatentVideo<S>> {
    let s = img.shape();
    let (h, w, ch) = (s[0], s[1], s[2]);
    if ch != 3 {
        return Err(Error::Shape(format!("encode expects 3 channels, got {ch}")));
    }
    if t_latent == 0 {
        return Err(Error::Invalid("padded latent needs at least one frame".into()));
    }
    let mut clip = Array4::zeros((q, h, w, 3));
    clip.index_axis_mut(ndarray::Axis(0), 0).assign(img);
    let one = encode_video(&clip, p, q)?;
    let mut data = Array4::zeros((t_latent, one.h(), one.w(), one.c()));
    data.index_axis_mut(ndarray::Axis(0), 0)
        .assign(&one.data.index_axis(ndarray::Axis(0), 0));
    Ok(LatentVideo { data, p, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_video(t: usize, h: usize, w: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: ndarray::ArrayD<f64> = crate::tensor::randn(&[t, h, w, 3], &mut rng);
        flat.into_dimensionality().unwrap()
    }

    #[test]
    fn identity_factors_are_axis_bookkeeping() {
        let v = random_video(2, 4, 4, 0);
        let lat = encode_video(&v, 1, 1).unwrap();
        assert_eq!(lat.data.shape(), &[2, 4, 4, 3]);
        assert_eq!(lat.data, v);
        assert_eq!(decode_video(&lat).unwrap(), v);
    }

    #[test]
    fn shape_arithmetic_p4() {
        let v = random_video(16, 64, 64, 1);
        let lat = encode_video(&v, 4, 1).unwrap();
        assert_eq!(lat.data.shape(), &[16, 16, 16, 48]);
    }

    #[test]
    fn round_trip_bit_exact() {
        for (i, (t, h, w, p, q)) in
            [(4, 8, 8, 2, 1), (6, 12, 8, 4, 3), (2, 16, 16, 8, 2), (8, 8, 8, 1, 4)]
                .into_iter()
                .enumerate()
        {
            let v = random_video(t, h, w, 10 + i as u64);
            let lat = encode_video(&v, p, q).unwrap();
            let back = decode_video(&lat).unwrap();
            assert_eq!(back, v, "p={p} q={q}");
            // encode(decode(latent)) is also the identity
            let again = encode_video(&back, p, q).unwrap();
            assert_eq!(again.data, lat.data);
        }
    }

    #[test]
    fn divisibility_violations_rejected() {
        let v = random_video(3, 8, 8, 2);
        assert!(encode_video(&v, 3, 1).is_err());
        assert!(encode_video(&v, 2, 2).is_err());
        let lat = encode_video(&v, 2, 1).unwrap();
        let bad = LatentVideo { data: lat.data.clone(), p: 4, q: 1 };
        assert!(decode_video(&bad).is_err());
    }

    #[test]
    fn linearity() {
        let x = random_video(2, 8, 8, 3);
        let y = random_video(2, 8, 8, 4);
        let (a, b) = (0.37, -1.25);
        let combo = x.mapv(|v| a * v) + &y.mapv(|v| b * v);
        let lhs = encode_video(&combo, 4, 2).unwrap();
        let ex = encode_video(&x, 4, 2).unwrap();
        let ey = encode_video(&y, 4, 2).unwrap();
        let rhs = ex.data.mapv(|v| a * v) + &ey.data.mapv(|v| b * v);
        let diff = (&lhs.data - &rhs).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d <= 1e-12));
    }

    #[test]
    fn image_padding_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img: Array3<f64> = crate::tensor::randn(&[8, 8, 3], &mut rng)
            .into_dimensionality()
            .unwrap();
        let lat = encode_image_padded(&img, 4, 2, 1).unwrap();
        assert_eq!(lat.data.shape(), &[4, 4, 4, 12]);
        // frames 1..3 all zero
        for t in 1..4 {
            assert!(lat.data.index_axis(ndarray::Axis(0), t).iter().all(|&v| v == 0.0));
        }
        // frame 0 equals the 1-frame clip encoding
        let clip = img.clone().insert_axis(ndarray::Axis(0));
        let one = encode_video(&clip, 2, 1).unwrap();
        assert_eq!(
            lat.data.index_axis(ndarray::Axis(0), 0),
            one.data.index_axis(ndarray::Axis(0), 0)
        );
        // energy of the padded latent equals the energy of frame 0
        let total: f64 = lat.data.iter().map(|v| v * v).sum();
        let frame0: f64 = lat
            .data
            .index_axis(ndarray::Axis(0), 0)
            .iter()
            .map(|v| v * v)
            .sum();
        assert!((total - frame0).abs() < 1e-12);
    }
}
