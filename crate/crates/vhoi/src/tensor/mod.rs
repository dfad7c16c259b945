//! A small tape-based reverse-mode autodiff engine over `ndarray`.
//!
//! Everything model-related (backbone, control branches, trainers) runs on
//! this engine. It is generic over the scalar type: training uses `f32`,
//! numeric gradient checks use `f64`. Forward values live on a tape; the
//! backward pass walks the tape in reverse and accumulates gradients for
//! leaves that require them, which is also how parameter freezing is
//! enforced (frozen leaves simply never receive gradients).

pub mod adam;
pub mod gradcheck;
pub mod params;
pub mod tape;

pub use adam::Adam;
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Tx};

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Scalar type the engine runs on.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + ndarray::ScalarOperand
    + ndarray::LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Standard-normal tensor of the given shape.
pub fn randn<S: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> ArrayD<S> {
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n).map(|_| S::sample_normal(rng)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("randn shape")
}

/// Normal tensor scaled by `std`.
pub fn randn_scaled<S: Real, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> ArrayD<S> {
    let s = S::from_f64(std);
    randn::<S, R>(shape, rng).mapv(|v| v * s)
}
