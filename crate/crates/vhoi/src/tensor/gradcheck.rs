//! Central finite-difference gradient checking (64-bit).
//!
//! Used by unit tests and the acceptance suite: a scalar loss built from a
//! closure is differentiated both by the tape and by central differences,
//! and the worst relative error over all probed entries is reported.

use ndarray::ArrayD;

use super::tape::{Tape, Tx};

/// Result of a gradient check on one input tensor.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

/// Compares backprop gradients of `loss_fn` w.r.t. `input` against central
/// differences with step `h`. `loss_fn` must place `input` on the tape via
/// `Tape::var` and return the scalar loss handle.
///
/// Relative error uses `|a-b| / max(|a|, |b|, floor)` with a small floor so
/// near-zero gradients do not explode the ratio.
pub fn check_input_gradient<F>(input: &ArrayD<f64>, h: f64, mut loss_fn: F) -> GradCheck
where
    F: FnMut(&mut Tape<f64>, Tx) -> Tx,
{
    // analytic gradient
    let mut tape = Tape::new();
    let x = tape.var(input.clone());
    let loss = loss_fn(&mut tape, x);
    assert_eq!(tape.value(loss).len(), 1, "gradient check needs a scalar loss");
    let grads = tape.backward(loss);
    let analytic = grads.wrt(x).expect("input did not receive a gradient").clone();

    let eval = |v: &ArrayD<f64>, f: &mut F| -> f64 {
        let mut tape = Tape::new();
        let x = tape.var(v.clone());
        let loss = f(&mut tape, x);
        tape.value(loss)[[0]]
    };

    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let n = input.len();
    for i in 0..n {
        let mut plus = input.clone();
        let mut minus = input.clone();
        {
            let p = plus.as_slice_mut().unwrap();
            p[i] += h;
            let m = minus.as_slice_mut().unwrap();
            m[i] -= h;
        }
        let numeric = (eval(&plus, &mut loss_fn) - eval(&minus, &mut loss_fn)) / (2.0 * h);
        let a = analytic.as_slice().unwrap()[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(1e-6);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    GradCheck { max_rel_err: max_rel, max_abs_err: max_abs, checked: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::tensor::randn(shape, &mut rng)
    }

    const H: f64 = 1e-5;
    const TOL: f64 = 1e-6;

    #[test]
    fn elementwise_ops() {
        let x = randn(&[3, 4], 0);
        let other = randn(&[3, 4], 1);
        let r = check_input_gradient(&x, H, |t, xi| {
            let o = t.input(other.clone());
            let a = t.add(xi, o);
            let m = t.mul(a, xi);
            let s = t.sub(m, o);
            let sc = t.scale(s, 0.7);
            let sh = t.add_scalar(sc, 0.3);
            t.mean_all(sh)
        });
        assert!(r.max_rel_err < TOL, "{r:?}");
    }

    #[test]
    fn activations() {
        let x = randn(&[2, 5], 2);
        for which in 0..3 {
            let r = check_input_gradient(&x, H, |t, xi| {
                let y = match which {
                    0 => t.sigmoid(xi),
                    1 => t.silu(xi),
                    _ => t.gelu(xi),
                };
                let sq = t.mul(y, y);
                t.mean_all(sq)
            });
            assert!(r.max_rel_err < 1e-5, "activation {which}: {r:?}");
        }
    }

    #[test]
    fn softmax_and_layer_norm() {
        let x = randn(&[4, 6], 3);
        let w = randn(&[4, 6], 4);
        let r = check_input_gradient(&x, H, |t, xi| {
            let y = t.softmax(xi);
            let wi = t.input(w.clone());
            let p = t.mul(y, wi);
            t.mean_all(p)
        });
        assert!(r.max_rel_err < TOL, "softmax {r:?}");
        let r = check_input_gradient(&x, H, |t, xi| {
            let y = t.layer_norm(xi, 1e-5);
            let wi = t.input(w.clone());
            let p = t.mul(y, wi);
            t.mean_all(p)
        });
        assert!(r.max_rel_err < 1e-5, "layer_norm {r:?}");
    }

    #[test]
    fn matmul_all_transpose_combinations() {
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let (sa, sb): (&[usize], &[usize]) = match (ta, tb) {
                (false, false) => (&[3, 4], &[4, 5]),
                (true, false) => (&[4, 3], &[4, 5]),
                (false, true) => (&[3, 4], &[5, 4]),
                (true, true) => (&[4, 3], &[5, 4]),
            };
            let a = randn(sa, 5);
            let b = randn(sb, 6);
            // grad w.r.t. a
            let r = check_input_gradient(&a, H, |t, ai| {
                let bi = t.input(b.clone());
                let y = t.matmul(ai, bi, ta, tb);
                let sq = t.mul(y, y);
                t.mean_all(sq)
            });
            assert!(r.max_rel_err < TOL, "matmul a ({ta},{tb}): {r:?}");
            // grad w.r.t. b
            let r = check_input_gradient(&b, H, |t, bi| {
                let ai = t.input(a.clone());
                let y = t.matmul(ai, bi, ta, tb);
                let sq = t.mul(y, y);
                t.mean_all(sq)
            });
            assert!(r.max_rel_err < TOL, "matmul b ({ta},{tb}): {r:?}");
        }
    }

    #[test]
    fn batched_matmul_and_permute() {
        let a = randn(&[2, 3, 4], 7);
        let b = randn(&[2, 4, 3], 8);
        let r = check_input_gradient(&a, H, |t, ai| {
            let bi = t.input(b.clone());
            let p = t.permute3(bi, [0, 2, 1]); // [2,3,4]
            let y = t.matmul(ai, p, false, true); // [2,3,3]
            let sq = t.mul(y, y);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "{r:?}");
    }

    #[test]
    fn broadcast_and_structure_ops() {
        let x = randn(&[6, 4], 9);
        let v = randn(&[4], 10);
        let c = randn(&[6, 1], 11);
        let r = check_input_gradient(&x, H, |t, xi| {
            let vi = t.input(v.clone());
            let ci = t.input(c.clone());
            let a = t.add_row(xi, vi);
            let m = t.mul_row(a, vi);
            let g = t.mul_col(m, ci);
            let top = t.slice_rows(g, 0, 3);
            let bot = t.slice_rows(g, 3, 3);
            let cat = t.concat_rows(&[bot, top]);
            let left = t.slice_cols(cat, 0, 2);
            let right = t.slice_cols(cat, 2, 2);
            let cc = t.concat_cols(&[right, left]);
            let gm = t.group_mean(cc, 2);
            let sq = t.mul(gm, gm);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "{r:?}");
        // vector-side gradients
        let r = check_input_gradient(&v, H, |t, vi| {
            let xi = t.input(x.clone());
            let a = t.add_row(xi, vi);
            let m = t.mul_row(a, vi);
            let sq = t.mul(m, m);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "{r:?}");
        let r = check_input_gradient(&c, H, |t, ci| {
            let xi = t.input(x.clone());
            let g = t.mul_col(xi, ci);
            let sq = t.mul(g, g);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "{r:?}");
    }

    #[test]
    fn gather_and_reshape() {
        let x = randn(&[5, 3], 12);
        let idx = std::sync::Arc::new(vec![0usize, 2, 2, 4, 1, 0]);
        let r = check_input_gradient(&x, H, |t, xi| {
            let g = t.gather(xi, idx.clone());
            let rs = t.reshape(g, &[3, 6]);
            let sq = t.mul(rs, rs);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "{r:?}");
    }

    #[test]
    fn conv3d_gradients() {
        let x = randn(&[3, 4, 4, 2], 13);
        let w = randn(&[3 * 3 * 3 * 2, 3], 14).mapv(|v| v * 0.3);
        let b = randn(&[3], 15);
        let r = check_input_gradient(&x, H, |t, xi| {
            let wi = t.input(w.clone());
            let bi = t.input(b.clone());
            let y = t.conv3d(xi, wi, bi, 3, 3, 3);
            let sq = t.mul(y, y);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "conv3d x: {r:?}");
        let r = check_input_gradient(&w, H, |t, wi| {
            let xi = t.input(x.clone());
            let bi = t.input(b.clone());
            let y = t.conv3d(xi, wi, bi, 3, 3, 3);
            let sq = t.mul(y, y);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "conv3d w: {r:?}");
        let r = check_input_gradient(&b, H, |t, bi| {
            let xi = t.input(x.clone());
            let wi = t.input(w.clone());
            let y = t.conv3d(xi, wi, bi, 3, 3, 3);
            let sq = t.mul(y, y);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "conv3d b: {r:?}");
        // 1x3x3 (spatial) and 3x1x1 (temporal) variants share the code path
        let ws = randn(&[9 * 2, 2], 16).mapv(|v| v * 0.3);
        let bs = randn(&[2], 17);
        let r = check_input_gradient(&x, H, |t, xi| {
            let wi = t.input(ws.clone());
            let bi = t.input(bs.clone());
            let y = t.conv3d(xi, wi, bi, 1, 3, 3);
            let sq = t.mul(y, y);
            t.mean_all(sq)
        });
        assert!(r.max_rel_err < TOL, "spatial conv x: {r:?}");
    }

    #[test]
    fn frozen_leaves_receive_no_gradient() {
        let mut store: crate::tensor::ParamStore<f64> = crate::tensor::ParamStore::new();
        let pid = store.insert("w", ArrayD::from_elem(IxDyn(&[2, 2]), 1.5));
        let mut tape: Tape<f64> = Tape::new();
        let frozen = tape.param(&store, pid, false);
        let x = tape.var(randn(&[2, 2], 20));
        let y = tape.matmul(x, frozen, false, false);
        let sq = tape.mul(y, y);
        let loss = tape.mean_all(sq);
        let grads = tape.backward(loss);
        assert!(grads.wrt(frozen).is_none());
        assert!(grads.wrt(x).is_some());
        assert!(grads.params.is_empty());
    }
}
