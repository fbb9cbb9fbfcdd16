//! 3x3, stride 1, zero-padded ("same") convolution via im2col + GEMM.
//!
//! Kernels are stored `Cin x 3 x 3 x Cout`. The im2col rows are laid out
//! `(kh, kw, cin)` so each tap copies one contiguous run of channels; the
//! kernel is permuted to match before the GEMM.

use crate::error::{shape_err, Result};
use crate::ops::basic::{column_sums, dims4};
use crate::scalar::Scalar;
use crate::tensor::{OpKind, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Upper bound on im2col buffer elements per chunk of images.
const CHUNK_ELEMS: usize = 1 << 20;

pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_rank("conv2d", 4)?;
    kernel.expect_rank("conv2d", 4)?;
    let (b, h, w, cin) = dims4(input);
    let ks = kernel.shape();
    if ks[1] != KERNEL || ks[2] != KERNEL {
        return shape_err("conv2d", format!("kernel must be Cin x 3 x 3 x Cout, got {ks:?}"));
    }
    if ks[0] != cin {
        return shape_err(
            "conv2d",
            format!("input has {cin} channels but kernel expects {}", ks[0]),
        );
    }
    let cout = ks[3];
    if bias.shape() != [cout] {
        return shape_err("conv2d", format!("bias {:?} for {cout} output channels", bias.shape()));
    }

    let geo = Geometry { h, w, cin };
    let packed = pack_kernel(&kernel.data(), cin, cout);
    let mut out = Vec::with_capacity(b * h * w * cout);
    {
        let bias = bias.data();
        for _ in 0..b * h * w {
            out.extend_from_slice(&bias);
        }
    }
    {
        let x = input.data();
        let mut col = Vec::new();
        for (b0, b1) in geo.chunks(b) {
            let rows = (b1 - b0) * h * w;
            geo.im2col(&x, b0, b1, &mut col);
            let dst = &mut out[b0 * h * w * cout..b1 * h * w * cout];
            T::gemm(rows, geo.kdim(), cout, T::one(), &col, (geo.kdim(), 1), &packed, (cout, 1), T::one(), dst, (cout, 1));
        }
    }

    Ok(Tensor::from_op(
        vec![b, h, w, cout],
        out,
        OpKind::Conv2d,
        vec![input.clone(), kernel.clone(), bias.clone()],
        Box::new(move |args| {
            let [input, kernel, bias] = [&args.inputs[0], &args.inputs[1], &args.inputs[2]];
            let gy = args.grad;
            let kdim = geo.kdim();
            let want_dx = input.tracks_grad();
            let want_dk = kernel.tracks_grad();
            let mut dx = want_dx.then(|| vec![T::zero(); b * h * w * cin]);
            let mut dpacked = want_dk.then(|| vec![T::zero(); kdim * cout]);
            let packed = want_dx.then(|| pack_kernel(&kernel.data(), cin, cout));
            let x = input.data();
            let mut col = Vec::new();
            for (b0, b1) in geo.chunks(b) {
                let rows = (b1 - b0) * h * w;
                let gy_chunk = &gy[b0 * h * w * cout..b1 * h * w * cout];
                if let Some(dk) = dpacked.as_mut() {
                    geo.im2col(&x, b0, b1, &mut col);
                    // dK += col^T @ dY
                    T::gemm(kdim, rows, cout, T::one(), &col, (1, kdim), gy_chunk, (cout, 1), T::one(), dk, (cout, 1));
                }
                if let (Some(dx), Some(packed)) = (dx.as_mut(), packed.as_ref()) {
                    // dcol = dY @ K^T
                    col.clear();
                    col.resize(rows * kdim, T::zero());
                    T::gemm(rows, cout, kdim, T::one(), gy_chunk, (cout, 1), packed, (1, cout), T::zero(), &mut col, (kdim, 1));
                    geo.col2im(&col, b0, b1, dx);
                }
            }
            let dk = dpacked.map(|d| unpack_kernel(&d, cin, cout));
            let db = bias.tracks_grad().then(|| column_sums(gy, b * h * w, cout));
            vec![dx, dk, db]
        }),
    ))
}

#[derive(Clone, Copy)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
}

impl Geometry {
    fn kdim(&self) -> usize {
        TAPS * self.cin
    }

    /// Image ranges whose im2col buffer stays under `CHUNK_ELEMS`.
    fn chunks(&self, batch: usize) -> impl Iterator<Item = (usize, usize)> {
        let per_image = (self.h * self.w * self.kdim()).max(1);
        let step = (CHUNK_ELEMS / per_image).max(1);
        (0..batch).step_by(step).map(move |b0| (b0, (b0 + step).min(batch)))
    }

    fn im2col<T: Scalar>(&self, x: &[T], b0: usize, b1: usize, col: &mut Vec<T>) {
        let Geometry { h, w, cin, .. } = *self;
        let kdim = self.kdim();
        col.clear();
        col.resize((b1 - b0) * h * w * kdim, T::zero());
        for b in b0..b1 {
            for i in 0..h {
                for j in 0..w {
                    let row_start = (((b - b0) * h + i) * w + j) * kdim;
                    let row = &mut col[row_start..row_start + kdim];
                    for kh in 0..KERNEL {
                        let Some(si) = (i + kh).checked_sub(1).filter(|v| *v < h) else {
                            continue;
                        };
                        for kw in 0..KERNEL {
                            let Some(sj) = (j + kw).checked_sub(1).filter(|v| *v < w) else {
                                continue;
                            };
                            let src = ((b * h + si) * w + sj) * cin;
                            let dst = (kh * KERNEL + kw) * cin;
                            row[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, col: &[T], b0: usize, b1: usize, dx: &mut [T]) {
        let Geometry { h, w, cin, .. } = *self;
        let kdim = self.kdim();
        for b in b0..b1 {
            for i in 0..h {
                for j in 0..w {
                    let row_start = (((b - b0) * h + i) * w + j) * kdim;
                    let row = &col[row_start..row_start + kdim];
                    for kh in 0..KERNEL {
                        let Some(si) = (i + kh).checked_sub(1).filter(|v| *v < h) else {
                            continue;
                        };
                        for kw in 0..KERNEL {
                            let Some(sj) = (j + kw).checked_sub(1).filter(|v| *v < w) else {
                                continue;
                            };
                            let dst = ((b * h + si) * w + sj) * cin;
                            let src = (kh * KERNEL + kw) * cin;
                            for (d, s) in dx[dst..dst + cin].iter_mut().zip(&row[src..src + cin]) {
                                *d = *d + *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `Cin x 3 x 3 x Cout` -> `(kh, kw, cin) x Cout`.
fn pack_kernel<T: Scalar>(k: &[T], cin: usize, cout: usize) -> Vec<T> {
    let mut packed = vec![T::zero(); TAPS * cin * cout];
    for ci in 0..cin {
        for tap in 0..TAPS {
            let src = (ci * TAPS + tap) * cout;
            let dst = (tap * cin + ci) * cout;
            packed[dst..dst + cout].copy_from_slice(&k[src..src + cout]);
        }
    }
    packed
}

fn unpack_kernel<T: Scalar>(packed: &[T], cin: usize, cout: usize) -> Vec<T> {
    let mut k = vec![T::zero(); TAPS * cin * cout];
    for ci in 0..cin {
        for tap in 0..TAPS {
            let dst = (ci * TAPS + tap) * cout;
            let src = (tap * cin + ci) * cout;
            k[dst..dst + cout].copy_from_slice(&packed[src..src + cout]);
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::<f32>::zeros([1, 4, 4, 1]);
        let k = Tensor::<f32>::from_vec([1, 3, 3, 2], (0..18).map(|i| i as f32).collect()).unwrap();
        let b = Tensor::<f32>::zeros([2]);
        let y = conv2d(&x, &k, &b).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 2]);
        assert!(y.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let mut xd = vec![0.0f64; 9];
        xd[4] = 1.0;
        let x = Tensor::from_vec([1, 3, 3, 1], xd.clone()).unwrap();
        let mut kd = vec![0.0; 9];
        kd[4] = 1.0;
        let k = Tensor::from_vec([1, 3, 3, 1], kd).unwrap();
        let y = conv2d(&x, &k, &Tensor::zeros([1])).unwrap();
        assert_eq!(y.to_vec(), xd);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::<f32>::zeros([1, 4, 4, 2]);
        let k = Tensor::<f32>::zeros([3, 3, 3, 1]);
        assert!(conv2d(&x, &k, &Tensor::zeros([1])).is_err());
        let k = Tensor::<f32>::zeros([2, 5, 5, 1]);
        assert!(conv2d(&x, &k, &Tensor::zeros([1])).is_err());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let k: Vec<f32> = (0..2 * 9 * 3).map(|i| i as f32).collect();
        assert_eq!(unpack_kernel(&pack_kernel(&k, 2, 3), 2, 3), k);
    }
}
