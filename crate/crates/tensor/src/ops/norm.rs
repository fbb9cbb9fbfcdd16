use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{OpKind, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept on the old running statistic at each training update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalization over all of batch, height and width.
///
/// In `Train` mode the batch statistics are used and the running statistics
/// are updated in place; in `Eval` mode the running statistics are used.
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let Some(&c) = input.shape().last() else {
        return shape_err("batchnorm", "scalar input");
    };
    for (name, t) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
        if t.shape() != [c] {
            return shape_err("batchnorm", format!("{name} {:?} for {c} channels", t.shape()));
        }
    }
    let n = if c == 0 { 0 } else { input.len() / c };
    if mode == Mode::Train && n < 2 {
        return shape_err("batchnorm", "training needs at least two values per channel");
    }

    let (mean, invstd) = match mode {
        Mode::Train => {
            let (mean, var) = channel_moments(&input.data(), c);
            let m = BN_MOMENTUM;
            let unbias = n as f64 / (n as f64 - 1.0);
            {
                let mut rm = running_mean.data_mut();
                let mut rv = running_var.data_mut();
                for ch in 0..c {
                    rm[ch] = T::of(m * rm[ch].as_f64() + (1.0 - m) * mean[ch]);
                    rv[ch] = T::of(m * rv[ch].as_f64() + (1.0 - m) * var[ch] * unbias);
                }
            }
            let invstd = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect::<Vec<_>>();
            (mean, invstd)
        }
        Mode::Eval => {
            let mean = running_mean.data().iter().map(|v| v.as_f64()).collect::<Vec<_>>();
            let invstd = running_var
                .data()
                .iter()
                .map(|v| 1.0 / (v.as_f64() + BN_EPSILON).sqrt())
                .collect::<Vec<_>>();
            (mean, invstd)
        }
    };

    // y = scale * x + shift, per channel
    let (scale, shift): (Vec<T>, Vec<T>) = {
        let (g, bt) = (gamma.data(), beta.data());
        (0..c)
            .map(|ch| {
                let s = g[ch].as_f64() * invstd[ch];
                (T::of(s), T::of(bt[ch].as_f64() - mean[ch] * s))
            })
            .unzip()
    };
    let out: Vec<T> = {
        let x = input.data();
        let mut out = Vec::with_capacity(x.len());
        for px in x.chunks_exact(c.max(1)) {
            out.extend(px.iter().zip(scale.iter().zip(&shift)).map(|(v, (s, b))| *v * *s + *b));
        }
        out
    };

    Ok(Tensor::from_op(
        input.shape().to_vec(),
        out,
        OpKind::BatchNorm,
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |args| {
            let [input, gamma, beta] = [&args.inputs[0], &args.inputs[1], &args.inputs[2]];
            let x = input.data();
            let gy = args.grad;
            // sum(dy) and sum(dy * xhat) per channel
            let mut sum_dy = vec![0.0f64; c];
            let mut sum_dy_xhat = vec![0.0f64; c];
            for (px, gpx) in x.chunks_exact(c.max(1)).zip(gy.chunks_exact(c.max(1))) {
                for ch in 0..c {
                    let xhat = (px[ch].as_f64() - mean[ch]) * invstd[ch];
                    let g = gpx[ch].as_f64();
                    sum_dy[ch] += g;
                    sum_dy_xhat[ch] += g * xhat;
                }
            }
            let dx = input.tracks_grad().then(|| {
                let g = gamma.data();
                let mut dx = Vec::with_capacity(x.len());
                match mode {
                    Mode::Train => {
                        let nf = n as f64;
                        let coef: Vec<f64> = (0..c).map(|ch| g[ch].as_f64() * invstd[ch] / nf).collect();
                        for (px, gpx) in x.chunks_exact(c.max(1)).zip(gy.chunks_exact(c.max(1))) {
                            for ch in 0..c {
                                let xhat = (px[ch].as_f64() - mean[ch]) * invstd[ch];
                                let v = coef[ch]
                                    * (nf * gpx[ch].as_f64() - sum_dy[ch] - xhat * sum_dy_xhat[ch]);
                                dx.push(T::of(v));
                            }
                        }
                    }
                    Mode::Eval => {
                        let coef: Vec<T> =
                            (0..c).map(|ch| T::of(g[ch].as_f64() * invstd[ch])).collect();
                        for gpx in gy.chunks_exact(c.max(1)) {
                            dx.extend(gpx.iter().zip(&coef).map(|(a, b)| *a * *b));
                        }
                    }
                }
                dx
            });
            let dgamma = gamma
                .tracks_grad()
                .then(|| sum_dy_xhat.iter().map(|v| T::of(*v)).collect());
            let dbeta = beta.tracks_grad().then(|| sum_dy.iter().map(|v| T::of(*v)).collect());
            vec![dx, dgamma, dbeta]
        }),
    ))
}

/// Per-channel mean and biased variance of a channels-last buffer.
fn channel_moments<T: Scalar>(x: &[T], c: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (x.len() / c.max(1)) as f64;
    let mut mean = vec![0.0f64; c];
    for px in x.chunks_exact(c.max(1)) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; c];
    for px in x.chunks_exact(c.max(1)) {
        for ch in 0..c {
            let d = px[ch].as_f64() - mean[ch];
            var[ch] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(c: usize) -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::zeros([c]), Tensor::full([c], 1.0))
    }

    #[test]
    fn standardized_input_passes_through() {
        // per-channel mean 0, biased variance 1
        let x = Tensor::<f64>::from_vec([1, 2, 2, 1], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let (rm, rv) = stats(1);
        let y = batchnorm(&x, &Tensor::full([1], 1.0), &Tensor::zeros([1]), &rm, &rv, Mode::Train).unwrap();
        for (a, b) in y.to_vec().iter().zip(x.to_vec()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gamma_yields_beta() {
        let x = Tensor::<f64>::from_vec([2, 1, 2, 2], vec![1., 5., -2., 3., 0.5, 8., 9., -4.]).unwrap();
        let (rm, rv) = stats(2);
        let beta = Tensor::from_vec([2], vec![0.25, -3.0]).unwrap();
        let y = batchnorm(&x, &Tensor::zeros([2]), &beta, &rm, &rv, Mode::Train).unwrap();
        for px in y.to_vec().chunks(2) {
            assert_eq!(px, &[0.25, -3.0]);
        }
    }

    #[test]
    fn zero_variance_channel_is_finite() {
        let x = Tensor::<f32>::full([2, 2, 2, 3], 4.0);
        let (rm, rv) = (Tensor::zeros([3]), Tensor::full([3], 1.0));
        let y = batchnorm(&x, &Tensor::full([3], 1.0), &Tensor::zeros([3]), &rm, &rv, Mode::Train).unwrap();
        assert!(y.is_finite());
        assert!(y.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 1], vec![1.0, 3.0]).unwrap();
        let (rm, rv) = stats(1);
        batchnorm(&x, &Tensor::full([1], 1.0), &Tensor::zeros([1]), &rm, &rv, Mode::Train).unwrap();
        assert!((rm.item() - 0.2).abs() < 1e-12);
        // unbiased batch variance is 2
        assert!((rv.item() - (0.9 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn eval_uses_running_stats() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 1], vec![3.0]).unwrap();
        let rm = Tensor::full([1], 1.0);
        let rv = Tensor::full([1], 4.0 - BN_EPSILON);
        let y = batchnorm(&x, &Tensor::full([1], 2.0), &Tensor::full([1], 0.5), &rm, &rv, Mode::Eval).unwrap();
        assert!((y.item() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn train_mode_needs_two_values() {
        let x = Tensor::<f64>::zeros([1, 1, 1, 2]);
        let (rm, rv) = stats(2);
        assert!(batchnorm(&x, &Tensor::full([2], 1.0), &Tensor::zeros([2]), &rm, &rv, Mode::Train).is_err());
    }
}
