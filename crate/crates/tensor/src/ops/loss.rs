use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{OpKind, Tensor};

/// Ground truth for a row of logits.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a, T> {
    /// One class index per row.
    Classes(&'a [usize]),
    /// A full `B x M` target distribution (one-hot rows for hard labels).
    Distribution(&'a [T]),
}

/// Row-wise softmax computed with the max-shift.
pub fn softmax_rows<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::of(e / z)));
    }
    out
}

/// Softmax cross entropy of `B x M` logits.
///
/// Returns the per-row losses (a `B` tensor that carries gradients) and the
/// softmax probabilities (no gradient). The loss is evaluated in
/// log-sum-exp form; the gradient with respect to the logits is
/// `probs * sum(target) - target`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    target: Target<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    logits.expect_rank("softmax_cross_entropy", 2)?;
    let (b, m) = (logits.shape()[0], logits.shape()[1]);
    if m < 2 {
        return shape_err("softmax_cross_entropy", format!("need at least 2 classes, got {m}"));
    }
    let dense: Vec<f64> = match target {
        Target::Classes(idx) => {
            if idx.len() != b {
                return shape_err("softmax_cross_entropy", format!("{} targets for {b} rows", idx.len()));
            }
            let mut d = vec![0.0; b * m];
            for (r, &k) in idx.iter().enumerate() {
                if k >= m {
                    return Err(TensorError::InvalidClass { index: k, classes: m });
                }
                d[r * m + k] = 1.0;
            }
            d
        }
        Target::Distribution(dist) => {
            if dist.len() != b * m {
                return shape_err("softmax_cross_entropy", format!("target has {} values for {b}x{m}", dist.len()));
            }
            dist.iter().map(|v| v.as_f64()).collect()
        }
    };

    let mut losses = Vec::with_capacity(b);
    let mut probs = Vec::with_capacity(b * m);
    {
        let x = logits.data();
        for (row, g) in x.chunks_exact(m).zip(dense.chunks_exact(m)) {
            let max = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
            let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
            let loss: f64 = row.iter().zip(g).map(|(v, gi)| gi * (lse - v.as_f64())).sum();
            losses.push(T::of(loss));
            probs.extend(row.iter().map(|v| T::of((v.as_f64() - lse).exp())));
        }
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(TensorError::NonFinite("softmax_cross_entropy"));
    }
    let probs_t = Tensor::from_vec(vec![b, m], probs.clone())?;
    let loss = Tensor::from_op(
        vec![b],
        losses,
        OpKind::SoftmaxCrossEntropy,
        vec![logits.clone()],
        Box::new(move |args| {
            let mut g = Vec::with_capacity(b * m);
            for r in 0..b {
                let gl = args.grad[r].as_f64();
                let row_t = &dense[r * m..(r + 1) * m];
                let mass: f64 = row_t.iter().sum();
                for k in 0..m {
                    g.push(T::of(gl * (probs[r * m + k].as_f64() * mass - row_t[k])));
                }
            }
            vec![Some(g)]
        }),
    );
    Ok((loss, probs_t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_m() {
        let logits = Tensor::<f64>::zeros([3, 7]);
        let (loss, probs) = softmax_cross_entropy(&logits, Target::Classes(&[0, 3, 6])).unwrap();
        for l in loss.to_vec() {
            assert!((l - 7f64.ln()).abs() < 1e-12);
        }
        for p in probs.to_vec() {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn large_logit_is_stable() {
        let logits = Tensor::<f32>::from_vec([1, 3], vec![1000.0, 0.0, -5.0]).unwrap();
        let (loss, probs) = softmax_cross_entropy(&logits, Target::Classes(&[0])).unwrap();
        assert!(loss.item().abs() < 1e-6);
        assert!(probs.is_finite());
        let logits = Tensor::<f32>::from_vec([1, 2], vec![1000.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, Target::Classes(&[1])).unwrap();
        assert!((loss.item() - 1000.0).abs() < 1e-3);
    }

    #[test]
    fn invalid_class_is_error() {
        let logits = Tensor::<f32>::zeros([1, 3]);
        let err = softmax_cross_entropy(&logits, Target::Classes(&[3])).unwrap_err();
        assert_eq!(err, TensorError::InvalidClass { index: 3, classes: 3 });
    }

    #[test]
    fn one_class_is_rejected() {
        assert!(softmax_cross_entropy(&Tensor::<f32>::zeros([1, 1]), Target::Classes(&[0])).is_err());
    }

    #[test]
    fn one_hot_distribution_matches_indices() {
        let logits = Tensor::<f64>::from_vec([2, 3], vec![0.3, -1.0, 2.0, 0.0, 0.5, 0.1]).unwrap();
        let (a, _) = softmax_cross_entropy(&logits, Target::Classes(&[2, 0])).unwrap();
        let onehot = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let (b, _) = softmax_cross_entropy(&logits, Target::Distribution(&onehot)).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn gradient_is_probs_minus_target() {
        let logits = Tensor::<f64>::parameter([1, 3], vec![0.2, 0.1, -0.4]).unwrap();
        let (loss, probs) = softmax_cross_entropy(&logits, Target::Classes(&[1])).unwrap();
        crate::ops::sum(&loss).backward().unwrap();
        let p = probs.to_vec();
        let g = logits.grad().unwrap();
        assert!((g[0] - p[0]).abs() < 1e-15);
        assert!((g[1] - (p[1] - 1.0)).abs() < 1e-15);
        assert!((g[2] - p[2]).abs() < 1e-15);
    }
}
