use crate::error::{shape_err, Result};
use crate::ops::basic::dims4;
use crate::scalar::Scalar;
use crate::tensor::{OpKind, Tensor};

/// 2x2 max-pooling with stride 2.
///
/// The gradient of each window goes to its maximum; on ties the first
/// element in row-major window order wins.
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_rank("maxpool2x2", 4)?;
    let (b, h, w, c) = dims4(input);
    if h % 2 != 0 || w % 2 != 0 {
        return shape_err("maxpool2x2", format!("spatial size {h}x{w} must be even"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let n_out = b * oh * ow * c;
    let mut out = Vec::with_capacity(n_out);
    let mut argmax = Vec::with_capacity(n_out);
    {
        let x = input.data();
        for bi in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    let base = [
                        ((bi * h + 2 * i) * w + 2 * j) * c,
                        ((bi * h + 2 * i) * w + 2 * j + 1) * c,
                        ((bi * h + 2 * i + 1) * w + 2 * j) * c,
                        ((bi * h + 2 * i + 1) * w + 2 * j + 1) * c,
                    ];
                    for ch in 0..c {
                        let mut best = base[0] + ch;
                        for off in &base[1..] {
                            if x[off + ch] > x[best] {
                                best = off + ch;
                            }
                        }
                        out.push(x[best]);
                        argmax.push(best as u32);
                    }
                }
            }
        }
    }
    let n_in = input.len();
    Ok(Tensor::from_op(
        vec![b, oh, ow, c],
        out,
        OpKind::MaxPool2x2,
        vec![input.clone()],
        Box::new(move |args| {
            let mut g = vec![T::zero(); n_in];
            for (idx, gv) in argmax.iter().zip(args.grad) {
                g[*idx as usize] = g[*idx as usize] + *gv;
            }
            vec![Some(g)]
        }),
    ))
}
