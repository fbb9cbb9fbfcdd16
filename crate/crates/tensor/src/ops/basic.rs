use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{OpKind, Tensor};

/// Spatial crop window: `x`/`y` are the row/column offsets of the top-left
/// corner, `h`/`w` the extent. Channels are never cropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub h: usize,
    pub w: usize,
}

impl Window {
    pub fn new(x: usize, y: usize, h: usize, w: usize) -> Self {
        Window { x, y, h, w }
    }

    /// Checks the window lies fully inside an `height x width` map.
    pub fn check_inside(&self, height: usize, width: usize) -> Result<()> {
        if self.x + self.h > height {
            return Err(TensorError::Bounds {
                coordinate: "x + h",
                value: self.x + self.h,
                limit: height,
            });
        }
        if self.y + self.w > width {
            return Err(TensorError::Bounds {
                coordinate: "y + w",
                value: self.y + self.w,
                limit: width,
            });
        }
        Ok(())
    }
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return shape_err("add", format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    let data: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x + *y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        OpKind::Add,
        vec![a.clone(), b.clone()],
        Box::new(|args| {
            args.inputs
                .iter()
                .map(|t| t.tracks_grad().then(|| args.grad.to_vec()))
                .collect()
        }),
    ))
}

/// Elementwise product of two same-shape tensors.
pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return shape_err("mul", format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    let data: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x * *y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        OpKind::Mul,
        vec![a.clone(), b.clone()],
        Box::new(|args| {
            let (a, b) = (&args.inputs[0], &args.inputs[1]);
            let times = |other: &Tensor<T>| {
                args.grad.iter().zip(other.data().iter()).map(|(g, v)| *g * *v).collect()
            };
            vec![a.tracks_grad().then(|| times(b)), b.tracks_grad().then(|| times(a))]
        }),
    ))
}

pub fn scale<T: Scalar>(a: &Tensor<T>, factor: T) -> Tensor<T> {
    let data = a.data().iter().map(|v| *v * factor).collect();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        OpKind::Scale,
        vec![a.clone()],
        Box::new(move |args| vec![Some(args.grad.iter().map(|g| *g * factor).collect())]),
    )
}

/// Sum of all elements as a scalar tensor.
pub fn sum<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let total = a.data().iter().fold(0.0f64, |acc, v| acc + v.as_f64());
    let n = a.len();
    Tensor::from_op(
        Vec::new(),
        vec![T::of(total)],
        OpKind::Sum,
        vec![a.clone()],
        Box::new(move |args| vec![Some(vec![args.grad[0]; n])]),
    )
}

pub fn mean<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let n = a.len().max(1);
    scale(&sum(a), T::of(1.0 / n as f64))
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let zero = T::zero();
    let data = input.data().iter().map(|v| if *v > zero { *v } else { zero }).collect();
    Tensor::from_op(
        input.shape().to_vec(),
        data,
        OpKind::Relu,
        vec![input.clone()],
        Box::new(move |args| {
            let g = args
                .grad
                .iter()
                .zip(args.output)
                .map(|(g, y)| if *y > zero { *g } else { zero })
                .collect();
            vec![Some(g)]
        }),
    )
}

/// `[a, b]` along the channel axis of two `B x H x W x C` tensors.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.expect_rank("concat_channels", 4)?;
    b.expect_rank("concat_channels", 4)?;
    if a.shape()[..3] != b.shape()[..3] {
        return shape_err(
            "concat_channels",
            format!("batch/spatial mismatch {:?} vs {:?}", a.shape(), b.shape()),
        );
    }
    let (ca, cb) = (a.shape()[3], b.shape()[3]);
    let c = ca + cb;
    let pixels = a.shape()[..3].iter().product::<usize>();
    let mut data = Vec::with_capacity(pixels * c);
    {
        let (da, db) = (a.data(), b.data());
        for p in 0..pixels {
            data.extend_from_slice(&da[p * ca..(p + 1) * ca]);
            data.extend_from_slice(&db[p * cb..(p + 1) * cb]);
        }
    }
    let mut shape = a.shape().to_vec();
    shape[3] = c;
    Ok(Tensor::from_op(
        shape,
        data,
        OpKind::ConcatChannels,
        vec![a.clone(), b.clone()],
        Box::new(move |args| {
            let split = |offset: usize, width: usize| {
                let mut g = Vec::with_capacity(pixels * width);
                for p in 0..pixels {
                    g.extend_from_slice(&args.grad[p * c + offset..p * c + offset + width]);
                }
                g
            };
            vec![
                args.inputs[0].tracks_grad().then(|| split(0, ca)),
                args.inputs[1].tracks_grad().then(|| split(ca, cb)),
            ]
        }),
    ))
}

/// Single-window crop, `B x H x W x C -> B x h x w x C`.
pub fn crop<T: Scalar>(input: &Tensor<T>, window: Window) -> Result<Tensor<T>> {
    crop_many(input, &[window])
}

/// Crops every window from every batch item and stacks the results along
/// the batch axis, window-major: output item `n * B + b` is window `n` of
/// input item `b`. All windows must share one extent.
pub fn crop_many<T: Scalar>(input: &Tensor<T>, windows: &[Window]) -> Result<Tensor<T>> {
    input.expect_rank("crop", 4)?;
    let Some(first) = windows.first() else {
        return shape_err("crop", "no windows given");
    };
    let (b, hh, ww, c) = dims4(input);
    for win in windows {
        if (win.h, win.w) != (first.h, first.w) {
            return shape_err("crop", format!("window extents differ: {first:?} vs {win:?}"));
        }
        win.check_inside(hh, ww)?;
    }
    let (h, w) = (first.h, first.w);
    let windows = windows.to_vec();
    let n = windows.len();
    let row = w * c;
    let mut data = Vec::with_capacity(n * b * h * row);
    {
        let src = input.data();
        for win in &windows {
            for bi in 0..b {
                for i in 0..h {
                    let start = ((bi * hh + win.x + i) * ww + win.y) * c;
                    data.extend_from_slice(&src[start..start + row]);
                }
            }
        }
    }
    Ok(Tensor::from_op(
        vec![n * b, h, w, c],
        data,
        OpKind::Crop,
        vec![input.clone()],
        Box::new(move |args| {
            let mut g = vec![T::zero(); b * hh * ww * c];
            let mut offset = 0;
            for win in &windows {
                for bi in 0..b {
                    for i in 0..h {
                        let start = ((bi * hh + win.x + i) * ww + win.y) * c;
                        for (dst, src) in g[start..start + row]
                            .iter_mut()
                            .zip(&args.grad[offset..offset + row])
                        {
                            *dst = *dst + *src;
                        }
                        offset += row;
                    }
                }
            }
            vec![Some(g)]
        }),
    ))
}

/// Per-channel spatial mean, `B x H x W x C -> B x C`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_rank("global_avg_pool", 4)?;
    let (b, h, w, c) = dims4(input);
    if h == 0 || w == 0 {
        return shape_err("global_avg_pool", "empty spatial extent");
    }
    let area = h * w;
    let inv = 1.0 / area as f64;
    let mut out = vec![0.0f64; b * c];
    {
        let src = input.data();
        for bi in 0..b {
            let acc = &mut out[bi * c..(bi + 1) * c];
            for p in 0..area {
                let px = &src[(bi * area + p) * c..(bi * area + p + 1) * c];
                for (a, v) in acc.iter_mut().zip(px) {
                    *a += v.as_f64();
                }
            }
        }
    }
    let data = out.into_iter().map(|v| T::of(v * inv)).collect();
    Ok(Tensor::from_op(
        vec![b, c],
        data,
        OpKind::GlobalAvgPool,
        vec![input.clone()],
        Box::new(move |args| {
            let inv = T::of(inv);
            let mut g = Vec::with_capacity(b * area * c);
            for bi in 0..b {
                let go = &args.grad[bi * c..(bi + 1) * c];
                for _ in 0..area {
                    g.extend(go.iter().map(|v| *v * inv));
                }
            }
            vec![Some(g)]
        }),
    ))
}

/// Affine map `x @ weight + bias` for `x: B x D`, `weight: D x M`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    x.expect_rank("linear", 2)?;
    weight.expect_rank("linear", 2)?;
    let (b, d) = (x.shape()[0], x.shape()[1]);
    let (wd, m) = (weight.shape()[0], weight.shape()[1]);
    if d != wd || bias.shape() != [m] {
        return shape_err(
            "linear",
            format!("x {:?}, weight {:?}, bias {:?}", x.shape(), weight.shape(), bias.shape()),
        );
    }
    let mut out = Vec::with_capacity(b * m);
    {
        let bias = bias.data();
        for _ in 0..b {
            out.extend_from_slice(&bias);
        }
    }
    T::gemm(b, d, m, T::one(), &x.data(), (d, 1), &weight.data(), (m, 1), T::one(), &mut out, (m, 1));
    Ok(Tensor::from_op(
        vec![b, m],
        out,
        OpKind::Linear,
        vec![x.clone(), weight.clone(), bias.clone()],
        Box::new(move |args| {
            let [x, weight, bias] = [&args.inputs[0], &args.inputs[1], &args.inputs[2]];
            let gy = args.grad;
            let dx = x.tracks_grad().then(|| {
                let mut dx = vec![T::zero(); b * d];
                T::gemm(b, m, d, T::one(), gy, (m, 1), &weight.data(), (1, m), T::zero(), &mut dx, (d, 1));
                dx
            });
            let dw = weight.tracks_grad().then(|| {
                let mut dw = vec![T::zero(); d * m];
                T::gemm(d, b, m, T::one(), &x.data(), (1, d), gy, (m, 1), T::zero(), &mut dw, (m, 1));
                dw
            });
            let db = bias.tracks_grad().then(|| column_sums(gy, b, m));
            vec![dx, dw, db]
        }),
    ))
}

pub(crate) fn column_sums<T: Scalar>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut acc = vec![0.0f64; cols];
    for r in 0..rows {
        for (a, v) in acc.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
            *a += v.as_f64();
        }
    }
    acc.into_iter().map(T::of).collect()
}

pub(crate) fn dims4<T: Scalar>(t: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}
