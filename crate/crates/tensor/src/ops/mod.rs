//! The differentiable operator set.

mod basic;
mod conv;
mod loss;
mod norm;
mod pool;

pub use basic::{
    add, concat_channels, crop, crop_many, global_avg_pool, linear, mean, mul, relu, scale, sum, Window,
};
pub use conv::conv2d;
pub use loss::{softmax_cross_entropy, softmax_rows, Target};
pub use norm::{batchnorm, Mode, BN_EPSILON, BN_MOMENTUM};
pub use pool::maxpool2x2;
