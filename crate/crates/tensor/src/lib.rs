//! Dense CPU tensors with reverse-mode automatic differentiation.
//!
//! The operator set is deliberately small: 3x3 same-padded convolution,
//! 2x2 max-pooling, batch normalization, ReLU, channel concatenation,
//! spatial cropping, global average pooling, a linear layer and softmax
//! cross entropy. Image tensors are laid out batch x height x width x
//! channels.
//!
//! ```
//! use fragnet_tensor::{ops, Tensor};
//!
//! let x = Tensor::<f64>::parameter([3], vec![1.0, -2.0, 3.0]).unwrap();
//! let y = ops::sum(&ops::relu(&x));
//! y.backward().unwrap();
//! assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 1.0]);
//! ```

mod error;
pub mod gradcheck;
pub mod ops;
mod scalar;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::{Mode, Window};
pub use scalar::Scalar;
pub use tensor::{OpKind, OpNode, Tensor};
