//! FragNet writer identification: a two-pathway CNN that predicts the
//! writer of a word image from small fragments, plus the WordImgNet
//! whole-word baseline, training, evaluation protocols and a synthetic
//! handwriting generator.
//!
//! ```no_run
//! use fragnet::arch::{Network, NetworkConfig};
//! use fragnet::data::{load_image, resize_pad};
//! use fragnet::Mode;
//!
//! let net = Network::<f32>::new(NetworkConfig::fragnet(64, 10), 0)?;
//! let image = resize_pad(&load_image("word.png".as_ref())?, 64, 128)?;
//! let out = net.word_forward(&image, Mode::Eval)?;
//! println!("{:?}", out.word_probs.to_vec());
//! # Ok::<(), fragnet::FragError>(())
//! ```

pub mod arch;
pub mod blocks;
pub mod checkpoint;
pub mod data;
mod error;
pub mod eval;
pub mod optim;
pub mod train;

pub use error::{FragError, Result};
pub use fragnet_tensor::{ops::Mode, Scalar, Tensor};
