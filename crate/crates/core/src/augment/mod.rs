//! Image preprocessing: resize, greyscale, normalize, random flips and
//! random rotation, applied in that order by [`apply_pipeline`].

mod image;
mod io;
mod pipeline;
mod transforms;

pub use self::image::Image;
pub use io::{read_image, read_pnm, read_raw, write_pnm, write_raw};
pub use pipeline::{apply_batch, apply_pipeline, AugmentConfig};
pub use transforms::{
    flip_h, flip_v, greyscale, normalize, resize_bilinear, rotate, rotate_with_fill,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("greyscale needs 3 channels, image has {0}")]
    NotRgb(usize),
    #[error("normalization needs {expected} per-channel values, got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("normalization std must be positive (channel {0})")]
    NonPositiveStd(usize),
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("image I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(String),
}
