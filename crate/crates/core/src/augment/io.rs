//! 8-bit binary PGM (P5) / PPM (P6) images scaled to `[0, 1]`, and a raw
//! float dump for standardized images.
//!
//! Raw layout: an ASCII header line `"{width} {height} {channels}\n"`
//! followed by `width·height·channels` little-endian `f64` values in
//! row-major, channel-interleaved order.

use std::io::{BufRead, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::{AugmentError, Image};
use crate::scalar::Scalar;

pub fn read_pnm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>, AugmentError> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| AugmentError::Codec(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let scale = T::of(255.0);
    match decoded {
        DynamicImage::ImageLuma8(g) => Image::new(
            w,
            h,
            1,
            g.into_raw()
                .into_iter()
                .map(|v| T::of(v as f64) / scale)
                .collect(),
        ),
        other => {
            let rgb = other.to_rgb8();
            Image::new(
                w,
                h,
                3,
                rgb.into_raw()
                    .into_iter()
                    .map(|v| T::of(v as f64) / scale)
                    .collect(),
            )
        }
    }
}

/// Writes P5 for one channel and P6 for three. Values are clamped to
/// `[0, 1]` and rounded to the nearest of 256 levels.
pub fn write_pnm<T: Scalar, W: Write>(img: &Image<T>, writer: W) -> Result<(), AugmentError> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (subtype, color) = if img.channels() == 1 {
        (
            PnmSubtype::Graymap(SampleEncoding::Binary),
            ExtendedColorType::L8,
        )
    } else {
        (
            PnmSubtype::Pixmap(SampleEncoding::Binary),
            ExtendedColorType::Rgb8,
        )
    };
    PnmEncoder::new(writer)
        .with_subtype(subtype)
        .write_image(&bytes, img.width() as u32, img.height() as u32, color)
        .map_err(|e| AugmentError::Codec(e.to_string()))
}

pub fn write_raw<T: Scalar, W: Write>(img: &Image<T>, mut writer: W) -> Result<(), AugmentError> {
    writeln!(
        writer,
        "{} {} {}",
        img.width(),
        img.height(),
        img.channels()
    )?;
    let mut buf = Vec::with_capacity(img.data().len() * 8);
    for &v in img.data() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    writer.write_all(&buf)?;
    Ok(())
}

pub fn read_raw<T: Scalar, R: BufRead>(mut reader: R) -> Result<Image<T>, AugmentError> {
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| AugmentError::Codec(format!("bad raw header `{}`", header.trim_end())))?;
    let [w, h, c] = dims[..] else {
        return Err(AugmentError::Codec(format!(
            "raw header needs `w h c`, got `{}`",
            header.trim_end()
        )));
    };
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| AugmentError::Codec("raw dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != n * 8 {
        return Err(AugmentError::Codec(format!(
            "raw body has {} bytes, expected {}",
            bytes.len(),
            n * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| T::of(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
        .collect();
    Image::new(w, h, c, data)
}

/// Reads `.raw` dumps or PGM/PPM files, chosen by extension.
pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>, AugmentError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("raw"))
    {
        read_raw(bytes.as_slice())
    } else {
        read_pnm(&bytes)
    }
}
