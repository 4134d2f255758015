use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use super::Tensor;
use crate::error::{Error, Result};

/// Magic bytes of the raw tensor container.
pub const RAW_MAGIC: &[u8; 4] = b"WDT1";
const RAW_HEADER_LEN: usize = 16;

/// Load an 8-bit grayscale or RGB image into `[0, 1]`.
///
/// Grayscale (with or without alpha) yields one channel; everything else is
/// converted to RGB. 16-bit and float images are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)?;
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            let data = g.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
            Tensor::new(1, h as usize, w as usize, data)
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            let n = (w * h) as usize;
            let mut data = vec![0.0; 3 * n];
            for (i, px) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * n + i] = f64::from(px[c]) / 255.0;
                }
            }
            Tensor::new(3, h as usize, w as usize, data)
        }
        other => Err(Error::Format(format!(
            "unsupported pixel format {:?} in {}",
            other.color(),
            path.display()
        ))),
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Save a 1- or 3-channel tensor as an 8-bit image. Values are clamped to
/// `[0, 1]`; the format follows the file extension.
pub fn save_image(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = t.dims();
    let (wu, hu) = (w as u32, h as u32);
    let img = match c {
        1 => {
            let buf: Vec<u8> = t.data().iter().map(|&v| quantize(v)).collect();
            DynamicImage::ImageLuma8(GrayImage::from_raw(wu, hu, buf).expect("buffer sized from tensor"))
        }
        3 => {
            let n = h * w;
            let d = t.data();
            let buf: Vec<u8> = (0..n)
                .flat_map(|i| [quantize(d[i]), quantize(d[n + i]), quantize(d[2 * n + i])])
                .collect();
            DynamicImage::ImageRgb8(RgbImage::from_raw(wu, hu, buf).expect("buffer sized from tensor"))
        }
        _ => return Err(Error::invalid(format!("images need 1 or 3 channels, tensor has {c}"))),
    };
    img.save(path)?;
    Ok(())
}

/// Write the raw container. Values are narrowed to `f32`.
pub fn save_raw(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = t.dims();
    let mut buf = Vec::with_capacity(RAW_HEADER_LEN + 4 * t.len());
    buf.extend_from_slice(RAW_MAGIC);
    for dim in [c, h, w] {
        let d = u32::try_from(dim).map_err(|_| Error::DimensionOverflow {
            channels: c as u64,
            height: h as u64,
            width: w as u64,
        })?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}

pub(crate) fn decode_raw(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "raw tensor needs a {RAW_HEADER_LEN}-byte header, file has {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format("raw tensor magic is not WDT1".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (c, h, w) = (dim(0), dim(1), dim(2));
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension in header {c}x{h}x{w}")));
    }
    let overflow = Error::DimensionOverflow {
        channels: c.into(),
        height: h.into(),
        width: w.into(),
    };
    let count = (c as usize)
        .checked_mul(h as usize)
        .and_then(|n| n.checked_mul(w as usize))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or(overflow)?;
    let payload = &bytes[RAW_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::MalformedHeader(format!(
            "header declares {count} values ({} bytes), payload has {} bytes",
            count * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    Tensor::new(c as usize, h as usize, w as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_is_bit_exact_for_f32_values() {
        let t = Tensor::from_fn(2, 3, 5, |c, y, x| {
            f64::from((c as f32 * 0.731 + y as f32 * 1.37 - x as f32 * 0.0913).sin())
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.raw");
        save_raw(&t, &p).unwrap();
        let back = load_raw(&p).unwrap();
        assert_eq!(back.dims(), t.dims());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"WDT1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 4 * 30);
    }

    #[test]
    fn truncated_raw_is_malformed() {
        let t = Tensor::zeros(1, 4, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.raw");
        save_raw(&t, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(matches!(
            decode_raw(&bytes[..bytes.len() - 3]),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(decode_raw(&bytes[..10]), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn wrong_magic_and_huge_dims_are_distinct_errors() {
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(decode_raw(&bytes), Err(Error::Format(_))));

        let mut huge = RAW_MAGIC.to_vec();
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = decode_raw(&huge).unwrap_err();
        if cfg!(target_pointer_width = "64") {
            // 2^96 elements overflow any address space
            assert!(matches!(err, Error::DimensionOverflow { .. }));
        }
    }

    #[test]
    fn missing_file_is_not_found() {
        assert!(matches!(load_raw("/nonexistent/x.raw"), Err(Error::NotFound(_))));
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::NotFound(_))));
    }

    #[test]
    fn checker_png_maps_to_unit_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        GrayImage::from_raw(2, 2, vec![0, 255, 255, 0])
            .unwrap()
            .save(&p)
            .unwrap();
        let t = load_image(&p).unwrap();
        assert_eq!(t.dims(), (1, 2, 2));
        assert_eq!(t.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn image_round_trip_within_quantization() {
        let t = Tensor::from_fn(3, 4, 6, |c, y, x| ((c + y * 3 + x * 5) % 17) as f64 / 16.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for ext in ["png", "ppm"] {
            let p = dir.path().join(format!("rgb.{ext}"));
            save_image(&t, &p).unwrap();
            let back = load_image(&p).unwrap();
            assert!(back.max_abs_diff(&t).unwrap() <= 0.5 / 255.0 + 1e-12);
        }
        let g = t.channel_tensor(1).unwrap();
        let p = dir.path().join("g.pgm");
        save_image(&g, &p).unwrap();
        assert!(load_image(&p).unwrap().max_abs_diff(&g).unwrap() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn two_channel_images_are_rejected() {
        let t = Tensor::zeros(2, 2, 2).unwrap();
        assert!(save_image(&t, "/tmp/never.png").is_err());
    }
}
