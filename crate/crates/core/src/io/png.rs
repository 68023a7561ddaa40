use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::depth::DepthImage;
use crate::error::{Error, Result};

/// Decodes a 16-bit grayscale PNG of millimetres; 0 marks invalid pixels.
pub fn decode_depth_png(bytes: &[u8]) -> Result<DepthImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(format!("cannot decode PNG: {e}")))?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(Error::format(format!(
            "depth PNG must be 16-bit grayscale, got {:?}",
            img.color()
        )));
    };
    let (w, h) = buf.dimensions();
    let raw = buf.into_raw();
    let valid: Vec<bool> = raw.iter().map(|&mm| mm > 0).collect();
    let depths = raw.iter().map(|&mm| f64::from(mm) / 1000.0).collect();
    DepthImage::from_parts(w as usize, h as usize, depths, valid)
}

/// Encodes depth as 16-bit millimetres, rounding to the nearest millimetre.
/// Valid depths that would round to 0 or exceed 65.535 m are rejected.
pub fn encode_depth_png(depth: &DepthImage) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(depth.depths().len());
    for (i, (&d, &ok)) in depth.depths().iter().zip(depth.valid_mask()).enumerate() {
        if !ok {
            raw.push(0u16);
            continue;
        }
        let mm = (d * 1000.0).round();
        if !(1.0..=f64::from(u16::MAX)).contains(&mm) {
            return Err(Error::invalid(format!(
                "depth {d} m at pixel {i} does not fit a 16-bit millimetre PNG"
            )));
        }
        raw.push(mm as u16);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .ok_or_else(|| Error::invalid("depth buffer size mismatch"))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::invalid(format!("cannot encode PNG: {e}")))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_millimetres() {
        let d = DepthImage::from_depths(3, 2, vec![1.0, 0.0, 2.5, 0.001, 65.535, 1.2344]).unwrap();
        let back = decode_depth_png(&encode_depth_png(&d).unwrap()).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.valid_mask(), d.valid_mask());
        assert_eq!(back.depths(), &[1.0, 0.0, 2.5, 0.001, 65.535, 1.234]);
    }

    #[test]
    fn truncated_is_format_error() {
        let d = DepthImage::from_depths(8, 8, vec![1.0; 64]).unwrap();
        let bytes = encode_depth_png(&d).unwrap();
        let err = decode_depth_png(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn eight_bit_rejected() {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(2, 2, vec![1, 2, 3, 4]).unwrap();
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png).unwrap();
        assert!(matches!(decode_depth_png(out.get_ref()), Err(Error::Format(_))));
    }

    #[test]
    fn out_of_range_depth() {
        let d = DepthImage::from_depths(1, 1, vec![70.0]).unwrap();
        assert!(encode_depth_png(&d).is_err());
    }
}
