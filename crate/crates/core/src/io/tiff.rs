use std::io::Cursor;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::normals::NormalMap;

fn tiff_err(e: tiff::TiffError) -> Error {
    Error::format(format!("cannot decode TIFF: {e}"))
}

/// Decodes a 3-channel 32-bit float TIFF of camera-frame normals.
/// Zero vectors mark absent normals; others are normalised.
pub fn decode_normals_tiff(bytes: &[u8]) -> Result<NormalMap> {
    let mut dec = Decoder::new(Cursor::new(bytes)).map_err(tiff_err)?;
    let (w, h) = dec.dimensions().map_err(tiff_err)?;
    match dec.colortype().map_err(tiff_err)? {
        ColorType::RGB(32) => {}
        other => return Err(Error::format(format!("normal TIFF must be 3-channel float32, got {other:?}"))),
    }
    let DecodingResult::F32(data) = dec.read_image().map_err(tiff_err)? else {
        return Err(Error::format("normal TIFF samples are not 32-bit floats"));
    };
    let raw = data
        .chunks_exact(3)
        .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])]);
    super::to_normals(w as usize, h as usize, raw)
}

/// Absent normals are written as zero vectors.
pub fn encode_normals_tiff(map: &NormalMap) -> Result<Vec<u8>> {
    let data: Vec<f32> = map
        .normals()
        .iter()
        .flat_map(|n| match n {
            Some(v) => [v.x as f32, v.y as f32, v.z as f32],
            None => [0.0; 3],
        })
        .collect();
    let mut out = Cursor::new(Vec::new());
    TiffEncoder::new(&mut out)
        .and_then(|mut enc| enc.write_image::<colortype::RGB32Float>(map.width() as u32, map.height() as u32, &data))
        .map_err(|e| Error::invalid(format!("cannot encode TIFF: {e}")))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn round_trip() {
        let normals = vec![Some(Vector3::new(0.0, -1.0, 0.0)), None, Some(Vector3::new(0.6, 0.0, -0.8)), None];
        let map = NormalMap::new(2, 2, normals, None).unwrap();
        let back = decode_normals_tiff(&encode_normals_tiff(&map).unwrap()).unwrap();
        assert_eq!(back.present_count(), 2);
        let n = back.get(0, 1).unwrap();
        assert!((n - Vector3::new(0.6, 0.0, -0.8)).norm() < 1e-6);
    }

    #[test]
    fn garbage() {
        assert!(matches!(decode_normals_tiff(b"II*\0garbage"), Err(Error::Format(_))));
    }
}
