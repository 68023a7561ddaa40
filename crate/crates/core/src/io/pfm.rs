use crate::depth::DepthImage;
use crate::error::{Error, Result};
use crate::normals::NormalMap;

/// Portable float map: `Pf` (1 channel) or `PF` (3 channels), rows stored
/// bottom-to-top on disk but top-to-bottom here.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmImage {
    /// Invalid pixels are written as 0.
    pub fn from_depth(depth: &DepthImage) -> Self {
        let data = depth
            .depths()
            .iter()
            .zip(depth.valid_mask())
            .map(|(&d, &ok)| if ok { d as f32 } else { 0.0 })
            .collect();
        Self {
            width: depth.width(),
            height: depth.height(),
            channels: 1,
            data,
        }
    }

    /// Depth in metres; zero, negative and non-finite samples are invalid.
    pub fn into_depth(self) -> Result<DepthImage> {
        if self.channels != 1 {
            return Err(Error::format("depth PFM must have a single channel (Pf)"));
        }
        DepthImage::from_depths(self.width, self.height, self.data.into_iter().map(f64::from).collect())
    }

    pub fn into_normals(self) -> Result<NormalMap> {
        if self.channels != 3 {
            return Err(Error::format("normal PFM must have three channels (PF)"));
        }
        let raw = self
            .data
            .chunks_exact(3)
            .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])]);
        super::to_normals(self.width, self.height, raw)
    }
}

/// Header tokens are separated by whitespace; the single byte after the
/// scale token ends the header.
fn header_tokens(bytes: &[u8]) -> Result<(Vec<&str>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format("truncated PFM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| Error::format("non-ASCII PFM header"))?;
        tokens.push(tok);
    }
    if i >= bytes.len() {
        return Err(Error::format("truncated PFM header"));
    }
    Ok((tokens, i + 1))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let (tokens, offset) = header_tokens(bytes)?;
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format(format!("bad PFM magic `{other}`"))),
    };
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::format(format!("bad PFM dimension `{s}`")))
    };
    let width = parse_dim(tokens[1])?;
    let height = parse_dim(tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::format(format!("bad PFM scale `{}`", tokens[3])))?;
    let little = scale < 0.0;
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("PFM dimensions overflow"))?;
    let body = &bytes[offset..];
    if body.len() < n * 4 {
        return Err(Error::format(format!(
            "truncated PFM: expected {} data bytes, found {}",
            n * 4,
            body.len()
        )));
    }
    let mut data = vec![0f32; n];
    let row = width * channels;
    for (file_row, chunk) in body[..n * 4].chunks_exact(row * 4).enumerate() {
        let y = height - 1 - file_row;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[y * row + k] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

/// Little-endian PFM (scale -1).
pub fn encode_pfm(img: &PfmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
