use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Binary little-endian PLY with float x/y/z and, when the cloud carries
/// provenance, uint u/v.
pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let prov = cloud.provenance();
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if prov.is_some() {
        header.push_str("property uint u\nproperty uint v\n");
    }
    header.push_str("end_header\n");
    let stride = if prov.is_some() { 20 } else { 12 };
    let mut out = header.into_bytes();
    out.reserve(cloud.len() * stride);
    for (i, p) in cloud.points().iter().enumerate() {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(prov) = prov {
            out.extend_from_slice(&prov[i][0].to_le_bytes());
            out.extend_from_slice(&prov[i][1].to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if little { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
    has_list: bool,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::format("PLY header has no end_header line"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format("PLY header is not UTF-8"))?;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    if lines.next() != Some("ply") {
        return Err(Error::format("missing `ply` magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    other => return Err(Error::format(format!("unknown PLY format `{other}`"))),
                });
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(format!("bad element count `{count}`")))?,
                props: Vec::new(),
                has_list: false,
            }),
            ["property", "list", ..] => {
                elements
                    .last_mut()
                    .ok_or_else(|| Error::format("property before any element"))?
                    .has_list = true;
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::format(format!("unknown PLY type `{ty}`")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::format("property before any element"))?
                    .props
                    .push((name.to_string(), ty));
            }
            _ => return Err(Error::format(format!("unrecognised PLY header line `{line}`"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| Error::format("PLY header has no format line"))?,
        elements,
        body_offset: end + 11,
    })
}

/// Reads the `vertex` element of an ASCII or binary PLY. Extra scalar
/// properties are ignored; `u`/`v` become provenance when both are present.
pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::format("PLY has no vertex element"))?;
    let vertex = &header.elements[vi];
    if vertex.has_list {
        return Err(Error::format("list properties on vertices are not supported"));
    }
    let find = |n: &str| vertex.props.iter().position(|(name, _)| name == n);
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(Error::format("vertex element needs x, y and z properties"));
    };
    let uv = find("u").zip(find("v"));

    let mut values = vec![0f64; vertex.props.len()];
    let mut points = Vec::with_capacity(vertex.count);
    let mut prov = uv.map(|_| Vec::with_capacity(vertex.count));
    let mut push = |values: &[f64]| -> Result<()> {
        points.push(Vector3::new(values[ix], values[iy], values[iz]));
        if let (Some((iu, iv)), Some(prov)) = (uv, prov.as_mut()) {
            let to_u32 = |x: f64| {
                (x >= 0.0 && x <= f64::from(u32::MAX) && x.fract() == 0.0)
                    .then_some(x as u32)
                    .ok_or_else(|| Error::format(format!("provenance value {x} is not a pixel index")))
            };
            prov.push([to_u32(values[iu])?, to_u32(values[iv])?]);
        }
        Ok(())
    };

    let body = &bytes[header.body_offset..];
    match header.encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::format("ASCII PLY body is not UTF-8"))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            // Skip fixed-size elements that precede the vertices (one line each).
            for e in &header.elements[..vi] {
                for _ in 0..e.count {
                    lines.next();
                }
            }
            for row in 0..vertex.count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::format(format!("truncated PLY: vertex {row} missing")))?;
                let mut tok = line.split_whitespace();
                for v in values.iter_mut() {
                    *v = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::format(format!("bad value on vertex line {row}")))?;
                }
                push(&values)?;
            }
        }
        Encoding::BinaryLe | Encoding::BinaryBe => {
            let little = header.encoding == Encoding::BinaryLe;
            let mut offset = 0usize;
            for e in &header.elements[..vi] {
                if e.has_list {
                    return Err(Error::format("list elements before vertices are not supported"));
                }
                offset += e.count * e.props.iter().map(|(_, t)| t.size()).sum::<usize>();
            }
            let stride: usize = vertex.props.iter().map(|(_, t)| t.size()).sum();
            let need = vertex
                .count
                .checked_mul(stride)
                .and_then(|n| n.checked_add(offset))
                .ok_or_else(|| Error::format("PLY vertex count overflows"))?;
            if body.len() < need {
                return Err(Error::format(format!(
                    "truncated PLY: need {need} body bytes, found {}",
                    body.len()
                )));
            }
            for rec in body[offset..need].chunks_exact(stride.max(1)) {
                let mut at = 0;
                for (v, (_, ty)) in values.iter_mut().zip(&vertex.props) {
                    *v = ty.read(&rec[at..], little);
                    at += ty.size();
                }
                push(&values)?;
            }
        }
    }
    PointCloud::with_provenance(points, prov).map_err(|e| Error::format(e.to_string()))
}
