//! PLY reader (ascii and binary little-endian) for triangle/polygon meshes.

use std::path::Path;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

/// One parsed element record: scalar values and list values in property order.
type Record = Vec<Vec<f64>>;

/// Everything the mesh loader cares about in a PLY file.
#[derive(Debug, Default)]
pub(crate) struct PlyData {
    pub vertices: Vec<Point3<f64>>,
    pub polygons: Vec<Vec<u32>>,
    pub texcoords: Option<Vec<Vec<f64>>>,
    pub face_colors: Option<Vec<[u8; 3]>>,
}

struct Reader<'a> {
    path: &'a Path,
    body: &'a [u8],
    pos: usize,
    line: usize,
    encoding: Encoding,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        let message = match self.encoding {
            Encoding::Ascii => message.into(),
            Encoding::BinaryLe => format!("{} (body byte {})", message.into(), self.pos),
        };
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message,
        }
    }

    fn next_token(&mut self) -> Result<&'a str> {
        while self.pos < self.body.len() && self.body[self.pos].is_ascii_whitespace() {
            if self.body[self.pos] == b'\n' {
                self.line += 1;
            }
            self.pos += 1;
        }
        if self.pos >= self.body.len() {
            return Err(self.err("unexpected end of file"));
        }
        let start = self.pos;
        while self.pos < self.body.len() && !self.body[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.body[start..self.pos]).map_err(|_| self.err("non-utf8 token"))
    }

    fn value(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            Encoding::Ascii => {
                let tok = self.next_token()?;
                tok.parse::<f64>()
                    .map_err(|_| self.err(format!("bad number {tok:?}")))
            }
            Encoding::BinaryLe => {
                let n = ty.size();
                if self.pos + n > self.body.len() {
                    return Err(self.err("unexpected end of file"));
                }
                let v = ty.read_le(&self.body[self.pos..self.pos + n]);
                self.pos += n;
                Ok(v)
            }
        }
    }

    fn record(&mut self, element: &Element) -> Result<Record> {
        let mut out = Vec::with_capacity(element.properties.len());
        for prop in &element.properties {
            match prop {
                Property::Scalar { ty, .. } => out.push(vec![self.value(*ty)?]),
                Property::List { count, item, .. } => {
                    let n = self.value(*count)?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(self.err(format!("bad list length {n}")));
                    }
                    let items = (0..n as usize)
                        .map(|_| self.value(*item))
                        .collect::<Result<Vec<_>>>()?;
                    out.push(items);
                }
            }
        }
        Ok(out)
    }
}

fn parse_header<'a>(
    bytes: &'a [u8],
    path: &Path,
) -> Result<(Vec<Element>, Encoding, &'a [u8], usize)> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if !bytes.starts_with(b"ply") {
        return Err(Error::UnsupportedFormat(format!(
            "{}: missing 'ply' magic",
            path.display()
        )));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut encoding = None;
    let mut pos = 0;
    let mut line_no = 0;
    loop {
        let Some(rel) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(err(line_no + 1, "header has no end_header".into()));
        };
        line_no += 1;
        let line = std::str::from_utf8(&bytes[pos..pos + rel])
            .map_err(|_| err(line_no, "non-utf8 header".into()))?
            .trim();
        pos += rel + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => {
                        return Err(Error::UnsupportedFormat(format!(
                            "{}: PLY encoding {other}",
                            path.display()
                        )))
                    }
                });
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| err(line_no, format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let count = Scalar::parse(count)
                    .ok_or_else(|| err(line_no, format!("unknown type {count}")))?;
                let item = Scalar::parse(item)
                    .ok_or_else(|| err(line_no, format!("unknown type {item}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before element".into()))?
                    .properties
                    .push(Property::List {
                        name: name.to_string(),
                        count,
                        item,
                    });
            }
            ["property", ty, name] => {
                let ty =
                    Scalar::parse(ty).ok_or_else(|| err(line_no, format!("unknown type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before element".into()))?
                    .properties
                    .push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
            }
            _ => return Err(err(line_no, format!("unrecognized header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| err(line_no, "missing format line".into()))?;
    Ok((elements, encoding, &bytes[pos..], line_no))
}

pub(crate) fn read(path: &Path) -> Result<PlyData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, path)
}

pub(crate) fn parse(bytes: &[u8], path: &Path) -> Result<PlyData> {
    let (elements, encoding, body, header_lines) = parse_header(bytes, path)?;
    let mut reader = Reader {
        path,
        body,
        pos: 0,
        line: header_lines + 1,
        encoding,
    };
    let mut data = PlyData::default();
    for element in &elements {
        let idx = |name: &str| element.properties.iter().position(|p| p.name() == name);
        match element.name.as_str() {
            "vertex" => {
                let (Some(x), Some(y), Some(z)) = (idx("x"), idx("y"), idx("z")) else {
                    return Err(reader.err("vertex element lacks x/y/z"));
                };
                data.vertices.reserve(element.count);
                for _ in 0..element.count {
                    let r = reader.record(element)?;
                    data.vertices.push(Point3::new(r[x][0], r[y][0], r[z][0]));
                }
            }
            "face" => {
                let Some(vi) = idx("vertex_indices").or_else(|| idx("vertex_index")) else {
                    return Err(reader.err("face element lacks vertex_indices"));
                };
                let tc = idx("texcoord");
                let rgb = match (idx("red"), idx("green"), idx("blue")) {
                    (Some(r), Some(g), Some(b)) => Some([r, g, b]),
                    _ => None,
                };
                let mut texcoords = tc.map(|_| Vec::with_capacity(element.count));
                let mut colors = rgb.map(|_| Vec::with_capacity(element.count));
                for _ in 0..element.count {
                    let r = reader.record(element)?;
                    let poly = r[vi]
                        .iter()
                        .map(|&v| {
                            if v < 0.0 || v.fract() != 0.0 || v as usize >= data.vertices.len() {
                                Err(reader.err(format!("face vertex index {v} out of range")))
                            } else {
                                Ok(v as u32)
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if poly.len() < 3 {
                        return Err(reader.err("face with fewer than 3 vertices"));
                    }
                    if let (Some(t), Some(out)) = (tc, texcoords.as_mut()) {
                        out.push(r[t].clone());
                    }
                    if let (Some([ri, gi, bi]), Some(out)) = (rgb, colors.as_mut()) {
                        let c = |v: f64| v.clamp(0.0, 255.0) as u8;
                        out.push([c(r[ri][0]), c(r[gi][0]), c(r[bi][0])]);
                    }
                    data.polygons.push(poly);
                }
                data.texcoords = texcoords;
                data.face_colors = colors;
            }
            _ => {
                for _ in 0..element.count {
                    reader.record(element)?;
                }
            }
        }
    }
    Ok(data)
}

pub(super) fn load(path: &Path) -> Result<Mesh> {
    let data = read(path)?;
    into_mesh(data, path)
}

fn into_mesh(data: PlyData, path: &Path) -> Result<Mesh> {
    if data.polygons.is_empty() {
        return Err(Error::DegenerateGeometry(format!(
            "{} contains no faces",
            path.display()
        )));
    }
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    let mut uv_ok = data.texcoords.is_some();
    for (i, poly) in data.polygons.iter().enumerate() {
        let tc = data.texcoords.as_ref().map(|t| &t[i]);
        if let Some(tc) = tc {
            if tc.len() != poly.len() * 2 {
                uv_ok = false;
            }
        }
        for k in 1..poly.len() - 1 {
            faces.push([poly[0], poly[k], poly[k + 1]]);
            if let (Some(tc), true) = (tc, uv_ok) {
                let corner = |c: usize| [tc[2 * c], tc[2 * c + 1]];
                uvs.push([corner(0), corner(k), corner(k + 1)]);
            }
        }
    }
    if uv_ok {
        Mesh::with_uvs(data.vertices, faces, uvs)
    } else {
        Mesh::new(data.vertices, faces)
    }
}

/// Per-face RGB colors of a PLY file, if it stores them.
pub fn read_face_colors(path: impl AsRef<Path>) -> Result<Option<Vec<[u8; 3]>>> {
    Ok(read(path.as_ref())?.face_colors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.ply")
    }

    #[test]
    fn ascii_quad_with_extra_element() {
        let src = b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar alpha\nelement face 1\nproperty list uchar int vertex_indices\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement edge 1\nproperty int a\nproperty int b\nend_header\n0 0 0 1\n1 0 0 1\n1 1 0 1\n0 1 0 1\n4 0 1 2 3 10 20 30\n0 1\n";
        let data = parse(src, p()).unwrap();
        assert_eq!(data.face_colors.as_deref(), Some(&[[10, 20, 30]][..]));
        let m = into_mesh(data, p()).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn binary_little_endian() {
        let mut src = b"ply\r\nformat binary_little_endian 1.0\r\nelement vertex 3\r\nproperty double x\r\nproperty double y\r\nproperty double z\r\nelement face 1\r\nproperty list uchar uint vertex_indices\r\nend_header\r\n".to_vec();
        for v in [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]] {
            for c in v {
                src.extend_from_slice(&c.to_le_bytes());
            }
        }
        src.push(3);
        for i in [0u32, 1, 2] {
            src.extend_from_slice(&i.to_le_bytes());
        }
        let m = into_mesh(parse(&src, p()).unwrap(), p()).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert_eq!(m.vertices()[2], Point3::new(0.0, 1.0, 0.5));
    }

    #[test]
    fn big_endian_unsupported() {
        let src = b"ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(matches!(parse(src, p()), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated_body_is_parse_error() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1\n";
        assert!(matches!(parse(src, p()), Err(Error::Parse { .. })));
    }

    #[test]
    fn out_of_range_face_index() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n";
        match parse(src, p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 13),
            other => panic!("unexpected {other:?}"),
        }
    }
}
