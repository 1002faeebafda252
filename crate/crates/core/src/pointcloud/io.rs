use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

/// On-disk formats accepted by [`save_cloud`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    XyzText,
}

impl CloudFormat {
    /// Picks a format from the file extension; anything but `.xyz`/`.txt`/`.pts`
    /// is written as PLY.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("xyz") | Some("txt") | Some("pts") => CloudFormat::XyzText,
            _ => CloudFormat::PlyAscii,
        }
    }
}

/// Reads a PLY (ASCII or binary little-endian) or XYZ text cloud.
///
/// The format is sniffed from the `ply` magic, so the extension does not
/// matter. Points keep file order.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let points = if bytes.starts_with(b"ply") {
        parse_ply(path, &bytes)?
    } else {
        parse_xyz(path, &bytes)?
    };
    PointCloud::new(points)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        if format == CloudFormat::PlyAscii {
            writeln!(w, "ply")?;
            writeln!(w, "format ascii 1.0")?;
            if let Some(c) = cloud.category() {
                writeln!(w, "comment category {c}")?;
            }
            if let Some(id) = cloud.id() {
                writeln!(w, "comment id {id}")?;
            }
            writeln!(w, "element vertex {}", cloud.len())?;
            writeln!(w, "property float x")?;
            writeln!(w, "property float y")?;
            writeln!(w, "property float z")?;
            writeln!(w, "end_header")?;
        }
        // Shortest round-trip decimal.
        for p in cloud.points() {
            writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err)
}

fn malformed(path: &Path, index: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRecord {
        path: path.to_path_buf(),
        index,
        reason: reason.into(),
    }
}

fn parse_xyz(path: &Path, bytes: &[u8]) -> Result<Vec<Point3>> {
    let text = std::str::from_utf8(bytes).map_err(|_| malformed(path, 0, "not UTF-8 text"))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed(
                path,
                lineno + 1,
                format!("expected 3 coordinates, found {}", fields.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f
                .parse()
                .map_err(|_| malformed(path, lineno + 1, format!("bad number '{f}'")))?;
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(points)
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
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<Vec<Point3>> {
    // Header is ASCII up to and including the end_header line.
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| malformed(path, 0, "missing end_header"))?;
    let mut body_start = end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed(path, 0, "non-ASCII header"))?;

    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in header.lines().skip(1) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLe),
            ["format", other, _] => {
                return Err(malformed(path, 0, format!("unsupported PLY format '{other}'")))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| malformed(path, 0, format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, _] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed(path, 0, "property before element"))?;
                let (Some(c), Some(i)) = (Scalar::parse(count_ty), Scalar::parse(item_ty)) else {
                    return Err(malformed(path, 0, format!("bad list property '{line}'")));
                };
                el.properties.push(Property::List(c, i));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed(path, 0, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| malformed(path, 0, format!("unknown property type '{ty}'")))?;
                el.properties.push(Property::Scalar(name.to_string(), ty));
            }
            [] | ["comment", ..] | ["obj_info", ..] => {}
            _ => return Err(malformed(path, 0, format!("unrecognized header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed(path, 0, "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| malformed(path, 0, "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let coord_index = |axis: &str| {
        vertex
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            .ok_or_else(|| malformed(path, 0, format!("vertex element lacks '{axis}'")))
    };
    let xyz = [coord_index("x")?, coord_index("y")?, coord_index("z")?];
    if vertex.count == 0 {
        return Err(Error::EmptyCloud);
    }

    let body = &bytes[body_start..];
    match encoding {
        Encoding::Ascii => read_ascii_vertices(path, body, &elements, vertex_pos, xyz),
        Encoding::BinaryLe => read_binary_vertices(path, body, &elements, vertex_pos, xyz),
    }
}

fn read_ascii_vertices(
    path: &Path,
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    xyz: [usize; 3],
) -> Result<Vec<Point3>> {
    let text = std::str::from_utf8(body).map_err(|_| malformed(path, 0, "non-ASCII body"))?;
    let skip: usize = elements[..vertex_pos].iter().map(|e| e.count).sum();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).skip(skip);
    let vertex = &elements[vertex_pos];
    let mut points = Vec::with_capacity(vertex.count);
    for i in 0..vertex.count {
        let line = lines.next().ok_or_else(|| {
            malformed(
                path,
                i,
                format!("expected {} vertices, data ends after {i}", vertex.count),
            )
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let mut p = [0.0; 3];
        for (k, &col) in xyz.iter().enumerate() {
            let f = fields
                .get(col)
                .ok_or_else(|| malformed(path, i, "vertex record too short"))?;
            p[k] = f
                .parse()
                .map_err(|_| malformed(path, i, format!("bad number '{f}'")))?;
        }
        points.push(p);
    }
    Ok(points)
}

fn read_binary_vertices(
    path: &Path,
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    xyz: [usize; 3],
) -> Result<Vec<Point3>> {
    let mut offset = 0usize;
    let truncated = |i: usize, n: usize| {
        malformed(path, i, format!("expected {n} records, data ends after {i}"))
    };
    // Skip elements stored before the vertices.
    for el in &elements[..vertex_pos] {
        for i in 0..el.count {
            for prop in &el.properties {
                match prop {
                    Property::Scalar(_, ty) => offset += ty.size(),
                    Property::List(count_ty, item_ty) => {
                        let raw = body
                            .get(offset..offset + count_ty.size())
                            .ok_or_else(|| truncated(i, el.count))?;
                        let len = count_ty.read_le(raw) as usize;
                        offset += count_ty.size() + len * item_ty.size();
                    }
                }
            }
        }
    }
    let vertex = &elements[vertex_pos];
    let mut points = Vec::with_capacity(vertex.count);
    for i in 0..vertex.count {
        let mut values = Vec::with_capacity(vertex.properties.len());
        for prop in &vertex.properties {
            match prop {
                Property::Scalar(_, ty) => {
                    let raw = body
                        .get(offset..offset + ty.size())
                        .ok_or_else(|| truncated(i, vertex.count))?;
                    values.push(ty.read_le(raw));
                    offset += ty.size();
                }
                Property::List(count_ty, item_ty) => {
                    let raw = body
                        .get(offset..offset + count_ty.size())
                        .ok_or_else(|| truncated(i, vertex.count))?;
                    let len = count_ty.read_le(raw) as usize;
                    offset += count_ty.size() + len * item_ty.size();
                    values.push(f64::NAN);
                }
            }
        }
        points.push([values[xyz[0]], values[xyz[1]], values[xyz[2]]]);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, content: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn parses_three_vertex_ply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "tri.ply",
            b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
        );
        let c = load_cloud(&p).unwrap();
        assert_eq!(c.points(), &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn short_vertex_section_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "short.ply",
            b"ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n",
        );
        match load_cloud(&p) {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 4),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn binary_little_endian_with_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty uchar red\nproperty float x\nproperty float y\nproperty double z\nend_header\n".to_vec();
        for (r, x, y, z) in [(7u8, 1.5f32, -2.0f32, 0.25f64), (9, 0.0, 3.0, -1.0)] {
            bytes.push(r);
            bytes.extend(x.to_le_bytes());
            bytes.extend(y.to_le_bytes());
            bytes.extend(z.to_le_bytes());
        }
        let p = write(dir.path(), "bin.ply", &bytes);
        let c = load_cloud(&p).unwrap();
        assert_eq!(c.points(), &[[1.5, -2.0, 0.25], [0.0, 3.0, -1.0]]);

        let truncated = write(dir.path(), "trunc.ply", &bytes[..bytes.len() - 4]);
        assert!(matches!(load_cloud(&truncated), Err(Error::MalformedRecord { index: 1, .. })));
    }

    #[test]
    fn xyz_text_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.xyz", b"# header\n1 2 3\n\n-4.5 0 1e-3\n");
        assert_eq!(load_cloud(&p).unwrap().points(), &[[1.0, 2.0, 3.0], [-4.5, 0.0, 1e-3]]);
        let bad = write(dir.path(), "b.xyz", b"1 2 3\n1 2\n");
        assert!(matches!(load_cloud(&bad), Err(Error::MalformedRecord { index: 2, .. })));
        let empty = write(dir.path(), "c.xyz", b"\n");
        assert!(matches!(load_cloud(&empty), Err(Error::EmptyCloud)));
        assert!(matches!(load_cloud(dir.path().join("nope.ply")), Err(Error::FileMissing(_))));
    }

    #[test]
    fn single_point_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let c = PointCloud::new(vec![[0.5, -0.25, 1.0]]).unwrap();
        for (name, fmt) in [("one.ply", CloudFormat::PlyAscii), ("one.xyz", CloudFormat::XyzText)] {
            let p = dir.path().join(name);
            save_cloud(&c, &p, fmt).unwrap();
            assert_eq!(load_cloud(&p).unwrap().points(), c.points());
        }
    }

    #[test]
    fn cardinality_preserved_for_1024_points() {
        let dir = tempfile::tempdir().unwrap();
        let pts: Vec<Point3> = (0..1024)
            .map(|i| [i as f64 * 0.001, (i as f64).sin(), -(i as f64) / 7.0])
            .collect();
        let c = PointCloud::new(pts).unwrap();
        let p = dir.path().join("big.ply");
        save_cloud(&c, &p, CloudFormat::PlyAscii).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 1024\n"));
        let body = text.split("end_header\n").nth(1).unwrap();
        assert_eq!(body.lines().count(), 1024);
        assert_eq!(load_cloud(&p).unwrap(), c);
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let c = PointCloud::new(vec![[0.0; 3]]).unwrap();
        let err = save_cloud(&c, "/proc/definitely/not/here.ply", CloudFormat::PlyAscii).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
