//! Minimal PLY codec for point data.
//!
//! Only the `vertex` element is materialized; its scalar properties are read
//! into `f64` columns, which is lossless for every PLY scalar type. Other
//! elements are parsed (so binary offsets stay correct) and discarded, as are
//! list properties on the vertex element.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::I8 => "char",
            ScalarType::U8 => "uchar",
            ScalarType::I16 => "short",
            ScalarType::U16 => "ushort",
            ScalarType::I32 => "int",
            ScalarType::U32 => "uint",
            ScalarType::F32 => "float",
            ScalarType::F64 => "double",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    fn decode(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = bytes.try_into().expect("sized slice");
                if big_endian {
                    <$t>::from_be_bytes(arr) as f64
                } else {
                    <$t>::from_le_bytes(arr) as f64
                }
            }};
        }
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => num!(i16),
            ScalarType::U16 => num!(u16),
            ScalarType::I32 => num!(i32),
            ScalarType::U32 => num!(u32),
            ScalarType::F32 => num!(f32),
            ScalarType::F64 => num!(f64),
        }
    }

    fn encode_le(self, value: f64, out: &mut Vec<u8>) {
        match self {
            ScalarType::I8 => out.push(value as i8 as u8),
            ScalarType::U8 => out.push(value as u8),
            ScalarType::I16 => out.extend_from_slice(&(value as i16).to_le_bytes()),
            ScalarType::U16 => out.extend_from_slice(&(value as u16).to_le_bytes()),
            ScalarType::I32 => out.extend_from_slice(&(value as i32).to_le_bytes()),
            ScalarType::U32 => out.extend_from_slice(&(value as u32).to_le_bytes()),
            ScalarType::F32 => out.extend_from_slice(&(value as f32).to_le_bytes()),
            ScalarType::F64 => out.extend_from_slice(&value.to_le_bytes()),
        }
    }

    fn format_ascii(self, value: f64, out: &mut String) {
        match self {
            ScalarType::F32 => write!(out, "{}", value as f32),
            ScalarType::F64 => write!(out, "{value}"),
            _ => write!(out, "{}", value as i64),
        }
        .expect("string write");
    }

    fn in_range(self, value: f64) -> bool {
        let (lo, hi) = match self {
            ScalarType::I8 => (i8::MIN as f64, i8::MAX as f64),
            ScalarType::U8 => (0.0, u8::MAX as f64),
            ScalarType::I16 => (i16::MIN as f64, i16::MAX as f64),
            ScalarType::U16 => (0.0, u16::MAX as f64),
            ScalarType::I32 => (i32::MIN as f64, i32::MAX as f64),
            ScalarType::U32 => (0.0, u32::MAX as f64),
            ScalarType::F32 | ScalarType::F64 => return true,
        };
        value.fract() == 0.0 && value >= lo && value <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct PropertyDef {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<PropertyDef>,
}

/// A named scalar column of the vertex element.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ty: ScalarType,
    pub values: Vec<f64>,
}

/// The vertex element of a PLY file plus its header comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexTable {
    pub count: usize,
    pub comments: Vec<String>,
    pub columns: Vec<Column>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Removes and returns the first column whose name is in `names`.
    pub fn take_column(&mut self, names: &[&str]) -> Option<Column> {
        let pos = self
            .columns
            .iter()
            .position(|c| names.contains(&c.name.as_str()))?;
        Some(self.columns.remove(pos))
    }
}

pub fn read_file(path: &Path) -> Result<VertexTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> Result<VertexTable> {
    let (encoding, comments, elements, body_start) = parse_header(bytes)?;
    let mut table = VertexTable {
        comments,
        ..Default::default()
    };
    let body = &bytes[body_start..];
    match encoding {
        Encoding::Ascii => parse_ascii_body(body, body_start, &elements, &mut table)?,
        Encoding::BinaryLittleEndian => {
            parse_binary_body(body, body_start, &elements, false, &mut table)?
        }
        Encoding::BinaryBigEndian => {
            parse_binary_body(body, body_start, &elements, true, &mut table)?
        }
    }
    Ok(table)
}

type Header = (Encoding, Vec<String>, Vec<ElementDef>, usize);

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let rest = &bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(start, "unterminated header"))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(start, "header is not valid ASCII"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (start, magic) = next_line(&mut offset)?;
    if magic.trim() != "ply" {
        return Err(Error::parse(start, "missing 'ply' magic"));
    }

    let mut encoding = None;
    let mut comments = Vec::new();
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        let (start, line) = next_line(&mut offset)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None => continue,
            Some("end_header") => break,
            Some("comment") | Some("obj_info") => {
                let text = line.trim_start();
                let text = text.split_once(char::is_whitespace).map_or("", |(_, r)| r);
                comments.push(text.to_string());
            }
            Some("format") => {
                let fmt = tokens.next().unwrap_or_default();
                encoding = Some(match fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLittleEndian,
                    "binary_big_endian" => Encoding::BinaryBigEndian,
                    other => return Err(Error::parse(start, format!("unknown format '{other}'"))),
                });
                if tokens.next() != Some("1.0") {
                    return Err(Error::parse(start, "unsupported PLY version"));
                }
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| Error::parse(start, "element without name"))?;
                let count = tokens
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(start, "element without valid count"))?;
                elements.push(ElementDef {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(start, "property before any element"))?;
                let bad = || Error::parse(start, "malformed property line");
                let first = tokens.next().ok_or_else(bad)?;
                let kind = if first == "list" {
                    let count = tokens.next().and_then(ScalarType::from_name).ok_or_else(bad)?;
                    let item = tokens.next().and_then(ScalarType::from_name).ok_or_else(bad)?;
                    if !count.is_integer() {
                        return Err(bad());
                    }
                    PropertyKind::List { count, item }
                } else {
                    PropertyKind::Scalar(ScalarType::from_name(first).ok_or_else(bad)?)
                };
                let name = tokens.next().ok_or_else(bad)?;
                element.properties.push(PropertyDef {
                    name: name.to_string(),
                    kind,
                });
            }
            Some(other) => {
                return Err(Error::parse(start, format!("unexpected header keyword '{other}'")))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(0, "header has no format line"))?;
    Ok((encoding, comments, elements, offset))
}

fn vertex_columns(element: &ElementDef, table: &mut VertexTable) -> Vec<Option<usize>> {
    table.count = element.count;
    element
        .properties
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(ty) => {
                table.columns.push(Column {
                    name: p.name.clone(),
                    ty,
                    values: Vec::with_capacity(element.count),
                });
                Some(table.columns.len() - 1)
            }
            PropertyKind::List { .. } => {
                log::warn!("dropping list property '{}' on vertex element", p.name);
                None
            }
        })
        .collect()
}

fn parse_binary_body(
    body: &[u8],
    base: usize,
    elements: &[ElementDef],
    big_endian: bool,
    table: &mut VertexTable,
) -> Result<()> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > body.len() {
            return Err(Error::parse(base + *pos, "truncated binary payload"));
        }
        let s = &body[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    for element in elements {
        let is_vertex = element.name == "vertex" && table.columns.is_empty();
        let slots = if is_vertex {
            vertex_columns(element, table)
        } else {
            vec![None; element.properties.len()]
        };
        for _ in 0..element.count {
            for (prop, slot) in element.properties.iter().zip(&slots) {
                match prop.kind {
                    PropertyKind::Scalar(ty) => {
                        let v = ty.decode(take(&mut pos, ty.size())?, big_endian);
                        if let Some(c) = slot {
                            table.columns[*c].values.push(v);
                        }
                    }
                    PropertyKind::List { count, item } => {
                        let at = pos;
                        let n = count.decode(take(&mut pos, count.size())?, big_endian);
                        if n < 0.0 {
                            return Err(Error::parse(base + at, "negative list length"));
                        }
                        take(&mut pos, n as usize * item.size())?;
                    }
                }
            }
        }
        if is_vertex {
            // Nothing after the vertex element is needed.
            return Ok(());
        }
    }
    Ok(())
}

fn parse_ascii_body(
    body: &[u8],
    base: usize,
    elements: &[ElementDef],
    table: &mut VertexTable,
) -> Result<()> {
    let mut tokens = AsciiTokens { body, pos: 0 };
    for element in elements {
        let is_vertex = element.name == "vertex" && table.columns.is_empty();
        let slots = if is_vertex {
            vertex_columns(element, table)
        } else {
            vec![None; element.properties.len()]
        };
        for _ in 0..element.count {
            for (prop, slot) in element.properties.iter().zip(&slots) {
                match prop.kind {
                    PropertyKind::Scalar(_) => {
                        let v = tokens.number(base)?;
                        if let Some(c) = slot {
                            table.columns[*c].values.push(v);
                        }
                    }
                    PropertyKind::List { .. } => {
                        let n = tokens.number(base)?;
                        for _ in 0..n.max(0.0) as usize {
                            tokens.number(base)?;
                        }
                    }
                }
            }
        }
        if is_vertex {
            return Ok(());
        }
    }
    Ok(())
}

struct AsciiTokens<'a> {
    body: &'a [u8],
    pos: usize,
}

impl AsciiTokens<'_> {
    fn number(&mut self, base: usize) -> Result<f64> {
        while self.pos < self.body.len() && self.body[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.body.len() && !self.body[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(base + start, "truncated ascii payload"));
        }
        std::str::from_utf8(&self.body[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::parse(base + start, "invalid number"))
    }
}

/// Serializes a vertex table. Column lengths must all equal `table.count`.
pub fn encode(table: &VertexTable, encoding: Encoding) -> Result<Vec<u8>> {
    for c in &table.columns {
        if c.values.len() != table.count {
            return Err(Error::Structural(format!(
                "column '{}' has {} values, expected {}",
                c.name,
                c.values.len(),
                table.count
            )));
        }
        if c.ty.is_integer() {
            if let Some(bad) = c.values.iter().position(|&v| !c.ty.in_range(v)) {
                return Err(Error::InvalidRecord {
                    index: bad,
                    reason: format!("value does not fit column '{}' ({})", c.name, c.ty.name()),
                });
            }
        }
    }

    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        Encoding::Ascii => "format ascii 1.0\n",
        Encoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
        Encoding::BinaryBigEndian => {
            return Err(Error::Format("writing big-endian PLY is not supported".into()))
        }
    });
    for comment in &table.comments {
        header.push_str("comment ");
        header.push_str(comment);
        header.push('\n');
    }
    writeln!(header, "element vertex {}", table.count).expect("string write");
    for c in &table.columns {
        writeln!(header, "property {} {}", c.ty.name(), c.name).expect("string write");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    match encoding {
        Encoding::Ascii => {
            let mut line = String::new();
            for i in 0..table.count {
                line.clear();
                for (j, c) in table.columns.iter().enumerate() {
                    if j > 0 {
                        line.push(' ');
                    }
                    c.ty.format_ascii(c.values[i], &mut line);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
        _ => {
            let stride: usize = table.columns.iter().map(|c| c.ty.size()).sum();
            out.reserve(stride * table.count);
            for i in 0..table.count {
                for c in &table.columns {
                    c.ty.encode_le(c.values[i], &mut out);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, table: &VertexTable, encoding: Encoding) -> Result<()> {
    let bytes = encode(table, encoding)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}
