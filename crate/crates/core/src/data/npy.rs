//! NPY v1.0 reader and writer for little-endian, C-order float tensors.
//!
//! Layout: the six magic bytes `\x93NUMPY`, version bytes `1 0`, a `u16`
//! little-endian header length, an ASCII Python-dict header padded with spaces
//! and terminated by `\n` so that the payload starts on a 64-byte boundary,
//! then the raw row-major values.
//!
//! Anything else (Fortran order, big-endian or integer dtypes, other format
//! versions) is rejected rather than converted.

use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    #[serde(rename = "<f4")]
    F4,
    #[serde(rename = "<f8")]
    F8,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    pub fn item_size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }

    pub fn from_descr(descr: &str) -> Option<Self> {
        match descr {
            "<f4" => Some(Dtype::F4),
            "<f8" => Some(Dtype::F8),
            _ => None,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.descr())
    }
}

/// Coarse classification of load failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyErrorKind {
    Format,
    Unsupported,
    Truncation,
    Validation,
    Io,
}

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("not an NPY file: bad magic bytes")]
    BadMagic,
    #[error("unsupported NPY format version {0}.{1} (only 1.0 is accepted)")]
    UnsupportedVersion(u8, u8),
    #[error("malformed NPY header: {0}")]
    BadHeader(String),
    #[error("unsupported dtype {0:?} (expected \"<f4\" or \"<f8\")")]
    UnsupportedDtype(String),
    #[error("fortran_order=True tensors are not supported")]
    FortranOrder,
    #[error("truncated NPY file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("NPY payload has {extra} trailing bytes beyond the declared shape")]
    TrailingBytes { extra: usize },
    #[error("tensor contains a non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("shape {shape:?} does not match {len} values")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NpyError {
    /// Machine-readable code reported by manifest validation.
    pub fn code(&self) -> &'static str {
        match self {
            NpyError::BadMagic => "NPY_BAD_MAGIC",
            NpyError::UnsupportedVersion(..) => "NPY_UNSUPPORTED_VERSION",
            NpyError::BadHeader(_) => "NPY_BAD_HEADER",
            NpyError::UnsupportedDtype(_) => "UNSUPPORTED_DTYPE",
            NpyError::FortranOrder => "NPY_FORTRAN_ORDER",
            NpyError::Truncated { .. } => "NPY_TRUNCATED",
            NpyError::TrailingBytes { .. } => "NPY_SIZE_MISMATCH",
            NpyError::NonFinite(_) => "NON_FINITE",
            NpyError::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            NpyError::Io(_) => "IO_ERROR",
        }
    }

    pub fn kind(&self) -> NpyErrorKind {
        match self {
            NpyError::BadMagic | NpyError::BadHeader(_) => NpyErrorKind::Format,
            NpyError::UnsupportedVersion(..) | NpyError::UnsupportedDtype(_) | NpyError::FortranOrder => {
                NpyErrorKind::Unsupported
            }
            NpyError::Truncated { .. } | NpyError::TrailingBytes { .. } => NpyErrorKind::Truncation,
            NpyError::NonFinite(_) | NpyError::ShapeMismatch { .. } => NpyErrorKind::Validation,
            NpyError::Io(_) => NpyErrorKind::Io,
        }
    }
}

/// A dense row-major tensor. `<f4` payloads are widened to `f64` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NpyArray {
    pub fn new(dtype: Dtype, shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NpyError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NpyError::ShapeMismatch { shape, len: data.len() });
        }
        Ok(Self { dtype, shape, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn load_npy(path: impl AsRef<Path>) -> Result<NpyArray, NpyError> {
    let bytes = fs::read(path)?;
    parse_npy(&bytes)
}

pub fn save_npy(array: &NpyArray, path: impl AsRef<Path>) -> Result<(), NpyError> {
    let bytes = encode_npy(array)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(NpyError::Truncated { expected: PREAMBLE_LEN, found: bytes.len() });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion(major, minor));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(NpyError::Truncated { expected: data_start, found: bytes.len() });
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .ok()
        .filter(|h| h.is_ascii())
        .ok_or_else(|| NpyError::BadHeader("header is not ASCII".into()))?;
    let header = Header::parse(header)?;

    let dtype = Dtype::from_descr(&header.descr).ok_or_else(|| NpyError::UnsupportedDtype(header.descr.clone()))?;
    if header.fortran_order {
        return Err(NpyError::FortranOrder);
    }
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| NpyError::BadHeader("shape product overflows".into()))?;
    let payload_len =
        count.checked_mul(dtype.item_size()).ok_or_else(|| NpyError::BadHeader("payload size overflows".into()))?;
    let payload = &bytes[data_start..];
    if payload.len() < payload_len {
        return Err(NpyError::Truncated { expected: data_start + payload_len, found: bytes.len() });
    }
    if payload.len() > payload_len {
        return Err(NpyError::TrailingBytes { extra: payload.len() - payload_len });
    }

    let data = match dtype {
        Dtype::F4 => payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect(),
        Dtype::F8 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect(),
    };
    Ok(NpyArray { dtype, shape: header.shape, data })
}

pub fn encode_npy(array: &NpyArray) -> Result<Vec<u8>, NpyError> {
    let count: usize = array.shape.iter().product();
    if count != array.data.len() {
        return Err(NpyError::ShapeMismatch { shape: array.shape.clone(), len: array.data.len() });
    }
    if let Some(i) = array.data.iter().position(|v| !v.is_finite()) {
        return Err(NpyError::NonFinite(i));
    }
    if array.dtype == Dtype::F4 {
        if let Some(i) = array.data.iter().position(|&v| !(v as f32).is_finite()) {
            return Err(NpyError::NonFinite(i));
        }
    }

    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.dtype.descr(),
        shape_literal(&array.shape)
    );
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');
    let header_len =
        u16::try_from(dict.len()).map_err(|_| NpyError::BadHeader("header longer than 65535 bytes".into()))?;

    let mut out = Vec::with_capacity(PREAMBLE_LEN + dict.len() + count * array.dtype.item_size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    match array.dtype {
        Dtype::F4 => {
            for &v in &array.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F8 => {
            for &v in &array.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [] => "()".to_string(),
        [d] => format!("({d},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl Header {
    fn parse(text: &str) -> Result<Self, NpyError> {
        let mut p = Parser { s: text.as_bytes(), pos: 0 };
        p.skip_ws();
        p.expect(b'{')?;
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        loop {
            p.skip_ws();
            if p.peek() == Some(b'}') {
                p.pos += 1;
                break;
            }
            let key = p.string()?;
            p.skip_ws();
            p.expect(b':')?;
            p.skip_ws();
            let value = p.value()?;
            match (key.as_str(), value) {
                ("descr", Value::Str(s)) if descr.is_none() => descr = Some(s),
                ("fortran_order", Value::Bool(b)) if fortran.is_none() => fortran = Some(b),
                ("shape", Value::Tuple(t)) if shape.is_none() => shape = Some(t),
                (k, _) => return Err(NpyError::BadHeader(format!("unexpected or invalid key {k:?}"))),
            }
            p.skip_ws();
            match p.peek() {
                Some(b',') => p.pos += 1,
                Some(b'}') => {}
                _ => return Err(NpyError::BadHeader("expected ',' or '}'".into())),
            }
        }
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(NpyError::BadHeader("trailing characters after dict".into()));
        }
        match (descr, fortran, shape) {
            (Some(descr), Some(fortran_order), Some(shape)) => Ok(Header { descr, fortran_order, shape }),
            _ => Err(NpyError::BadHeader("header must define descr, fortran_order and shape".into())),
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(NpyError::BadHeader(format!("expected {:?} at offset {}", c as char, self.pos)))
        }
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(NpyError::BadHeader("expected a quoted string".into())),
        };
        self.pos += 1;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == quote {
                let s = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                self.pos += 1;
                return Ok(s);
            }
            self.pos += 1;
        }
        Err(NpyError::BadHeader("unterminated string".into()))
    }

    fn value(&mut self) -> Result<Value, NpyError> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Value::Str),
            Some(b'(') => self.tuple().map(Value::Tuple),
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Value::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Value::Bool(false))
                } else {
                    Err(NpyError::BadHeader(format!("unparseable value at offset {}", self.pos)))
                }
            }
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>, NpyError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b')') {
                self.pos += 1;
                break;
            }
            let start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            let dim: usize =
                digits.parse().map_err(|_| NpyError::BadHeader(format!("bad shape entry at offset {start}")))?;
            dims.push(dim);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(NpyError::BadHeader("bad shape tuple".into())),
            }
        }
        Ok(dims)
    }
}
