//! The `.npy` array container.
//!
//! Layout: magic `\x93NUMPY`, major/minor version bytes, a little-endian
//! header length (u16 for 1.x, u32 for 2.x/3.x), an ASCII mapping literal
//! such as `{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }`
//! padded with spaces and terminated by `\n` so the payload starts on a
//! 64-byte boundary, then the raw row-major elements.
//!
//! Writing always produces version 1.0 with little-endian payloads.

use super::array::{ArrayData, ArrayRecord, DType};
use super::ContainerError;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

fn descr_for(dtype: DType) -> &'static str {
    match dtype {
        DType::F32 => "<f4",
        DType::F64 => "<f8",
        DType::I32 => "<i4",
        DType::I64 => "<i8",
        DType::U8 => "|u1",
        DType::Bool => "|b1",
    }
}

fn parse_descr(descr: &str) -> Result<(DType, Endian), ContainerError> {
    let unsupported = || ContainerError::UnsupportedDtype(descr.to_string());
    let mut chars = descr.chars();
    let order = chars.next().ok_or_else(unsupported)?;
    let kind: String = chars.collect();
    let dtype = match kind.as_str() {
        "f4" => DType::F32,
        "f8" => DType::F64,
        "i4" => DType::I32,
        "i8" => DType::I64,
        "u1" => DType::U8,
        "b1" => DType::Bool,
        _ => return Err(unsupported()),
    };
    let endian = match (order, dtype.size()) {
        ('<', _) | ('|', 1) | ('=', _) => Endian::Little,
        ('>', _) => Endian::Big,
        _ => return Err(unsupported()),
    };
    Ok((dtype, endian))
}

fn header_literal(record: &ArrayRecord) -> String {
    let shape = match record.shape() {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        descr_for(record.dtype()),
        shape
    )
}

pub fn write_npy(record: &ArrayRecord) -> Vec<u8> {
    let literal = header_literal(record);
    // magic(6) + version(2) + length(2) + literal + padding + '\n'
    let unpadded = MAGIC.len() + 4 + literal.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = literal.len() + padding + 1;

    let mut out = Vec::with_capacity(unpadded + padding + record.byte_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(literal.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    match record.data() {
        ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::U8(v) => out.extend_from_slice(v),
        ArrayData::Bool(v) => out.extend(v.iter().map(|&b| u8::from(b))),
    }
    out
}

/// Values parsed out of the header mapping literal.
#[derive(Debug, Default)]
struct HeaderFields {
    descr: Option<String>,
    fortran_order: Option<bool>,
    shape: Option<Vec<usize>>,
}

struct LiteralParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> LiteralParser<'a> {
    fn err(&self, msg: &str) -> ContainerError {
        ContainerError::MalformedHeader(format!("{msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ContainerError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String, ContainerError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn boolean(&mut self) -> Result<bool, ContainerError> {
        match self.word() {
            b"True" => Ok(true),
            b"False" => Ok(false),
            _ => Err(self.err("expected True or False")),
        }
    }

    fn shape(&mut self) -> Result<Vec<usize>, ContainerError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(dims);
            }
            let w = self.word();
            let text = std::str::from_utf8(w).unwrap_or("");
            let text = text.strip_suffix('L').unwrap_or(text);
            let d: usize = text.parse().map_err(|_| self.err("expected a dimension"))?;
            dims.push(d);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(self.err("expected ',' or ')' in shape")),
            }
        }
    }

    fn parse(mut self) -> Result<HeaderFields, ContainerError> {
        let mut fields = HeaderFields::default();
        self.expect(b'{')?;
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            match key.as_str() {
                "descr" => fields.descr = Some(self.string()?),
                "fortran_order" => fields.fortran_order = Some(self.boolean()?),
                "shape" => fields.shape = Some(self.shape()?),
                other => return Err(self.err(&format!("unexpected key '{other}'"))),
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        if self.peek().is_some() {
            return Err(self.err("trailing characters after mapping"));
        }
        Ok(fields)
    }
}

fn take(bytes: &[u8], at: usize, n: usize) -> Result<&[u8], ContainerError> {
    bytes.get(at..at + n).ok_or(ContainerError::Truncated {
        needed: at + n,
        available: bytes.len(),
    })
}

pub fn read_npy(bytes: &[u8]) -> Result<ArrayRecord, ContainerError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = take(bytes, 6, 2)?;
    let (major, minor) = (version[0], version[1]);
    let (header_len, header_start) = match (major, minor) {
        (1, 0) => {
            let b = take(bytes, 8, 2)?;
            (u16::from_le_bytes([b[0], b[1]]) as usize, 10)
        }
        (2, 0) | (3, 0) => {
            let b = take(bytes, 8, 4)?;
            (u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize, 12)
        }
        _ => return Err(ContainerError::UnsupportedVersion { major, minor }),
    };
    let header = take(bytes, header_start, header_len)?;
    let fields = LiteralParser { src: header, pos: 0 }.parse()?;
    let descr = fields
        .descr
        .ok_or_else(|| ContainerError::MalformedHeader("missing 'descr'".into()))?;
    let fortran = fields
        .fortran_order
        .ok_or_else(|| ContainerError::MalformedHeader("missing 'fortran_order'".into()))?;
    let shape = fields
        .shape
        .ok_or_else(|| ContainerError::MalformedHeader("missing 'shape'".into()))?;
    let (dtype, endian) = parse_descr(&descr)?;
    if fortran && shape.iter().filter(|&&d| d > 1).count() > 1 {
        return Err(ContainerError::UnsupportedLayout(
            "column-major (fortran_order) payloads".into(),
        ));
    }

    let count: usize = shape.iter().product();
    let start = header_start + header_len;
    let payload = take(bytes, start, count * dtype.size())?;
    if bytes.len() != start + payload.len() {
        return Err(ContainerError::TrailingData {
            extra: bytes.len() - start - payload.len(),
        });
    }

    macro_rules! decode {
        ($ty:ty, $n:expr) => {
            payload
                .chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().expect("chunk width");
                    match endian {
                        Endian::Little => <$ty>::from_le_bytes(arr),
                        Endian::Big => <$ty>::from_be_bytes(arr),
                    }
                })
                .collect()
        };
    }
    let data = match dtype {
        DType::F32 => ArrayData::F32(decode!(f32, 4)),
        DType::F64 => ArrayData::F64(decode!(f64, 8)),
        DType::I32 => ArrayData::I32(decode!(i32, 4)),
        DType::I64 => ArrayData::I64(decode!(i64, 8)),
        DType::U8 => ArrayData::U8(payload.to_vec()),
        DType::Bool => ArrayData::Bool(
            payload
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(ContainerError::InvalidValue(format!("boolean byte {other}"))),
                })
                .collect::<Result<_, _>>()?,
        ),
    };
    ArrayRecord::new(shape, data)
}
