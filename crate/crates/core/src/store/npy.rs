//! Reader for NPY v1/v2/v3 files holding `(L, D)` or `(N, L, D)` float arrays.

use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::LatentCode;
use crate::scalar::Scalar;

const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, PartialEq)]
pub enum NpyLatents<T: Scalar> {
    Single(LatentCode<T>),
    Batch(Vec<LatentCode<T>>),
}

impl<T: Scalar> NpyLatents<T> {
    pub fn into_vec(self) -> Vec<LatentCode<T>> {
        match self {
            NpyLatents::Single(w) => vec![w],
            NpyLatents::Batch(ws) => ws,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F32 { little: bool },
    F64 { little: bool },
}

impl Dtype {
    fn parse(descr: &str) -> Result<Self> {
        let (order, kind) = descr.split_at(descr.len().min(1));
        let little = match order {
            "<" | "=" => true,
            ">" => false,
            _ => return Err(Error::UnsupportedDtype(descr.to_owned())),
        };
        match kind {
            "f4" => Ok(Dtype::F32 { little }),
            "f8" => Ok(Dtype::F64 { little }),
            _ => Err(Error::UnsupportedDtype(descr.to_owned())),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 { .. } => 4,
            Dtype::F64 { .. } => 8,
        }
    }

    fn read<T: Scalar>(self, b: &[u8]) -> T {
        match self {
            Dtype::F32 { little } => {
                let raw: [u8; 4] = b.try_into().expect("4 bytes");
                T::from_f32_exact(if little {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                })
            }
            Dtype::F64 { little } => {
                let raw: [u8; 8] = b.try_into().expect("8 bytes");
                T::lit(if little {
                    f64::from_le_bytes(raw)
                } else {
                    f64::from_be_bytes(raw)
                })
            }
        }
    }
}

/// Values appearing in the header dictionary.
#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parses the Python dict literal written by `numpy.lib.format`.
struct HeaderParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn bad(&self, what: &str) -> Error {
        Error::BadHeader(format!("{what} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.bad(&format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(self.bad("expected string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.s.len() {
            return Err(self.bad("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.bad("expected integer"))
    }

    fn value(&mut self) -> Result<Literal> {
        self.skip_ws();
        match self.s.get(self.pos) {
            Some(b'\'' | b'"') => Ok(Literal::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    if self.eat(b')') {
                        break;
                    }
                    items.push(self.integer()?);
                    // (18,) and (18, 512) are both valid; 'L' suffixes are py2 only
                    self.eat(b'L');
                    if !self.eat(b',') {
                        self.expect(b')')?;
                        break;
                    }
                }
                Ok(Literal::Tuple(items))
            }
            _ if self.s[self.pos..].starts_with(b"True") => {
                self.pos += 4;
                Ok(Literal::Bool(true))
            }
            _ if self.s[self.pos..].starts_with(b"False") => {
                self.pos += 5;
                Ok(Literal::Bool(false))
            }
            _ => Err(self.bad("unsupported literal")),
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, Literal)>> {
        self.expect(b'{')?;
        let mut out = Vec::new();
        loop {
            if self.eat(b'}') {
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            out.push((key, self.value()?));
            if !self.eat(b',') {
                self.expect(b'}')?;
                break;
            }
        }
        Ok(out)
    }
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(Error::BadHeader("missing NPY magic".into()));
    }
    let major = bytes[6];
    let (len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::BadHeader("short v2 preamble".into()));
            }
            (
                u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize,
                12,
            )
        }
        v => return Err(Error::BadHeader(format!("unsupported NPY version {v}"))),
    };
    let text = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::BadHeader("header longer than file".into()))?;
    let entries = HeaderParser { s: text, pos: 0 }.dict()?;
    let get = |key: &str| {
        entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::BadHeader(format!("missing '{key}'")))
    };
    let dtype = match get("descr")? {
        Literal::Str(s) => Dtype::parse(s)?,
        _ => return Err(Error::BadHeader("descr must be a string".into())),
    };
    match get("fortran_order")? {
        Literal::Bool(false) => {}
        Literal::Bool(true) => return Err(Error::FortranOrderUnsupported),
        _ => return Err(Error::BadHeader("fortran_order must be a bool".into())),
    }
    let shape = match get("shape")? {
        Literal::Tuple(t) => t.clone(),
        _ => return Err(Error::BadHeader("shape must be a tuple".into())),
    };
    Ok(Header {
        dtype,
        shape,
        data_offset: start + len,
    })
}

/// Parse NPY bytes into latents; values are widened into `T`.
pub fn parse_npy<T: Scalar>(bytes: &[u8]) -> Result<NpyLatents<T>> {
    let header = parse_header(bytes)?;
    let (n, layers, dim) = match header.shape[..] {
        [l, d] => (None, l, d),
        [n, l, d] => (Some(n), l, d),
        _ => {
            return Err(Error::BadHeader(format!(
                "shape {:?} is not (L, D) or (N, L, D)",
                header.shape
            )))
        }
    };
    let count = n.unwrap_or(1);
    let size = header.dtype.size();
    let expected = count * layers * dim * size;
    let payload = &bytes[header.data_offset..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    let values: Vec<T> = payload[..expected]
        .chunks_exact(size)
        .map(|b| header.dtype.read(b))
        .collect();
    let per = layers * dim;
    let latents = (0..count)
        .map(|i| LatentCode::from_flat(layers, dim, values[i * per..(i + 1) * per].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(match n {
        None => NpyLatents::Single(latents.into_iter().next().expect("one latent")),
        Some(_) => NpyLatents::Batch(latents),
    })
}

pub fn import_npy<T: Scalar>(path: impl AsRef<Path>) -> Result<NpyLatents<T>> {
    parse_npy(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn npy(descr: &str, fortran: bool, shape: &str, payload: &[u8]) -> Vec<u8> {
        let mut dict = format!(
            "{{'descr': '{descr}', 'fortran_order': {}, 'shape': {shape}, }}",
            if fortran { "True" } else { "False" }
        );
        while (10 + dict.len() + 1) % 64 != 0 {
            dict.push(' ');
        }
        dict.push('\n');
        let mut out = NPY_MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn parses_f32_and_f64() {
        let payload: Vec<u8> = [1.5f32, -2.0, 0.25, 8.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let w = match parse_npy::<f64>(&npy("<f4", false, "(2, 2)", &payload)).unwrap() {
            NpyLatents::Single(w) => w,
            other => panic!("{other:?}"),
        };
        assert_eq!(w.as_slice(), &[1.5, -2.0, 0.25, 8.0]);

        let payload: Vec<u8> = [0.1f64, 0.2].iter().flat_map(|v| v.to_be_bytes()).collect();
        let ws = parse_npy::<f64>(&npy(">f8", false, "(2, 1, 1)", &payload))
            .unwrap()
            .into_vec();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1].as_slice(), &[0.2]);
    }

    #[test]
    fn rejects_unsupported() {
        let p = [0u8; 8];
        assert!(matches!(
            parse_npy::<f64>(&npy("<f2", false, "(2, 2)", &p)),
            Err(Error::UnsupportedDtype(_))
        ));
        assert!(matches!(
            parse_npy::<f64>(&npy("<i4", false, "(2, 1)", &p)),
            Err(Error::UnsupportedDtype(_))
        ));
        assert!(matches!(
            parse_npy::<f64>(&npy("<f4", true, "(2, 1)", &p)),
            Err(Error::FortranOrderUnsupported)
        ));
        assert!(matches!(
            parse_npy::<f64>(&npy("<f4", false, "(8,)", &p)),
            Err(Error::BadHeader(_))
        ));
        assert!(matches!(parse_npy::<f64>(b"not an npy file"), Err(Error::BadHeader(_))));
        assert!(matches!(
            parse_npy::<f64>(&npy("<f4", false, "(4, 4)", &p)),
            Err(Error::TruncatedPayload { .. })
        ));
    }
}
