//! The `.dtns` container: one UTF-8 JSON header line, then a raw little-endian payload.
//!
//! Dense and TT payloads are `f64` values, first-index-fastest; a TT payload is the
//! cores concatenated in order. Pattern payloads are one byte (0 or 1) per mode-N fiber.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::pattern::{mask_apply, FiberPattern};
use crate::tensor::{DenseTensor, TTDecomposition};

pub const MAGIC: &str = "dtns";
pub const VERSION: u32 = 1;
pub const ORDER: &str = "first-index-fastest";

/// Longest header accepted before giving up on finding the newline.
const MAX_HEADER: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtnsKind {
    Dense,
    Tt,
    Pattern,
}

impl DtnsKind {
    fn name(self) -> &'static str {
        match self {
            DtnsKind::Dense => "dense",
            DtnsKind::Tt => "tt",
            DtnsKind::Pattern => "pattern",
        }
    }

    fn dtype(self) -> &'static str {
        match self {
            DtnsKind::Pattern => "u8",
            _ => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtnsHeader {
    pub magic: String,
    pub version: u32,
    pub kind: DtnsKind,
    /// Tensor shape; for patterns the base shape `(I_1, ..., I_{N-1})`.
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    pub dtype: String,
    pub order: String,
}

impl DtnsHeader {
    pub fn new(kind: DtnsKind, shape: Vec<usize>, ranks: Option<Vec<usize>>) -> Self {
        Self {
            magic: MAGIC.into(),
            version: VERSION,
            kind,
            shape,
            ranks,
            dtype: kind.dtype().into(),
            order: ORDER.into(),
        }
    }

    fn check(&self) -> Result<(), FormatError> {
        if self.magic != MAGIC {
            return Err(FormatError::Magic(self.magic.clone()));
        }
        if self.version != VERSION {
            return Err(FormatError::Version(self.version));
        }
        if self.dtype != self.kind.dtype() {
            return Err(FormatError::Header(format!(
                "dtype {:?} invalid for kind {}, expected {:?}",
                self.dtype,
                self.kind.name(),
                self.kind.dtype()
            )));
        }
        if self.order != ORDER {
            return Err(FormatError::Header(format!("unsupported order {:?}", self.order)));
        }
        match (self.kind, &self.ranks) {
            (DtnsKind::Tt, None) => Err(FormatError::Header("tt header requires ranks".into())),
            (DtnsKind::Dense | DtnsKind::Pattern, Some(_)) => Err(FormatError::Header(format!(
                "ranks are only allowed in tt headers, found in a {} header",
                self.kind.name()
            ))),
            _ => Ok(()),
        }
    }

    /// Number of payload elements the header implies.
    pub fn element_count(&self) -> Result<usize, FormatError> {
        let product = |dims: &[usize]| {
            dims.iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| FormatError::Header("shape overflows".into()))
        };
        match (&self.kind, &self.ranks) {
            (DtnsKind::Tt, Some(r)) => {
                if r.len() != self.shape.len() + 1 {
                    return Err(FormatError::Header(format!(
                        "{} ranks for an order-{} train",
                        r.len(),
                        self.shape.len()
                    )));
                }
                (0..self.shape.len()).try_fold(0usize, |acc, n| {
                    product(&[r[n], self.shape[n], r[n + 1]])?
                        .checked_add(acc)
                        .ok_or_else(|| FormatError::Header("shape overflows".into()))
                })
            }
            _ => product(&self.shape),
        }
    }
}

/// Any object a `.dtns` file can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Dtns {
    Dense(DenseTensor),
    Tt(TTDecomposition),
    Pattern(FiberPattern),
}

impl Dtns {
    pub fn kind(&self) -> DtnsKind {
        match self {
            Dtns::Dense(_) => DtnsKind::Dense,
            Dtns::Tt(_) => DtnsKind::Tt,
            Dtns::Pattern(_) => DtnsKind::Pattern,
        }
    }
}

fn write_header<W: Write>(out: &mut W, header: &DtnsHeader) -> Result<(), FormatError> {
    let line = serde_json::to_string(header).map_err(|e| FormatError::Header(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_f64s<W: Write>(out: &mut W, values: &[f64]) -> Result<(), FormatError> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write<W: Write>(mut out: W, obj: &Dtns) -> Result<(), FormatError> {
    match obj {
        Dtns::Dense(t) => {
            write_header(&mut out, &DtnsHeader::new(DtnsKind::Dense, t.shape().to_vec(), None))?;
            write_f64s(&mut out, t.values())?;
        }
        Dtns::Tt(tt) => {
            write_header(&mut out, &DtnsHeader::new(DtnsKind::Tt, tt.shape(), Some(tt.ranks())))?;
            for core in tt.cores() {
                write_f64s(&mut out, core.values())?;
            }
        }
        Dtns::Pattern(p) => {
            write_header(&mut out, &DtnsHeader::new(DtnsKind::Pattern, p.base_shape().to_vec(), None))?;
            let bytes: Vec<u8> = p.flags().iter().map(|&b| u8::from(b)).collect();
            out.write_all(&bytes)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_header<R: BufRead>(input: &mut R) -> Result<DtnsHeader, FormatError> {
    let mut line = Vec::new();
    input.take(MAX_HEADER).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(FormatError::Header("no newline-terminated header line".into()));
    }
    line.pop();
    let text = std::str::from_utf8(&line).map_err(|e| FormatError::Header(e.to_string()))?;
    // Check the magic before the full schema so foreign files get the right error.
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| FormatError::Header(e.to_string()))?;
    match value.get("magic").and_then(|m| m.as_str()) {
        Some(MAGIC) => {}
        Some(other) => return Err(FormatError::Magic(other.into())),
        None => return Err(FormatError::Magic(String::new())),
    }
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != u64::from(VERSION) {
            return Err(FormatError::Version(u32::try_from(v).unwrap_or(u32::MAX)));
        }
    }
    let header: DtnsHeader = serde_json::from_value(value).map_err(|e| FormatError::Header(e.to_string()))?;
    header.check()?;
    Ok(header)
}

pub fn read<R: Read>(input: R) -> Result<Dtns, FormatError> {
    let mut input = BufReader::new(input);
    let header = read_header(&mut input)?;
    let count = header.element_count()?;
    let width = if header.kind == DtnsKind::Pattern { 1 } else { 8 };
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let expected = count * width;
    if payload.len() != expected {
        return Err(FormatError::PayloadLength {
            expected,
            actual: payload.len(),
        });
    }
    let floats = || -> Vec<f64> {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect()
    };
    Ok(match header.kind {
        DtnsKind::Dense => Dtns::Dense(DenseTensor::new(header.shape, floats())?),
        DtnsKind::Tt => {
            let ranks = header.ranks.expect("checked by header");
            let mut values = floats().into_iter();
            let data = (0..header.shape.len())
                .map(|n| values.by_ref().take(ranks[n] * header.shape[n] * ranks[n + 1]).collect())
                .collect();
            Dtns::Tt(TTDecomposition::from_flat(&header.shape, &ranks, data)?)
        }
        DtnsKind::Pattern => {
            if let Some(pos) = payload.iter().position(|&b| b > 1) {
                return Err(FormatError::Payload(format!(
                    "pattern byte {pos} is {}, expected 0 or 1",
                    payload[pos]
                )));
            }
            Dtns::Pattern(FiberPattern::new(header.shape, payload.iter().map(|&b| b == 1).collect())?)
        }
    })
}

pub fn save(path: impl AsRef<Path>, obj: &Dtns) -> Result<(), FormatError> {
    write(BufWriter::new(File::create(path)?), obj)
}

pub fn load(path: impl AsRef<Path>) -> Result<Dtns, FormatError> {
    read(File::open(path)?)
}

fn expect_kind(found: &Dtns, expected: DtnsKind) -> FormatError {
    FormatError::Kind {
        expected: expected.name().into(),
        found: found.kind().name().into(),
    }
}

/// Loads a fully specified dense tensor; any NaN is an error.
pub fn load_dense(path: impl AsRef<Path>) -> Result<DenseTensor, FormatError> {
    match load(path)? {
        Dtns::Dense(t) => {
            if let Some(pos) = t.values().iter().position(|v| v.is_nan()) {
                return Err(FormatError::Payload(format!("NaN at offset {pos} in a tensor without a pattern")));
            }
            Ok(t)
        }
        other => Err(expect_kind(&other, DtnsKind::Dense)),
    }
}

/// Loads a dense tensor paired with `p`. NaN is allowed only inside unobserved
/// fibers; the result holds NaN in every unobserved fiber.
pub fn load_masked(path: impl AsRef<Path>, p: &FiberPattern) -> Result<DenseTensor, FormatError> {
    let t = match load(path)? {
        Dtns::Dense(t) => t,
        other => return Err(expect_kind(&other, DtnsKind::Dense)),
    };
    let len_n = p.check_tensor(&t)?;
    let fibers = p.fiber_count();
    for f in p.observed_fibers() {
        if let Some(k) = (0..len_n).find(|k| t.values()[f + fibers * k].is_nan()) {
            return Err(FormatError::Payload(format!("NaN in observed fiber {f} at position {k}")));
        }
    }
    Ok(mask_apply(&t, p)?)
}

pub fn load_tt(path: impl AsRef<Path>) -> Result<TTDecomposition, FormatError> {
    match load(path)? {
        Dtns::Tt(tt) => Ok(tt),
        other => Err(expect_kind(&other, DtnsKind::Tt)),
    }
}

pub fn load_pattern(path: impl AsRef<Path>) -> Result<FiberPattern, FormatError> {
    match load(path)? {
        Dtns::Pattern(p) => Ok(p),
        other => Err(expect_kind(&other, DtnsKind::Pattern)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(obj: &Dtns) -> Vec<u8> {
        let mut out = Vec::new();
        write(&mut out, obj).unwrap();
        out
    }

    #[test]
    fn header_line_is_plain_json() {
        let t = DenseTensor::new(vec![2, 1], vec![1.0, -0.0]).unwrap();
        let raw = bytes(&Dtns::Dense(t));
        let nl = raw.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(
            std::str::from_utf8(&raw[..nl]).unwrap(),
            r#"{"magic":"dtns","version":1,"kind":"dense","shape":[2,1],"dtype":"f64","order":"first-index-fastest"}"#
        );
        assert_eq!(&raw[nl + 1..nl + 9], &1.0f64.to_le_bytes());
        assert_eq!(raw.len(), nl + 1 + 16);
    }

    #[test]
    fn tt_payload_length() {
        let shape = [15; 5];
        let ranks = [1, 3, 3, 3, 4, 1];
        let data = (0..5).map(|n| vec![0.5; ranks[n] * 15 * ranks[n + 1]]).collect();
        let tt = TTDecomposition::from_flat(&shape, &ranks, data).unwrap();
        let raw = bytes(&Dtns::Tt(tt));
        let nl = raw.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!((raw.len() - nl - 1) / 8, 555);
    }

    #[test]
    fn rejects_bad_headers() {
        let cases = [
            (r#"{"magic":"npy!","version":1}"#, "magic"),
            (r#"{"magic":"dtns","version":2,"kind":"dense","shape":[1],"dtype":"f64","order":"first-index-fastest"}"#, "version"),
            (r#"{"magic":"dtns","version":1,"kind":"tt","shape":[1,1],"dtype":"f64","order":"first-index-fastest"}"#, "ranks"),
            (r#"{"magic":"dtns","version":1,"kind":"dense","shape":[1],"ranks":[1,1],"dtype":"f64","order":"first-index-fastest"}"#, "ranks"),
            (r#"{"magic":"dtns","version":1,"kind":"dense","shape":[1],"dtype":"f32","order":"first-index-fastest"}"#, "dtype"),
        ];
        for (line, what) in cases {
            let raw = format!("{line}\n");
            let err = read(raw.as_bytes()).unwrap_err();
            assert!(err.to_string().contains(what), "{what}: {err}");
        }
    }

    #[test]
    fn pattern_bytes_must_be_binary() {
        let raw = [br#"{"magic":"dtns","version":1,"kind":"pattern","shape":[2],"dtype":"u8","order":"first-index-fastest"}"#.as_slice(), b"\n\x01\x02"].concat();
        assert!(matches!(read(raw.as_slice()), Err(FormatError::Payload(_))));
    }
}
