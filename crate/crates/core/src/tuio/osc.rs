//! OSC 1.0 messages and bundles: int32, float32 and string arguments.

use serde::Serialize;

/// Time tag meaning "process immediately".
pub const IMMEDIATE: u64 = 1;

const BUNDLE_TAG: &str = "#bundle";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
}

impl OscArg {
    fn tag(&self) -> char {
        match self {
            OscArg::Int(_) => 'i',
            OscArg::Float(_) => 'f',
            OscArg::Str(_) => 's',
        }
    }
}

impl From<i32> for OscArg {
    fn from(v: i32) -> Self {
        OscArg::Int(v)
    }
}

impl From<f32> for OscArg {
    fn from(v: f32) -> Self {
        OscArg::Float(v)
    }
}

impl From<&str> for OscArg {
    fn from(v: &str) -> Self {
        OscArg::Str(v.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: &str, args: Vec<OscArg>) -> Self {
        OscMessage {
            address: address.to_owned(),
            args,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscBundle {
    pub timetag: u64,
    pub elements: Vec<OscPacket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OscPacket {
    Message(OscMessage),
    Bundle(OscBundle),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OscError {
    #[error("address {0:?} must start with '/'")]
    Address(String),
    #[error("string {0:?} contains a NUL byte")]
    InteriorNul(String),
    #[error("packet truncated at byte {0}")]
    Truncated(usize),
    #[error("length {0} is not a multiple of 4")]
    Misaligned(usize),
    #[error("unterminated string at byte {0}")]
    Unterminated(usize),
    #[error("string at byte {0} is not UTF-8")]
    Utf8(usize),
    #[error("type tag string must start with ','")]
    TypeTags,
    #[error("unsupported type tag {0:?}")]
    UnsupportedTag(char),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

fn pad4(n: usize) -> usize {
    (n + 3) & !3
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), OscError> {
    if s.as_bytes().contains(&0) {
        return Err(OscError::InteriorNul(s.to_owned()));
    }
    out.extend_from_slice(s.as_bytes());
    out.resize(out.len() + pad4(s.len() + 1) - s.len(), 0);
    Ok(())
}

pub fn encode_message(msg: &OscMessage) -> Result<Vec<u8>, OscError> {
    let mut out = Vec::new();
    write_message(&mut out, msg)?;
    Ok(out)
}

fn write_message(out: &mut Vec<u8>, msg: &OscMessage) -> Result<(), OscError> {
    if !msg.address.starts_with('/') {
        return Err(OscError::Address(msg.address.clone()));
    }
    put_str(out, &msg.address)?;
    let tags: String = std::iter::once(',').chain(msg.args.iter().map(OscArg::tag)).collect();
    put_str(out, &tags)?;
    for a in &msg.args {
        match a {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Str(s) => put_str(out, s)?,
        }
    }
    Ok(())
}

pub fn encode_bundle(bundle: &OscBundle) -> Result<Vec<u8>, OscError> {
    let mut out = Vec::new();
    write_bundle(&mut out, bundle)?;
    Ok(out)
}

fn write_bundle(out: &mut Vec<u8>, bundle: &OscBundle) -> Result<(), OscError> {
    put_str(out, BUNDLE_TAG)?;
    out.extend_from_slice(&bundle.timetag.to_be_bytes());
    for e in &bundle.elements {
        let at = out.len();
        out.extend_from_slice(&[0; 4]);
        match e {
            OscPacket::Message(m) => write_message(out, m)?,
            OscPacket::Bundle(b) => write_bundle(out, b)?,
        }
        let len = (out.len() - at - 4) as u32;
        out[at..at + 4].copy_from_slice(&len.to_be_bytes());
    }
    Ok(())
}

pub fn encode_packet(p: &OscPacket) -> Result<Vec<u8>, OscError> {
    match p {
        OscPacket::Message(m) => encode_message(m),
        OscPacket::Bundle(b) => encode_bundle(b),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], OscError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(OscError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, OscError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, OscError> {
        let start = self.pos;
        let rest = &self.buf[start..];
        let len = rest.iter().position(|&b| b == 0).ok_or(OscError::Unterminated(start))?;
        let padded = pad4(len + 1);
        let bytes = self.take(padded)?;
        if bytes[len..].iter().any(|&b| b != 0) {
            return Err(OscError::Unterminated(start));
        }
        String::from_utf8(bytes[..len].to_vec()).map_err(|_| OscError::Utf8(start))
    }
}

/// Parses one packet occupying all of `bytes`.
pub fn decode_packet(bytes: &[u8]) -> Result<OscPacket, OscError> {
    if bytes.len() % 4 != 0 {
        return Err(OscError::Misaligned(bytes.len()));
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    let p = if bytes.starts_with(b"#bundle\0") {
        OscPacket::Bundle(read_bundle(&mut r)?)
    } else {
        OscPacket::Message(read_message(&mut r)?)
    };
    if r.pos != bytes.len() {
        return Err(OscError::Trailing(bytes.len() - r.pos));
    }
    Ok(p)
}

fn read_message(r: &mut Reader) -> Result<OscMessage, OscError> {
    let address = r.string()?;
    if !address.starts_with('/') {
        return Err(OscError::Address(address));
    }
    let tags = r.string()?;
    let mut chars = tags.chars();
    if chars.next() != Some(',') {
        return Err(OscError::TypeTags);
    }
    let mut args = Vec::new();
    for t in chars {
        args.push(match t {
            'i' => OscArg::Int(r.u32()? as i32),
            'f' => OscArg::Float(f32::from_bits(r.u32()?)),
            's' => OscArg::Str(r.string()?),
            other => return Err(OscError::UnsupportedTag(other)),
        });
    }
    Ok(OscMessage { address, args })
}

fn read_bundle(r: &mut Reader) -> Result<OscBundle, OscError> {
    r.string()?;
    let hi = r.u32()? as u64;
    let lo = r.u32()? as u64;
    let mut elements = Vec::new();
    while r.pos < r.buf.len() {
        let len = r.u32()? as usize;
        if len % 4 != 0 {
            return Err(OscError::Misaligned(len));
        }
        let body = r.take(len)?;
        elements.push(decode_packet(body)?);
    }
    Ok(OscBundle {
        timetag: hi << 32 | lo,
        elements,
    })
}
