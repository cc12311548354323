//! Binary PGM (P5) and PPM (P6) with 8-bit samples.
//!
//! A Bayer mosaic is stored as a PGM; its CFA layout may be named in a
//! header comment such as `# cfa=bggr`, otherwise RGGB is assumed.

use std::path::Path;

use super::read_bytes;
use crate::error::{Error, Result};
use crate::pipeline::{CfaPattern, RawBayerImage, RgbImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub cfa: Option<CfaPattern>,
}

impl Pgm {
    pub fn into_bayer(self) -> Result<RawBayerImage> {
        RawBayerImage::new(
            self.width,
            self.height,
            self.pixels,
            self.cfa.unwrap_or(CfaPattern::Rggb),
        )
    }
}

struct Header {
    width: usize,
    height: usize,
    data_offset: usize,
    cfa: Option<CfaPattern>,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    let bad = |m: String| Err(Error::Image(m));
    if bytes.len() < 2 || &bytes[..2] != magic {
        return bad(format!("expected magic `{}`", String::from_utf8_lossy(magic)));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    let mut cfa = None;
    while fields.len() < 3 {
        match bytes.get(pos) {
            None => return bad("header ends early".into()),
            Some(b'#') => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                if let Some(v) = comment.trim().strip_prefix("cfa=") {
                    cfa = Some(v.parse().map_err(|e: Error| Error::Image(e.to_string()))?);
                }
                pos = end;
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b) if b.is_ascii_digit() => {
                let start = pos;
                while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                    pos += 1;
                }
                let token = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
                fields.push(
                    token
                        .parse::<usize>()
                        .map_err(|_| Error::Image(format!("header value `{token}` out of range")))?,
                );
            }
            Some(&b) => return bad(format!("unexpected byte 0x{b:02x} in header")),
        }
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return bad("missing whitespace after the header".into()),
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if width == 0 || height == 0 {
        return bad(format!("empty image {width}x{height}"));
    }
    if maxval != 255 {
        return bad(format!("only 8-bit images are supported, maxval is {maxval}"));
    }
    Ok(Header {
        width,
        height,
        data_offset: pos,
        cfa,
    })
}

fn body<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Image("image dimensions overflow".into()))?;
    let data = &bytes[h.data_offset..];
    if data.len() != need {
        return Err(Error::Image(format!(
            "{}x{} image needs {need} sample bytes, found {}",
            h.width,
            h.height,
            data.len()
        )));
    }
    Ok(data)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let h = parse_header(bytes, b"P5")?;
    let pixels = body(bytes, &h, 1)?.to_vec();
    Ok(Pgm {
        width: h.width,
        height: h.height,
        pixels,
        cfa: h.cfa,
    })
}

pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6")?;
    RgbImage::from_interleaved(h.width, h.height, body(bytes, &h, 3)?)
}

pub fn load_pgm(path: &Path) -> Result<Pgm> {
    parse_pgm(&read_bytes(path)?)
}

pub fn load_ppm(path: &Path) -> Result<RgbImage> {
    parse_ppm(&read_bytes(path)?)
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8], cfa: Option<CfaPattern>) -> Vec<u8> {
    let mut out = b"P5\n".to_vec();
    if let Some(p) = cfa {
        out.extend_from_slice(format!("# cfa={p}\n").as_bytes());
    }
    out.extend_from_slice(format!("{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_interleaved());
    out
}
