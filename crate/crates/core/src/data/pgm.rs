//! Binary portable graymap (P5) with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

struct Header {
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::PgmHeader("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (n, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::PgmHeader("header ends early".into())),
            }
        }
        if pos == 2 {
            return Err(Error::PgmHeader("no whitespace after magic".into()));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::PgmHeader(format!("field {n} is not a number")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::PgmHeader(format!("field {n} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::PgmHeader("missing whitespace before raster".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::PgmMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::PgmHeader("zero dimension".into()));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        data_offset: pos,
    })
}

/// Decodes a P5 graymap; pixels are scaled by `1/255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Raster> {
    let h = parse_header(bytes)?;
    let expected = h.width * h.height;
    let payload = &bytes[h.data_offset..];
    if payload.len() < expected {
        return Err(Error::PgmTruncated {
            expected,
            found: payload.len(),
        });
    }
    let pixels = payload[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Raster::new(h.width, h.height, pixels)
}

/// Quantises a `[0, 1]` intensity to 8 bits.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(image: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|&v| quantize(v)));
    out
}

pub fn load_image(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_image(image: &Raster, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}
