//! Binary "P5" grayscale images, one byte per pixel.
//!
//! Header tokens (`P5`, width, height, maxval) are separated by whitespace;
//! exactly one whitespace byte follows maxval, then `width * height` raster
//! bytes. Comments are not accepted.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadImage("width and height must be >= 1".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::BadImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Pgm {
            width,
            height,
            maxval: 255,
            pixels,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Pixels as reals, each divided by `pixel_scale`.
    pub fn to_f32(&self, pixel_scale: f64) -> Vec<f32> {
        self.pixels
            .iter()
            .map(|&p| (f64::from(p) / pixel_scale) as f32)
            .collect()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.pos - start
    }

    fn token(&mut self, what: &str) -> Result<&[u8]> {
        if self.skip_whitespace() == 0 {
            return Err(Error::BadImage(format!("expected whitespace before {what}")));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::BadImage(format!("missing {what}")));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token(what)?;
        if !tok.iter().all(u8::is_ascii_digit) {
            return Err(Error::BadImage(format!(
                "{what} {:?} is not a decimal number",
                String::from_utf8_lossy(tok)
            )));
        }
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::BadImage(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::BadImage("missing P5 magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::BadImage("width and height must be >= 1".into()));
    }
    if !(1..=255).contains(&maxval) {
        return Err(Error::BadImage(format!("maxval {maxval} not in 1..=255")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::BadImage("expected one whitespace byte after maxval".into())),
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::BadImage("image dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() != expected {
        return Err(Error::BadImage(format!(
            "raster has {} bytes, {width}x{height} needs {expected}",
            raster.len()
        )));
    }
    if let Some(&p) = raster.iter().find(|&&p| usize::from(p) > maxval) {
        return Err(Error::BadImage(format!("pixel {p} exceeds maxval {maxval}")));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u8,
        pixels: raster.to_vec(),
    })
}
