//! Netpbm greyscale (PGM) output.
//!
//! Binary `P5` with samples above 255 written as two big-endian bytes, and
//! the plain-text `P2` variant for debugging.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if maxval == 0 {
            return Err(Error::Invalid("maxval must be >= 1".into()));
        }
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n{}\n", self.width, self.height, self.maxval)?;
        let bytes: Vec<u8> = if self.maxval > 255 {
            self.pixels.iter().flat_map(|p| p.to_be_bytes()).collect()
        } else {
            self.pixels.iter().map(|&p| p.min(255) as u8).collect()
        };
        w.write_all(&bytes)?;
        w.flush()
    }

    pub fn write_plain<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "P2\n{} {}\n{}", self.width, self.height, self.maxval)?;
        for row in self.pixels.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()
    }

    /// Reads a binary `P5` image.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::Invalid(format!("reading PGM: {e}")))?;
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
                if buf[pos] == b'#' {
                    while pos < buf.len() && buf[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Invalid("truncated PGM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
        }
        // single whitespace byte separates header from raster
        pos += 1;
        if tokens[0] != "P5" {
            return Err(Error::Invalid(format!("not a binary PGM: {}", tokens[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Invalid(format!("bad PGM header value `{s}`")));
        let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Invalid(format!("bad maxval {maxval}")));
        }
        let bps = if maxval > 255 { 2 } else { 1 };
        let raster = buf.get(pos..).unwrap_or(&[]);
        if raster.len() != width * height * bps {
            return Err(Error::Invalid("PGM raster size mismatch".into()));
        }
        let pixels = if bps == 2 {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            raster.iter().map(|&b| b as u16).collect()
        };
        Self::new(width, height, maxval as u16, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_layout() {
        let img = GrayImage::new(2, 1, 65535, vec![0x0102, 0xfffe]).unwrap();
        let mut out = Vec::new();
        img.write_binary(&mut out).unwrap();
        assert_eq!(out, b"P5\n2 1\n65535\n\x01\x02\xff\xfe");
        assert_eq!(GrayImage::read_binary(&out[..]).unwrap(), img);
    }

    #[test]
    fn eight_bit_uses_single_bytes() {
        let img = GrayImage::new(3, 1, 255, vec![1, 2, 255]).unwrap();
        let mut out = Vec::new();
        img.write_binary(&mut out).unwrap();
        assert_eq!(out, b"P5\n3 1\n255\n\x01\x02\xff");
        assert_eq!(GrayImage::read_binary(&out[..]).unwrap(), img);
    }

    #[test]
    fn plain_text_variant() {
        let img = GrayImage::new(2, 2, 1023, vec![0, 1, 2, 1023]).unwrap();
        let mut out = Vec::new();
        img.write_plain(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "P2\n2 2\n1023\n0 1\n2 1023\n");
    }

    #[test]
    fn size_mismatch_is_rejected() {
        assert!(GrayImage::new(2, 2, 255, vec![0; 3]).is_err());
        assert!(GrayImage::read_binary(&b"P5\n2 2\n255\n\x00"[..]).is_err());
        assert!(GrayImage::read_binary(&b"P2\n1 1\n255\n0"[..]).is_err());
    }
}
