//! Binary PGM (`P5`) masks of retained tokens: white where kept, black elsewhere.

use std::path::Path;

use crate::error::{Error, Result};

pub fn encode_mask(height: usize, width: usize, retained: &[usize]) -> Result<Vec<u8>> {
    let header = format!("P5\n{width} {height}\n255\n");
    let mut out = Vec::with_capacity(header.len() + height * width);
    out.extend_from_slice(header.as_bytes());
    let start = out.len();
    out.resize(start + height * width, 0);
    for &i in retained {
        if i >= height * width {
            return Err(Error::config(
                "retained",
                format!("index {i} outside {height}x{width} grid"),
            ));
        }
        out[start + i] = 255;
    }
    Ok(out)
}

/// Parses a mask written by [`encode_mask`] into `(height, width, pixels)`.
pub fn decode_mask(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |reason: &str| Error::MalformedSpec(format!("pgm: {reason}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("header ended early"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
    let (width, height) = (num(fields[1])?, num(fields[2])?);
    let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    if pixels.len() != width * height {
        return Err(bad("raster size does not match header"));
    }
    Ok((height, width, pixels.to_vec()))
}

pub fn write_mask(path: &Path, height: usize, width: usize, retained: &[usize]) -> Result<()> {
    super::write_atomic(path, &encode_mask(height, width, retained)?)
}
