//! Binary portable pixmap (P6), 8 bits per channel.

use std::path::Path;

use eeprec_core::image::RasterImage;

use super::FormatError;

pub fn encode(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_interleaved());
    out
}

/// Reads the next header token, skipping whitespace and `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Result<String, FormatError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|b| *b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(FormatError::Truncated("ppm header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode(bytes: &[u8]) -> Result<RasterImage, FormatError> {
    let mut pos = 0;
    if token(bytes, &mut pos)? != "P6" {
        return Err(FormatError::BadMagic("ppm"));
    }
    let mut num = |what: &'static str| -> Result<u32, FormatError> {
        let t = token(bytes, &mut pos)?;
        t.parse().map_err(|_| FormatError::Parse(format!("ppm {what} `{t}`")))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval != 255 {
        return Err(FormatError::Parse(format!("ppm maxval {maxval}, only 255 is supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w as usize * h as usize * 3;
    let data = bytes.get(pos..pos + need).ok_or(FormatError::Truncated("ppm raster"))?;
    RasterImage::from_interleaved(w, h, data).map_err(|e| FormatError::Parse(e.to_string()))
}

pub fn write(path: &Path, img: &RasterImage) -> Result<(), FormatError> {
    super::write_bytes(path, &encode(img))
}

pub fn read(path: &Path) -> Result<RasterImage, FormatError> {
    decode(&super::read_bytes(path)?)
}
