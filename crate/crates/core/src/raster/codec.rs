//! Binary Netpbm (P5/P6) reading and writing, plus PNG/JPEG decoding
//! through the `image` crate when the `codecs` feature is enabled.

use super::{RasterError, RasterImage};

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, RasterError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(RasterError::CorruptData("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::CorruptData("expected a header integer".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::CorruptData("header integer overflow".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(RasterError::CorruptData("missing raster separator".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(RasterError::CorruptData("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(RasterError::UnsupportedFormat);
    }
    Ok(Header {
        width,
        height,
        maxval,
        offset: pos,
    })
}

fn decode_netpbm(bytes: &[u8], channels: usize) -> Result<RasterImage, RasterError> {
    let header = parse_header(bytes)?;
    let n = header
        .width
        .checked_mul(header.height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| RasterError::CorruptData("dimension overflow".into()))?;
    let payload = bytes
        .get(header.offset..header.offset + n)
        .ok_or_else(|| RasterError::CorruptData(format!("expected {n} raster bytes")))?;
    let scale = header.maxval as f64;
    let data = payload
        .iter()
        .map(|&b| (b as f64 / scale).min(1.0))
        .collect();
    Ok(RasterImage::from_raw(
        header.width,
        header.height,
        channels,
        data,
    ))
}

#[cfg(feature = "codecs")]
fn decode_with_image_crate(bytes: &[u8]) -> Result<RasterImage, RasterError> {
    let img = image::load_from_memory(bytes).map_err(|e| RasterError::CorruptData(e.to_string()))?;
    let color = img.color();
    if color.has_color() {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Ok(RasterImage::from_raw(w as usize, h as usize, 3, data))
    } else {
        let luma = img.to_luma8();
        let (w, h) = luma.dimensions();
        let data = luma.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Ok(RasterImage::from_raw(w as usize, h as usize, 1, data))
    }
}

#[cfg(not(feature = "codecs"))]
fn decode_with_image_crate(_bytes: &[u8]) -> Result<RasterImage, RasterError> {
    Err(RasterError::UnsupportedFormat)
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
const JPEG_MAGIC: &[u8] = &[0xFF, 0xD8, 0xFF];

/// Decodes P6 (colour) or P5 (gray) Netpbm; PNG and JPEG when the `codecs`
/// feature is enabled.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage, RasterError> {
    match bytes {
        [b'P', b'6', ..] => decode_netpbm(bytes, 3),
        [b'P', b'5', ..] => decode_netpbm(bytes, 1),
        b if b.starts_with(PNG_MAGIC) || b.starts_with(JPEG_MAGIC) => decode_with_image_crate(b),
        _ => Err(RasterError::UnsupportedFormat),
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a 3-channel image as binary PPM (P6, maxval 255).
pub fn encode_ppm(img: &RasterImage) -> Result<Vec<u8>, RasterError> {
    if img.channels() != 3 {
        return Err(RasterError::WrongChannelCount {
            expected: 3,
            found: img.channels(),
        });
    }
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

/// Encodes a 1-channel image as binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &RasterImage) -> Result<Vec<u8>, RasterError> {
    if img.channels() != 1 {
        return Err(RasterError::WrongChannelCount {
            expected: 1,
            found: img.channels(),
        });
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    Ok(out)
}
