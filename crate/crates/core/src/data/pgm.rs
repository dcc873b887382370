//! Binary (P5) PGM reader/writer, 8-bit only.

use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

fn pgm_err(message: impl Into<String>) -> Error {
    Error::Pgm {
        message: message.into(),
    }
}

/// Serializes an image as a binary P5 PGM.
///
/// The header is always `P5\n{width} {height}\n255\n`; comments are never
/// written, so serialization is byte-deterministic.
pub fn write_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = header.into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm_file(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, write_pgm(image))?;
    Ok(())
}

/// Parses a binary P5 PGM with maxval <= 255.
///
/// `#` comments between header tokens are tolerated.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(pgm_err("truncated header: no magic"));
    }
    match &bytes[..2] {
        b"P5" => {}
        b"P2" => return Err(pgm_err("ASCII PGM (P2) unsupported; only binary P5")),
        _ => return Err(pgm_err("not a PGM file: bad magic")),
    }

    let mut pos = 2;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if maxval > 255 {
        return Err(pgm_err(format!("16-bit PGM unsupported (maxval {maxval})")));
    }
    if maxval == 0 {
        return Err(pgm_err("invalid maxval 0"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(pgm_err("missing whitespace before payload"));
    }
    pos += 1;

    let expected = width
        .checked_mul(height)
        .ok_or_else(|| pgm_err("image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(pgm_err(format!(
            "truncated payload: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    GrayImage::new(width, height, payload[..expected].to_vec())
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    read_pgm(&bytes)
}

/// Reads one decimal token, skipping whitespace and `#` comments.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(pgm_err("truncated header: expected integer"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| pgm_err("invalid header integer"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let img = GrayImage::new(2, 2, vec![0, 255, 128, 64]).unwrap();
        let bytes = write_pgm(&img);
        let back = read_pgm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(write_pgm(&back), bytes);
    }

    #[test]
    fn payload_bytes_follow_header_exactly() {
        let img = GrayImage::new(2, 2, vec![0, 255, 128, 64]).unwrap();
        let bytes = write_pgm(&img);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 64]);
    }

    #[test]
    fn comments_are_tolerated_on_read() {
        let bytes = b"P5\n# a comment\n2 2\n# more\n255\n\x01\x02\x03\x04";
        let img = read_pgm(bytes).unwrap();
        assert_eq!(img.pixels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn sixteen_bit_rejected() {
        let bytes = b"P5\n2 2\n65535\n\x00\x00\x00\x00\x00\x00\x00\x00";
        let err = read_pgm(bytes).unwrap_err();
        assert!(err.to_string().contains("16-bit PGM unsupported"));
    }

    #[test]
    fn ascii_variant_rejected() {
        let bytes = b"P2\n2 2\n255\n0 1 2 3";
        let err = read_pgm(bytes).unwrap_err();
        assert!(err.to_string().contains("P2"));
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = b"P5\n2 2\n255\n\x01\x02";
        let err = read_pgm(bytes).unwrap_err();
        assert!(err.to_string().contains("truncated payload"));
    }
}
