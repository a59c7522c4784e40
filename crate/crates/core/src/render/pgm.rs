//! Binary PGM (P5, maxval 255) storage for trajectory images.

use std::fs;
use std::path::Path;

use super::TrajectoryImage;
use crate::error::{Error, Result};

pub fn encode(img: &TrajectoryImage) -> Vec<u8> {
    let n = img.size();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(img.pixels().iter().map(|p| (p * 255.0).round() as u8));
    out
}

pub fn decode(bytes: &[u8]) -> Result<TrajectoryImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments between header tokens
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PGM", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format("PGM", format!("magic {:?} is not P5", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::format("PGM", format!("bad header field {s:?}: {e}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if w != h {
        return Err(Error::format("PGM", format!("{w}x{h} image is not square")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("PGM", format!("unsupported maxval {maxval}")));
    }
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::format("PGM", "truncated raster"))?;
    let pixels = raster.iter().map(|&b| b as f32 / maxval as f32).collect();
    TrajectoryImage::from_pixels(w, pixels)
}

pub fn write(path: &Path, img: &TrajectoryImage) -> Result<()> {
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<TrajectoryImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// 8-bit grayscale PNG of the same raster, for browsers.
pub fn to_png(img: &TrajectoryImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let n = img.size() as u32;
        let mut enc = png::Encoder::new(&mut out, n, n);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let raster: Vec<u8> = img.pixels().iter().map(|p| (p * 255.0).round() as u8).collect();
        let mut w = enc
            .write_header()
            .map_err(|e| Error::format("PNG", e))?;
        w.write_image_data(&raster).map_err(|e| Error::format("PNG", e))?;
    }
    Ok(out)
}
