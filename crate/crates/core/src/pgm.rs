//! Binary PGM (P5) export for image-shaped vectors.
//!
//! Pixel values are clipped to [0, 1] and quantized to a max gray of 255.
//! Multiple panels are exported as one horizontal strip so a traversal
//! reads left to right in a single file.

use std::path::Path;

use crate::error::{Error, Result};

/// Encodes one grayscale image, row-major, clipping values into [0, 1].
pub fn encode_pgm(width: usize, height: usize, pixels: &[f64]) -> Result<Vec<u8>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("image dimensions must be positive".into()));
    }
    if pixels.len() != width * height {
        return Err(Error::InvalidInput(format!(
            "pixel count {} does not match {}x{}",
            pixels.len(),
            width,
            height
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| {
        let clipped = v.clamp(0.0, 1.0);
        (clipped * 255.0).round() as u8
    }));
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pgm(width, height, pixels)?)?;
    Ok(())
}

/// Concatenates same-shaped panels side by side; returns the strip's
/// (width, height, pixels).
pub fn strip(panels: &[Vec<f64>], width: usize, height: usize) -> Result<(usize, usize, Vec<f64>)> {
    if panels.is_empty() {
        return Err(Error::InvalidInput("strip needs at least one panel".into()));
    }
    if panels.iter().any(|p| p.len() != width * height) {
        return Err(Error::InvalidInput("panel size does not match its shape".into()));
    }
    let total_w = width * panels.len();
    let mut pixels = Vec::with_capacity(total_w * height);
    for row in 0..height {
        for panel in panels {
            pixels.extend_from_slice(&panel[row * width..(row + 1) * width]);
        }
    }
    Ok((total_w, height, pixels))
}
