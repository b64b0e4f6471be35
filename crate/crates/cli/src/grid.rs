//! Labelled side-by-side comparison strips.

use std::path::Path;

use image::imageops::{resize, FilterType};
use image::{Rgb, RgbImage};
use landmark_sr::{Error, Result};

pub const PANEL: u32 = 128;
pub const MARGIN: u32 = 8;
const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const LABEL_H: u32 = GLYPH_H + 6;

/// Rows of a 5x7 glyph, most significant of the low five bits on the left.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '/' => [0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        ' ' => [0; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F],
    }
}

/// Pixel width of `text` at scale 1 with one column of spacing.
pub fn text_width(text: &str) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        n * (GLYPH_W + 1) - 1
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, color: Rgb<u8>) {
    for (i, c) in text.chars().enumerate() {
        let gx = x0 + i as u32 * (GLYPH_W + 1);
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - col) & 1 == 1 {
                    let (x, y) = (gx + col, y0 + row as u32);
                    if x < img.width() && y < img.height() {
                        img.put_pixel(x, y, color);
                    }
                }
            }
        }
    }
}

/// Output size for `n` panels.
pub fn grid_size(n: u32) -> (u32, u32) {
    (n * PANEL + (n + 1) * MARGIN, LABEL_H + PANEL + 2 * MARGIN)
}

/// Panels scaled to 128x128 with nearest-neighbour, laid out left to right under their labels.
pub fn compose(panels: &[(String, RgbImage)]) -> Result<RgbImage> {
    if panels.is_empty() {
        return Err(Error::invalid_input("compare grid needs at least one panel"));
    }
    let (w, h) = grid_size(panels.len() as u32);
    let mut out = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for (i, (label, img)) in panels.iter().enumerate() {
        let x0 = MARGIN + i as u32 * (PANEL + MARGIN);
        let y0 = MARGIN + LABEL_H;
        let tile = if img.dimensions() == (PANEL, PANEL) {
            img.clone()
        } else {
            resize(img, PANEL, PANEL, FilterType::Nearest)
        };
        image::imageops::replace(&mut out, &tile, x0 as i64, y0 as i64);
        let max_chars = ((PANEL + 1) / (GLYPH_W + 1)) as usize;
        let text: String = label.chars().take(max_chars).collect();
        let tx = x0 + (PANEL - text_width(&text)) / 2;
        draw_text(&mut out, &text, tx, MARGIN, Rgb([0, 0, 0]));
    }
    Ok(out)
}

/// Loads every panel first so a missing file leaves no partial output.
pub fn compare_grid(paths: &[std::path::PathBuf], labels: &[String], out: &Path) -> Result<()> {
    if !labels.is_empty() && labels.len() != paths.len() {
        return Err(Error::invalid_input(format!(
            "{} panels but {} labels",
            paths.len(),
            labels.len()
        )));
    }
    let mut panels = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        if !p.exists() {
            return Err(Error::data(format!("missing panel {}", p.display())));
        }
        let img = image::open(p).map_err(|e| Error::image(p, e))?.to_rgb8();
        let label = labels.get(i).cloned().unwrap_or_else(|| {
            p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
        });
        panels.push((label, img));
    }
    let grid = compose(&panels)?;
    grid.save(out).map_err(|e| Error::image(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_arithmetic() {
        let panels: Vec<(String, RgbImage)> = (0..5)
            .map(|i| (format!("P{i}"), RgbImage::from_pixel(16, 16, Rgb([i * 40, 0, 0]))))
            .collect();
        let g = compose(&panels).unwrap();
        assert_eq!(g.width(), 5 * 128 + 6 * MARGIN);
        // nearest upscaling keeps the panel flat
        let y = MARGIN + LABEL_H + 64;
        assert_eq!(g.get_pixel(MARGIN + 2 * (PANEL + MARGIN) + 5, y)[0], 80);
    }

    #[test]
    fn label_pixels_are_drawn() {
        let g = compose(&[("HR".into(), RgbImage::new(128, 128))]).unwrap();
        let dark = (0..g.width())
            .flat_map(|x| (0..MARGIN + GLYPH_H).map(move |y| (x, y)))
            .filter(|&(x, y)| g.get_pixel(x, y)[0] == 0)
            .count();
        assert!(dark > 10);
    }
}
