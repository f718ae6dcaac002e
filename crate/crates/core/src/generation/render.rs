use image::{Rgb, RgbImage};
use sha2::{Digest, Sha256};

use super::TraceEntry;
use crate::layout::{BoundingBox, Canvas};

/// Stable colour for a string.
pub fn color_for(key: &str) -> Rgb<u8> {
    let d = Sha256::digest(key.as_bytes());
    Rgb([d[0], d[1], d[2]])
}

// 3x5 digit glyphs, one row per entry, low 3 bits left to right.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];
const GLYPH_SCALE: u32 = 2;

fn fill(img: &mut RgbImage, b: BoundingBox, color: Rgb<u8>) {
    let x1 = (b.x + b.w).min(img.width());
    let y1 = (b.y + b.h).min(img.height());
    for y in b.y..y1 {
        for x in b.x..x1 {
            img.put_pixel(x, y, color);
        }
    }
}

fn draw_label(img: &mut RgbImage, b: BoundingBox, id: u32, fill_color: Rgb<u8>) {
    let luma = 0.299 * f64::from(fill_color[0])
        + 0.587 * f64::from(fill_color[1])
        + 0.114 * f64::from(fill_color[2]);
    let ink = if luma > 127.0 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) };
    let text = id.to_string();
    let mut pen_x = b.x + 1;
    let pen_y = b.y + 1;
    for ch in text.bytes() {
        let glyph = DIGITS[usize::from(ch - b'0')];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3u32 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                let px = BoundingBox::new(
                    pen_x + col * GLYPH_SCALE,
                    pen_y + row as u32 * GLYPH_SCALE,
                    GLYPH_SCALE,
                    GLYPH_SCALE,
                );
                // Keep the label inside its own box.
                if px.x + px.w <= b.x + b.w && px.y + px.h <= b.y + b.h {
                    fill(img, px, ink);
                }
            }
        }
        pen_x += 4 * GLYPH_SCALE;
    }
}

/// Background keyed by `background`, then each present entry as a filled
/// rectangle keyed by its name, with its id in the top-left corner.
pub fn render_frame(entries: &[TraceEntry], canvas: Canvas, background: &str) -> RgbImage {
    let mut img = RgbImage::from_pixel(canvas.width, canvas.height, color_for(background));
    for e in entries.iter().filter(|e| e.present) {
        let c = color_for(&e.name);
        fill(&mut img, e.bbox, c);
        draw_label(&mut img, e.bbox, e.id, c);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(x: u32) -> TraceEntry {
        TraceEntry {
            id: 0,
            name: "car".into(),
            instance: 0,
            bbox: BoundingBox::new(x, 350, 100, 50),
            attributes: vec![],
            present: true,
        }
    }

    #[test]
    fn empty_frame_is_background() {
        let img = render_frame(&[], Canvas::default(), "moon");
        let bg = color_for("moon");
        assert!(img.pixels().all(|p| *p == bg));
    }

    #[test]
    fn flush_left_rectangle() {
        let img = render_frame(&[car(0)], Canvas::default(), "moon");
        let c = color_for("car");
        let bg = color_for("moon");
        // Right half of the box, clear of the label.
        assert_eq!(*img.get_pixel(0, 399), c);
        assert_eq!(*img.get_pixel(99, 375), c);
        assert_eq!(*img.get_pixel(100, 375), bg);
        assert_eq!(*img.get_pixel(50, 349), bg);
    }

    #[test]
    fn absent_entries_are_not_drawn() {
        let mut e = car(10);
        e.present = false;
        let img = render_frame(&[e], Canvas::default(), "moon");
        assert_eq!(img, render_frame(&[], Canvas::default(), "moon"));
    }

    #[test]
    fn deterministic() {
        let a = render_frame(&[car(7)], Canvas::default(), "street");
        let b = render_frame(&[car(7)], Canvas::default(), "street");
        assert_eq!(a.as_raw(), b.as_raw());
    }
}
