//! Box-and-label rendering of simulated screens.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use super::graph::ElementKind;
use super::SimTruth;

/// 3x5 glyphs, rows top to bottom, 3 bits per row (MSB = left column).
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c.to_ascii_uppercase() {
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'C' => [0b011, 0b100, 0b100, 0b100, 0b011],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
        'G' => [0b011, 0b100, 0b101, 0b101, 0b011],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'J' => [0b001, 0b001, 0b001, 0b101, 0b010],
        'K' => [0b101, 0b101, 0b110, 0b101, 0b101],
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'M' => [0b101, 0b111, 0b111, 0b101, 0b101],
        'N' => [0b110, 0b101, 0b101, 0b101, 0b101],
        'O' => [0b010, 0b101, 0b101, 0b101, 0b010],
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'Q' => [0b010, 0b101, 0b101, 0b110, 0b011],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
        'X' => [0b101, 0b101, 0b010, 0b101, 0b101],
        'Y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'Z' => [0b111, 0b001, 0b010, 0b100, 0b111],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b110, 0b001, 0b010, 0b100, 0b111],
        '3' => [0b110, 0b001, 0b010, 0b001, 0b110],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b110, 0b001, 0b110],
        '6' => [0b011, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b110],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        ',' => [0b000, 0b000, 0b000, 0b010, 0b100],
        ':' => [0b000, 0b010, 0b000, 0b010, 0b000],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '$' => [0b011, 0b110, 0b010, 0b011, 0b110],
        '#' => [0b101, 0b111, 0b101, 0b111, 0b101],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        '(' => [0b001, 0b010, 0b010, 0b010, 0b001],
        ')' => [0b100, 0b010, 0b010, 0b010, 0b100],
        '\'' => [0b010, 0b010, 0b000, 0b000, 0b000],
        '/' => [0b001, 0b001, 0b010, 0b100, 0b100],
        _ => return None,
    })
}

fn color(kind: ElementKind) -> Rgb<u8> {
    match kind {
        ElementKind::Button => Rgb([30, 90, 200]),
        ElementKind::TextField => Rgb([20, 140, 60]),
        ElementKind::ListItem => Rgb([120, 120, 120]),
        ElementKind::Icon => Rgb([200, 110, 20]),
        ElementKind::StaticText => Rgb([60, 60, 60]),
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn outline(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    for x in x0..=x1 {
        put(img, x, y0, c);
        put(img, x, y1, c);
    }
    for y in y0..=y1 {
        put(img, x0, y, c);
        put(img, x1, y, c);
    }
}

fn text(img: &mut RgbImage, x: i64, y: i64, max_x: i64, s: &str, c: Rgb<u8>) {
    let mut cx = x;
    for ch in s.chars() {
        if cx + 3 > max_x {
            break;
        }
        if let Some(rows) = glyph(ch) {
            for (dy, row) in rows.iter().enumerate() {
                for dx in 0..3 {
                    if row & (0b100 >> dx) != 0 {
                        put(img, cx + dx, y + dy as i64, c);
                    }
                }
            }
        }
        cx += 4;
    }
}

/// Draws each element as an outlined box with its label (and text field
/// contents) and encodes the result as PNG.
pub(crate) fn render_png(truth: &SimTruth, width: u32, height: u32, scale: f32) -> Vec<u8> {
    let scale = scale.clamp(0.05, 1.0);
    let w = ((width as f32 * scale).round() as u32).max(1);
    let h = ((height as f32 * scale).round() as u32).max(1);
    let background = if truth.overlay.is_some() {
        Rgb([200, 200, 200])
    } else {
        Rgb([255, 255, 255])
    };
    let mut img = RgbImage::from_pixel(w, h, background);
    let s = |v: i32| (v as f32 * scale).round() as i64;
    for el in &truth.elements {
        let (x0, y0, x1, y1) = (s(el.bbox.x0), s(el.bbox.y0), s(el.bbox.x1), s(el.bbox.y1));
        let c = color(el.kind);
        outline(&mut img, x0, y0, x1, y1, c);
        if el.focused {
            outline(&mut img, x0 + 1, y0 + 1, x1 - 1, y1 - 1, c);
        }
        let shown = match (&el.content, el.kind) {
            (Some(content), ElementKind::TextField) if !content.is_empty() => content.clone(),
            (Some(content), _) if !content.is_empty() => format!("{} {}", el.label, content),
            _ => el.label.clone(),
        };
        text(&mut img, x0 + 2, y0 + 2, x1 - 1, &shown, Rgb([0, 0, 0]));
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("png encodes to memory");
    out.into_inner()
}
