//! Built-in 5x7 bitmap font.

pub const GLYPH_WIDTH: usize = 5;
pub const GLYPH_HEIGHT: usize = 7;
/// Blank columns between adjacent glyphs.
pub const GLYPH_SPACING: usize = 1;

/// The only glyph set shipped so far.
pub const GLYPH_SET_V1: u32 = 1;

// One row per entry, most significant of the low 5 bits is the leftmost column.
const DIGITS_V1: [[u8; GLYPH_HEIGHT]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

const PLUS_V1: [u8; GLYPH_HEIGHT] = [0b00000, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00000];

fn glyph_rows(ch: char) -> Option<&'static [u8; GLYPH_HEIGHT]> {
    match ch {
        '0'..='9' => Some(&DIGITS_V1[ch as usize - '0' as usize]),
        '+' => Some(&PLUS_V1),
        _ => None,
    }
}

/// Binary raster of a glyph string, each font pixel blown up to a
/// `scale x scale` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub width: usize,
    pub height: usize,
    pub ink: Vec<bool>,
}

impl Template {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.ink[row * self.width + col]
    }
}

/// Width in font pixels (before block scaling) of a string of `glyphs` characters.
pub fn text_width(glyphs: usize) -> usize {
    if glyphs == 0 {
        0
    } else {
        glyphs * GLYPH_WIDTH + (glyphs - 1) * GLYPH_SPACING
    }
}

/// Rasterize `text` left to right. Returns `None` for characters outside the font.
pub fn rasterize(text: &str, scale: usize) -> Option<Template> {
    let chars: Vec<char> = text.chars().collect();
    let width = text_width(chars.len()) * scale;
    let height = GLYPH_HEIGHT * scale;
    let mut ink = vec![false; width * height];
    for (gi, ch) in chars.iter().enumerate() {
        let rows = glyph_rows(*ch)?;
        let x0 = gi * (GLYPH_WIDTH + GLYPH_SPACING);
        for (fy, bits) in rows.iter().enumerate() {
            for fx in 0..GLYPH_WIDTH {
                if bits >> (GLYPH_WIDTH - 1 - fx) & 1 == 1 {
                    for dy in 0..scale {
                        let row = fy * scale + dy;
                        let start = row * width + (x0 + fx) * scale;
                        ink[start..start + scale].fill(true);
                    }
                }
            }
        }
    }
    Some(Template { width, height, ink })
}
