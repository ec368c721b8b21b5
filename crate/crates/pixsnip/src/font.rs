//! GNU Unifont `.hex` parsing and glyph lookup.
//!
//! The `.hex` container is one glyph per line, `CODEPOINT:HEXDATA`, where the
//! data is 32 hex digits for an 8x16 halfwidth glyph or 64 for a 16x16
//! fullwidth glyph. Lookup never fails: unmapped codepoints resolve to the
//! fallback glyph (U+FFFD if the font provides one, else a solid box).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const GLYPH_HEIGHT: usize = 16;

/// One fixed-cell bitmap glyph. Rows are top-to-bottom, bits MSB-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub codepoint: char,
    pub width: u8,
    pub rows: [u16; GLYPH_HEIGHT],
}

impl Glyph {
    /// Ink test at glyph-local coordinates.
    pub fn pixel(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width as usize && y < GLYPH_HEIGHT);
        (self.rows[y] >> (self.width as usize - 1 - x)) & 1 == 1
    }

    pub fn is_fullwidth(&self) -> bool {
        self.width == 16
    }

    fn solid_box(codepoint: char) -> Self {
        Glyph {
            codepoint,
            width: 8,
            rows: [0xFF; GLYPH_HEIGHT],
        }
    }
}

/// Immutable glyph table; freely shared across threads once parsed.
#[derive(Debug, Clone)]
pub struct FontTable {
    glyphs: HashMap<char, Glyph>,
    fallback: Glyph,
}

impl FontTable {
    /// Parse a `.hex` stream. Later duplicate codepoints overwrite earlier ones.
    pub fn parse_hex(input: &str) -> Result<Self> {
        let mut glyphs = HashMap::new();
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let glyph = parse_hex_line(line, line_no)?;
            glyphs.insert(glyph.codepoint, glyph);
        }
        let fallback = glyphs
            .get(&'\u{FFFD}')
            .cloned()
            .unwrap_or_else(|| Glyph::solid_box('\u{FFFD}'));
        Ok(FontTable { glyphs, fallback })
    }

    pub fn from_hex_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_hex(&text)
    }

    /// Exact glyph if mapped, else the fallback. Never fails.
    pub fn glyph_for(&self, codepoint: char) -> &Glyph {
        self.glyphs.get(&codepoint).unwrap_or(&self.fallback)
    }

    pub fn contains(&self, codepoint: char) -> bool {
        self.glyphs.contains_key(&codepoint)
    }

    pub fn fallback(&self) -> &Glyph {
        &self.fallback
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn glyphs(&self) -> impl Iterator<Item = &Glyph> {
        self.glyphs.values()
    }

    /// Serialize back to `.hex`, sorted by codepoint.
    pub fn to_hex(&self) -> String {
        let mut codepoints: Vec<&char> = self.glyphs.keys().collect();
        codepoints.sort();
        let mut out = String::new();
        for cp in codepoints {
            let glyph = &self.glyphs[cp];
            write!(out, "{:04X}:", *cp as u32).unwrap();
            for row in &glyph.rows {
                if glyph.is_fullwidth() {
                    write!(out, "{row:04X}").unwrap();
                } else {
                    write!(out, "{:02X}", *row as u8).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

fn parse_hex_line(line: &str, line_no: usize) -> Result<Glyph> {
    let (cp_part, data_part) = line.split_once(':').ok_or_else(|| Error::FontParse {
        line: line_no,
        msg: "missing ':' separator".into(),
    })?;
    let cp_value = u32::from_str_radix(cp_part, 16).map_err(|_| Error::FontParse {
        line: line_no,
        msg: format!("invalid codepoint {cp_part:?}"),
    })?;
    let codepoint = char::from_u32(cp_value).ok_or_else(|| Error::FontParse {
        line: line_no,
        msg: format!("U+{cp_value:04X} is not a Unicode scalar value"),
    })?;
    let width = match data_part.len() {
        32 => 8u8,
        64 => 16u8,
        n => {
            return Err(Error::FontParse {
                line: line_no,
                msg: format!("bitmap has {n} hex digits, expected 32 or 64"),
            })
        }
    };
    let digits_per_row = data_part.len() / GLYPH_HEIGHT;
    let mut rows = [0u16; GLYPH_HEIGHT];
    for (row_idx, row) in rows.iter_mut().enumerate() {
        let chunk = &data_part[row_idx * digits_per_row..(row_idx + 1) * digits_per_row];
        *row = u16::from_str_radix(chunk, 16).map_err(|_| Error::FontParse {
            line: line_no,
            msg: format!("invalid hex in row {row_idx}: {chunk:?}"),
        })?;
    }
    Ok(Glyph {
        codepoint,
        width,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A_LINE: &str = "0041:0000001818242442427E424242420000";

    fn test_font_path() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/testfont.hex")
    }

    #[test]
    fn halfwidth_line_parses_to_8x16() {
        let table = FontTable::parse_hex(A_LINE).unwrap();
        let glyph = table.glyph_for('A');
        assert_eq!(glyph.codepoint, 'A');
        assert_eq!(glyph.width, 8);
        assert!(glyph.pixel(3, 3));
        assert!(!glyph.pixel(0, 0));
    }

    #[test]
    fn fullwidth_line_parses_to_16x16() {
        let line = format!("4E00:{}", "7FFE".repeat(16));
        let table = FontTable::parse_hex(&line).unwrap();
        let glyph = table.glyph_for('\u{4E00}');
        assert_eq!(glyph.width, 16);
        assert!(glyph.pixel(1, 0));
        assert!(!glyph.pixel(0, 0));
    }

    #[test]
    fn wrong_digit_count_is_an_error_with_line_number() {
        let input = format!("{A_LINE}\n0042:{}", "0".repeat(40));
        match FontTable::parse_hex(&input) {
            Err(Error::FontParse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("40"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_hex_is_an_error() {
        let input = format!("0041:{}", "ZZ".repeat(16));
        assert!(matches!(
            FontTable::parse_hex(&input),
            Err(Error::FontParse { line: 1, .. })
        ));
    }

    #[test]
    fn unmapped_codepoint_falls_back() {
        let table = FontTable::parse_hex(A_LINE).unwrap();
        let glyph = table.glyph_for('\u{E000}');
        assert_eq!(glyph.rows, [0xFF; GLYPH_HEIGHT]);
        assert_eq!(glyph.width, 8);
    }

    #[test]
    fn fffd_becomes_the_fallback_when_present() {
        let table = FontTable::from_hex_file(&test_font_path()).unwrap();
        assert!(table.contains('\u{FFFD}'));
        assert_eq!(table.fallback().codepoint, '\u{FFFD}');
        assert_ne!(table.fallback().rows, [0xFF; GLYPH_HEIGHT]);
    }

    #[test]
    fn later_duplicates_overwrite() {
        let blank = format!("0041:{}", "00".repeat(16));
        let input = format!("{A_LINE}\n{blank}");
        let table = FontTable::parse_hex(&input).unwrap();
        assert_eq!(table.glyph_for('A').rows, [0; GLYPH_HEIGHT]);
    }

    #[test]
    fn hex_round_trip_is_identity() {
        let table = FontTable::from_hex_file(&test_font_path()).unwrap();
        let serialized = table.to_hex();
        let reparsed = FontTable::parse_hex(&serialized).unwrap();
        assert_eq!(table.len(), reparsed.len());
        for glyph in table.glyphs() {
            assert_eq!(glyph, reparsed.glyph_for(glyph.codepoint));
        }
        assert_eq!(serialized, reparsed.to_hex());
    }

    #[test]
    fn vendored_font_covers_printable_ascii() {
        let table = FontTable::from_hex_file(&test_font_path()).unwrap();
        for cp in 0x20u32..0x7F {
            assert!(table.contains(char::from_u32(cp).unwrap()), "missing {cp:#X}");
        }
    }
}
