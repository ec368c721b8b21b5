//! Deterministic snippet rendering onto a pixel-grid canvas.
//!
//! A canvas is a `grid_rows x grid_cols` arrangement of square cells (2x2 of
//! 224px by default, 448x448 total). An image, when rendered, fills exactly
//! one uniformly chosen cell; text glyphs blit in raster order from the
//! top-left cell at native 16px height with no anti-aliasing, continuing into
//! the next cell in row-major order whenever a cell fills up or belongs to the
//! image. Identical inputs and seed produce identical pixels.

use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RgbBuffer, Snippet};
use crate::error::{Error, Result};
use crate::font::{FontTable, GLYPH_HEIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RenderModality {
    Interleaved,
    TextOnly,
    ImageOnly,
}

impl RenderModality {
    /// Short task label: IN / Tx / Im.
    pub fn label(&self) -> &'static str {
        match self {
            RenderModality::Interleaved => "IN",
            RenderModality::TextOnly => "Tx",
            RenderModality::ImageOnly => "Im",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "in" | "interleaved" => Some(RenderModality::Interleaved),
            "tx" | "text" | "text-only" => Some(RenderModality::TextOnly),
            "im" | "image" | "image-only" => Some(RenderModality::ImageOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFit {
    /// Preserve aspect ratio, letterboxing with the background color.
    AspectFit,
    /// Fill the whole cell, distorting if necessary.
    Stretch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    pub cell_px: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub glyph_scale: usize,
    pub background: [u8; 3],
    pub ink: [u8; 3],
    pub image_fit: ImageFit,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            cell_px: 224,
            grid_rows: 2,
            grid_cols: 2,
            glyph_scale: 1,
            background: [255, 255, 255],
            ink: [0, 0, 0],
            image_fit: ImageFit::AspectFit,
        }
    }
}

impl LayoutConfig {
    /// Small layout (32px cells, 64px canvas) for desk-scale training and tests.
    pub fn desk() -> Self {
        LayoutConfig {
            cell_px: 32,
            ..LayoutConfig::default()
        }
    }

    /// Single-cell layout covering the whole canvas, used for full-frame
    /// image rendering (e.g. slides).
    pub fn full_frame(&self) -> Result<Self> {
        if self.canvas_width() != self.canvas_height() {
            return Err(Error::Layout(
                "full-frame rendering requires a square canvas".into(),
            ));
        }
        Ok(LayoutConfig {
            cell_px: self.canvas_width(),
            grid_rows: 1,
            grid_cols: 1,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_px == 0 || self.grid_rows == 0 || self.grid_cols == 0 || self.glyph_scale == 0
        {
            return Err(Error::Layout("all layout dimensions must be positive".into()));
        }
        let unit = GLYPH_HEIGHT * self.glyph_scale;
        if self.cell_px % unit != 0 {
            return Err(Error::Layout(format!(
                "cell_px {} must be divisible by 16*glyph_scale = {}",
                self.cell_px, unit
            )));
        }
        Ok(())
    }

    pub fn canvas_width(&self) -> usize {
        self.grid_cols * self.cell_px
    }

    pub fn canvas_height(&self) -> usize {
        self.grid_rows * self.cell_px
    }

    pub fn cells(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    fn cell_origin(&self, cell: usize) -> (usize, usize) {
        let row = cell / self.grid_cols;
        let col = cell % self.grid_cols;
        (col * self.cell_px, row * self.cell_px)
    }

    /// Glyph lines per cell.
    pub fn lines_per_cell(&self) -> usize {
        self.cell_px / (GLYPH_HEIGHT * self.glyph_scale)
    }

    /// Halfwidth glyph capacity of one line.
    pub fn halfwidth_cols(&self) -> usize {
        self.cell_px / (8 * self.glyph_scale)
    }
}

/// Where a canvas came from, enough to reproduce it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub modality: RenderModality,
    pub image_cell: Option<usize>,
    pub seed: u64,
}

/// Rendered RGB canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub provenance: Provenance,
}

impl Canvas {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let at = (y * self.width + x) * 3;
        [self.pixels[at], self.pixels[at + 1], self.pixels[at + 2]]
    }

    fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let at = (y * self.width + x) * 3;
        self.pixels[at..at + 3].copy_from_slice(&rgb);
    }
}

/// Render a snippet at the requested modality. Pure function of its inputs.
pub fn render(
    snippet: &Snippet,
    modality: RenderModality,
    font: &FontTable,
    cfg: &LayoutConfig,
    seed: u64,
) -> Result<Canvas> {
    cfg.validate()?;
    let text_available = snippet.has_text();
    let image = snippet.images.first();
    let want_text = matches!(
        modality,
        RenderModality::TextOnly | RenderModality::Interleaved
    ) && text_available;
    let want_image = matches!(
        modality,
        RenderModality::ImageOnly | RenderModality::Interleaved
    ) && image.is_some();
    match modality {
        RenderModality::TextOnly if !text_available => {
            return Err(Error::Render(
                "text-only render requires non-empty text".into(),
            ))
        }
        RenderModality::ImageOnly if image.is_none() => {
            return Err(Error::Render("image-only render requires an image".into()))
        }
        RenderModality::Interleaved if !text_available && image.is_none() => {
            return Err(Error::Render(
                "interleaved render requires text or an image".into(),
            ))
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = cfg.canvas_width();
    let height = cfg.canvas_height();
    let mut canvas = Canvas {
        width,
        height,
        pixels: cfg.background.repeat(width * height),
        provenance: Provenance {
            modality,
            image_cell: None,
            seed,
        },
    };

    let mut image_cell = None;
    if want_image {
        let buffer = image.unwrap().require_loaded()?;
        let cell = rng.gen_range(0..cfg.cells());
        blit_image(&mut canvas, buffer, cfg, cell);
        image_cell = Some(cell);
        canvas.provenance.image_cell = image_cell;
    }

    if want_text {
        blit_text(&mut canvas, &snippet.text, font, cfg, image_cell);
    }

    Ok(canvas)
}

fn blit_image(canvas: &mut Canvas, img: &RgbBuffer, cfg: &LayoutConfig, cell: usize) {
    let (ox, oy) = cfg.cell_origin(cell);
    let cell_px = cfg.cell_px as u64;
    let (dst_w, dst_h) = match cfg.image_fit {
        ImageFit::Stretch => (cfg.cell_px, cfg.cell_px),
        ImageFit::AspectFit => {
            let w = img.width as u64;
            let h = img.height as u64;
            if w >= h {
                (cfg.cell_px, ((h * cell_px / w) as usize).max(1))
            } else {
                (((w * cell_px / h) as usize).max(1), cfg.cell_px)
            }
        }
    };
    let off_x = (cfg.cell_px - dst_w) / 2;
    let off_y = (cfg.cell_px - dst_h) / 2;
    for y in 0..dst_h {
        let sy = (y as u64 * img.height as u64 / dst_h as u64) as u32;
        for x in 0..dst_w {
            let sx = (x as u64 * img.width as u64 / dst_w as u64) as u32;
            canvas.put(ox + off_x + x, oy + off_y + y, img.pixel(sx, sy));
        }
    }
}

struct TextCursor<'a> {
    cfg: &'a LayoutConfig,
    image_cell: Option<usize>,
    cell: usize,
    line: usize,
    x: usize,
    exhausted: bool,
}

impl<'a> TextCursor<'a> {
    fn new(cfg: &'a LayoutConfig, image_cell: Option<usize>) -> Self {
        let mut cursor = TextCursor {
            cfg,
            image_cell,
            cell: 0,
            line: 0,
            x: 0,
            exhausted: false,
        };
        cursor.skip_image_cell();
        cursor
    }

    fn skip_image_cell(&mut self) {
        if Some(self.cell) == self.image_cell {
            self.advance_cell();
        }
    }

    fn advance_cell(&mut self) {
        self.cell += 1;
        self.line = 0;
        self.x = 0;
        if Some(self.cell) == self.image_cell {
            self.cell += 1;
        }
        if self.cell >= self.cfg.cells() {
            self.exhausted = true;
        }
    }

    fn newline(&mut self) {
        self.line += 1;
        self.x = 0;
        if self.line >= self.cfg.lines_per_cell() {
            self.advance_cell();
        }
    }

    /// Reserve room for a glyph of `advance` pixels; returns the canvas
    /// position of its top-left corner, or None once capacity is exhausted.
    fn place(&mut self, advance: usize) -> Option<(usize, usize)> {
        if self.exhausted {
            return None;
        }
        if self.x + advance > self.cfg.cell_px {
            self.newline();
            if self.exhausted {
                return None;
            }
        }
        let (ox, oy) = self.cfg.cell_origin(self.cell);
        let pos = (
            ox + self.x,
            oy + self.line * GLYPH_HEIGHT * self.cfg.glyph_scale,
        );
        self.x += advance;
        Some(pos)
    }
}

fn blit_text(
    canvas: &mut Canvas,
    text: &str,
    font: &FontTable,
    cfg: &LayoutConfig,
    image_cell: Option<usize>,
) {
    let mut cursor = TextCursor::new(cfg, image_cell);
    for ch in text.chars() {
        if ch == '\n' {
            cursor.newline();
            continue;
        }
        // Control characters render as the fallback box.
        let glyph = if ch.is_control() {
            font.fallback()
        } else {
            font.glyph_for(ch)
        };
        let advance = glyph.width as usize * cfg.glyph_scale;
        let Some((gx, gy)) = cursor.place(advance) else {
            break; // capacity exhausted: silent truncation
        };
        for y in 0..GLYPH_HEIGHT {
            for x in 0..glyph.width as usize {
                if glyph.pixel(x, y) {
                    for dy in 0..cfg.glyph_scale {
                        for dx in 0..cfg.glyph_scale {
                            canvas.put(
                                gx + x * cfg.glyph_scale + dx,
                                gy + y * cfg.glyph_scale + dy,
                                cfg.ink,
                            );
                        }
                    }
                }
            }
        }
    }
}

/// Map a canvas to a `[3, H, W]` tensor with per-channel values in [-1, 1].
pub fn canvas_to_tensor<F: crate::model::Real>(canvas: &Canvas) -> Array3<F> {
    let h = canvas.height;
    let w = canvas.width;
    let max = F::from_f64(255.0).unwrap();
    let two = F::from_f64(2.0).unwrap();
    let one = F::one();
    Array3::from_shape_fn((3, h, w), |(c, y, x)| {
        let v = canvas.pixels[(y * w + x) * 3 + c];
        F::from_u8(v).unwrap() / max * two - one
    })
}

/// Write a canvas as a lossless PNG.
pub fn write_canvas_png(canvas: &Canvas, path: &Path) -> Result<()> {
    let img = image::RgbImage::from_raw(
        canvas.width as u32,
        canvas.height as u32,
        canvas.pixels.clone(),
    )
    .expect("canvas buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Read back a PNG as raw RGB for golden comparisons.
pub fn read_png_rgb(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}
