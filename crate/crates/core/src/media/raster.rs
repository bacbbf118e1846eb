//! Resizing and index stamping of frame rasters.

use fast_image_resize::images::Image;
use fast_image_resize::{FilterType, PixelType, ResizeAlg, ResizeOptions, Resizer};
use image::{Rgb, RgbImage};

use super::{FrameImage, MediaError};

/// Allowed short-edge sizes for extracted frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum ShortEdge {
    /// Frames destined for scene mosaics.
    Px256,
    /// Untiled clip frames.
    Px512,
}

impl ShortEdge {
    pub fn px(self) -> u32 {
        match self {
            ShortEdge::Px256 => 256,
            ShortEdge::Px512 => 512,
        }
    }
}

impl TryFrom<u32> for ShortEdge {
    type Error = MediaError;

    fn try_from(px: u32) -> Result<Self, Self::Error> {
        match px {
            256 => Ok(ShortEdge::Px256),
            512 => Ok(ShortEdge::Px512),
            other => Err(MediaError::UnsupportedShortEdge(other)),
        }
    }
}

impl From<ShortEdge> for u32 {
    fn from(edge: ShortEdge) -> u32 {
        edge.px()
    }
}

/// Output dimensions after scaling `(width, height)` so the shorter side is
/// `edge`. The long side is rounded to nearest, halves up.
pub fn scaled_dimensions(width: u32, height: u32, edge: u32) -> (u32, u32) {
    let scale = |long: u32, short: u32| -> u32 {
        let num = 2 * long as u64 * edge as u64 + short as u64;
        ((num / (2 * short as u64)) as u32).max(1)
    };
    if width <= height {
        (edge, scale(height, width))
    } else {
        (scale(width, height), edge)
    }
}

/// Resizes preserving aspect ratio so that `min(width, height) == edge`.
/// Rasters already at the target size are returned untouched.
pub fn resize_short_edge(img: RgbImage, edge: ShortEdge) -> RgbImage {
    let (w, h) = scaled_dimensions(img.width(), img.height(), edge.px());
    if (w, h) == img.dimensions() {
        return img;
    }
    let (src_w, src_h) = img.dimensions();
    let src = Image::from_vec_u8(src_w, src_h, img.into_raw(), PixelType::U8x3).expect("buffer matches dimensions");
    let mut dst = Image::new(w, h, PixelType::U8x3);
    let options = ResizeOptions::new().resize_alg(ResizeAlg::Convolution(FilterType::Bilinear));
    Resizer::new().resize(&src, &mut dst, &options).expect("same pixel type");
    RgbImage::from_raw(w, h, dst.into_vec()).expect("buffer matches dimensions")
}

/// 5x7 digit glyphs, one byte per row, low five bits used (MSB = left).
pub const DIGIT_GLYPHS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E], // 0
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E], // 1
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F], // 2
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E], // 3
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02], // 4
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E], // 5
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E], // 6
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08], // 7
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E], // 8
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C], // 9
];

pub const GLYPH_COLS: u32 = 5;
pub const GLYPH_ROWS: u32 = 7;
pub const OUTLINE_PX: u32 = 2;

/// Placement of the index label inside a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StampLayout {
    /// Top-left corner of the first glyph.
    pub origin: (u32, u32),
    pub glyph_width: u32,
    pub glyph_height: u32,
    /// Horizontal distance between the left edges of adjacent glyphs.
    pub advance: u32,
}

impl StampLayout {
    /// Label height is 8% of the frame's short edge (at least one glyph row
    /// per pixel); glyph width keeps the 5:7 aspect.
    pub fn for_raster(width: u32, height: u32) -> Self {
        let short = width.min(height);
        let glyph_height = ((short as u64 * 8 + 50) / 100).max(GLYPH_ROWS as u64) as u32;
        let glyph_width = ((glyph_height * GLYPH_COLS + GLYPH_ROWS / 2) / GLYPH_ROWS).max(GLYPH_COLS);
        let gap = (glyph_height / 7).max(1) + 2 * OUTLINE_PX;
        StampLayout { origin: (OUTLINE_PX + 2, OUTLINE_PX + 2), glyph_width, glyph_height, advance: glyph_width + gap }
    }

    /// Whether glyph pixel `(gx, gy)` (relative to the glyph's top-left) is lit
    /// for `digit`, using nearest-neighbour sampling of the 5x7 bitmap.
    pub fn lit(&self, digit: u8, gx: u32, gy: u32) -> bool {
        let col = (gx * GLYPH_COLS / self.glyph_width).min(GLYPH_COLS - 1);
        let row = (gy * GLYPH_ROWS / self.glyph_height).min(GLYPH_ROWS - 1);
        DIGIT_GLYPHS[digit as usize][row as usize] >> (GLYPH_COLS - 1 - col) & 1 == 1
    }
}

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);

/// Renders `frame.global_index` in white with a black outline at the top-left
/// of the raster. Pixels falling outside the raster are clipped.
pub fn overlay_index(mut frame: FrameImage) -> FrameImage {
    stamp_label(&mut frame.pixels, &frame.global_index.to_string());
    frame
}

fn stamp_label(img: &mut RgbImage, label: &str) {
    let (w, h) = img.dimensions();
    let layout = StampLayout::for_raster(w, h);
    let digits: Vec<u8> = label.bytes().map(|b| b - b'0').collect();

    let mut lit_pixels = Vec::new();
    for (pos, &digit) in digits.iter().enumerate() {
        let x0 = layout.origin.0 + pos as u32 * layout.advance;
        let y0 = layout.origin.1;
        for gy in 0..layout.glyph_height {
            for gx in 0..layout.glyph_width {
                if layout.lit(digit, gx, gy) {
                    lit_pixels.push((x0 + gx, y0 + gy));
                }
            }
        }
    }

    let o = OUTLINE_PX as i64;
    for &(x, y) in &lit_pixels {
        for dy in -o..=o {
            for dx in -o..=o {
                let (px, py) = (x as i64 + dx, y as i64 + dy);
                if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                    img.put_pixel(px as u32, py as u32, BLACK);
                }
            }
        }
    }
    for &(x, y) in &lit_pixels {
        if x < w && y < h {
            img.put_pixel(x, y, WHITE);
        }
    }
}
