use std::sync::{Arc, OnceLock};

use image::RgbImage;

use super::{FrameImage, MediaError, ShortEdge};

/// An immutable raster shared between memory pools and outgoing requests.
#[derive(Debug)]
pub struct Raster {
    pub image: RgbImage,
    digest: OnceLock<String>,
}

impl Raster {
    pub fn new(image: RgbImage) -> Self {
        Raster { image, digest: OnceLock::new() }
    }

    /// SHA-256 over dimensions and pixel bytes, computed on first use.
    pub fn digest(&self) -> &str {
        self.digest.get_or_init(|| {
            let mut bytes = Vec::with_capacity(self.image.as_raw().len() + 8);
            bytes.extend_from_slice(&self.image.width().to_le_bytes());
            bytes.extend_from_slice(&self.image.height().to_le_bytes());
            bytes.extend_from_slice(self.image.as_raw());
            crate::digest::sha256_hex(bytes)
        })
    }

    pub fn to_png(&self) -> Result<Vec<u8>, MediaError> {
        encode_png(&self.image)
    }
}

pub const MOSAIC_COLS: u32 = 3;
pub const MOSAIC_ROWS: u32 = 2;
pub const MOSAIC_CAPACITY: usize = (MOSAIC_COLS * MOSAIC_ROWS) as usize;

/// A 3x2 composite of index-stamped frames, filled row-major from the
/// top-left. Unused cells (last grid of a batch) stay black.
#[derive(Debug, Clone)]
pub struct MosaicGrid {
    pub member_indices: Vec<u64>,
    pub cell_size: (u32, u32),
    pub short_edge: ShortEdge,
    pub canvas: Arc<Raster>,
}

impl MosaicGrid {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    /// Label used for attachments, e.g. `mosaic[0,359,719]`.
    pub fn label(&self) -> String {
        let idx: Vec<String> = self.member_indices.iter().map(u64::to_string).collect();
        format!("mosaic[{}]", idx.join(","))
    }
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>, MediaError> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| MediaError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Copies `src` into `dst` with its top-left at `(x, y)`. `src` must fit.
fn blit(dst: &mut RgbImage, src: &RgbImage, x: u32, y: u32) {
    let dst_stride = dst.width() as usize * 3;
    let row_len = src.width() as usize * 3;
    let dst_buf: &mut [u8] = dst;
    for (r, src_row) in src.as_raw().chunks_exact(row_len).enumerate() {
        let at = (y as usize + r) * dst_stride + x as usize * 3;
        dst_buf[at..at + row_len].copy_from_slice(src_row);
    }
}

/// Packs frames six at a time into 3x2 grids, preserving input order.
///
/// Each cell is sized to the largest member frame of the whole batch; frames
/// sit at the top-left of their cell on a black canvas.
pub fn compose_mosaics(frames: &[FrameImage]) -> Result<Vec<MosaicGrid>, MediaError> {
    let first = frames.first().ok_or(MediaError::EmptyInput("frame list"))?;
    let short_edge = first.short_edge;
    if frames.iter().any(|f| f.short_edge != short_edge) {
        return Err(MediaError::MixedShortEdge);
    }
    let cell_w = frames.iter().map(|f| f.pixels.width()).max().unwrap_or(1);
    let cell_h = frames.iter().map(|f| f.pixels.height()).max().unwrap_or(1);

    let grids = frames
        .chunks(MOSAIC_CAPACITY)
        .map(|chunk| {
            let mut canvas = RgbImage::new(cell_w * MOSAIC_COLS, cell_h * MOSAIC_ROWS);
            for (slot, frame) in chunk.iter().enumerate() {
                let col = slot as u32 % MOSAIC_COLS;
                let row = slot as u32 / MOSAIC_COLS;
                blit(&mut canvas, &frame.pixels, col * cell_w, row * cell_h);
            }
            MosaicGrid {
                member_indices: chunk.iter().map(|f| f.global_index).collect(),
                cell_size: (cell_w, cell_h),
                short_edge,
                canvas: Arc::new(Raster::new(canvas)),
            }
        })
        .collect();
    Ok(grids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn frame(index: u64, shade: u8) -> FrameImage {
        FrameImage {
            global_index: index,
            pixels: RgbImage::from_pixel(4, 3, Rgb([shade, shade, shade])),
            short_edge: ShortEdge::Px256,
        }
    }

    #[test]
    fn remainder_grid_is_padded_black() {
        let frames: Vec<_> = (0..7).map(|i| frame(i, 200)).collect();
        let grids = compose_mosaics(&frames).unwrap();
        assert_eq!(grids.len(), 2);
        assert_eq!(grids[1].member_indices, vec![6]);
        assert_eq!(grids[1].canvas.image.dimensions(), (12, 6));
        assert_eq!(grids[1].canvas.image.get_pixel(0, 0), &Rgb([200, 200, 200]));
        assert_eq!(grids[1].canvas.image.get_pixel(5, 0), &Rgb([0, 0, 0]));
    }

    #[test]
    fn row_major_placement() {
        let frames: Vec<_> = (0..6).map(|i| frame(i, i as u8 * 10 + 5)).collect();
        let grid = &compose_mosaics(&frames).unwrap()[0];
        // slot 4 = row 1, col 1
        assert_eq!(grid.canvas.image.get_pixel(4 + 1, 3 + 1), &Rgb([45, 45, 45]));
        assert_eq!(grid.canvas.image.get_pixel(8, 0), &Rgb([25, 25, 25]));
    }

    #[test]
    fn empty_and_mixed_inputs_rejected() {
        assert!(matches!(compose_mosaics(&[]), Err(MediaError::EmptyInput(_))));
        let mut b = frame(1, 0);
        b.short_edge = ShortEdge::Px512;
        assert!(matches!(compose_mosaics(&[frame(0, 0), b]), Err(MediaError::MixedShortEdge)));
    }
}
