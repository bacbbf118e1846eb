//! Video probing, frame sampling, index stamping, 3x2 mosaics and size-capped
//! audio extraction.

mod mosaic;
mod raster;
mod sampling;
mod source;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mosaic::{compose_mosaics, MosaicGrid, Raster, MOSAIC_CAPACITY, MOSAIC_COLS, MOSAIC_ROWS};
pub use raster::{
    overlay_index, resize_short_edge, scaled_dimensions, ShortEdge, StampLayout, DIGIT_GLYPHS, GLYPH_COLS, GLYPH_ROWS,
};
pub use sampling::{allocate_across_ranges, sample_ranges, uniform_sample_indices};
pub use source::{open_source, probe_video, EncodedAudio, FfmpegSource, MediaSource, SyntheticAudio, SyntheticVideo};

/// Upper bound on audio uploaded for transcription: 25 MiB.
pub const AUDIO_BYTE_CAP: u64 = 25 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediaError {
    #[error("unreadable media: {0}")]
    Unreadable(String),
    #[error("zero-frame stream")]
    ZeroFrames,
    #[error("no video track")]
    NoVideoTrack,
    #[error("no audio track")]
    NoAudioTrack,
    #[error("invalid video metadata: {0}")]
    InvalidMetadata(String),
    #[error("decode failure at frame {index}: {reason}")]
    Decode { index: u64, reason: String },
    #[error("unsupported short_edge value {0}")]
    UnsupportedShortEdge(u32),
    #[error("frames mix short-edge classes")]
    MixedShortEdge,
    #[error("malformed range: start {start} > end {end}")]
    MalformedRange { start: u64, end: u64 },
    #[error("range [{start}, {end}] outside video of {total_frames} frames")]
    RangeOutOfBounds { start: u64, end: u64, total_frames: u64 },
    #[error("{0}")]
    InvalidCount(String),
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

/// Probed metadata of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoHandle {
    pub path: String,
    pub total_frames: u64,
    pub fps: f64,
    pub duration_s: f64,
}

impl VideoHandle {
    /// Duration is derived as `total_frames / fps`.
    pub fn new(path: impl Into<String>, total_frames: u64, fps: f64) -> Result<Self, MediaError> {
        if total_frames == 0 {
            return Err(MediaError::ZeroFrames);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(MediaError::InvalidMetadata(format!("fps must be positive, got {fps}")));
        }
        Ok(VideoHandle { path: path.into(), total_frames, fps, duration_s: total_frames as f64 / fps })
    }

    /// `[0, total_frames - 1]`.
    pub fn full_range(&self) -> FrameRange {
        FrameRange { start_frame: 0, end_frame: self.total_frames - 1 }
    }

    pub fn last_frame(&self) -> u64 {
        self.total_frames - 1
    }

    /// Frame index for a time offset, rounding halves up.
    pub fn seconds_to_frame(&self, seconds: f64) -> u64 {
        let scaled = seconds.max(0.0) * self.fps;
        // Snap values within float noise of a half so 2.5-style products round up.
        (scaled + 0.5 + 1e-9).floor() as u64
    }
}

/// Inclusive range of global frame indices.
#[allow(clippy::len_without_is_empty)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRange {
    pub start_frame: u64,
    pub end_frame: u64,
}

impl FrameRange {
    pub fn new(start_frame: u64, end_frame: u64) -> Result<Self, MediaError> {
        if start_frame > end_frame {
            return Err(MediaError::MalformedRange { start: start_frame, end: end_frame });
        }
        Ok(FrameRange { start_frame, end_frame })
    }

    /// Number of frames covered (always at least 1).
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn contains(&self, index: u64) -> bool {
        (self.start_frame..=self.end_frame).contains(&index)
    }

    pub fn check_within(&self, handle: &VideoHandle) -> Result<(), MediaError> {
        if self.end_frame >= handle.total_frames {
            return Err(MediaError::RangeOutOfBounds {
                start: self.start_frame,
                end: self.end_frame,
                total_frames: handle.total_frames,
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for FrameRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start_frame, self.end_frame)
    }
}

/// One extracted frame, resized to its short-edge class.
#[derive(Debug, Clone)]
pub struct FrameImage {
    pub global_index: u64,
    pub pixels: RgbImage,
    pub short_edge: ShortEdge,
}

/// Decodes `indices`, resizes each so its short side is `short_edge` and
/// stamps the global index at the top-left.
pub fn extract_frames(
    source: &dyn MediaSource,
    handle: &VideoHandle,
    indices: &[u64],
    short_edge: u32,
) -> Result<Vec<FrameImage>, MediaError> {
    let edge = ShortEdge::try_from(short_edge)?;
    indices
        .iter()
        .map(|&index| {
            if index >= handle.total_frames {
                return Err(MediaError::Decode { index, reason: "index past end of stream".into() });
            }
            let native = source.decode_frame(handle, index)?;
            let pixels = resize_short_edge(native, edge);
            Ok(overlay_index(FrameImage { global_index: index, pixels, short_edge: edge }))
        })
        .collect()
}

/// Audio for a set of frame ranges, at most [`AUDIO_BYTE_CAP`] bytes.
#[derive(Debug, Clone)]
pub struct AudioSegment {
    /// Ranges actually covered; shorter than requested when truncated.
    pub ranges: Vec<FrameRange>,
    pub requested: Vec<FrameRange>,
    pub bytes: Vec<u8>,
    pub encoding: String,
    pub bitrate_bps: u32,
    /// Set when bitrate reduction alone could not fit the cap and the tail
    /// was dropped.
    pub truncated: bool,
}

impl AudioSegment {
    pub fn byte_size(&self) -> u64 {
        self.bytes.len() as u64
    }

    /// Total duration covered, in seconds.
    pub fn covered_seconds(&self, fps: f64) -> f64 {
        self.ranges.iter().map(|r| r.len()).sum::<u64>() as f64 / fps
    }
}

/// Re-encoding ladder for audio that exceeds the byte cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AudioPolicy {
    pub cap_bytes: u64,
    pub initial_bitrate_bps: u32,
    pub min_bitrate_bps: u32,
}

impl Default for AudioPolicy {
    fn default() -> Self {
        AudioPolicy { cap_bytes: AUDIO_BYTE_CAP, initial_bitrate_bps: 256_000, min_bitrate_bps: 16_000 }
    }
}

/// Extracts audio under the default 25 MiB policy.
pub fn extract_audio(
    source: &dyn MediaSource,
    handle: &VideoHandle,
    ranges: &[FrameRange],
) -> Result<AudioSegment, MediaError> {
    extract_audio_with(source, handle, ranges, AudioPolicy::default())
}

/// Encodes audio for `ranges`, halving the bitrate until the result fits
/// `policy.cap_bytes`. If the floor bitrate still does not fit, trailing
/// frames are dropped and the segment is flagged as truncated.
pub fn extract_audio_with(
    source: &dyn MediaSource,
    handle: &VideoHandle,
    ranges: &[FrameRange],
    policy: AudioPolicy,
) -> Result<AudioSegment, MediaError> {
    if ranges.is_empty() {
        return Err(MediaError::EmptyInput("range list"));
    }
    for r in ranges {
        r.check_within(handle)?;
    }

    let mut bitrate = policy.initial_bitrate_bps.max(policy.min_bitrate_bps);
    let mut encoded = source.encode_audio(handle, ranges, bitrate)?;
    while encoded.bytes.len() as u64 > policy.cap_bytes && bitrate / 2 >= policy.min_bitrate_bps {
        bitrate /= 2;
        encoded = source.encode_audio(handle, ranges, bitrate)?;
    }
    if encoded.bytes.len() as u64 <= policy.cap_bytes {
        return Ok(AudioSegment {
            ranges: ranges.to_vec(),
            requested: ranges.to_vec(),
            bytes: encoded.bytes,
            encoding: encoded.encoding,
            bitrate_bps: bitrate,
            truncated: false,
        });
    }

    // Shrink the covered span from the tail in proportion to the overshoot.
    let mut kept = ranges.to_vec();
    for _ in 0..8 {
        let frames: u64 = kept.iter().map(|r| r.len()).sum();
        let ratio = policy.cap_bytes as f64 / encoded.bytes.len() as f64;
        let target = ((frames as f64 * ratio * 0.98).floor() as u64).clamp(1, frames.saturating_sub(1).max(1));
        kept = keep_leading_frames(&kept, target);
        encoded = source.encode_audio(handle, &kept, bitrate)?;
        if encoded.bytes.len() as u64 <= policy.cap_bytes {
            break;
        }
    }
    if encoded.bytes.len() as u64 > policy.cap_bytes {
        encoded.bytes.truncate(policy.cap_bytes as usize);
    }
    Ok(AudioSegment {
        ranges: kept,
        requested: ranges.to_vec(),
        bytes: encoded.bytes,
        encoding: encoded.encoding,
        bitrate_bps: bitrate,
        truncated: true,
    })
}

/// The first `count` frames of the concatenation of `ranges`.
fn keep_leading_frames(ranges: &[FrameRange], count: u64) -> Vec<FrameRange> {
    let mut left = count;
    let mut out = Vec::new();
    for r in ranges {
        if left == 0 {
            break;
        }
        let take = r.len().min(left);
        out.push(FrameRange { start_frame: r.start_frame, end_frame: r.start_frame + take - 1 });
        left -= take;
    }
    out
}
