//! Media decoding adapters.
//!
//! [`MediaSource`] hides where frames and audio come from. Two adapters ship:
//! [`FfmpegSource`] shells out to `ffprobe`/`ffmpeg`, and [`SyntheticVideo`]
//! generates frames procedurally so tests can check index bookkeeping without
//! real media.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{FrameRange, MediaError, VideoHandle};

/// Audio bytes produced by an adapter for a set of frame ranges.
#[derive(Debug, Clone)]
pub struct EncodedAudio {
    pub bytes: Vec<u8>,
    /// Container/codec tag, e.g. `wav/pcm_s16le@16000` or `mp3`.
    pub encoding: String,
}

pub trait MediaSource: Send + Sync {
    /// Locator this source was opened from.
    fn locator(&self) -> &str;

    fn probe(&self) -> Result<VideoHandle, MediaError>;

    /// Decodes one frame at native resolution.
    fn decode_frame(&self, handle: &VideoHandle, index: u64) -> Result<RgbImage, MediaError>;

    /// Concatenated audio for `ranges`, encoded at roughly `bitrate_bps`.
    /// Fails with [`MediaError::NoAudioTrack`] when the media has no audio.
    fn encode_audio(
        &self,
        handle: &VideoHandle,
        ranges: &[FrameRange],
        bitrate_bps: u32,
    ) -> Result<EncodedAudio, MediaError>;
}

/// Opens a locator. `synthetic:...` locators build a [`SyntheticVideo`];
/// anything else is treated as a file path for [`FfmpegSource`].
pub fn open_source(locator: &str) -> Result<Box<dyn MediaSource>, MediaError> {
    if locator.starts_with(SyntheticVideo::SCHEME) {
        Ok(Box::new(SyntheticVideo::parse(locator)?))
    } else {
        Ok(Box::new(FfmpegSource::new(locator)))
    }
}

/// Probes the media at `locator`.
pub fn probe_video(locator: &str) -> Result<VideoHandle, MediaError> {
    open_source(locator)?.probe()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticAudio {
    /// No audio stream at all.
    Absent,
    /// An audio stream carrying only zeros.
    Silent,
    /// Deterministic pseudo-random samples.
    Noise,
}

/// Procedural video whose frames are a flat colour encoding the frame index
/// (red = bits 0..8, green = bits 8..16, blue = bits 16..24).
///
/// Locator syntax: `synthetic:<frames>:<fps>[:<W>x<H>][:noaudio|:silent]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub total_frames: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub audio: SyntheticAudio,
    #[serde(skip)]
    locator: String,
}

impl SyntheticVideo {
    pub const SCHEME: &'static str = "synthetic:";

    /// 4:3 frames whose short edge already matches the mosaic size.
    pub fn new(total_frames: u64, fps: f64) -> Self {
        Self::with_options(total_frames, fps, 341, 256, SyntheticAudio::Noise)
    }

    pub fn with_options(total_frames: u64, fps: f64, width: u32, height: u32, audio: SyntheticAudio) -> Self {
        let mut locator = format!("{}{}:{}:{}x{}", Self::SCHEME, total_frames, fps, width, height);
        match audio {
            SyntheticAudio::Absent => locator.push_str(":noaudio"),
            SyntheticAudio::Silent => locator.push_str(":silent"),
            SyntheticAudio::Noise => {}
        }
        SyntheticVideo { total_frames, fps, width, height, audio, locator }
    }

    pub fn parse(locator: &str) -> Result<Self, MediaError> {
        let bad = || MediaError::Unreadable(format!("bad synthetic locator `{locator}`"));
        let body = locator.strip_prefix(Self::SCHEME).ok_or_else(bad)?;
        let mut parts = body.split(':');
        let total_frames: u64 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let fps: f64 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let (mut width, mut height, mut audio) = (341, 256, SyntheticAudio::Noise);
        for part in parts {
            match part {
                "noaudio" => audio = SyntheticAudio::Absent,
                "silent" => audio = SyntheticAudio::Silent,
                dims => {
                    let (w, h) = dims.split_once('x').ok_or_else(bad)?;
                    width = w.parse().map_err(|_| bad())?;
                    height = h.parse().map_err(|_| bad())?;
                }
            }
        }
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(Self::with_options(total_frames, fps, width, height, audio))
    }

    pub fn color_for_index(index: u64) -> Rgb<u8> {
        Rgb([(index & 0xFF) as u8, (index >> 8 & 0xFF) as u8, (index >> 16 & 0xFF) as u8])
    }

    /// Inverse of [`Self::color_for_index`].
    pub fn index_from_color(px: Rgb<u8>) -> u64 {
        px.0[0] as u64 | (px.0[1] as u64) << 8 | (px.0[2] as u64) << 16
    }
}

impl MediaSource for SyntheticVideo {
    fn locator(&self) -> &str {
        &self.locator
    }

    fn probe(&self) -> Result<VideoHandle, MediaError> {
        VideoHandle::new(&self.locator, self.total_frames, self.fps)
    }

    fn decode_frame(&self, handle: &VideoHandle, index: u64) -> Result<RgbImage, MediaError> {
        if index >= handle.total_frames {
            return Err(MediaError::Decode { index, reason: "index past end of stream".into() });
        }
        Ok(RgbImage::from_pixel(self.width, self.height, Self::color_for_index(index)))
    }

    fn encode_audio(
        &self,
        handle: &VideoHandle,
        ranges: &[FrameRange],
        bitrate_bps: u32,
    ) -> Result<EncodedAudio, MediaError> {
        if self.audio == SyntheticAudio::Absent {
            return Err(MediaError::NoAudioTrack);
        }
        let sample_rate = (bitrate_bps / 16).max(1);
        let frames: u64 = ranges.iter().map(|r| r.len()).sum();
        let samples = (frames as f64 / handle.fps * sample_rate as f64).round() as u64;
        let data_len = samples * 2;

        let mut bytes = Vec::with_capacity(44 + data_len as usize);
        write_wav_header(&mut bytes, sample_rate, data_len as u32);
        match self.audio {
            SyntheticAudio::Silent => bytes.resize(44 + data_len as usize, 0),
            _ => {
                let seed = ranges.first().map_or(0, |r| r.start_frame) ^ 0x9E37_79B9_7F4A_7C15;
                fill_noise(&mut bytes, data_len as usize, seed);
            }
        }
        Ok(EncodedAudio { bytes, encoding: format!("wav/pcm_s16le@{sample_rate}") })
    }
}

fn write_wav_header(out: &mut Vec<u8>, sample_rate: u32, data_len: u32) {
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
}

fn fill_noise(out: &mut Vec<u8>, len: usize, seed: u64) {
    let mut state = seed | 1;
    let start = out.len();
    out.resize(start + len, 0);
    for chunk in out[start..].chunks_mut(8) {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let bytes = state.to_le_bytes();
        chunk.copy_from_slice(&bytes[..chunk.len()]);
    }
}

/// Decodes through the system `ffprobe`/`ffmpeg` binaries.
pub struct FfmpegSource {
    path: String,
    // One decoder process at a time per file.
    lock: Mutex<()>,
}

impl FfmpegSource {
    pub fn new(path: impl Into<String>) -> Self {
        FfmpegSource { path: path.into(), lock: Mutex::new(()) }
    }

    /// Runs a decoder process. A missing binary is `Unreadable`; a failing
    /// process is mapped through `on_failure`.
    fn run_with(
        &self,
        program: &str,
        args: &[String],
        on_failure: impl FnOnce(String) -> MediaError,
    ) -> Result<Vec<u8>, MediaError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let output = Command::new(program)
            .args(args)
            .output()
            .map_err(|e| MediaError::Unreadable(format!("cannot run {program}: {e}")))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(on_failure(format!("{program} failed: {}", stderr.trim())));
        }
        Ok(output.stdout)
    }

    fn run(&self, program: &str, args: &[String]) -> Result<Vec<u8>, MediaError> {
        self.run_with(program, args, MediaError::Unreadable)
    }

    fn has_audio(&self) -> Result<bool, MediaError> {
        let out = self.run(
            "ffprobe",
            &[
                "-v".into(),
                "error".into(),
                "-select_streams".into(),
                "a".into(),
                "-show_entries".into(),
                "stream=index".into(),
                "-of".into(),
                "csv=p=0".into(),
                self.path.clone(),
            ],
        )?;
        Ok(!String::from_utf8_lossy(&out).trim().is_empty())
    }
}

#[derive(Deserialize)]
struct ProbeOutput {
    #[serde(default)]
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Deserialize)]
struct ProbeStream {
    codec_type: Option<String>,
    avg_frame_rate: Option<String>,
    r_frame_rate: Option<String>,
    nb_frames: Option<String>,
    nb_read_packets: Option<String>,
}

#[derive(Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
}

fn parse_rate(rate: &str) -> Option<f64> {
    let (num, den) = rate.split_once('/').unwrap_or((rate, "1"));
    let (num, den): (f64, f64) = (num.parse().ok()?, den.parse().ok()?);
    (den > 0.0 && num > 0.0).then_some(num / den)
}

/// Builds a handle from `ffprobe -of json` output.
pub(crate) fn handle_from_probe_json(path: &str, json: &[u8]) -> Result<VideoHandle, MediaError> {
    let probe: ProbeOutput =
        serde_json::from_slice(json).map_err(|e| MediaError::Unreadable(format!("unparseable probe output: {e}")))?;
    let stream = probe
        .streams
        .iter()
        .find(|s| s.codec_type.as_deref().unwrap_or("video") == "video")
        .ok_or(MediaError::NoVideoTrack)?;
    let fps = stream
        .avg_frame_rate
        .as_deref()
        .and_then(parse_rate)
        .or_else(|| stream.r_frame_rate.as_deref().and_then(parse_rate))
        .ok_or(MediaError::NoVideoTrack)?;
    let counted = stream.nb_read_packets.as_deref().or(stream.nb_frames.as_deref()).and_then(|n| n.parse::<u64>().ok());
    let total_frames = match counted {
        Some(n) => n,
        None => {
            let duration: f64 =
                probe.format.and_then(|f| f.duration).and_then(|d| d.parse().ok()).ok_or(MediaError::ZeroFrames)?;
            (duration * fps).round() as u64
        }
    };
    VideoHandle::new(path, total_frames, fps)
}

impl MediaSource for FfmpegSource {
    fn locator(&self) -> &str {
        &self.path
    }

    fn probe(&self) -> Result<VideoHandle, MediaError> {
        if !Path::new(&self.path).exists() {
            return Err(MediaError::Unreadable(format!("no such file `{}`", self.path)));
        }
        // ffprobe rejecting an existing file means there is nothing decodable.
        let out = self.run_with(
            "ffprobe",
            &[
                "-v".into(),
                "error".into(),
                "-select_streams".into(),
                "v:0".into(),
                "-count_packets".into(),
                "-show_entries".into(),
                "stream=codec_type,avg_frame_rate,r_frame_rate,nb_frames,nb_read_packets:format=duration".into(),
                "-of".into(),
                "json".into(),
                self.path.clone(),
            ],
            |_| MediaError::NoVideoTrack,
        )?;
        handle_from_probe_json(&self.path, &out)
    }

    fn decode_frame(&self, handle: &VideoHandle, index: u64) -> Result<RgbImage, MediaError> {
        let seconds = index as f64 / handle.fps;
        let out = self
            .run(
                "ffmpeg",
                &[
                    "-v".into(),
                    "error".into(),
                    "-ss".into(),
                    format!("{seconds:.6}"),
                    "-i".into(),
                    self.path.clone(),
                    "-frames:v".into(),
                    "1".into(),
                    "-f".into(),
                    "image2pipe".into(),
                    "-vcodec".into(),
                    "png".into(),
                    "-".into(),
                ],
            )
            .map_err(|e| MediaError::Decode { index, reason: e.to_string() })?;
        image::load_from_memory(&out)
            .map(|img| img.to_rgb8())
            .map_err(|e| MediaError::Decode { index, reason: e.to_string() })
    }

    fn encode_audio(
        &self,
        handle: &VideoHandle,
        ranges: &[FrameRange],
        bitrate_bps: u32,
    ) -> Result<EncodedAudio, MediaError> {
        if !self.has_audio()? {
            return Err(MediaError::NoAudioTrack);
        }
        // MP3 frames concatenate into a valid stream.
        let mut bytes = Vec::new();
        for range in ranges {
            let start = range.start_frame as f64 / handle.fps;
            let duration = range.len() as f64 / handle.fps;
            bytes.extend(self.run(
                "ffmpeg",
                &[
                    "-v".into(),
                    "error".into(),
                    "-ss".into(),
                    format!("{start:.6}"),
                    "-t".into(),
                    format!("{duration:.6}"),
                    "-i".into(),
                    self.path.clone(),
                    "-vn".into(),
                    "-ac".into(),
                    "1".into(),
                    "-b:a".into(),
                    bitrate_bps.to_string(),
                    "-f".into(),
                    "mp3".into(),
                    "-".into(),
                ],
            )?);
        }
        Ok(EncodedAudio { bytes, encoding: "mp3".into() })
    }
}
