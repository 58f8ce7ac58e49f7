//! Dense frame containers and the raw `TTDV` video file format.
//!
//! A raw video file is the 4-byte magic `TTDV`, five little-endian `u32`
//! fields `{version = 1, frames, channels, height, width}`, then
//! `frames * channels * height * width` little-endian `f32` samples in
//! frame-major, channel-planar, row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, invalid, Error, Result};

pub const VIDEO_MAGIC: &[u8; 4] = b"TTDV";
pub const VIDEO_VERSION: u32 = 1;

/// One frame, channel-planar (`channels × height × width`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return invalid(format!(
                "image data has {} samples, expected {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            ));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// ITU-R 601 luma. Single-channel images are returned as-is.
    pub fn luma(&self) -> Vec<f32> {
        let n = self.height * self.width;
        if self.channels < 3 {
            return self.data[..n].to_vec();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        (0..n).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect()
    }
}

/// A clip or full video: `frames × channels × height × width`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Video {
    pub fn new(frames: usize, channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 {
            return invalid("video must have at least one frame");
        }
        if data.len() != frames * channels * height * width {
            return invalid(format!(
                "video data has {} samples, expected {}x{}x{}x{}",
                data.len(),
                frames,
                channels,
                height,
                width
            ));
        }
        Ok(Self { frames, channels, height, width, data })
    }

    pub fn from_frames(frames: &[Image]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::InvalidArgument("no frames".into()))?;
        let mut data = Vec::with_capacity(frames.len() * first.data.len());
        for f in frames {
            if !f.same_shape(first) {
                return invalid("frames differ in shape");
            }
            data.extend_from_slice(&f.data);
        }
        Ok(Self { frames: frames.len(), channels: first.channels, height: first.height, width: first.width, data })
    }

    #[inline]
    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn frame_image(&self, t: usize) -> Image {
        Image { channels: self.channels, height: self.height, width: self.width, data: self.frame(t).to_vec() }
    }

    pub fn frame_images(&self) -> Vec<Image> {
        (0..self.frames).map(|t| self.frame_image(t)).collect()
    }

    /// Frames `start..start + len` as a new video.
    pub fn slice(&self, start: usize, len: usize) -> Result<Video> {
        if len == 0 || start + len > self.frames {
            return invalid(format!("frame range {}..{} outside video of {} frames", start, start + len, self.frames));
        }
        let n = self.frame_len();
        Ok(Video {
            frames: len,
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + len) * n].to_vec(),
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(VIDEO_MAGIC)?;
        for v in [VIDEO_VERSION, self.frames as u32, self.channels as u32, self.height as u32, self.width as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Video> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated video header".into()))?;
        if &magic != VIDEO_MAGIC {
            return format_err("bad video magic");
        }
        let mut header = [0u32; 5];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated video header".into()))?;
            *h = u32::from_le_bytes(b);
        }
        let [version, frames, channels, height, width] = header.map(|v| v as usize);
        if version != VIDEO_VERSION as usize {
            return format_err(format!("unsupported video version {version}"));
        }
        let count = frames
            .checked_mul(channels)
            .and_then(|v| v.checked_mul(height))
            .and_then(|v| v.checked_mul(width))
            .filter(|&c| c > 0 && c <= (1 << 31))
            .ok_or_else(|| Error::Format("implausible video dimensions".into()))?;
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated video payload".into()))?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Video::new(frames, channels, height, width, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Video> {
        let f = File::open(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
        Video::read_from(&mut BufReader::new(f))
    }
}

/// Peak signal-to-noise ratio in dB for signals in `[0, 1]`.
pub fn psnr(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}
