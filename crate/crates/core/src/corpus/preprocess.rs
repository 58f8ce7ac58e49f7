//! Center crop to a square followed by bilinear resize.

use super::video::{Image, Video};
use crate::error::{invalid, Result};

/// Center-crop `frame` to its shorter side, then bilinearly resize to
/// `target × target`.
pub fn preprocess(frame: &Image, target: usize) -> Result<Image> {
    let side = frame.height.min(frame.width);
    if side < 2 {
        return invalid(format!("frame {}x{} too small to preprocess", frame.height, frame.width));
    }
    if target == 0 {
        return invalid("target size must be positive");
    }
    let cropped = center_crop(frame, side);
    Ok(resize_bilinear(&cropped, target, target))
}

pub fn preprocess_video(video: &Video, target: usize) -> Result<Video> {
    let frames = video.frame_images().iter().map(|f| preprocess(f, target)).collect::<Result<Vec<_>>>()?;
    Video::from_frames(&frames)
}

pub fn center_crop(frame: &Image, side: usize) -> Image {
    let y0 = (frame.height - side) / 2;
    let x0 = (frame.width - side) / 2;
    let mut data = Vec::with_capacity(frame.channels * side * side);
    for c in 0..frame.channels {
        for y in 0..side {
            let row = (c * frame.height + y0 + y) * frame.width + x0;
            data.extend_from_slice(&frame.data[row..row + side]);
        }
    }
    Image { channels: frame.channels, height: side, width: side, data }
}

/// Half-pixel-centred bilinear resampling with edge clamping. A scale of one
/// reproduces the input exactly.
pub fn resize_bilinear(frame: &Image, out_h: usize, out_w: usize) -> Image {
    if out_h == frame.height && out_w == frame.width {
        return frame.clone();
    }
    let sy = frame.height as f32 / out_h as f32;
    let sx = frame.width as f32 / out_w as f32;
    let taps = |o: usize, s: f32, len: usize| {
        let p = ((o as f32 + 0.5) * s - 0.5).clamp(0.0, (len - 1) as f32);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, p - i0 as f32)
    };
    let xs: Vec<_> = (0..out_w).map(|x| taps(x, sx, frame.width)).collect();
    let mut data = Vec::with_capacity(frame.channels * out_h * out_w);
    for c in 0..frame.channels {
        let plane = frame.plane(c);
        for y in 0..out_h {
            let (y0, y1, fy) = taps(y, sy, frame.height);
            let (r0, r1) = (&plane[y0 * frame.width..], &plane[y1 * frame.width..]);
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                data.push((top + (bot - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    Image { channels: frame.channels, height: out_h, width: out_w, data }
}
