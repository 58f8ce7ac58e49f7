//! Dense optical flow and optical flow modulation (OFM).
//!
//! A motion-guided frame is `(frame ⊙ w + frame) / 2`, where `w` is the
//! per-frame max-normalized velocity norm of the flow from the frame to its
//! successor, broadcast over channels.

mod horn_schunck;
pub mod viz;

pub use horn_schunck::HornSchunck;

use crate::corpus::{ClipSample, Image, Video};
use crate::error::{invalid, Result};

/// Below this maximum velocity a frame is treated as static and gets an
/// all-zero weight map.
pub const STATIC_EPS: f32 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    /// Smoothness weight.
    pub alpha: f32,
    pub iters: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { alpha: 1.0, iters: 100 }
    }
}

/// Per-pixel velocity in pixels per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, u: vec![0.0; height * width], v: vec![0.0; height * width] }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Mean endpoint error against a constant flow, ignoring a `margin`-pixel
    /// border.
    pub fn mean_endpoint_error(&self, truth: (f32, f32), margin: usize) -> f32 {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let i = y * self.width + x;
                sum += f64::from((self.u[i] - truth.0).hypot(self.v[i] - truth.1));
                n += 1;
            }
        }
        (sum / n.max(1) as f64) as f32
    }
}

/// Per-pixel weight in `[0, 1]`, shape `height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub height: usize,
    pub width: usize,
    pub w: Vec<f32>,
}

/// Any dense flow provider. The default sequence method runs pairwise.
pub trait FlowEstimator: Sync {
    fn estimate(&self, a: &Image, b: &Image) -> Result<FlowField>;

    /// Flow for every consecutive pair of `frames`.
    fn estimate_sequence(&self, frames: &[Image]) -> Result<Vec<FlowField>> {
        frames.windows(2).map(|p| self.estimate(&p[0], &p[1])).collect()
    }
}

pub fn estimate_flow(a: &Image, b: &Image, params: FlowParams) -> Result<FlowField> {
    HornSchunck::new(params).estimate(a, b)
}

pub fn velocity_norm(flow: &FlowField) -> Vec<f32> {
    flow.u.iter().zip(&flow.v).map(|(u, v)| (u * u + v * v).sqrt()).collect()
}

/// Divide by the frame maximum; static frames (max below `eps`) map to zero.
pub fn normalize_weight(norms: &[f32], height: usize, width: usize, eps: f32) -> WeightMap {
    let max = norms.iter().copied().fold(0.0f32, f32::max);
    let w = if max >= eps { norms.iter().map(|n| n / max).collect() } else { vec![0.0; norms.len()] };
    WeightMap { height, width, w }
}

pub fn weight_map(flow: &FlowField) -> WeightMap {
    normalize_weight(&velocity_norm(flow), flow.height, flow.width, STATIC_EPS)
}

/// `(frame ⊙ w + frame) / 2` with `w` broadcast over channels.
pub fn ofm(frame: &Image, weight: &WeightMap) -> Result<Image> {
    if frame.height != weight.height || frame.width != weight.width {
        return invalid(format!(
            "weight map {}x{} does not match frame {}x{}",
            weight.height, weight.width, frame.height, frame.width
        ));
    }
    let plane = frame.height * frame.width;
    let data = frame.data.iter().enumerate().map(|(i, &x)| (x * weight.w[i % plane] + x) * 0.5).collect();
    Ok(Image { channels: frame.channels, height: frame.height, width: frame.width, data })
}

/// Motion-guided frames for every frame that has a successor in `video`
/// (`frames - 1` outputs).
pub fn ofm_video(video: &Video, estimator: &dyn FlowEstimator) -> Result<Video> {
    if video.frames < 2 {
        return invalid("need at least two frames for flow");
    }
    let frames = video.frame_images();
    let flows = estimator.estimate_sequence(&frames)?;
    let out = frames.iter().zip(&flows).map(|(f, flow)| ofm(f, &weight_map(flow))).collect::<Result<Vec<_>>>()?;
    Video::from_frames(&out)
}

/// The `F` motion-guided frames of an `F + 1` frame clip.
pub fn ofm_clip(clip: &ClipSample, f: usize, estimator: &dyn FlowEstimator) -> Result<Video> {
    if clip.frames.frames != f + 1 {
        return invalid(format!("clip has {} frames, expected {}", clip.frames.frames, f + 1));
    }
    ofm_video(&clip.frames, estimator)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_norm_arithmetic() {
        let f = FlowField { height: 1, width: 2, u: vec![3.0, 0.0], v: vec![4.0, 0.0] };
        assert_eq!(velocity_norm(&f), vec![5.0, 0.0]);
        assert!(velocity_norm(&FlowField::zeros(3, 3)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weight_normalization() {
        let w = normalize_weight(&[0.0, 2.0, 4.0, 4.0], 2, 2, STATIC_EPS);
        assert_eq!(w.w, vec![0.0, 0.5, 1.0, 1.0]);
        let z = normalize_weight(&[0.0; 4], 2, 2, STATIC_EPS);
        assert_eq!(z.w, vec![0.0; 4]);
    }

    #[test]
    fn ofm_arithmetic() {
        let frame = Image::filled(3, 1, 1, 0.8);
        let w = WeightMap { height: 1, width: 1, w: vec![0.5] };
        let out = ofm(&frame, &w).unwrap();
        assert!(out.data.iter().all(|&v| (v - 0.6).abs() < 1e-7));
        let bad = WeightMap { height: 2, width: 1, w: vec![0.5; 2] };
        assert!(ofm(&frame, &bad).is_err());
    }

    #[test]
    fn static_clip_halves_frames() {
        let img = Image::new(3, 8, 8, (0..192).map(|i| (i % 17) as f32 / 16.0).collect()).unwrap();
        let video = Video::from_frames(&vec![img.clone(); 5]).unwrap();
        let clip = ClipSample { frames: video, start_index: 0, source: 0 };
        let out = ofm_clip(&clip, 4, &HornSchunck::default()).unwrap();
        assert_eq!(out.frames, 4);
        for t in 0..4 {
            for (a, b) in out.frame(t).iter().zip(&img.data) {
                assert_eq!(*a, b / 2.0);
            }
        }
        assert!(ofm_clip(&clip, 5, &HornSchunck::default()).is_err());
    }
}
