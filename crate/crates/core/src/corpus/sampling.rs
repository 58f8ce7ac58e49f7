//! Clip sampling for training and evaluation, and test-time segmentation.

use rand::Rng;

use super::video::Video;
use crate::error::{invalid, Result};

/// Default maximum test segment length ("fewer than 30 frames").
pub const MAX_SEGMENT_LEN: usize = 29;

/// `F + 1` consecutive frames: `F` for the detector plus one extra frame so
/// the last frame also has a forward flow.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub frames: Video,
    pub start_index: usize,
    pub source: u32,
}

fn check_len(len: usize, f: usize) -> Result<()> {
    if f == 0 {
        return invalid("clip length F must be positive");
    }
    if len < f + 1 {
        return invalid(format!("video of {len} frames cannot hold a clip of {} frames", f + 1));
    }
    Ok(())
}

/// Start index drawn uniformly from `[0, len - F - 1]`.
pub fn training_start(len: usize, f: usize, rng: &mut impl Rng) -> Result<usize> {
    check_len(len, f)?;
    Ok(rng.random_range(0..=len - f - 1))
}

pub fn sample_training_clip(video: &Video, f: usize, source: u32, rng: &mut impl Rng) -> Result<ClipSample> {
    let start = training_start(video.frames, f, rng)?;
    Ok(ClipSample { frames: video.slice(start, f + 1)?, start_index: start, source })
}

/// `k` evenly spaced, deterministic start indices over `[0, len - F - 1]`,
/// deduplicated in order.
pub fn eval_starts(len: usize, f: usize, k: usize) -> Result<Vec<usize>> {
    check_len(len, f)?;
    if k == 0 {
        return invalid("need at least one evaluation clip");
    }
    let range = len - f - 1;
    let mut starts: Vec<usize> = if k == 1 {
        vec![0]
    } else {
        (0..k).map(|i| (i as f64 * range as f64 / (k - 1) as f64).round() as usize).collect()
    };
    starts.dedup();
    Ok(starts)
}

pub fn sample_eval_clips(video: &Video, f: usize, k: usize, source: u32) -> Result<Vec<ClipSample>> {
    eval_starts(video.frames, f, k)?
        .into_iter()
        .map(|s| Ok(ClipSample { frames: video.slice(s, f + 1)?, start_index: s, source }))
        .collect()
}

/// `(start, len)` of contiguous test segments: `ceil(frames / max_len)`
/// balanced pieces (longer ones first), with any piece shorter than `F + 1`
/// merged into its predecessor.
pub fn segment_bounds(frames: usize, max_len: usize, f: usize) -> Result<Vec<(usize, usize)>> {
    check_len(frames, f)?;
    if max_len == 0 {
        return invalid("segment length must be positive");
    }
    let k = frames.div_ceil(max_len);
    let (base, rem) = (frames / k, frames % k);
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < rem);
        match out.last_mut() {
            Some(last) if len < f + 1 => last.1 += len,
            _ => out.push((start, len)),
        }
        start += len;
    }
    if out.len() > 1 && out[0].1 < f + 1 {
        let first = out.remove(0);
        out[0] = (0, first.1 + out[0].1);
    }
    Ok(out)
}

pub fn segment_test_video(video: &Video, max_len: usize, f: usize) -> Result<Vec<Video>> {
    segment_bounds(video.frames, max_len, f)?.into_iter().map(|(s, l)| video.slice(s, l)).collect()
}
