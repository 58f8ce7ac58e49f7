//! Audited access to manifest videos, with motion-guided frames cached per
//! video.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::corpus::{Label, Manifest, Split, Video};
use crate::error::{invalid, Error, Result};
use crate::flow::{ofm_video, FlowEstimator, FlowParams, HornSchunck};
use crate::model::ClipInput;

/// Why a video is being read. Each purpose may only touch one split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Train,
    Validate,
    Test,
}

impl Purpose {
    pub fn split(self) -> Split {
        match self {
            Purpose::Train => Split::Train,
            Purpose::Validate => Split::Val,
            Purpose::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Access {
    pub video_id: u32,
    pub split: Split,
    pub purpose: Purpose,
}

/// A video together with its `frames - 1` motion-guided frames. Because the
/// flow at `t` depends only on frames `t` and `t + 1`, clips and segments
/// can take their motion frames straight from this whole-video result.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub video_id: u32,
    pub label: Label,
    /// Source pair when loaded through a manifest.
    pub pair_id: Option<u32>,
    pub video: Video,
    pub motion: Video,
}

impl Prepared {
    pub fn new(video_id: u32, label: Label, video: Video, estimator: &dyn FlowEstimator) -> Result<Self> {
        let motion = ofm_video(&video, estimator)?;
        Ok(Self { video_id, label, pair_id: None, video, motion })
    }

    pub fn frames(&self) -> usize {
        self.video.frames
    }

    /// Network input for the clip of `f + 1` frames starting at `start`.
    pub fn clip_input(&self, start: usize, f: usize) -> Result<ClipInput<'_, f32>> {
        if start + f + 1 > self.video.frames {
            return invalid(format!("clip {}..{} outside video of {} frames", start, start + f + 1, self.video.frames));
        }
        let n = self.video.frame_len();
        Ok(ClipInput {
            raw: &self.video.data[start * n..(start + f) * n],
            motion: &self.motion.data[start * n..(start + f) * n],
            height: self.video.height,
            width: self.video.width,
        })
    }

    /// The frames `start..start + len` as a standalone video.
    pub fn segment(&self, start: usize, len: usize) -> Result<Prepared> {
        if len < 2 {
            return invalid("segment needs at least two frames");
        }
        Ok(Prepared {
            video_id: self.video_id,
            label: self.label,
            pair_id: self.pair_id,
            video: self.video.slice(start, len)?,
            motion: self.motion.slice(start, len - 1)?,
        })
    }
}

pub struct VideoStore {
    manifest: Manifest,
    estimator: HornSchunck,
    cache: Mutex<HashMap<u32, Arc<Prepared>>>,
    audit: Mutex<Vec<Access>>,
}

impl VideoStore {
    pub fn new(manifest: Manifest, flow: FlowParams) -> Self {
        Self {
            manifest,
            estimator: HornSchunck::new(flow),
            cache: Mutex::new(HashMap::new()),
            audit: Mutex::new(Vec::new()),
        }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Loads a video for `purpose`. Reading a record whose split does not
    /// belong to the purpose is refused before any pixel is touched.
    pub fn load(&self, video_id: u32, purpose: Purpose) -> Result<Arc<Prepared>> {
        let rec = self
            .manifest
            .record(video_id)
            .ok_or_else(|| Error::Missing(format!("video {video_id} not in manifest")))?;
        if rec.split != purpose.split() {
            return invalid(format!(
                "video {video_id} is in the {} split and cannot be read for {purpose:?}",
                rec.split
            ));
        }
        self.audit.lock().unwrap().push(Access { video_id, split: rec.split, purpose });
        if let Some(p) = self.cache.lock().unwrap().get(&video_id) {
            return Ok(Arc::clone(p));
        }
        let video = Video::load(&self.manifest.video_path(rec))?;
        let prepared =
            Prepared { pair_id: Some(rec.pair_id), ..Prepared::new(video_id, rec.label, video, &self.estimator)? };
        let prepared = Arc::new(prepared);
        self.cache.lock().unwrap().insert(video_id, Arc::clone(&prepared));
        Ok(prepared)
    }

    /// Loads several videos in parallel, preserving the order of `ids`.
    pub fn load_many(&self, ids: &[u32], purpose: Purpose) -> Result<Vec<Arc<Prepared>>> {
        ids.par_iter().map(|&id| self.load(id, purpose)).collect()
    }

    /// Every successful split check so far, in access order.
    pub fn audit_log(&self) -> Vec<Access> {
        self.audit.lock().unwrap().clone()
    }

    /// Ids that were read for `purpose`.
    pub fn accessed(&self, purpose: Purpose) -> Vec<u32> {
        let mut ids: Vec<u32> =
            self.audit.lock().unwrap().iter().filter(|a| a.purpose == purpose).map(|a| a.video_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn clear_cache(&self) {
        self.cache.lock().unwrap().clear();
    }
}
