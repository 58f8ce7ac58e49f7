//! The two-branch forgery detector.
//!
//! * Spatio-temporal branch: patch embedding with spatial and temporal
//!   positional embeddings, then pre-norm blocks of divided space-time
//!   attention (temporal attention across frames at each patch position,
//!   spatial attention within each frame with the class token, GELU
//!   feed-forward). The normalized class token is the branch feature.
//! * Motion-guided branch: each motion-guided frame passes independently
//!   through a strided convolution stack and global average pooling; the
//!   per-frame vectors pass a per-channel affine (initialized from training
//!   data), are concatenated and mapped by a one-hidden-layer MLP.
//! * Fusion: an affine projection of both features to one logit.

mod network;
mod params;

pub use network::{
    backward, bce_with_logit, calibrate_pool_norm, forward, forward_clip, loss_and_grad, mg_frame_features,
    patch_tokens, patchify, BranchOutput, ClipInput, ForwardCache,
};
pub use params::{init_params, Layout, ModelParams, Tensor};

use crate::error::{invalid, Result};

pub const CHANNELS: usize = 3;

/// Which features reach the fusion head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BranchMode {
    #[default]
    Full,
    SpatioTemporalOnly,
    MotionGuidedOnly,
}

impl BranchMode {
    pub fn uses_st(self) -> bool {
        self != BranchMode::MotionGuidedOnly
    }

    pub fn uses_mg(self) -> bool {
        self != BranchMode::SpatioTemporalOnly
    }

    pub fn code(self) -> u32 {
        match self {
            BranchMode::Full => 0,
            BranchMode::SpatioTemporalOnly => 1,
            BranchMode::MotionGuidedOnly => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(BranchMode::Full),
            1 => Some(BranchMode::SpatioTemporalOnly),
            2 => Some(BranchMode::MotionGuidedOnly),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchMode::Full => "full",
            BranchMode::SpatioTemporalOnly => "st-only",
            BranchMode::MotionGuidedOnly => "mg-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(BranchMode::Full),
            "st-only" | "st" => Ok(BranchMode::SpatioTemporalOnly),
            "mg-only" | "mg" => Ok(BranchMode::MotionGuidedOnly),
            _ => invalid(format!("unknown branch mode {s:?} (full, st-only, mg-only)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Frames per clip seen by both branches.
    pub frames: usize,
    pub patch: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub st_blocks: usize,
    /// Output channels of each stride-2 convolution; the last must equal
    /// `embed_dim`.
    pub mg_channels: Vec<usize>,
    pub mlp_hidden: usize,
    pub resolution: usize,
    pub branches: BranchMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: crate::DEFAULT_CLIP_FRAMES,
            patch: 8,
            embed_dim: 64,
            heads: 4,
            st_blocks: 2,
            mg_channels: vec![16, 32, 64],
            mlp_hidden: 64,
            resolution: 64,
            branches: BranchMode::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frames", self.frames),
            ("patch", self.patch),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("mlp_hidden", self.mlp_hidden),
            ("resolution", self.resolution),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return invalid(format!("model {name} must be positive"));
        }
        if self.resolution % self.patch != 0 {
            return invalid(format!("resolution {} not divisible by patch {}", self.resolution, self.patch));
        }
        if self.embed_dim % self.heads != 0 {
            return invalid(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        match self.mg_channels.last() {
            None => return invalid("mg_channels must not be empty"),
            Some(&c) if c != self.embed_dim => {
                return invalid(format!("last mg channel {c} must equal embed_dim {}", self.embed_dim))
            }
            _ => {}
        }
        if self.mg_channels.contains(&0) {
            return invalid("mg_channels must be positive");
        }
        Ok(())
    }

    /// Patches per frame at the configured resolution.
    pub fn patches(&self) -> usize {
        (self.resolution / self.patch).pow(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig { resolution: 60, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { mg_channels: vec![16, 32], ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { mg_channels: vec![], ..ModelConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn branch_codes_round_trip() {
        for m in [BranchMode::Full, BranchMode::SpatioTemporalOnly, BranchMode::MotionGuidedOnly] {
            assert_eq!(BranchMode::from_code(m.code()), Some(m));
            assert_eq!(BranchMode::parse(m.name()).unwrap(), m);
        }
        assert!(BranchMode::from_code(9).is_none());
    }
}
