#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use ttdf_core::corpus::{build_corpus, CorpusOptions, Manifest};
use ttdf_core::model::{init_params, loss_and_grad, ClipInput, ModelConfig, ModelParams};
use ttdf_core::seed;

/// 5 pairs of 12-frame 32px videos, the smallest corpus with all splits.
pub fn small_corpus(dir: &Path) -> Manifest {
    build_corpus(5, 3, dir, &CorpusOptions { resolution: 32, length: 12, ..CorpusOptions::default() }).unwrap()
}

/// Fast model for loop-level tests on [`small_corpus`].
pub fn small_model() -> ModelConfig {
    ModelConfig {
        patch: 8,
        embed_dim: 16,
        heads: 2,
        st_blocks: 1,
        mg_channels: vec![8, 16],
        mlp_hidden: 16,
        resolution: 32,
        ..ModelConfig::default()
    }
}

/// Small config used by the finite-difference checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        frames: 4,
        patch: 4,
        embed_dim: 8,
        heads: 2,
        st_blocks: 1,
        mg_channels: vec![4, 8],
        mlp_hidden: 8,
        resolution: 16,
        ..ModelConfig::default()
    }
}

pub fn random_frames(frames: usize, side: usize, s: u64) -> Vec<f64> {
    let mut rng = seed::rng(s, &[0xF0]);
    (0..frames * 3 * side * side).map(|_| rng.random::<f64>()).collect()
}

pub struct GradReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

/// Compares every analytic parameter gradient with a central difference in
/// f64. A component passes when the absolute error is at most `abs_floor` or
/// the relative error is below `rel_tol`.
pub fn gradient_check(cfg: &ModelConfig, s: u64, step: f64, rel_tol: f64, abs_floor: f64) -> GradReport {
    let p32 = init_params(cfg, s).unwrap();
    let mut p: ModelParams<f64> = p32.cast();
    // move normalization parameters off their identity init so their
    // gradients are exercised in a generic position
    let mut rng = seed::rng(s, &[0xF1]);
    for t in &mut p.tensors {
        for v in &mut t.data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let side = cfg.resolution;
    let raw = random_frames(cfg.frames, side, s);
    let motion = random_frames(cfg.frames, side, s + 1);
    let target = 1.0;
    let input = ClipInput { raw: &raw, motion: &motion, height: side, width: side };
    let (_, _, grads) = loss_and_grad(&p, &input, target).unwrap();
    let loss_at = |q: &ModelParams<f64>| loss_and_grad(q, &input, target).unwrap().0;

    let mut failures = Vec::new();
    let mut checked = 0;
    let mut q = p.clone();
    for ti in 0..p.tensors.len() {
        for i in 0..p.tensors[ti].data.len() {
            let orig = p.tensors[ti].data[i];
            q.tensors[ti].data[i] = orig + step;
            let lp = loss_at(&q);
            q.tensors[ti].data[i] = orig - step;
            let lm = loss_at(&q);
            q.tensors[ti].data[i] = orig;
            let fd = (lp - lm) / (2.0 * step);
            let an = grads.tensors[ti].data[i];
            let abs = (fd - an).abs();
            let rel = abs / fd.abs().max(an.abs());
            checked += 1;
            if abs > abs_floor && rel >= rel_tol {
                failures.push(format!("{}[{i}]: analytic {an:e} numeric {fd:e}", p.layout.name(ti)));
            }
        }
    }
    GradReport { checked, failures }
}
