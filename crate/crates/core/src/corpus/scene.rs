//! Procedural scenes: a textured blob moving over a static textured
//! background, and the three forgery families re-rendered from the same scene.

use std::f32::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::video::Video;
use super::{Config, Family};
use crate::error::{invalid, Result};
use crate::seed;
use crate::DEFAULT_CLIP_FRAMES;

pub const MIN_RESOLUTION: usize = 16;
pub const MIN_LENGTH: usize = DEFAULT_CLIP_FRAMES + 1;
const CHANNELS: usize = 3;

/// Per-frame foreground centre `(x, y)` in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<[f32; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Wave {
    freq: [f32; 2],
    phase: f32,
    amp: [f32; CHANNELS],
}

/// Sum of plane waves per channel on top of a base colour.
#[derive(Clone, Debug)]
struct Texture {
    base: [f32; CHANNELS],
    waves: Vec<Wave>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, n: usize, base: (f32, f32), cycles_per_px: (f32, f32), amp: (f32, f32)) -> Self {
        let base = [(); CHANNELS].map(|_| rng.random_range(base.0..base.1));
        let waves = (0..n)
            .map(|_| {
                let k = rng.random_range(cycles_per_px.0..cycles_per_px.1);
                let theta = rng.random_range(0.0..TAU);
                Wave {
                    freq: [k * theta.cos(), k * theta.sin()],
                    phase: rng.random_range(0.0..TAU),
                    amp: [(); CHANNELS].map(|_| rng.random_range(amp.0..amp.1)),
                }
            })
            .collect();
        Self { base, waves }
    }

    #[inline]
    fn eval(&self, x: f32, y: f32, scale: f32, phase_shift: f32) -> [f32; CHANNELS] {
        let mut out = self.base;
        for w in &self.waves {
            let s = (TAU * scale * (w.freq[0] * x + w.freq[1] * y) + w.phase + phase_shift).sin();
            for c in 0..CHANNELS {
                out[c] += w.amp[c] * s;
            }
        }
        out
    }
}

/// Per-frame rendering perturbations used by the forgery families.
#[derive(Clone, Copy, Debug)]
struct FrameMods {
    offset: [f32; 2],
    fg_gain: f32,
    fg_bias: f32,
    tex_scale: f32,
    tex_phase: f32,
    noise_sigma: f32,
}

impl Default for FrameMods {
    fn default() -> Self {
        Self { offset: [0.0; 2], fg_gain: 1.0, fg_bias: 0.0, tex_scale: 1.0, tex_phase: 0.0, noise_sigma: 0.0 }
    }
}

/// Everything needed to re-render a synthetic video: appearance (the
/// "reference identity") plus a trajectory (the "pose sequence").
#[derive(Clone, Debug)]
pub struct Scene {
    pub resolution: usize,
    pub length: usize,
    background: Texture,
    foreground: Texture,
    radii: [f32; 2],
    trajectory: Trajectory,
    drift: [f32; 3],
}

/// A generated real video together with the scene it was rendered from.
#[derive(Clone, Debug)]
pub struct RealVideo {
    pub scene: Scene,
    pub video: Video,
}

pub fn generate_real_video(seed: u64, length: usize, resolution: usize) -> Result<RealVideo> {
    let scene = Scene::random(seed, length, resolution)?;
    let video = scene.render_with(&scene.trajectory, |_| FrameMods::default(), None);
    Ok(RealVideo { scene, video })
}

impl Scene {
    pub fn random(seed: u64, length: usize, resolution: usize) -> Result<Scene> {
        if length < MIN_LENGTH {
            return invalid(format!("video length {length} below minimum {MIN_LENGTH}"));
        }
        if resolution < MIN_RESOLUTION {
            return invalid(format!("resolution {resolution} below minimum {MIN_RESOLUTION}"));
        }
        let mut rng = seed::rng(seed, &[0x5CE7E]);
        let res = resolution as f32;
        // Frequencies and speeds are specified at 64 px and scaled.
        let px = 64.0 / res;
        let background = Texture::random(&mut rng, 4, (0.22, 0.42), (0.012 * px, 0.05 * px), (0.03, 0.09));
        let foreground = Texture::random(&mut rng, 3, (0.55, 0.78), (0.06 * px, 0.12 * px), (0.07, 0.14));
        let radii = [res * rng.random_range(0.13..0.19), res * rng.random_range(0.13..0.19)];

        let axis = |rng: &mut ChaCha8Rng| {
            let centre = res * (0.5 + rng.random_range(-0.06..0.06));
            let amp = res * rng.random_range(0.12..0.18);
            let vmax = rng.random_range(1.0..1.8) / px;
            let omega = vmax / amp;
            let phase = rng.random_range(0.0..TAU);
            (centre, amp, omega, phase)
        };
        let ax = axis(&mut rng);
        let ay = axis(&mut rng);
        let points = (0..length)
            .map(|t| {
                let t = t as f32;
                [ax.0 + ax.1 * (ax.2 * t + ax.3).sin(), ay.0 + ay.1 * (ay.2 * t + ay.3).sin()]
            })
            .collect();
        let drift = [rng.random_range(0.01..0.04), rng.random_range(0.05..0.2), rng.random_range(0.0..TAU)];
        Ok(Scene { resolution, length, background, foreground, radii, trajectory: Trajectory { points }, drift })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    fn gain(&self, t: usize) -> f32 {
        1.0 + self.drift[0] * (self.drift[1] * t as f32 + self.drift[2]).sin()
    }

    #[inline]
    fn alpha(&self, lx: f32, ly: f32) -> f32 {
        let r = ((lx / self.radii[0]).powi(2) + (ly / self.radii[1]).powi(2)).sqrt();
        ((1.0 - r) / 0.12 + 0.5).clamp(0.0, 1.0)
    }

    /// The static background, channel-planar, without illumination drift.
    pub fn render_background(&self) -> Vec<f32> {
        let n = self.resolution;
        let mut out = vec![0.0; CHANNELS * n * n];
        for y in 0..n {
            for x in 0..n {
                let v = self.background.eval(x as f32, y as f32, 1.0, 0.0);
                for c in 0..CHANNELS {
                    out[(c * n + y) * n + x] = v[c];
                }
            }
        }
        out
    }

    /// Soft foreground coverage of frame `t` for the scene's own trajectory.
    pub fn foreground_mask(&self, t: usize) -> Vec<f32> {
        let n = self.resolution;
        let [cx, cy] = self.trajectory.points[t];
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                out[y * n + x] = self.alpha(x as f32 - cx, y as f32 - cy);
            }
        }
        out
    }

    fn render_with(
        &self,
        trajectory: &Trajectory,
        mut mods: impl FnMut(usize) -> FrameMods,
        mut noise: Option<&mut ChaCha8Rng>,
    ) -> Video {
        let n = self.resolution;
        let plane = n * n;
        let bg = self.render_background();
        let reach = self.radii[0].max(self.radii[1]) * 1.1 + 2.0;
        let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
        let mut data = Vec::with_capacity(self.length * CHANNELS * plane);
        for t in 0..self.length {
            let m = mods(t);
            let gain = self.gain(t);
            let [cx, cy] = trajectory.points[t];
            let (cx, cy) = (cx + m.offset[0], cy + m.offset[1]);
            let mut frame = bg.clone();
            let x0 = ((cx - reach).floor().max(0.0)) as usize;
            let x1 = ((cx + reach).ceil().max(0.0) as usize).min(n);
            let y0 = ((cy - reach).floor().max(0.0)) as usize;
            let y1 = ((cy + reach).ceil().max(0.0) as usize).min(n);
            for y in y0..y1 {
                for x in x0..x1 {
                    let (lx, ly) = (x as f32 - cx, y as f32 - cy);
                    let a = self.alpha(lx, ly);
                    if a <= 0.0 {
                        continue;
                    }
                    let fg = self.foreground.eval(lx, ly, m.tex_scale, m.tex_phase);
                    for (c, &fgc) in fg.iter().enumerate() {
                        let i = c * plane + y * n + x;
                        let fgc = fgc * m.fg_gain + m.fg_bias;
                        frame[i] = a * fgc + (1.0 - a) * frame[i];
                    }
                }
            }
            for v in frame.iter_mut() {
                *v *= gain;
            }
            if let Some(rng) = noise.as_deref_mut() {
                if m.noise_sigma > 0.0 {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let a = self.alpha(x as f32 - cx, y as f32 - cy);
                            for c in 0..CHANNELS {
                                let e: f32 = normal.sample(rng);
                                if a > 0.0 {
                                    frame[c * plane + y * n + x] += a * m.noise_sigma * e;
                                }
                            }
                        }
                    }
                }
            }
            data.extend(frame.into_iter().map(|v| v.clamp(0.0, 1.0)));
        }
        Video { frames: self.length, channels: CHANNELS, height: n, width: n, data }
    }
}

/// Re-render `real` with a family-specific temporal-inconsistency signature.
///
/// Mismatch forgeries keep the source appearance but follow
/// `partner_trajectory`.
pub fn forge_video(
    real: &RealVideo,
    family: Family,
    config: Config,
    partner_trajectory: Option<&Trajectory>,
    seed: u64,
) -> Result<Video> {
    let scene = &real.scene;
    let trajectory = match (config, partner_trajectory) {
        (Config::Match, _) => &scene.trajectory,
        (Config::Mismatch, Some(p)) => {
            if p.len() != scene.length {
                return invalid(format!(
                    "partner trajectory has {} points, video has {} frames",
                    p.len(),
                    scene.length
                ));
            }
            p
        }
        (Config::Mismatch, None) => return invalid("mismatch forgery needs a partner trajectory"),
        (Config::None, _) => return invalid("forgery config must be match or mismatch"),
    };
    let tag = match family {
        Family::A => 1,
        Family::B => 2,
        Family::C => 3,
        Family::None => return invalid("forgery family must be FAM-A, FAM-B or FAM-C"),
    };
    let mut rng = seed::rng(seed, &[0xF0F6E, tag]);
    let mods: Vec<FrameMods> = (0..scene.length)
        .map(|_| match family {
            Family::A => FrameMods { noise_sigma: 0.45, ..FrameMods::default() },
            Family::B => FrameMods {
                offset: [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
                fg_gain: 1.0 + rng.random_range(-0.75..0.75),
                fg_bias: rng.random_range(-0.24..0.24),
                ..FrameMods::default()
            },
            Family::C => FrameMods {
                offset: [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)],
                tex_scale: 1.0 + rng.random_range(-0.36..0.36),
                tex_phase: rng.random_range(-4.8..4.8),
                ..FrameMods::default()
            },
            Family::None => unreachable!(),
        })
        .collect();
    Ok(scene.render_with(trajectory, |t| mods[t], Some(&mut rng)))
}
