//! Codec-free compression simulator: per-frame, per-channel 8×8 DCT,
//! quality-scaled quantization of the AC coefficients, inverse DCT.

use std::f32::consts::PI;
use std::sync::OnceLock;

use super::video::Video;
use super::Compression;
use crate::error::{invalid, Result};

const N: usize = 8;

/// JPEG Annex K luminance table, row-major.
const BASE_TABLE: [f32; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., //
    12., 12., 14., 19., 26., 58., 60., 55., //
    14., 13., 16., 24., 40., 57., 69., 56., //
    14., 17., 22., 29., 51., 87., 80., 62., //
    18., 22., 37., 56., 68., 109., 103., 77., //
    24., 35., 55., 64., 81., 104., 113., 92., //
    49., 64., 78., 87., 103., 121., 120., 101., //
    72., 92., 95., 98., 112., 100., 103., 99.,
];

/// Quantization steps in 8-bit coefficient units. A step of zero leaves the
/// coefficient untouched. The DC step is ignored: DC always passes through.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantTable {
    pub steps: [f32; 64],
}

impl QuantTable {
    /// No quantization; only the transform round trip remains.
    pub fn identity() -> Self {
        Self { steps: [0.0; 64] }
    }

    pub fn uniform(step: f32) -> Self {
        Self { steps: [step; 64] }
    }

    /// Base table scaled by `scale`, each step at least 1.
    pub fn scaled(scale: f32) -> Self {
        Self { steps: BASE_TABLE.map(|q| (q * scale).max(1.0)) }
    }

    pub fn for_level(level: Compression) -> Self {
        match level {
            Compression::Raw => Self::identity(),
            Compression::C23 => Self::scaled(0.35),
            Compression::C40 => Self::scaled(2.2),
        }
    }
}

fn dct_matrix() -> &'static [[f32; N]; N] {
    static M: OnceLock<[[f32; N]; N]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; N]; N];
        for (k, row) in m.iter_mut().enumerate() {
            let a = if k == 0 { (1.0 / N as f32).sqrt() } else { (2.0 / N as f32).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = a * (PI * (2 * n + 1) as f32 * k as f32 / (2 * N) as f32).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-D DCT-II of one block.
pub fn dct2(block: &[f32; 64]) -> [f32; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0f32; 64];
    for y in 0..N {
        for k in 0..N {
            tmp[y * N + k] = (0..N).map(|x| m[k][x] * block[y * N + x]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    for k in 0..N {
        for l in 0..N {
            out[l * N + k] = (0..N).map(|y| m[l][y] * tmp[y * N + k]).sum();
        }
    }
    out
}

/// Inverse of [`dct2`].
pub fn idct2(coef: &[f32; 64]) -> [f32; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0f32; 64];
    for l in 0..N {
        for x in 0..N {
            tmp[l * N + x] = (0..N).map(|k| m[k][x] * coef[l * N + k]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    for y in 0..N {
        for x in 0..N {
            out[y * N + x] = (0..N).map(|l| m[l][y] * tmp[l * N + x]).sum();
        }
    }
    out
}

pub fn compress(video: &Video, level: Compression) -> Result<Video> {
    compress_with(video, &QuantTable::for_level(level))
}

pub fn compress_with(video: &Video, table: &QuantTable) -> Result<Video> {
    let (h, w) = (video.height, video.width);
    if h % N != 0 || w % N != 0 {
        return invalid(format!("frame size {h}x{w} not divisible by {N}"));
    }
    let mut out = video.clone();
    let planes = video.frames * video.channels;
    for p in 0..planes {
        let plane = &mut out.data[p * h * w..(p + 1) * h * w];
        for by in (0..h).step_by(N) {
            for bx in (0..w).step_by(N) {
                let mut block = [0.0f32; 64];
                for y in 0..N {
                    for x in 0..N {
                        block[y * N + x] = plane[(by + y) * w + bx + x] * 255.0;
                    }
                }
                let mut coef = dct2(&block);
                for (c, &q) in coef.iter_mut().zip(&table.steps).skip(1) {
                    if q > 0.0 {
                        *c = (*c / q).round() * q;
                    }
                }
                let rec = idct2(&coef);
                for y in 0..N {
                    for x in 0..N {
                        plane[(by + y) * w + bx + x] = (rec[y * N + x] / 255.0).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::scene::generate_real_video;
    use crate::corpus::video::psnr;

    #[test]
    fn identity_table_is_lossless() {
        let v = generate_real_video(5, 10, 32).unwrap().video;
        let out = compress_with(&v, &QuantTable::identity()).unwrap();
        let max = v.data.iter().zip(&out.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(max < 1e-5, "max error {max}");
    }

    #[test]
    fn unit_steps_stay_within_rounding_bound() {
        let v = generate_real_video(5, 10, 32).unwrap().video;
        let out = compress_with(&v, &QuantTable::uniform(1.0)).unwrap();
        let max = v.data.iter().zip(&out.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        // 63 AC coefficients off by at most 1/2, basis magnitude at most 1/4.
        assert!(max <= 63.0 * 0.5 * 0.25 / 255.0, "max error {max}");
    }

    #[test]
    fn constant_frames_unchanged() {
        let v = Video::new(2, 3, 16, 16, vec![0.4123; 2 * 3 * 256]).unwrap();
        for level in [Compression::C23, Compression::C40] {
            let out = compress(&v, level).unwrap();
            assert!(out.data.iter().all(|&x| (x - 0.4123).abs() < 1e-5));
        }
    }

    #[test]
    fn indivisible_dimensions_rejected() {
        let v = Video::new(1, 3, 12, 16, vec![0.0; 3 * 12 * 16]).unwrap();
        assert!(compress(&v, Compression::C23).is_err());
    }

    #[test]
    fn dct_round_trip() {
        let block: [f32; 64] = std::array::from_fn(|i| ((i * 37) % 64) as f32);
        let back = idct2(&dct2(&block));
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-3);
        }
        let dc = dct2(&[2.0; 64]);
        assert!((dc[0] - 16.0).abs() < 1e-5);
        assert!(dc[1..].iter().all(|c| c.abs() < 1e-5));
    }

    #[test]
    fn stronger_level_loses_more() {
        let v = generate_real_video(11, 10, 64).unwrap().video;
        let c23 = compress(&v, Compression::C23).unwrap();
        let c40 = compress(&v, Compression::C40).unwrap();
        assert!(psnr(&v.data, &c23.data) > psnr(&v.data, &c40.data));
    }
}
