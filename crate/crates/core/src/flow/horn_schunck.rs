use rayon::prelude::*;

use super::{FlowEstimator, FlowField, FlowParams};
use crate::corpus::Image;
use crate::error::{invalid, Result};

/// Classical Horn–Schunck with Jacobi updates from a zero initial field.
///
/// Derivatives are taken on ITU-R 601 luma expressed in 8-bit units so that
/// the default smoothness weight `alpha = 1` plays the same role it does
/// for 0–255 imagery. `Ix`, `Iy` are central differences averaged over both
/// frames, `It` is the frame difference; borders replicate.
#[derive(Clone, Copy, Debug, Default)]
pub struct HornSchunck {
    pub params: FlowParams,
}

impl HornSchunck {
    pub fn new(params: FlowParams) -> Self {
        Self { params }
    }

    /// Like [`FlowEstimator::estimate`], also returning the RMS update
    /// magnitude of every iteration.
    pub fn estimate_traced(&self, a: &Image, b: &Image) -> Result<(FlowField, Vec<f32>)> {
        if !a.same_shape(b) {
            return invalid(format!(
                "frame shapes differ: {}x{}x{} vs {}x{}x{}",
                a.channels, a.height, a.width, b.channels, b.height, b.width
            ));
        }
        let FlowParams { alpha, iters } = self.params;
        if iters == 0 || !(alpha > 0.0) {
            return invalid(format!("need iters >= 1 and alpha > 0, got {iters} and {alpha}"));
        }
        let (h, w) = (a.height, a.width);
        let la: Vec<f32> = a.luma().into_iter().map(|v| v * 255.0).collect();
        let lb: Vec<f32> = b.luma().into_iter().map(|v| v * 255.0).collect();
        let n = h * w;
        let (mut ix, mut iy, mut it) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for y in 0..h {
            let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let i = y * w + x;
                let dx = |l: &[f32]| (l[y * w + xp] - l[y * w + xm]) * 0.5;
                let dy = |l: &[f32]| (l[yp * w + x] - l[ym * w + x]) * 0.5;
                ix[i] = 0.5 * (dx(&la) + dx(&lb));
                iy[i] = 0.5 * (dy(&la) + dy(&lb));
                it[i] = lb[i] - la[i];
            }
        }
        let a2 = alpha * alpha;
        let denom: Vec<f32> = (0..n).map(|i| a2 + ix[i] * ix[i] + iy[i] * iy[i]).collect();
        let (mut u, mut v) = (vec![0.0f32; n], vec![0.0f32; n]);
        let (mut nu, mut nv) = (vec![0.0f32; n], vec![0.0f32; n]);
        let mut residuals = Vec::with_capacity(iters);
        for _ in 0..iters {
            let mut sq = 0.0f64;
            for y in 0..h {
                let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
                for x in 0..w {
                    let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
                    let i = y * w + x;
                    let avg = |f: &[f32]| 0.25 * (f[y * w + xm] + f[y * w + xp] + f[ym * w + x] + f[yp * w + x]);
                    let (ub, vb) = (avg(&u), avg(&v));
                    let k = (ix[i] * ub + iy[i] * vb + it[i]) / denom[i];
                    nu[i] = ub - ix[i] * k;
                    nv[i] = vb - iy[i] * k;
                    let (du, dv) = (nu[i] - u[i], nv[i] - v[i]);
                    sq += f64::from(du * du + dv * dv);
                }
            }
            std::mem::swap(&mut u, &mut nu);
            std::mem::swap(&mut v, &mut nv);
            residuals.push((sq / n as f64).sqrt() as f32);
        }
        Ok((FlowField { height: h, width: w, u, v }, residuals))
    }
}

impl FlowEstimator for HornSchunck {
    fn estimate(&self, a: &Image, b: &Image) -> Result<FlowField> {
        self.estimate_traced(a, b).map(|(f, _)| f)
    }

    fn estimate_sequence(&self, frames: &[Image]) -> Result<Vec<FlowField>> {
        frames.par_windows(2).map(|p| self.estimate(&p[0], &p[1])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(h: usize, w: usize, shift: f32) -> Image {
        let mut data = Vec::with_capacity(3 * h * w);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let xs = x as f32 - shift;
                    let v = 0.5
                        + 0.2 * (0.35 * xs + 0.1 * c as f32).sin() * (0.27 * y as f32).cos()
                        + 0.1 * (0.21 * (xs + y as f32)).sin();
                    data.push(v);
                }
            }
        }
        Image::new(3, h, w, data).unwrap()
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = texture(24, 24, 0.0);
        let f = HornSchunck::default().estimate(&a, &a).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
    }

    #[test]
    fn constant_frames_give_zero_flow() {
        let a = Image::filled(3, 16, 16, 0.2);
        let b = Image::filled(3, 16, 16, 0.7);
        let f = HornSchunck::default().estimate(&a, &b).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
    }

    #[test]
    fn shape_and_param_checks() {
        let a = Image::filled(3, 16, 16, 0.2);
        let b = Image::filled(3, 16, 8, 0.2);
        assert!(HornSchunck::default().estimate(&a, &b).is_err());
        let bad = HornSchunck::new(FlowParams { alpha: 0.0, iters: 10 });
        assert!(bad.estimate(&a, &a).is_err());
        let bad = HornSchunck::new(FlowParams { alpha: 1.0, iters: 0 });
        assert!(bad.estimate(&a, &a).is_err());
    }

    #[test]
    fn one_pixel_shift_recovered() {
        let (a, b) = (texture(48, 48, 0.0), texture(48, 48, 1.0));
        let f = HornSchunck::default().estimate(&a, &b).unwrap();
        let epe = f.mean_endpoint_error((1.0, 0.0), 4);
        assert!(epe < 0.5, "epe {epe}");
    }
}
