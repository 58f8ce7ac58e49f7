use super::gemm::Real;
use super::linear::{linear_backward, linear_forward};

const K: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

/// 3×3, stride 2, padding 1 convolution over a stack of channel-last images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub images: usize,
    pub height: usize,
    pub width: usize,
    pub cin: usize,
    pub cout: usize,
}

pub fn conv_out_size(n: usize) -> usize {
    (n + 2 * PAD - K) / STRIDE + 1
}

impl ConvShape {
    pub fn out_hw(&self) -> (usize, usize) {
        (conv_out_size(self.height), conv_out_size(self.width))
    }

    fn out_rows(&self) -> usize {
        let (h, w) = self.out_hw();
        self.images * h * w
    }

    fn patch_len(&self) -> usize {
        K * K * self.cin
    }
}

pub struct ConvCache<T> {
    col: Vec<T>,
}

fn im2col<T: Real>(x: &[T], s: &ConvShape) -> Vec<T> {
    let (oh, ow) = s.out_hw();
    let pl = s.patch_len();
    let mut col = vec![T::zero(); s.out_rows() * pl];
    for img in 0..s.images {
        let base = img * s.height * s.width;
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut col[((img * oh + oy) * ow + ox) * pl..][..pl];
                for ky in 0..K {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    for kx in 0..K {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= s.width as isize {
                            continue;
                        }
                        let src = (base + iy as usize * s.width + ix as usize) * s.cin;
                        let dst = (ky * K + kx) * s.cin;
                        row[dst..dst + s.cin].copy_from_slice(&x[src..src + s.cin]);
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(dcol: &[T], s: &ConvShape) -> Vec<T> {
    let (oh, ow) = s.out_hw();
    let pl = s.patch_len();
    let mut dx = vec![T::zero(); s.images * s.height * s.width * s.cin];
    for img in 0..s.images {
        let base = img * s.height * s.width;
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &dcol[((img * oh + oy) * ow + ox) * pl..][..pl];
                for ky in 0..K {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    for kx in 0..K {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= s.width as isize {
                            continue;
                        }
                        let dst = (base + iy as usize * s.width + ix as usize) * s.cin;
                        let src = (ky * K + kx) * s.cin;
                        for c in 0..s.cin {
                            dx[dst + c] += row[src + c];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `x` is `(images·height·width) × cin`; weights are `cout × (3·3·cin)` in
/// `(ky, kx, c)` order. Returns the pre-activation output.
pub fn conv_forward<T: Real>(x: &[T], s: &ConvShape, w: &[T], b: &[T]) -> (Vec<T>, ConvCache<T>) {
    let col = im2col(x, s);
    let y = linear_forward(&col, s.out_rows(), w, b, s.patch_len(), s.cout);
    (y, ConvCache { col })
}

pub fn conv_backward<T: Real>(
    dy: &[T],
    cache: &ConvCache<T>,
    s: &ConvShape,
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    linear_backward(&cache.col, dy, s.out_rows(), w, s.patch_len(), s.cout, dw, db, need_dx)
        .map(|dcol| col2im(&dcol, s))
}
