use super::gemm::{mm, mm_nt, mm_tn, Real};

/// `y = x · Wᵀ + b` for `rows` inputs; `w` is `out × in`.
pub fn linear_forward<T: Real>(x: &[T], rows: usize, w: &[T], b: &[T], din: usize, dout: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), rows * din);
    let mut y = vec![T::zero(); rows * dout];
    for r in y.chunks_exact_mut(dout) {
        r.copy_from_slice(b);
    }
    mm_nt(x, w, rows, din, dout, &mut y, true);
    y
}

/// Accumulates `dW += dyᵀ·x` and `db += Σ dy`; returns `dx = dy·W` when asked.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    dy: &[T],
    rows: usize,
    w: &[T],
    din: usize,
    dout: usize,
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    mm_tn(dy, x, dout, rows, din, dw, true);
    for r in dy.chunks_exact(dout) {
        for (g, &d) in db.iter_mut().zip(r) {
            *g += d;
        }
    }
    need_dx.then(|| {
        let mut dx = vec![T::zero(); rows * din];
        mm(dy, w, rows, dout, din, &mut dx, false);
        dx
    })
}
