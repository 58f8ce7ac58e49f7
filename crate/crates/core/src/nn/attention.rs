use super::gemm::{gemm, Real};
use super::linear::{linear_backward, linear_forward};

/// Projection weights of one multi-head self-attention layer; all matrices
/// are `d × d` (`out × in`).
#[derive(Clone, Copy)]
pub struct AttnWeights<'a, T> {
    pub wq: &'a [T],
    pub bq: &'a [T],
    pub wk: &'a [T],
    pub bk: &'a [T],
    pub wv: &'a [T],
    pub bv: &'a [T],
    pub wo: &'a [T],
    pub bo: &'a [T],
}

#[derive(Clone, Debug)]
pub struct AttnGrads<T> {
    pub wq: Vec<T>,
    pub bq: Vec<T>,
    pub wk: Vec<T>,
    pub bk: Vec<T>,
    pub wv: Vec<T>,
    pub bv: Vec<T>,
    pub wo: Vec<T>,
    pub bo: Vec<T>,
}

impl<T: Real> AttnGrads<T> {
    fn zeros(d: usize) -> Self {
        let m = || vec![T::zero(); d * d];
        let v = || vec![T::zero(); d];
        Self { wq: m(), bq: v(), wk: m(), bk: v(), wv: m(), bv: v(), wo: m(), bo: v() }
    }
}

pub struct AttnCache<T> {
    x: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
}

impl<T> AttnCache<T> {
    /// Softmax rows, laid out `seq × head × len × len`.
    pub fn probs(&self) -> &[T] {
        &self.probs
    }
}

/// Self-attention applied independently to `seqs` sequences of `len`
/// tokens each; `x` is `(seqs·len) × d`.
pub fn attention_forward<T: Real>(
    x: Vec<T>,
    seqs: usize,
    len: usize,
    d: usize,
    heads: usize,
    w: AttnWeights<'_, T>,
) -> (Vec<T>, AttnCache<T>) {
    let rows = seqs * len;
    debug_assert_eq!(x.len(), rows * d);
    let dh = d / heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let q = linear_forward(&x, rows, w.wq, w.bq, d, d);
    let k = linear_forward(&x, rows, w.wk, w.bk, d, d);
    let v = linear_forward(&x, rows, w.wv, w.bv, d, d);
    let mut probs = vec![T::zero(); seqs * heads * len * len];
    let mut ctx = vec![T::zero(); rows * d];
    for s in 0..seqs {
        for h in 0..heads {
            let off = s * len * d + h * dh;
            let p = &mut probs[(s * heads + h) * len * len..][..len * len];
            gemm(len, dh, len, &q[off..], (d, 1), &k[off..], (1, d), p, (len, 1), false);
            for row in p.chunks_exact_mut(len) {
                let mut max = T::neg_infinity();
                for v in row.iter_mut() {
                    *v *= scale;
                    max = max.max(*v);
                }
                let mut sum = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            gemm(len, len, dh, p, (len, 1), &v[off..], (d, 1), &mut ctx[off..], (d, 1), false);
        }
    }
    let out = linear_forward(&ctx, rows, w.wo, w.bo, d, d);
    (out, AttnCache { x, q, k, v, probs, ctx })
}

pub fn attention_backward<T: Real>(
    dout: &[T],
    cache: &AttnCache<T>,
    seqs: usize,
    len: usize,
    d: usize,
    heads: usize,
    w: AttnWeights<'_, T>,
) -> (Vec<T>, AttnGrads<T>) {
    let rows = seqs * len;
    let dh = d / heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut g = AttnGrads::zeros(d);
    let dctx = linear_backward(&cache.ctx, dout, rows, w.wo, d, d, &mut g.wo, &mut g.bo, true).expect("dx requested");
    let mut dq = vec![T::zero(); rows * d];
    let mut dk = vec![T::zero(); rows * d];
    let mut dv = vec![T::zero(); rows * d];
    let mut ds = vec![T::zero(); len * len];
    for s in 0..seqs {
        for h in 0..heads {
            let off = s * len * d + h * dh;
            let p = &cache.probs[(s * heads + h) * len * len..][..len * len];
            gemm(len, dh, len, &dctx[off..], (d, 1), &cache.v[off..], (1, d), &mut ds, (len, 1), false);
            gemm(len, len, dh, p, (1, len), &dctx[off..], (d, 1), &mut dv[off..], (d, 1), false);
            for (dr, pr) in ds.chunks_exact_mut(len).zip(p.chunks_exact(len)) {
                let dot: T = dr.iter().zip(pr).map(|(&a, &b)| a * b).sum();
                for (a, &b) in dr.iter_mut().zip(pr) {
                    *a = b * (*a - dot) * scale;
                }
            }
            gemm(len, len, dh, &ds, (len, 1), &cache.k[off..], (d, 1), &mut dq[off..], (d, 1), false);
            gemm(len, len, dh, &ds, (1, len), &cache.q[off..], (d, 1), &mut dk[off..], (d, 1), false);
        }
    }
    let x = &cache.x;
    let mut dx = linear_backward(x, &dq, rows, w.wq, d, d, &mut g.wq, &mut g.bq, true).expect("dx");
    let dxk = linear_backward(x, &dk, rows, w.wk, d, d, &mut g.wk, &mut g.bk, true).expect("dx");
    let dxv = linear_backward(x, &dv, rows, w.wv, d, d, &mut g.wv, &mut g.bv, true).expect("dx");
    for ((a, b), c) in dx.iter_mut().zip(dxk).zip(dxv) {
        *a += b + c;
    }
    (dx, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(d: usize) -> Vec<Vec<f64>> {
        (0..8)
            .map(|i| {
                let n = if i % 2 == 0 { d * d } else { d };
                (0..n).map(|j| ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5).collect()
            })
            .collect()
    }

    fn view(p: &[Vec<f64>]) -> AttnWeights<'_, f64> {
        AttnWeights { wq: &p[0], bq: &p[1], wk: &p[2], bk: &p[3], wv: &p[4], bv: &p[5], wo: &p[6], bo: &p[7] }
    }

    #[test]
    fn probabilities_are_row_stochastic() {
        let d = 8;
        let p = weights(d);
        let x: Vec<f64> = (0..3 * 5 * d).map(|i| (i as f64 * 0.37).sin()).collect();
        let (_, cache) = attention_forward(x, 3, 5, d, 2, view(&p));
        for row in cache.probs().chunks(5) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (d, seqs, len, heads) = (4, 2, 3, 2);
        let p = weights(d);
        let x: Vec<f64> = (0..seqs * len * d).map(|i| (i as f64 * 0.61).cos()).collect();
        let r: Vec<f64> = (0..seqs * len * d).map(|i| (i as f64 * 0.29).sin()).collect();
        let loss = |x: &[f64], p: &[Vec<f64>]| {
            let (y, _) = attention_forward(x.to_vec(), seqs, len, d, heads, view(p));
            y.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = attention_forward(x.clone(), seqs, len, d, heads, view(&p));
        let (dx, g) = attention_backward(&r, &cache, seqs, len, d, heads, view(&p));
        let h = 1e-5;
        for i in 0..x.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a, &p) - loss(&b, &p)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "dx[{i}] fd {fd} an {}", dx[i]);
        }
        let grads = [&g.wq, &g.bq, &g.wk, &g.bk, &g.wv, &g.bv, &g.wo, &g.bo];
        for (t, grad) in grads.iter().enumerate() {
            for i in 0..grad.len() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[t][i] += h;
                b[t][i] -= h;
                let fd = (loss(&x, &a) - loss(&x, &b)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6, "tensor {t}[{i}] fd {fd} an {}", grad[i]);
            }
        }
    }
}
