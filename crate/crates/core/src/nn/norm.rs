use super::gemm::Real;

const EPS: f64 = 1e-5;

pub struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

/// Layer normalization over the last dimension `d`.
pub fn layernorm_forward<T: Real>(x: &[T], d: usize, gamma: &[T], beta: &[T]) -> (Vec<T>, LnCache<T>) {
    let rows = x.len() / d;
    let inv_d = T::lit(1.0 / d as f64);
    let eps = T::lit(EPS);
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    let mut y = vec![T::zero(); x.len()];
    for ((xr, hr), yr) in x.chunks_exact(d).zip(xhat.chunks_exact_mut(d)).zip(y.chunks_exact_mut(d)) {
        let mean = xr.iter().copied().sum::<T>() * inv_d;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        for j in 0..d {
            hr[j] = (xr[j] - mean) * r;
            yr[j] = hr[j] * gamma[j] + beta[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub fn layernorm_backward<T: Real>(
    dy: &[T],
    cache: &LnCache<T>,
    d: usize,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let inv_d = T::lit(1.0 / d as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for (((dyr, hr), &r), dxr) in
        dy.chunks_exact(d).zip(cache.xhat.chunks_exact(d)).zip(&cache.rstd).zip(dx.chunks_exact_mut(d))
    {
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for j in 0..d {
            dgamma[j] += dyr[j] * hr[j];
            dbeta[j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * hr[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        for j in 0..d {
            dxr[j] = r * (dxhat[j] - m1 - hr[j] * m2);
        }
    }
    dx
}
