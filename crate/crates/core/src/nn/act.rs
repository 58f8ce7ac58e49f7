use super::gemm::Real;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// tanh-approximated GELU.
pub fn gelu<T: Real>(x: &[T]) -> Vec<T> {
    let (c, k, half) = (T::lit(GELU_C), T::lit(GELU_K), T::lit(0.5));
    x.iter().map(|&v| half * v * (T::one() + (c * (v + k * v * v * v)).tanh())).collect()
}

/// `dx = dy · gelu'(x)` where `x` is the pre-activation.
pub fn gelu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    let (c, k, half, three) = (T::lit(GELU_C), T::lit(GELU_K), T::lit(0.5), T::lit(3.0));
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let t = (c * (v + k * v * v * v)).tanh();
            let d = half * (T::one() + t) + half * v * (T::one() - t * t) * c * (T::one() + three * k * v * v);
            g * d
        })
        .collect()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_differences() {
        let xs: Vec<f64> = (-30..=30).map(|i| i as f64 * 0.2).collect();
        let h = 1e-6;
        let plus: Vec<f64> = xs.iter().map(|x| x + h).collect();
        let minus: Vec<f64> = xs.iter().map(|x| x - h).collect();
        let (gp, gm) = (gelu(&plus), gelu(&minus));
        let d = gelu_backward(&xs, &vec![1.0; xs.len()]);
        for i in 0..xs.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert!((fd - d[i]).abs() < 1e-7, "x={} fd={} an={}", xs[i], fd, d[i]);
        }
        assert_eq!(gelu(&[0.0f64])[0], 0.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }
}
