/// Adam with decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub betas: (f32, f32),
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, betas: (0.9, 0.999), eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { t: 0, m, v }
    }

    pub fn step<'a>(
        &mut self,
        cfg: &AdamConfig,
        params: impl IntoIterator<Item = &'a mut [f32]>,
        grads: impl IntoIterator<Item = &'a [f32]>,
    ) {
        self.t += 1;
        let (b1, b2) = cfg.betas;
        let c1 = 1.0 - f64::from(b1).powi(self.t as i32);
        let c2 = 1.0 - f64::from(b2).powi(self.t as i32);
        let (c1, c2) = (c1 as f32, c2 as f32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= cfg.lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * p[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new([2]);
        let mut p = vec![1.0f32, -1.0];
        let g = vec![0.5f32, -3.0];
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        adam.step(&cfg, [p.as_mut_slice()], [g.as_slice()]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut adam = Adam::new([3]);
        let mut p = vec![0.3f32, 0.1, -2.0];
        let before = p.clone();
        let cfg = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        for _ in 0..10 {
            adam.step(&cfg, [p.as_mut_slice()], [[1.0f32, -1.0, 0.5].as_slice()]);
        }
        assert_eq!(p, before);
    }
}
