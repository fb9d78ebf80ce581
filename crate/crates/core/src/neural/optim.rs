/// AdamW with bias-corrected moments:
///
/// ```text
/// m ← β₁ m + (1 − β₁) g,  v ← β₂ v + (1 − β₂) g²
/// θ ← θ − lr · m̂ / (√v̂ + δ) − lr · wd · θ
/// ```
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len(), "gradient length");
        assert_eq!(params.len(), self.m.len(), "optimizer state length");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.delta) + self.lr * self.weight_decay * *p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut p = vec![1.0, -2.0, 0.5];
        let mut opt = AdamW::new(3, 0.0, 0.0);
        opt.step(&mut p, &[0.3, 1.0, -7.0]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // m̂ = 1, v̂ = 1 → Δθ = −lr / (1 + δ)
        let lr = 1e-3;
        let mut p = vec![0.0; 4];
        let mut opt = AdamW::new(4, lr, 0.0);
        opt.step(&mut p, &[1.0; 4]);
        for x in p {
            assert!((x + lr / (1.0 + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn decoupled_decay() {
        let mut p = vec![2.0];
        let mut opt = AdamW::new(1, 0.1, 0.5);
        opt.step(&mut p, &[0.0]);
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_converges_monotonically_after_warmup() {
        // minimize (x − 3)², gradient 2(x − 3)
        let mut x = vec![0.0];
        let mut opt = AdamW::new(1, 0.05, 0.0);
        let mut dist = Vec::new();
        for _ in 0..400 {
            let g = 2.0 * (x[0] - 3.0);
            opt.step(&mut x, &[g]);
            dist.push((x[0] - 3.0).abs());
        }
        assert!(dist.last().unwrap() < &0.05);
        // before the first overshoot the approach is monotone
        let first_close = dist.iter().position(|d| *d < 0.5).unwrap();
        assert!(dist[..first_close].windows(2).all(|w| w[1] <= w[0]));
    }
}
