use super::Layout;

/// Adam with decoupled weight decay. Decay applies to matrices only.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<f32>,
    v: Vec<f32>,
    decay: Vec<bool>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(layout: &Layout, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let mut decay = vec![false; layout.size()];
        for t in layout.tensors() {
            if t.shape.len() >= 2 {
                decay[t.range.clone()].fill(true);
            }
        }
        AdamW {
            m: vec![0.0; layout.size()],
            v: vec![0.0; layout.size()],
            decay,
            t: 0,
            beta1,
            beta2,
            eps,
            weight_decay,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step = (lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let eps = self.eps as f32;
        let shrink = (1.0 - lr * self.weight_decay) as f32;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            if self.decay[i] {
                params[i] *= shrink;
            }
            params[i] -= step * self.m[i] / ((self.v[i] * inv_bc2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = DenoiserConfig { vocab_size: 4, d_model: 4, layers: 1, heads: 1, max_len: 10, prefix_len: 6, seed: 0 };
        let layout = Layout::new(&cfg);
        let mut opt = AdamW::new(&layout, 0.9, 0.999, 1e-8, 0.0);
        let mut p = vec![1.0f32; layout.size()];
        for _ in 0..2000 {
            let g: Vec<f32> = p.iter().map(|x| 2.0 * (x - 0.25)).collect();
            opt.update(&mut p, &g, 0.01);
        }
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-2));
    }
}
