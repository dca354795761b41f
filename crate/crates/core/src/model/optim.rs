//! Decoupled-weight-decay Adam.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::tape::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Array2::zeros(p.raw_dim()))
                .collect()
        };
        AdamW {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. Parameters without a gradient still decay.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for id in 0..params.len() {
            let p = params.get_mut(id);
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            match grads.get(id) {
                Some(g) => Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                    *p -= c.lr * (update + c.weight_decay * *p);
                }),
                None => Zip::from(p).and(m).and(v).for_each(|p, m, v| {
                    *m *= c.beta1;
                    *v *= c.beta2;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                    *p -= c.lr * (update + c.weight_decay * *p);
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_matches_hand_computation() {
        let mut ps = ParamStore::default();
        ps.add("p", array![[1.0, -2.0]]);
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.1,
                ..Default::default()
            },
            &ps,
        );
        let g = Grads(vec![Some(array![[0.5, -0.25]])]);
        opt.step(&mut ps, &g);
        // bias-corrected first step moves each weight by lr * sign(g)
        let want0 = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0);
        let want1 = -2.0 - 0.1 * (-0.25 / (0.25 + 1e-8) + 0.01 * -2.0);
        assert!((ps.get(0)[[0, 0]] - want0).abs() < 1e-12);
        assert!((ps.get(0)[[0, 1]] - want1).abs() < 1e-12);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut ps = ParamStore::default();
        ps.add("p", array![[3.0]]);
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.05,
                weight_decay: 0.0,
                ..Default::default()
            },
            &ps,
        );
        for _ in 0..500 {
            let x = ps.get(0)[[0, 0]];
            opt.step(&mut ps, &Grads(vec![Some(array![[2.0 * (x - 1.0)]])]));
        }
        assert!((ps.get(0)[[0, 0]] - 1.0).abs() < 1e-2);
    }
}
