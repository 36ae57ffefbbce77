use super::params::{ParamGrads, ParamStore};
use super::tape::Mat;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub(crate) first: Vec<Mat>,
    pub(crate) second: Vec<Mat>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        Self::with_betas(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Mat> = store.iter().map(|(_, p)| Mat::zeros(p.value.dim())).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update. Fails without touching anything if a gradient is
    /// not finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads, lr: f64) -> Result<()> {
        if grads.0.len() != store.len() {
            return Err(Error::Dimension(format!(
                "{} gradients for {} parameters",
                grads.0.len(),
                store.len()
            )));
        }
        for ((id, p), g) in store.iter().zip(&grads.0) {
            if g.dim() != p.value.dim() {
                return Err(Error::Dimension(format!(
                    "gradient {:?} for parameter {} {:?}",
                    g.dim(),
                    p.name,
                    p.value.dim()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for parameter {} (#{})",
                    p.name, id.0
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = &grads.0[k];
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            ndarray::Zip::from(&mut *m)
                .and(&mut *v)
                .and(g)
                .for_each(|m, v, &g| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                });
            let (b1, b2, eps) = (bc1, bc2, self.eps);
            ndarray::Zip::from(store.get_mut(id))
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| {
                    *w -= lr * (m / b1) / ((v / b2).sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_max` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64) -> f64 {
    if total_steps == 0 {
        return lr_max;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    lr_max * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", array![[1.0, -2.0], [0.5, 3.0]]);
        s.add("b", array![[0.25]]);
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store();
        let before = s.clone();
        let mut adam = Adam::new(&s);
        let zero = s.zeros_like();
        adam.step(&mut s, &zero, 0.1).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2 after one step: update = lr * g / (|g| + eps)
        let mut s = store();
        let before = s.clone();
        let mut adam = Adam::new(&s);
        let g = ParamGrads(vec![array![[0.3, -4.0], [2.0, 1e-3]], array![[7.0]]]);
        adam.step(&mut s, &g, 0.01).unwrap();
        for ((_, a), (_, b)) in s.iter().zip(before.iter()) {
            for (x, y) in a.value.iter().zip(b.value.iter()) {
                let step = (y - x).abs();
                assert!((step - 0.01).abs() < 1e-6 * 0.01 + 1e-7, "{step}");
            }
        }
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut s = store();
        let before = s.clone();
        let mut adam = Adam::new(&s);
        let g = ParamGrads(vec![array![[f64::NAN, 0.0], [0.0, 0.0]], array![[0.0]]]);
        assert!(adam.step(&mut s, &g, 0.1).is_err());
        assert_eq!(s, before);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut s = store();
            let mut adam = Adam::new(&s);
            for i in 0..20 {
                let g = ParamGrads(vec![
                    array![[i as f64, 1.0], [-0.5, 0.1 * i as f64]],
                    array![[(i as f64).sin()]],
                ]);
                adam.step(&mut s, &g, 0.05).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 0.5), 0.5);
        assert!(cosine_lr(100, 100, 0.5).abs() < 1e-17);
        assert!((cosine_lr(50, 100, 0.5) - 0.25).abs() < 1e-15);
    }
}
