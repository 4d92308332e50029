use super::{ParamSet, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `base · decay^⌊epoch / every⌋`; `every == 0` disables the schedule.
pub fn decayed_learning_rate(base: f64, decay: f64, every: usize, epoch: usize) -> f64 {
    if every == 0 {
        return base;
    }
    base * decay.powi((epoch / every) as i32)
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Adam {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update of every trainable entry of `params` with learning rate `lr`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::of(lr), T::of(c.eps));
        let one = T::one();

        for id in 0..params.len() {
            if !params.is_trainable(id) {
                continue;
            }
            let g = grads[id].data();
            let p = params.get_mut(id);
            if g.len() != p.len() {
                return Err(Error::shape(format!("adam: gradient size mismatch at slot {id}")));
            }
            let (m, v) = (self.m[id].data_mut(), self.v[id].data_mut());
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: Vec<f64>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(v).unwrap(), true);
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = one_param(vec![0.5, -1.25]);
        let before = p.get(0).clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam.step(&mut p, &[Tensor::zeros(&[2])], 1e-3).unwrap();
        }
        assert_eq!(p.get(0), &before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one_param(vec![0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[Tensor::vector(vec![3.0, -0.2]).unwrap()], 1e-3).unwrap();
        // closed form: lr * g / (|g| + eps)
        let d = p.get(0).data();
        assert!((d[0] + 1e-3 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((d[1] - 1e-3 * 0.2 / (0.2 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn frozen_entries_untouched() {
        let mut p = one_param(vec![1.0]);
        p.insert("stat", Tensor::vector(vec![2.0]).unwrap(), false);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = vec![Tensor::vector(vec![1.0]).unwrap(), Tensor::vector(vec![1.0]).unwrap()];
        adam.step(&mut p, &g, 0.1).unwrap();
        assert_eq!(p.get(1).data(), &[2.0]);
        assert!(p.get(0).data()[0] < 1.0);
    }

    #[test]
    fn schedule() {
        assert_eq!(decayed_learning_rate(1e-3, 0.7, 20, 19), 1e-3);
        assert!((decayed_learning_rate(1e-3, 0.7, 20, 20) - 7e-4).abs() < 1e-18);
        assert!((decayed_learning_rate(1e-3, 0.7, 20, 45) - 4.9e-4).abs() < 1e-15);
        assert_eq!(decayed_learning_rate(1e-3, 0.7, 0, 45), 1e-3);
    }
}
