use super::{ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(alpha: f64, beta1: f64, beta2: f64) -> Self {
        Self { alpha, beta1, beta2, epsilon: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        let betas_ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !betas_ok || !(self.alpha >= 0.0) || !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Bias-corrected Adam over a fixed subset of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub params: Vec<ParamId>,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    /// Round parameters and moments to `f32` after each update.
    pub round_to_f32: bool,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore, params: Vec<ParamId>) -> Result<Self> {
        config.validate()?;
        let zeros = |id: &ParamId| vec![0.0; store.value(*id).len()];
        Ok(Self {
            config,
            step: 0,
            first_moment: params.iter().map(zeros).collect(),
            second_moment: params.iter().map(zeros).collect(),
            params,
            round_to_f32: false,
        })
    }

    /// One update from the gradients currently stored for `self.params`.
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(id) = self.params.iter().find(|id| store.grad(**id).iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFiniteGradient(store.get(*id).name.clone()));
        }
        self.step += 1;
        let AdamConfig { alpha, beta1, beta2, epsilon } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let round = |v: f64| if self.round_to_f32 { v as f32 as f64 } else { v };
        for (k, id) in self.params.iter().enumerate() {
            let p = store.get_mut(*id);
            let (m, v) = (&mut self.first_moment[k], &mut self.second_moment[k]);
            for ((w, &g), (m, v)) in p.value.data_mut().iter_mut().zip(&p.grad).zip(m.iter_mut().zip(v.iter_mut())) {
                *m = round(beta1 * *m + (1.0 - beta1) * g);
                *v = round(beta2 * *v + (1.0 - beta2) * g * g);
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w = round(*w - alpha * m_hat / (v_hat.sqrt() + epsilon));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::new(vec![1], vec![v]).unwrap()).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_first_step_is_a_no_op() {
        let (mut s, id) = scalar_store(0.7);
        let mut adam = AdamState::new(AdamConfig::new(2e-4, 0.5, 0.999), &s, vec![id]).unwrap();
        adam.step(&mut s).unwrap();
        assert_eq!(s.value(id).data(), &[0.7]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        for g in [3.0, -0.02] {
            let (mut s, id) = scalar_store(1.0);
            s.get_mut(id).grad[0] = g;
            let mut adam = AdamState::new(AdamConfig::new(2e-4, 0.5, 0.999), &s, vec![id]).unwrap();
            adam.step(&mut s).unwrap();
            let moved = 1.0 - s.value(id).data()[0];
            assert!((moved - 2e-4 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let (mut s, id) = scalar_store(1.0);
        s.get_mut(id).grad[0] = f64::NAN;
        let mut adam = AdamState::new(AdamConfig::new(1e-3, 0.5, 0.999), &s, vec![id]).unwrap();
        assert!(matches!(adam.step(&mut s), Err(Error::NonFiniteGradient(n)) if n == "p"));
        assert_eq!(adam.step, 0);
        assert_eq!(s.value(id).data(), &[1.0]);
    }

    #[test]
    fn betas_validated() {
        let (s, id) = scalar_store(1.0);
        assert!(AdamState::new(AdamConfig::new(1e-3, 1.0, 0.9), &s, vec![id]).is_err());
        assert!(AdamState::new(AdamConfig::new(1e-3, 0.5, -0.1), &s, vec![id]).is_err());
    }

    #[test]
    fn zero_betas_give_sign_descent() {
        let (mut s, id) = scalar_store(0.0);
        let cfg = AdamConfig { alpha: 0.01, beta1: 0.0, beta2: 0.0, epsilon: 1e-12 };
        let mut adam = AdamState::new(cfg, &s, vec![id]).unwrap();
        let mut expected = 0.0;
        for g in [0.3, -7.0, 1e-3, 2.5] {
            s.get_mut(id).grad[0] = g;
            adam.step(&mut s).unwrap();
            expected -= 0.01 * f64::signum(g);
            assert!((s.value(id).data()[0] - expected).abs() < 1e-6);
        }
    }
}
