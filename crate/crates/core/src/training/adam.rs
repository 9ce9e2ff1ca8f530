use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction over a fixed list of flat tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    /// Zero moments shaped like `tensors`.
    pub fn new(tensors: &[&[f64]]) -> Self {
        Self::with_hyper(tensors, AdamHyper::default())
    }

    pub fn with_hyper(tensors: &[&[f64]], hyper: AdamHyper) -> Self {
        let zeros = || tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            hyper,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(
        &mut self,
        params: Vec<&mut [f64]>,
        grads: Vec<&[f64]>,
        learning_rate: f64,
    ) -> Result<()> {
        let shapes_ok = params.len() == self.first.len()
            && grads.len() == self.first.len()
            && params
                .iter()
                .zip(&grads)
                .zip(&self.first)
                .all(|((p, g), m)| p.len() == m.len() && g.len() == m.len());
        if !shapes_ok {
            return Err(Error::ShapeMismatch(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let AdamHyper {
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = vec![1.5, -2.0];
        let mut adam = Adam::new(&[&p]);
        adam.step(vec![&mut p], vec![&[1.0, -1.0]], 1e-3).unwrap();
        let after_one = p.clone();
        let m_before = adam.first_moments()[0].clone();
        adam.step(vec![&mut p], vec![&[0.0, 0.0]], 1e-3).unwrap();
        assert!(adam.first_moments()[0][0].abs() < m_before[0].abs());

        let mut q = vec![1.5, -2.0];
        let mut fresh = Adam::new(&[&q]);
        fresh.step(vec![&mut q], vec![&[0.0, 0.0]], 1e-3).unwrap();
        assert_eq!(q, vec![1.5, -2.0]);
        assert_eq!(fresh.steps(), 1);
        assert_ne!(after_one, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0];
        let mut adam = Adam::new(&[&p]);
        adam.step(vec![&mut p], vec![&[1.0]], 1e-3).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn quadratic_trajectory_matches_reference() {
        // Independent scalar script: f(x) = (x - 3)^2, x0 = 0, lr = 0.1, default betas.
        let expected = [
            0.09999999983333335,
            0.19989729258521102,
            0.29961847654925267,
            0.3990864689442145,
            0.4982205437727129,
            0.5969363926185332,
            0.6951462106969352,
            0.7927588106102016,
            0.8896797663766276,
            0.9858115903830454,
        ];
        let mut x = vec![0.0];
        let mut adam = Adam::new(&[&x]);
        for want in expected {
            let g = [2.0 * (x[0] - 3.0)];
            adam.step(vec![&mut x], vec![&g], 0.1).unwrap();
            assert!((x[0] - want).abs() < 1e-10, "{} vs {want}", x[0]);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0, 1.0];
        let mut adam = Adam::new(&[&p]);
        assert!(adam.step(vec![&mut p], vec![&[1.0]], 0.1).is_err());
        assert_eq!(adam.steps(), 0);
    }
}
