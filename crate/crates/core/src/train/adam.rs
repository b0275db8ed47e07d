use crate::autodiff::{Gradients, ParamStore};
use crate::error::{MgamError, Result};
use crate::tensor::Tensor;

/// Bias-corrected Adam moments for every tensor of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(MgamError::usage("adam: gradient count does not match parameters"));
        }
        for ((p, g), m) in params.tensors().iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(MgamError::usage(format!(
                    "adam: shape mismatch {:?} vs {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("x", Tensor::scalar(v));
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = store(1.0);
            let mut st = AdamState::new(&p);
            st.step(&mut p, &vec![Tensor::scalar(g)], 0.01).unwrap();
            let moved = 1.0 - p.get(0).item();
            assert!((moved.abs() - 0.01).abs() < 1e-6, "{moved}");
            assert_eq!(moved.signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = store(2.5);
        let mut st = AdamState::new(&p);
        st.step(&mut p, &vec![Tensor::scalar(0.0)], 0.1).unwrap();
        assert_eq!(p.get(0).item(), 2.5);
        assert_eq!(st.m[0].item(), 0.0);
        assert_eq!(st.v[0].item(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let mut p = store(1.0);
        let mut st = AdamState::new(&p);
        let err = st.step(&mut p, &vec![Tensor::zeros(1, 2)], 0.1).unwrap_err();
        assert!(matches!(err, MgamError::Usage(_)));
    }

    // Independent scalar recurrence of the Adam update on f(x) = x².
    fn reference(x0: f64, lr: f64, steps: usize) -> f64 {
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        x
    }

    #[test]
    fn quadratic_converges() {
        let mut p = store(1.0);
        let mut st = AdamState::new(&p);
        for _ in 0..100 {
            let g = Tensor::scalar(2.0 * p.get(0).item());
            st.step(&mut p, &vec![g], 0.1).unwrap();
        }
        let x = p.get(0).item();
        assert!(x.abs() < 0.05, "{x}");
        assert!((x - reference(1.0, 0.1, 100)).abs() < 1e-12);
    }
}
