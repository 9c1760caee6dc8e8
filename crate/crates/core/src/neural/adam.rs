use crate::{Error, Result, Scalar};

/// Adam with bias correction over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    /// `lr = 1e-3`, `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(param_count: usize) -> Self {
        Self::with_learning_rate(param_count, T::of(1e-3))
    }

    pub fn with_learning_rate(param_count: usize, learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            step: 0,
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn update(&mut self, weights: &mut [T], grads: &[T]) -> Result<()> {
        if weights.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "Adam parameter vector",
                expected: self.m.len(),
                actual: weights.len().min(grads.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((w, &g), (m, v)) in weights.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *w -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut a = AdamState::<f64>::new(3);
        let mut w = vec![1.0, -2.0, 0.5];
        a.update(&mut w, &[0.0; 3]).unwrap();
        assert_eq!(w, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut a = AdamState::<f64>::new(3);
        let mut w = vec![0.0; 3];
        a.update(&mut w, &[3.0, -0.2, 1e-3]).unwrap();
        assert!((w[0] + 1e-3).abs() < 1e-9);
        assert!((w[1] - 1e-3).abs() < 1e-9);
        assert!((w[2] + 1e-3).abs() < 1e-7);
    }

    #[test]
    fn quadratic_bowl_decreases_monotonically() {
        // f(w) = sum c_i (w_i - t_i)^2
        let c = [1.0, 4.0];
        let t = [0.3, -0.2];
        let f = |w: &[f64]| c[0] * (w[0] - t[0]).powi(2) + c[1] * (w[1] - t[1]).powi(2);
        let mut a = AdamState::<f64>::with_learning_rate(2, 0.01);
        let mut w = vec![2.0, 1.5];
        let mut prev = f(&w);
        for _ in 0..100 {
            let g = [2.0 * c[0] * (w[0] - t[0]), 2.0 * c[1] * (w[1] - t[1])];
            a.update(&mut w, &g).unwrap();
            let now = f(&w);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut a = AdamState::<f32>::new(2);
        let mut w = vec![0.0f32; 3];
        assert!(a.update(&mut w, &[0.0; 3]).is_err());
    }
}
