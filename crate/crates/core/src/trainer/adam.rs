use std::collections::BTreeMap;

use physnet_autograd::Tensor;

/// Adam with bias correction, over a named subset of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter named in `grads`.
    pub fn update(&mut self, params: &mut BTreeMap<String, Tensor>, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (name, g) in grads {
            let p = params.get_mut(name).unwrap_or_else(|| panic!("no parameter '{name}'"));
            assert_eq!(p.shape(), g.shape(), "gradient shape for '{name}'");
            let m = self.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.second.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Moment tensors, by parameter name.
    pub fn moments(&self) -> (&BTreeMap<String, Tensor>, &BTreeMap<String, Tensor>) {
        (&self.first, &self.second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::new(vec![1], vec![v]))])
    }

    #[test]
    fn zero_gradient_leaves_weights_unchanged() {
        let mut opt = Adam::new(5e-5, 0.5, 0.999, 1e-8);
        let mut p = BTreeMap::from([("w".to_string(), Tensor::new(vec![3], vec![1.0, -2.0, 0.5]))]);
        let before = p.clone();
        opt.update(&mut p, &BTreeMap::from([("w".to_string(), Tensor::zeros(&[3]))]));
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let lr = 1e-3;
        for g in [0.37, -4.0] {
            let mut opt = Adam::new(lr, 0.5, 0.999, 1e-8);
            let mut p = one(0.0);
            let grads = one(g);
            let mut prev = 0.0;
            for step in 1..=1000 {
                opt.update(&mut p, &grads);
                let now = p["w"].data()[0];
                if step == 1000 {
                    let moved = now - prev;
                    assert!((moved + lr * g.signum()).abs() < 0.01 * lr, "step moved {moved}");
                }
                prev = now;
            }
        }
    }
}
