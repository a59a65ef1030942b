//! Named parameter storage, the AdamW optimizer, and the step learning-rate
//! schedule.

use indexmap::IndexMap;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::tensor::Tensor;

/// Named learnable tensors. Iteration order is insertion order, which keeps
/// checkpoints and optimizer sweeps deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamRegistry<R: Real> {
    entries: IndexMap<String, Tensor<R>>,
}

impl<R: Real> ParamRegistry<R> {
    pub fn new() -> Self {
        ParamRegistry {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<R>) {
        let prev = self.entries.insert(name.to_string(), value);
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<R>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<R>)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Register every parameter as a gradient-tracked leaf on `tape`.
    pub fn bind(&self, tape: &Tape<R>) -> BoundParams<R> {
        let mut vars = IndexMap::new();
        for (name, value) in &self.entries {
            vars.insert(name.clone(), tape.leaf(value.clone(), true));
        }
        BoundParams { vars }
    }
}

/// Per-pass tape handles for every registered parameter.
pub struct BoundParams<R: Real> {
    vars: IndexMap<String, Var<R>>,
}

impl<R: Real> BoundParams<R> {
    pub fn get(&self, name: &str) -> Result<&Var<R>> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Extract gradients for every parameter after a backward pass.
    pub fn gradients(&self, grads: &Gradients<R>) -> IndexMap<String, Tensor<R>> {
        self.vars
            .iter()
            .map(|(name, var)| (name.clone(), grads.get(var)))
            .collect()
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW<R: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: IndexMap<String, Tensor<R>>,
    v: IndexMap<String, Tensor<R>>,
}

impl<R: Real> AdamW<R> {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the parameters selected by `filter`.
    pub fn step(
        &mut self,
        params: &mut ParamRegistry<R>,
        grads: &IndexMap<String, Tensor<R>>,
        lr: f64,
        filter: impl Fn(&str) -> bool,
    ) -> Result<()> {
        assert!(lr > 0.0, "learning rate must be positive");
        self.step = self.step.checked_add(1).expect("step counter overflow");
        let t = self.step as i32;
        let b1 = real::<R>(self.beta1);
        let b2 = real::<R>(self.beta2);
        let one = R::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr_r = real::<R>(lr);
        let eps = real::<R>(self.eps);
        let wd = real::<R>(self.weight_decay);
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            if !filter(&name) {
                continue;
            }
            let g = grads
                .get(&name)
                .ok_or_else(|| Error::Config(format!("missing gradient for {name}")))?;
            let p = params.get_mut(&name).unwrap();
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            for i in 0..p.len() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + (one - b1) * gi;
                let vi = b2 * v.data()[i] + (one - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                let pi = p.data()[i];
                p.data_mut()[i] = pi - lr_r * (mhat / (vhat.sqrt() + eps) + wd * pi);
            }
        }
        Ok(())
    }
}

/// Step decay: `base_lr * 0.5^floor(iter / half_every)`.
pub fn lr_schedule(iter: u64, base_lr: f64, half_every: u64) -> f64 {
    assert!(half_every > 0, "half_every must be positive");
    base_lr * 0.5f64.powi((iter / half_every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_values() {
        assert_eq!(lr_schedule(0, 0.001, 7000), 0.001);
        assert_eq!(lr_schedule(6999, 0.001, 7000), 0.001);
        assert_eq!(lr_schedule(14000, 0.001, 7000), 0.00025);
    }

    #[test]
    fn lr_schedule_non_increasing() {
        let mut prev = f64::INFINITY;
        for it in 0..30000 {
            let lr = lr_schedule(it, 0.001, 7000);
            assert!(lr <= prev);
            if it % 7000 != 0 {
                assert_eq!(lr, prev);
            }
            prev = lr;
        }
    }

    #[test]
    fn adamw_zero_grad_identity() {
        let mut params = ParamRegistry::<f64>::new();
        params.insert("w", Tensor::new(vec![1, 2], vec![1.5, -0.5]).unwrap());
        let mut opt = AdamW::new(0.0);
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[1, 2]));
        opt.step(&mut params, &grads, 0.001, |_| true).unwrap();
        assert_eq!(params.get("w").unwrap().data(), &[1.5, -0.5]);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        // Hand-executed recurrence: m=0.1, v=0.001, mhat=1, vhat=1,
        // update = lr * 1/(1 + eps) ~= lr.
        let mut params = ParamRegistry::<f64>::new();
        params.insert("p", Tensor::scalar(1.0));
        let mut opt = AdamW::new(0.0);
        let mut grads = IndexMap::new();
        grads.insert("p".to_string(), Tensor::scalar(1.0));
        opt.step(&mut params, &grads, 0.001, |_| true).unwrap();
        let p = params.get("p").unwrap().data()[0];
        assert!((p - (1.0 - 0.001)).abs() < 1e-9);
    }

    #[test]
    fn adamw_decay_only_step() {
        let mut params = ParamRegistry::<f64>::new();
        params.insert("p", Tensor::scalar(1.0));
        let mut opt = AdamW::new(0.01);
        let mut grads = IndexMap::new();
        grads.insert("p".to_string(), Tensor::scalar(0.0));
        opt.step(&mut params, &grads, 0.001, |_| true).unwrap();
        let p = params.get("p").unwrap().data()[0];
        assert!((p - 0.99999).abs() < 1e-12);
    }

    #[test]
    fn step_counter_increments() {
        let mut params = ParamRegistry::<f64>::new();
        params.insert("p", Tensor::scalar(1.0));
        let mut opt = AdamW::new(0.0);
        let mut grads = IndexMap::new();
        grads.insert("p".to_string(), Tensor::scalar(0.5));
        for expect in 1..=5u64 {
            opt.step(&mut params, &grads, 0.001, |_| true).unwrap();
            assert_eq!(opt.step_count(), expect);
        }
    }
}
