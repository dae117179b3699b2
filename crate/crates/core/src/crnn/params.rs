use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut1, IxDyn};
use serde::{Deserialize, Serialize};

/// A named tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: ArrayD<f64>,
}

/// Ordered collection of named tensors addressed by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        self.tensors.push(Tensor {
            name: name.into(),
            value: ArrayD::zeros(IxDyn(shape)),
        });
        self.tensors.len() - 1
    }

    pub(crate) fn tensors_push(&mut self, t: Tensor) {
        self.tensors.push(t);
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    value: ArrayD::zeros(t.value.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn fill(&mut self, v: f64) {
        for t in &mut self.tensors {
            t.value.fill(v);
        }
    }

    pub(crate) fn v1(&self, i: usize) -> ArrayView1<'_, f64> {
        self.tensors[i]
            .value
            .view()
            .into_dimensionality()
            .expect("rank-1 tensor")
    }

    pub(crate) fn v2(&self, i: usize) -> ArrayView2<'_, f64> {
        self.tensors[i]
            .value
            .view()
            .into_dimensionality()
            .expect("rank-2 tensor")
    }

    pub(crate) fn v3(&self, i: usize) -> ArrayView3<'_, f64> {
        self.tensors[i]
            .value
            .view()
            .into_dimensionality()
            .expect("rank-3 tensor")
    }

    pub(crate) fn m1(&mut self, i: usize) -> ArrayViewMut1<'_, f64> {
        self.tensors[i]
            .value
            .view_mut()
            .into_dimensionality()
            .expect("rank-1 tensor")
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.value.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.value *= s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        Adam {
            cfg,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            ndarray::Zip::from(&mut p.value)
                .and(&g.value)
                .and(&mut m.value)
                .and(&mut v.value)
                .for_each(|p, &g, m, v| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *p -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamSet::new();
        let i = p.add("w", &[3]);
        let mut g = p.zeros_like();
        g.m1(i).assign(&ndarray::arr1(&[1.0, -2.0, 0.0]));
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.update(&mut p, &g);
        let w = p.v1(i);
        assert!((w[0] + 1e-3).abs() < 1e-9);
        assert!((w[1] - 1e-3).abs() < 1e-9);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = ParamSet::new();
        let i = p.add("x", &[2]);
        p.m1(i).assign(&ndarray::arr1(&[3.0, -4.0]));
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            &p,
        );
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            let x = p.v1(i).to_owned();
            g.m1(i).assign(&(2.0 * &x));
            adam.update(&mut p, &g);
        }
        assert!(p.v1(i).iter().all(|x| x.abs() < 1e-2));
    }
}
