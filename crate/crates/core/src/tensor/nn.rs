//! Parameter storage and the two reusable layers (linear, batch norm).

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::tape::{Gradients, Tape, Var};
use super::{Result, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<F> {
    names: Vec<String>,
    values: Vec<Tensor<F>>,
}

impl<F: Scalar> Params<F> {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn total_len(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Records every parameter as a trainable leaf; the returned handles are
    /// indexed by [`ParamId`].
    pub fn bind(&self, tape: &mut Tape<F>) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    /// Same as [`Params::bind`] but recorded as constants.
    pub fn bind_frozen(&self, tape: &mut Tape<F>) -> Vec<Var> {
        self.values.iter().map(|v| tape.constant(v.clone())).collect()
    }

    /// Pulls per-parameter gradients out of a backward result.
    pub fn collect_grads(&self, bound: &[Var], grads: &mut Gradients<F>) -> Vec<Option<Tensor<F>>> {
        bound.iter().map(|&v| grads.take(v)).collect()
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor<F> {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..rows * cols).map(|_| F::from_f64(dist.sample(rng))).collect();
        Tensor::from_vec(rows, cols, data).expect("shape")
    }

    pub fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Tensor<F> {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| F::from_f64(dist.sample(rng))).collect();
        Tensor::from_vec(rows, cols, data).expect("shape")
    }
}

/// Running mean and variance tracked by a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<F> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Scalar> RunningStats<F> {
    pub fn new(features: usize) -> Self {
        RunningStats {
            mean: vec![F::zero(); features],
            var: vec![F::one(); features],
            momentum: F::from_f64(0.1),
            eps: F::from_f64(1e-5),
        }
    }

    /// `biased_var` is the batch variance used for normalization; the running
    /// estimate stores the unbiased one.
    pub(crate) fn update(&mut self, mean: &[F], biased_var: &[F], n: usize) {
        let m = self.momentum;
        let correction = if n > 1 {
            F::from_f64(n as f64 / (n as f64 - 1.0))
        } else {
            F::one()
        };
        for (r, &b) in self.mean.iter_mut().zip(mean) {
            *r = (F::one() - m) * *r + m * b;
        }
        for (r, &b) in self.var.iter_mut().zip(biased_var) {
            *r = (F::one() - m) * *r + m * b * correction;
        }
    }
}

/// `x W + b` with `W` stored `in x out`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Registers a layer initialized from `uniform(+-1/sqrt(fan_in))`.
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        params: &mut Params<F>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = params.add(format!("{name}.weight"), Params::uniform(fan_in, fan_out, bound, rng));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Params::uniform(1, fan_out, bound, rng)));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<F>, bound: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, bound[self.weight.0])?;
        match self.bias {
            Some(b) => tape.add_row(y, bound[b.0]),
            None => Ok(y),
        }
    }
}

/// Learnable scale and shift; running statistics live in the owning model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub features: usize,
    /// Index of this layer's [`RunningStats`] in the owning model.
    pub stats: usize,
}

impl BatchNorm1d {
    pub fn new<F: Scalar>(
        params: &mut Params<F>,
        running: &mut Vec<RunningStats<F>>,
        name: &str,
        features: usize,
    ) -> Self {
        let gamma = params.add(format!("{name}.gamma"), Tensor::full(1, features, F::one()));
        let beta = params.add(format!("{name}.beta"), Tensor::zeros(1, features));
        running.push(RunningStats::new(features));
        BatchNorm1d {
            gamma,
            beta,
            features,
            stats: running.len() - 1,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        bound: &[Var],
        running: &mut [RunningStats<F>],
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        tape.batchnorm_1d(x, bound[self.gamma.0], bound[self.beta.0], &mut running[self.stats], mode)
    }
}
