use super::nn::Params;
use super::{Result, Scalar, Tensor, TensorError};

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
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers mirror the parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, params: &Params<F>) -> Result<Self> {
        if config.lr.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(TensorError::Config(format!("learning rate {} must be positive", config.lr)));
        }
        let zeros = || {
            params
                .ids()
                .map(|id| {
                    let p = params.get(id);
                    Tensor::zeros(p.rows(), p.cols())
                })
                .collect::<Vec<_>>()
        };
        Ok(Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Every parameter must have a gradient.
    pub fn step(&mut self, params: &mut Params<F>, grads: &[Option<Tensor<F>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(TensorError::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            let Some(g) = g else {
                return Err(TensorError::Contract(format!(
                    "no gradient for parameter `{}`",
                    params.name(id)
                )));
            };
            if g.shape() != params.get(id).shape() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    lhs: params.get(id).shape(),
                    rhs: g.shape(),
                });
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (F::from_f64(beta1), F::from_f64(beta2));
        let (one_b1, one_b2) = (F::from_f64(1.0 - beta1), F::from_f64(1.0 - beta2));
        let (step_size, eps) = (F::from_f64(lr / c1), F::from_f64(eps));
        let c2_sqrt = F::from_f64(c2.sqrt());

        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[k].as_ref().expect("checked above").data();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let denom = v[i].sqrt() / c2_sqrt + eps;
                p[i] = p[i] - step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}
