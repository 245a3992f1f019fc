use super::{Result, TopicModelError};

/// Gaussian approximation of `Dir(alpha)` in the softmax basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams {
    pub alpha: Vec<f64>,
    pub mu1: Vec<f64>,
    /// Diagonal of the covariance.
    pub sigma1_diag: Vec<f64>,
}

impl PriorParams {
    pub fn topics(&self) -> usize {
        self.alpha.len()
    }
}

pub fn laplace_prior(alpha: &[f64]) -> Result<PriorParams> {
    if alpha.is_empty() {
        return Err(TopicModelError::Config("empty Dirichlet parameter vector".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(TopicModelError::Config(format!("Dirichlet parameters must be positive, got {a}")));
    }
    let k = alpha.len() as f64;
    let mean_log = alpha.iter().map(|a| a.ln()).sum::<f64>() / k;
    let inv_sum = alpha.iter().map(|a| 1.0 / a).sum::<f64>();
    let mu1 = alpha.iter().map(|a| a.ln() - mean_log).collect();
    let sigma1_diag = alpha
        .iter()
        .map(|a| (1.0 / a) * (1.0 - 2.0 / k) + inv_sum / (k * k))
        .collect();
    Ok(PriorParams {
        alpha: alpha.to_vec(),
        mu1,
        sigma1_diag,
    })
}

/// `KL(N(mu0, diag var0) || N(mu1, diag sigma1))` in closed form.
pub fn kl_divergence(mu0: &[f64], var0: &[f64], prior: &PriorParams) -> f64 {
    0.5 * mu0
        .iter()
        .zip(var0)
        .zip(prior.mu1.iter().zip(&prior.sigma1_diag))
        .map(|((&m0, &v0), (&m1, &s1))| v0 / s1 + (m1 - m0) * (m1 - m0) / s1 - 1.0 + (s1 / v0).ln())
        .sum::<f64>()
}
