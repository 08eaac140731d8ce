use super::params::{unflatten, MlpView, PolicyView};
use super::spec::PolicySpec;
use crate::error::{check_len, Error, Result};

/// Feedforward evaluation: tanh on hidden layers, linear output.
pub fn mlp_forward(params: &[f64], spec: &PolicySpec, obs: &[f64]) -> Result<Vec<f64>> {
    match unflatten(params, spec)? {
        PolicyView::Feedforward(view) => {
            check_len("observation", spec.obs_dim, obs.len())?;
            Ok(view.forward(obs))
        }
        PolicyView::Transformer(_) => Err(Error::Contract(
            "mlp_forward called with a decision-transformer spec".into(),
        )),
    }
}

impl MlpView<'_> {
    pub fn forward(&self, obs: &[f64]) -> Vec<f64> {
        let mut x = obs.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&x);
            if i != last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = y;
        }
        x
    }
}
