//! Two-hidden-layer tanh MLP with a Gaussian action head and a value head
//! sharing the trunk, plus a free state-independent log-std vector.

use std::sync::Arc;

use rand::Rng;

use super::params::{Manifest, ParamVector, TensorSpec};
use super::PolicyError;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Manifest tensor indices; construction order in [`MlpSpec::manifest`]
/// must match.
const T_DENSE0_KERNEL: usize = 0;
const T_DENSE0_BIAS: usize = 1;
const T_DENSE1_KERNEL: usize = 2;
const T_DENSE1_BIAS: usize = 3;
const T_MEAN_KERNEL: usize = 4;
const T_MEAN_BIAS: usize = 5;
const T_VALUE_KERNEL: usize = 6;
const T_VALUE_BIAS: usize = 7;
const T_LOG_STD: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_sizes: [usize; 2],
    pub action_dim: usize,
}

/// Distribution parameters and value estimate for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Forward-pass activations for a batch, retained for backprop.
#[derive(Debug, Clone)]
pub struct ForwardBatch {
    pub n: usize,
    pub obs: Vec<f64>,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub means: Vec<f64>,
    pub values: Vec<f64>,
    /// Clamped to [LOG_STD_MIN, LOG_STD_MAX].
    pub log_std: Vec<f64>,
    /// True where the clamp was active; gradients there are zero.
    pub clamp_mask: Vec<bool>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, action_dim: usize) -> Result<Self, PolicyError> {
        Self::with_hidden(input_dim, [64, 64], action_dim)
    }

    pub fn with_hidden(
        input_dim: usize,
        hidden_sizes: [usize; 2],
        action_dim: usize,
    ) -> Result<Self, PolicyError> {
        if input_dim == 0 || action_dim == 0 || hidden_sizes.iter().any(|&h| h == 0) {
            return Err(PolicyError::BadSpec(format!(
                "all dims must be >= 1 (input {input_dim}, hidden {hidden_sizes:?}, action {action_dim})"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_sizes,
            action_dim,
        })
    }

    pub fn manifest(&self) -> Arc<Manifest> {
        let [h0, h1] = self.hidden_sizes;
        Arc::new(
            Manifest::new(vec![
                TensorSpec::new("dense0/kernel", vec![self.input_dim, h0]),
                TensorSpec::new("dense0/bias", vec![h0]),
                TensorSpec::new("dense1/kernel", vec![h0, h1]),
                TensorSpec::new("dense1/bias", vec![h1]),
                TensorSpec::new("mean_head/kernel", vec![h1, self.action_dim]),
                TensorSpec::new("mean_head/bias", vec![self.action_dim]),
                TensorSpec::new("value_head/kernel", vec![h1, 1]),
                TensorSpec::new("value_head/bias", vec![1]),
                TensorSpec::new("log_std", vec![self.action_dim]),
            ])
            .expect("validated dims produce a valid manifest"),
        )
    }

    pub fn param_count(&self) -> usize {
        let [h0, h1] = self.hidden_sizes;
        self.input_dim * h0
            + h0
            + h0 * h1
            + h1
            + h1 * self.action_dim
            + self.action_dim
            + h1
            + 1
            + self.action_dim
    }

    /// Kernel entries uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn in
    /// manifest order; biases and log_std start at zero; version 0.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParamVector {
        let [h0, h1] = self.hidden_sizes;
        let mut params = ParamVector::zeros(self.manifest());
        let kernels = [
            (T_DENSE0_KERNEL, self.input_dim),
            (T_DENSE1_KERNEL, h0),
            (T_MEAN_KERNEL, h1),
            (T_VALUE_KERNEL, h1),
        ];
        for (tensor, fan_in) in kernels {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in params.tensor_mut(tensor) {
                *v = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    fn check_params(&self, params: &ParamVector) -> Result<(), PolicyError> {
        if params.len() != self.param_count() {
            return Err(PolicyError::ManifestMismatch(format!(
                "params carry {} values, spec needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Batched forward pass over `n` row-major observations.
    pub fn forward_batch(
        &self,
        params: &ParamVector,
        obs: &[f64],
        n: usize,
    ) -> Result<ForwardBatch, PolicyError> {
        self.check_params(params)?;
        if obs.len() != n * self.input_dim {
            return Err(PolicyError::ObservationLength {
                expected: n * self.input_dim,
                got: obs.len(),
            });
        }
        let [h0_dim, h1_dim] = self.hidden_sizes;
        let mut h0 = affine(
            obs,
            n,
            self.input_dim,
            params.tensor(T_DENSE0_KERNEL),
            params.tensor(T_DENSE0_BIAS),
            h0_dim,
        );
        tanh_in_place(&mut h0);
        let mut h1 = affine(
            &h0,
            n,
            h0_dim,
            params.tensor(T_DENSE1_KERNEL),
            params.tensor(T_DENSE1_BIAS),
            h1_dim,
        );
        tanh_in_place(&mut h1);
        let means = affine(
            &h1,
            n,
            h1_dim,
            params.tensor(T_MEAN_KERNEL),
            params.tensor(T_MEAN_BIAS),
            self.action_dim,
        );
        let values = affine(
            &h1,
            n,
            h1_dim,
            params.tensor(T_VALUE_KERNEL),
            params.tensor(T_VALUE_BIAS),
            1,
        );
        let raw = params.tensor(T_LOG_STD);
        let clamp_mask: Vec<bool> = raw
            .iter()
            .map(|&v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&v))
            .collect();
        let log_std: Vec<f64> = raw
            .iter()
            .map(|&v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok(ForwardBatch {
            n,
            obs: obs.to_vec(),
            h0,
            h1,
            means,
            values,
            log_std,
            clamp_mask,
        })
    }

    /// Single-observation forward pass.
    pub fn forward(
        &self,
        params: &ParamVector,
        obs: &[f64],
    ) -> Result<GaussianPolicyOutput, PolicyError> {
        let fwd = self.forward_batch(params, obs, 1)?;
        Ok(GaussianPolicyOutput {
            mean: fwd.means,
            log_std: fwd.log_std,
            value: fwd.values[0],
        })
    }

    /// Reverse-mode accumulation: adds the gradients implied by upstream
    /// derivatives (`d_means`, `d_values` per sample, `d_log_std` per action
    /// dim, all already summed over the batch where applicable) into `grad`.
    pub fn backward_batch(
        &self,
        params: &ParamVector,
        fwd: &ForwardBatch,
        d_means: &[f64],
        d_values: &[f64],
        d_log_std: &[f64],
        grad: &mut ParamVector,
    ) -> Result<(), PolicyError> {
        self.check_params(params)?;
        self.check_params(grad)?;
        let n = fwd.n;
        let [h0_dim, h1_dim] = self.hidden_sizes;
        assert_eq!(d_means.len(), n * self.action_dim);
        assert_eq!(d_values.len(), n);
        assert_eq!(d_log_std.len(), self.action_dim);

        for (slot, (&d, &masked)) in grad
            .tensor_mut(T_LOG_STD)
            .iter_mut()
            .zip(d_log_std.iter().zip(&fwd.clamp_mask))
        {
            if !masked {
                *slot += d;
            }
        }

        // Heads into the shared trunk.
        let mut d_h1 = matmul_transpose_w(d_means, n, self.action_dim, params.tensor(T_MEAN_KERNEL), h1_dim);
        accumulate_weight_grad(&fwd.h1, n, h1_dim, d_means, self.action_dim, grad.tensor_mut(T_MEAN_KERNEL));
        accumulate_bias_grad(d_means, n, self.action_dim, grad.tensor_mut(T_MEAN_BIAS));

        {
            let w_v = params.tensor(T_VALUE_KERNEL);
            for i in 0..n {
                let dv = d_values[i];
                let row = &mut d_h1[i * h1_dim..(i + 1) * h1_dim];
                for (slot, &w) in row.iter_mut().zip(w_v) {
                    *slot += dv * w;
                }
            }
        }
        accumulate_weight_grad(&fwd.h1, n, h1_dim, d_values, 1, grad.tensor_mut(T_VALUE_KERNEL));
        accumulate_bias_grad(d_values, n, 1, grad.tensor_mut(T_VALUE_BIAS));

        // d_h1 -> d_z1 through tanh.
        let mut d_z1 = d_h1;
        for (d, &h) in d_z1.iter_mut().zip(&fwd.h1) {
            *d *= 1.0 - h * h;
        }
        accumulate_weight_grad(&fwd.h0, n, h0_dim, &d_z1, h1_dim, grad.tensor_mut(T_DENSE1_KERNEL));
        accumulate_bias_grad(&d_z1, n, h1_dim, grad.tensor_mut(T_DENSE1_BIAS));

        let mut d_z0 = matmul_transpose_w(&d_z1, n, h1_dim, params.tensor(T_DENSE1_KERNEL), h0_dim);
        for (d, &h) in d_z0.iter_mut().zip(&fwd.h0) {
            *d *= 1.0 - h * h;
        }
        accumulate_weight_grad(&fwd.obs, n, self.input_dim, &d_z0, h0_dim, grad.tensor_mut(T_DENSE0_KERNEL));
        accumulate_bias_grad(&d_z0, n, h0_dim, grad.tensor_mut(T_DENSE0_BIAS));
        Ok(())
    }
}

/// out[i,k] = b[k] + sum_j x[i,j] w[j,k], row-major.
fn affine(x: &[f64], n: usize, d_in: usize, w: &[f64], b: &[f64], d_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d_out];
    for i in 0..n {
        let xi = &x[i * d_in..(i + 1) * d_in];
        let oi = &mut out[i * d_out..(i + 1) * d_out];
        oi.copy_from_slice(b);
        for (j, &xv) in xi.iter().enumerate() {
            let wrow = &w[j * d_out..(j + 1) * d_out];
            for (o, &wv) in oi.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    out
}

fn tanh_in_place(x: &mut [f64]) {
    for v in x {
        *v = v.tanh();
    }
}

/// din[i,j] = sum_k dout[i,k] w[j,k].
fn matmul_transpose_w(dout: &[f64], n: usize, d_out: usize, w: &[f64], d_in: usize) -> Vec<f64> {
    let mut din = vec![0.0; n * d_in];
    for i in 0..n {
        let drow = &dout[i * d_out..(i + 1) * d_out];
        let irow = &mut din[i * d_in..(i + 1) * d_in];
        for (j, slot) in irow.iter_mut().enumerate() {
            let wrow = &w[j * d_out..(j + 1) * d_out];
            let mut acc = 0.0;
            for (&d, &wv) in drow.iter().zip(wrow) {
                acc += d * wv;
            }
            *slot = acc;
        }
    }
    din
}

/// dw[j,k] += sum_i x[i,j] dout[i,k].
fn accumulate_weight_grad(
    x: &[f64],
    n: usize,
    d_in: usize,
    dout: &[f64],
    d_out: usize,
    dw: &mut [f64],
) {
    for i in 0..n {
        let xi = &x[i * d_in..(i + 1) * d_in];
        let drow = &dout[i * d_out..(i + 1) * d_out];
        for (j, &xv) in xi.iter().enumerate() {
            let wrow = &mut dw[j * d_out..(j + 1) * d_out];
            for (slot, &d) in wrow.iter_mut().zip(drow) {
                *slot += xv * d;
            }
        }
    }
}

/// db[k] += sum_i dout[i,k].
fn accumulate_bias_grad(dout: &[f64], n: usize, d_out: usize, db: &mut [f64]) {
    for i in 0..n {
        let drow = &dout[i * d_out..(i + 1) * d_out];
        for (slot, &d) in db.iter_mut().zip(drow) {
            *slot += d;
        }
    }
}
