//! Attention-based modality reweighting.
//!
//! An [`AmrModule`] pairs one feature layer of the dense branch with one
//! layer of the sparse branch. It owns a per-element weight matrix for each
//! modality, applied by batch-replicated elementwise multiplication, plus an
//! auxiliary classification head fed by globally pooled, channel-concatenated
//! features. The weight matrices and the head are ordinary trainable
//! parameters, updated together with the rest of the network.

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Per-layer modality reweighter.
///
/// `w_r` has the bound dense feature shape with batch extent 1, `w_s` the
/// bound sparse feature shape likewise. Weights start at 1 so an untrained
/// module is an exact identity; the auxiliary head starts at zero so its
/// first prediction is uniform.
#[derive(Debug, Clone)]
pub struct AmrModule {
    pub w_r: Tensor,
    pub w_s: Tensor,
    pub aux_weight: Tensor,
    pub aux_bias: Tensor,
}

/// Tape handles for one module's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BoundAmr {
    pub w_r: Var,
    pub w_s: Var,
    pub aux_weight: Var,
    pub aux_bias: Var,
}

/// Pooled features and auxiliary prediction from [`AmrModule::pool_and_classify`].
pub struct PooledPrediction {
    pub z_r: Var,
    pub z_s: Var,
    pub z_mul: Var,
    pub y_star: Var,
}

impl AmrModule {
    /// `r_shape` / `s_shape` are the bound feature shapes without the batch
    /// axis (channels first).
    pub fn new(r_shape: &[usize], s_shape: &[usize], num_classes: usize) -> Self {
        let mut wr_shape = vec![1];
        wr_shape.extend_from_slice(r_shape);
        let mut ws_shape = vec![1];
        ws_shape.extend_from_slice(s_shape);
        let channels = r_shape[0] + s_shape[0];
        AmrModule {
            w_r: Tensor::filled(wr_shape, 1.0),
            w_s: Tensor::filled(ws_shape, 1.0),
            aux_weight: Tensor::zeros(vec![channels, num_classes]),
            aux_bias: Tensor::zeros(vec![1, num_classes]),
        }
    }

    /// Arithmetic means of the two weight matrices: `(mean W_R, mean W_s)`.
    pub fn mean_weights(&self) -> (f64, f64) {
        (self.w_r.mean(), self.w_s.mean())
    }

    /// Mean weight per channel for each modality, for distribution reports.
    pub fn channel_means(&self) -> (Vec<f64>, Vec<f64>) {
        let per_channel = |t: &Tensor| {
            let channels = t.shape()[1];
            let per = t.numel() / channels;
            (0..channels)
                .map(|c| t.data()[c * per..(c + 1) * per].iter().sum::<f64>() / per as f64)
                .collect()
        };
        (per_channel(&self.w_r), per_channel(&self.w_s))
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundAmr {
        BoundAmr {
            w_r: tape.leaf(&self.w_r, trainable),
            w_s: tape.leaf(&self.w_s, trainable),
            aux_weight: tape.leaf(&self.aux_weight, trainable),
            aux_bias: tape.leaf(&self.aux_bias, trainable),
        }
    }

    /// Multiplies both feature tensors by the batch-replicated weight
    /// matrices. Shapes must match the bound shapes exactly.
    pub fn reweight(
        tape: &mut Tape,
        bound: &BoundAmr,
        x_r: Var,
        x_s: Var,
    ) -> Result<(Var, Var), TensorError> {
        let rs = tape.shape(x_r).to_vec();
        let ss = tape.shape(x_s).to_vec();
        let wr = tape.broadcast(bound.w_r, &rs)?;
        let ws = tape.broadcast(bound.w_s, &ss)?;
        let out_r = tape.elementwise_mul(x_r, wr)?;
        let out_s = tape.elementwise_mul(x_s, ws)?;
        Ok((out_r, out_s))
    }

    /// Pools each modality over all non-channel axes, concatenates along the
    /// channel axis, and applies the auxiliary head.
    pub fn pool_and_classify(
        tape: &mut Tape,
        bound: &BoundAmr,
        x_r: Var,
        x_s: Var,
    ) -> Result<PooledPrediction, TensorError> {
        let z_r = global_pool(tape, x_r)?;
        let z_s = global_pool(tape, x_s)?;
        let z_mul = tape.concat_along_axis(&[z_r, z_s], 1)?;
        let lin = tape.matmul(z_mul, bound.aux_weight)?;
        let batch = tape.shape(lin)[0];
        let cols = tape.shape(lin)[1];
        let bias = tape.broadcast(bound.aux_bias, &[batch, cols])?;
        let y_star = tape.add(lin, bias)?;
        Ok(PooledPrediction {
            z_r,
            z_s,
            z_mul,
            y_star,
        })
    }
}

/// Mean over every axis after batch and channel: `[B,C,...] -> [B,C]`.
pub(crate) fn global_pool(tape: &mut Tape, x: Var) -> Result<Var, TensorError> {
    let rank = tape.shape(x).len();
    let axes: Vec<usize> = (2..rank).collect();
    tape.mean_over_axes(x, &axes)
}
