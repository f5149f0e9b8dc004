//! Layer-local surrogate-gradient learning and injection of an external
//! error signal at a pooled layer.
//!
//! The reset path `R` is treated as a constant when differentiating, and the
//! spike nonlinearity uses the fast-sigmoid surrogate
//! `σ'(x) = 1 / (slope·|x| + 1)²` with `x = U − θ`.

use nalgebra::DMatrix;

use super::{LayerRecord, LifLayer, LifNetwork, Pooling, Records};
use crate::error::{check_len, Error, Result};

pub fn surrogate_derivative(u_minus_theta: f64, slope: f64) -> f64 {
    let d = slope * u_minus_theta.abs() + 1.0;
    1.0 / (d * d)
}

/// `∂L/∂W = (σ'(U−θ) ⊙ ∂L/∂S) · Pᵀ` for one layer.
pub fn weight_gradient(layer: &LifLayer, record: &LayerRecord, dl_ds: &DMatrix<f64>) -> DMatrix<f64> {
    let lp = layer.params();
    let delta = record
        .membrane
        .zip_map(dl_ds, |u, g| g * surrogate_derivative(u - lp.theta, lp.surrogate_slope));
    delta * record.traces.transpose()
}

/// Squared error between the time-averaged readout and `target`, and the
/// surrogate gradient of that loss with respect to the layer weights.
pub fn layer_local_gradient(
    layer: &LifLayer,
    record: &LayerRecord,
    target: &[f64],
) -> Result<(f64, DMatrix<f64>)> {
    check_len(layer.readout().nrows(), target.len(), "readout target")?;
    let steps = record.steps();
    if steps == 0 {
        return Err(Error::InvalidArgument("record has no time steps".into()));
    }
    check_len(layer.neurons(), record.spikes.nrows(), "layer record")?;
    let err: Vec<f64> = record
        .mean_readout()
        .iter()
        .zip(target)
        .map(|(y, t)| y - t)
        .collect();
    let loss = err.iter().map(|e| e * e).sum();
    let scale = 2.0 / steps as f64;
    let g: Vec<f64> = (0..layer.neurons())
        .map(|i| {
            let mask = record.dropout.as_ref().map_or(1.0, |m| m[i]);
            let col: f64 = layer
                .readout()
                .column(i)
                .iter()
                .zip(&err)
                .map(|(w, e)| w * e)
                .sum();
            scale * mask * col
        })
        .collect();
    let dl_ds = DMatrix::from_fn(layer.neurons(), steps, |i, _| g[i]);
    Ok((loss, weight_gradient(layer, record, &dl_ds)))
}

/// One gradient-descent step on the layer's local readout loss. Returns the
/// loss before the update. The readout matrix is never modified.
pub fn local_update(
    layer: &mut LifLayer,
    target: &[f64],
    record: &LayerRecord,
    learning_rate: f64,
) -> Result<f64> {
    let (loss, grad) = layer_local_gradient(layer, record, target)?;
    if learning_rate != 0.0 {
        *layer.weights_mut() -= grad * learning_rate;
    }
    Ok(loss)
}

/// Weight gradients for layers `1..=depth` when `grad_f` is the loss
/// gradient with respect to the pooled activity of layer `depth`.
///
/// Layer `depth` receives the chain rule through the pooling. Lower layers
/// receive the error carried back through the transposed weights and the
/// adjoint of the two input filters, one layer at a time, using only the
/// records each layer produced for the sample.
pub fn injected_gradients(
    network: &LifNetwork,
    depth: usize,
    grad_f: &[f64],
    records: &Records,
    pooling: Pooling,
) -> Result<Vec<DMatrix<f64>>> {
    if depth == 0 || depth > network.depth() || depth > records.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "injection depth {depth} outside 1..={}",
            network.depth().min(records.layers.len())
        )));
    }
    let top = network.layer(depth - 1);
    check_len(top.neurons(), grad_f.len(), "feature gradient")?;
    let steps = records.layers[depth - 1].steps();
    if steps == 0 {
        return Err(Error::InvalidArgument("record has no time steps".into()));
    }
    let inv_t = 1.0 / steps as f64;
    let lp = *network.params();

    let mut grads = vec![DMatrix::zeros(0, 0); depth];
    // Error with respect to the membrane of the current layer.
    let top_rec = &records.layers[depth - 1];
    let mut delta = match pooling {
        Pooling::MeanRate => top_rec.membrane.map_with_location(|i, _, u| {
            grad_f[i] * inv_t * surrogate_derivative(u - lp.theta, lp.surrogate_slope)
        }),
        Pooling::MeanReadoutPotential => {
            DMatrix::from_fn(top.neurons(), steps, |i, _| grad_f[i] * inv_t)
        }
    };
    for l in (0..depth).rev() {
        let layer = network.layer(l);
        let rec = &records.layers[l];
        grads[l] = &delta * rec.traces.transpose();
        if l == 0 {
            break;
        }
        // ∂L/∂P = Wᵀ·δ, then the adjoint of Q ← α_syn·Q + x, P ← α_mem·P + Q.
        let dl_dp = layer.weights().tr_mul(&delta);
        let inputs = layer.inputs();
        let mut dl_dx = DMatrix::zeros(inputs, steps);
        for j in 0..inputs {
            let (mut lam_p, mut lam_q) = (0.0, 0.0);
            for t in (0..steps).rev() {
                lam_p = dl_dp[(j, t)] + lp.alpha_mem * lam_p;
                lam_q = lam_p + lp.alpha_syn * lam_q;
                dl_dx[(j, t)] = lam_q;
            }
        }
        let below = &records.layers[l - 1];
        delta = below.membrane.zip_map(&dl_dx, |u, g| {
            g * surrogate_derivative(u - lp.theta, lp.surrogate_slope)
        });
    }
    Ok(grads)
}

/// Applies [`injected_gradients`] with step size `learning_rate`. Layers
/// above `depth` are untouched.
pub fn inject_feature_gradient(
    network: &mut LifNetwork,
    depth: usize,
    grad_f: &[f64],
    records: &Records,
    pooling: Pooling,
    learning_rate: f64,
) -> Result<()> {
    let grads = injected_gradients(network, depth, grad_f, records, pooling)?;
    if learning_rate == 0.0 {
        return Ok(());
    }
    for (l, g) in grads.iter().enumerate() {
        *network.layer_mut(l).weights_mut() -= g * learning_rate;
    }
    Ok(())
}
