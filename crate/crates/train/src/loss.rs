//! Regression losses of the three training stages.

use avgflow_core::{avg_flow_target, Coords, ConformerEnsemble, FlowQuery, MetricSpec};

use crate::error::Result;
use crate::features::GraphFeatures;
use crate::model::VectorFieldNet;

/// Loss value and, for network predictions, its parameter gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// What produces the predicted velocity.
#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    Net(&'a VectorFieldNet),
    /// The exact target itself; the loss must then vanish. No gradient.
    Oracle,
}

/// `(1/N) Σ_i ‖v_i - target_i‖²` and `∂/∂v`.
pub fn field_regression(v: &Coords<f64>, target: &Coords<f64>) -> (f64, Coords<f64>) {
    let n = v.len().max(1) as f64;
    let diff = v - target;
    (diff.norm_sq() / n, diff.scale(2.0 / n))
}

/// Regression of the network output at `(x, t)` onto `target`. Adds the
/// parameter gradient into `grad` when given.
pub fn regression_loss(
    net: &VectorFieldNet,
    feats: &GraphFeatures,
    x: &Coords<f64>,
    t: f64,
    target: &Coords<f64>,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    match grad {
        None => Ok(field_regression(&net.forward(feats, x, t)?, target).0),
        Some(g) => {
            let (v, cache) = net.forward_cached(feats, x, t)?;
            let (loss, dv) = field_regression(&v, target);
            net.backward(&cache, &dv, g);
            Ok(loss)
        }
    }
}

/// Averaged-flow objective at one query point. The target does not depend
/// on the parameters.
pub fn avgflow_loss(
    predictor: Predictor<'_>,
    feats: &GraphFeatures,
    ensemble: &ConformerEnsemble<f64>,
    metric: &MetricSpec<f64>,
    t: f64,
    x_t: &Coords<f64>,
) -> Result<LossOutput> {
    let u = avg_flow_target(&FlowQuery::new(t, x_t.clone())?, ensemble, metric)?;
    match predictor {
        Predictor::Oracle => Ok(LossOutput {
            loss: field_regression(&u, &u).0,
            grad: Vec::new(),
        }),
        Predictor::Net(net) => {
            let mut grad = vec![0.0; net.params.len()];
            let loss = regression_loss(net, feats, x_t, t, &u, Some(&mut grad))?;
            Ok(LossOutput { loss, grad })
        }
    }
}

/// Point `(1 - t) x0 + t x1` on the chord and its velocity `x1 - x0`.
pub fn chord_point(x0: &Coords<f64>, x1: &Coords<f64>, t: f64) -> (Coords<f64>, Coords<f64>) {
    (x0.lincomb(1.0 - t, x1, t), x1 - x0)
}

/// Rectified-flow objective on the chord between a coupled pair.
pub fn reflow_loss(
    net: &VectorFieldNet,
    feats: &GraphFeatures,
    x0: &Coords<f64>,
    x1: &Coords<f64>,
    t: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let (x_t, target) = chord_point(x0, x1, t);
    regression_loss(net, feats, &x_t, t, &target, grad)
}

/// One-step distillation objective: the reflow loss at `t = 0`.
pub fn distill_loss(
    net: &VectorFieldNet,
    feats: &GraphFeatures,
    x0: &Coords<f64>,
    x1: &Coords<f64>,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    reflow_loss(net, feats, x0, x1, 0.0, grad)
}
