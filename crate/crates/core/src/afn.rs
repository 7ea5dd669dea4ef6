//! Gated fusion of 2D attention with 3D-constrained attention.
//!
//! Per layer `l` and location `p`:
//!
//! ```text
//! G(p)     = σ(w₀·a2d(p) + w₁·a3d(p) + α·(1 − t/T))
//! fused(p) = G(p)·a3d(p) + (1 − G(p))·a2d(p)
//! ```
//!
//! The gate weights are trained against
//! `J(w) = Σ_p u(p)·fused(p) + λ3D · KL(q₃D ∥ p_fused)` where `u` is the
//! upstream derivative of the (λ2D-scaled) editing loss with respect to the
//! fused map, and the KL term pulls the fused distribution toward the
//! 3D-constrained one.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::maps::ScalarMap;
use crate::math;
use crate::{Error, Result};

/// Floor added to every cell before turning a map into a distribution.
pub const KL_FLOOR: f64 = 1e-8;
/// Gate values are kept this far from 0 and 1.
pub const GATE_MARGIN: f64 = 1e-15;

/// `α·(1 − t/T)`.
pub fn dynamic_bias(bias_alpha: f64, t: u32, total: u32) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("total iterations must be at least 1"));
    }
    if t > total {
        return Err(Error::invalid(format!("iteration {t} beyond total {total}")));
    }
    Ok(bias_alpha * (1.0 - t as f64 / total as f64))
}

#[inline]
fn gate_value(w: &[f64; 2], a2d: f64, a3d: f64, bias: f64) -> f64 {
    math::sigmoid(w[0] * a2d + w[1] * a3d + bias).clamp(GATE_MARGIN, 1.0 - GATE_MARGIN)
}

#[inline]
fn fuse_value(g: f64, a2d: f64, a3d: f64) -> f64 {
    let v = a2d + g * (a3d - a2d);
    v.clamp(a2d.min(a3d), a2d.max(a3d))
}

fn check_pair(a2d: &ScalarMap, a3d: &ScalarMap) -> Result<()> {
    if !a2d.same_shape(a3d) || a2d.values.len() != a3d.values.len() {
        return Err(Error::invalid(format!(
            "attention shapes differ: {}x{} vs {}x{}",
            a2d.width, a2d.height, a3d.width, a3d.height
        )));
    }
    Ok(())
}

/// Per-location gate map.
pub fn gate(w: &[f64; 2], a2d: &ScalarMap, a3d: &ScalarMap, bias: f64) -> Result<ScalarMap> {
    check_pair(a2d, a3d)?;
    let values = a2d.values.iter().zip(&a3d.values).map(|(x, y)| gate_value(w, *x, *y, bias)).collect();
    Ok(ScalarMap { width: a2d.width, height: a2d.height, values })
}

/// Pointwise convex combination, `G` weighting the 3D map.
pub fn fuse(g: &ScalarMap, a2d: &ScalarMap, a3d: &ScalarMap) -> Result<ScalarMap> {
    check_pair(a2d, a3d)?;
    check_pair(g, a2d)?;
    let values = g
        .values
        .iter()
        .zip(a2d.values.iter().zip(&a3d.values))
        .map(|(g, (x, y))| fuse_value(*g, *x, *y))
        .collect();
    Ok(ScalarMap { width: a2d.width, height: a2d.height, values })
}

fn distribution(map: &ScalarMap, what: &str) -> Result<(Vec<f64>, f64)> {
    if map.values.is_empty() {
        return Err(Error::invalid(format!("{what} attention map is empty")));
    }
    if let Some(i) = map.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!("{what} attention cell {i} is {}", map.values[i])));
    }
    let floored: Vec<f64> = map.values.iter().map(|v| v + KL_FLOOR).collect();
    let sum: f64 = floored.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::invalid(format!("{what} attention map has no usable mass")));
    }
    Ok((floored, sum))
}

/// `KL(q ∥ p)` with `q` the normalized 3D map and `p` the normalized 2D map.
pub fn kl_attention(a3d: &ScalarMap, a2d: &ScalarMap) -> Result<f64> {
    check_pair(a2d, a3d)?;
    let (q, sq) = distribution(a3d, "3D")?;
    let (p, sp) = distribution(a2d, "2D")?;
    let mut kl = 0.0;
    for (qi, pi) in q.iter().zip(&p) {
        let qn = qi / sq;
        let pn = pi / sp;
        kl += qn * (math::ln(qn) - math::ln(pn));
    }
    Ok(kl)
}

/// `∂KL(q ∥ p)/∂a2d` for the same flooring and normalization as
/// [`kl_attention`]: `1/S_p − q(k)/(a2d(k) + ε)`.
fn kl_gradient_wrt_second(a3d: &ScalarMap, a2d: &ScalarMap) -> Result<Vec<f64>> {
    let (q, sq) = distribution(a3d, "3D")?;
    let (p, sp) = distribution(a2d, "2D")?;
    Ok(q.iter().zip(&p).map(|(qi, pi)| 1.0 / sp - (qi / sq) / pi).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGate {
    pub layer: u32,
    pub w: [f64; 2],
}

/// Gate weights and schedule state. Serializes as the checkpoint JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    pub layers: Vec<LayerGate>,
    pub bias_alpha: f64,
    pub t: u32,
    #[serde(rename = "T")]
    pub total: u32,
    pub lambda_2d: f64,
    pub lambda_3d: f64,
}

impl FusionState {
    /// Gate weights start at zero, so the initial gate is `σ(α)`.
    pub fn new(layers: &[u32], bias_alpha: f64, total: u32, lambda_2d: f64, lambda_3d: f64) -> Result<Self> {
        let state = FusionState {
            layers: layers.iter().map(|&layer| LayerGate { layer, w: [0.0, 0.0] }).collect(),
            bias_alpha,
            t: 0,
            total,
            lambda_2d,
            lambda_3d,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total < 1 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if self.t > self.total {
            return Err(Error::invalid(format!("t = {} exceeds T = {}", self.t, self.total)));
        }
        if !(self.lambda_2d >= 0.0 && self.lambda_3d >= 0.0) {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if !(self.bias_alpha >= 0.0 && self.bias_alpha.is_finite()) {
            return Err(Error::invalid("bias_alpha must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn bias(&self) -> Result<f64> {
        dynamic_bias(self.bias_alpha, self.t, self.total)
    }

    pub fn weights(&self, layer: u32) -> Result<[f64; 2]> {
        self.layer_index(layer).map(|i| self.layers[i].w)
    }

    fn layer_index(&self, layer: u32) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.layer == layer)
            .ok_or_else(|| Error::invalid(format!("no gate for layer {layer}")))
    }
}

/// One view's maps for a gate update.
#[derive(Debug, Clone, Copy)]
pub struct GateSample<'a> {
    pub a2d: &'a ScalarMap,
    pub a3d: &'a ScalarMap,
    /// `∂L_edit/∂fused`, already scaled by λ2D.
    pub upstream: &'a ScalarMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateStepReport {
    /// `Σ u·fused` before the step.
    pub edit_part: f64,
    /// `λ3D·Σ KL(a3d ∥ fused)` before the step.
    pub kl_part: f64,
    pub gradient: [f64; 2],
    pub w_before: [f64; 2],
    pub w_after: [f64; 2],
}

/// Objective and analytic gradient of the gate weights for one layer.
pub fn gate_objective(
    w: &[f64; 2],
    bias: f64,
    lambda_3d: f64,
    samples: &[GateSample<'_>],
) -> Result<(f64, f64, [f64; 2])> {
    let mut edit_part = 0.0;
    let mut kl_part = 0.0;
    let mut grad = [0.0; 2];
    for s in samples {
        check_pair(s.a2d, s.a3d)?;
        check_pair(s.upstream, s.a2d)?;
        let g = gate(w, s.a2d, s.a3d, bias)?;
        let fused = fuse(&g, s.a2d, s.a3d)?;
        let kl_grad = if lambda_3d > 0.0 {
            kl_part += lambda_3d * kl_attention(s.a3d, &fused)?;
            Some(kl_gradient_wrt_second(s.a3d, &fused)?)
        } else {
            None
        };
        for p in 0..fused.values.len() {
            let (x, y, gp) = (s.a2d.values[p], s.a3d.values[p], g.values[p]);
            edit_part += s.upstream.values[p] * fused.values[p];
            let mut d_fused = s.upstream.values[p];
            if let Some(k) = &kl_grad {
                d_fused += lambda_3d * k[p];
            }
            // fused = x + G·(y − x);  G = σ(w₀x + w₁y + b).
            let d_z = d_fused * (y - x) * gp * (1.0 - gp);
            grad[0] += d_z * x;
            grad[1] += d_z * y;
        }
    }
    Ok((edit_part, kl_part, grad))
}

/// One gradient-descent step on a layer's gate weights.
pub fn gate_step(state: &mut FusionState, layer: u32, samples: &[GateSample<'_>], lr: f64) -> Result<GateStepReport> {
    let idx = state.layer_index(layer)?;
    let bias = state.bias()?;
    let w_before = state.layers[idx].w;
    let (edit_part, kl_part, gradient) = gate_objective(&w_before, bias, state.lambda_3d, samples)?;
    if !gradient.iter().all(|g| g.is_finite()) || !edit_part.is_finite() || !kl_part.is_finite() {
        return Err(Error::Numerical {
            layer,
            detail: format!("gradient {gradient:?}, edit {edit_part}, kl {kl_part}"),
        });
    }
    let w_after = [w_before[0] - lr * gradient[0], w_before[1] - lr * gradient[1]];
    state.layers[idx].w = w_after;
    Ok(GateStepReport { edit_part, kl_part, gradient, w_before, w_after })
}
