//! Membrane current and gating kinetics.
//!
//! The gated family has `I(v, g) = Σ_j H_j(g_j) (v − v_r,j)` with affine
//! conductances clamped positive and gating `g_j' = F_j(v) − α_j g_j`,
//! `F_j` a clamped sigmoid with values in `[0, α_j]`. Gating is then
//! confined to `[0, 1]`.
//!
//! The Hodgkin–Huxley preset uses the classical squid-axon rates (voltage in
//! mV above rest, time in ms). Its conductances are products of gates and its
//! decay rates depend on `v`, so it lies outside the gated family; it shares
//! the interface and the exponential gating step with `α` frozen per step.

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::Expr;
use crate::quad::{composite_gauss, gauss_legendre};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MembraneError {
    #[error("gating component {index} = {value} outside [0, 1]")]
    GatingOutOfRange { index: usize, value: f64 },
    #[error("invalid membrane parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("closed-form gating needs voltage-independent decay rates")]
    VoltageDependentDecay,
}

/// One channel of the gated family.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// `H(g) = max(h0 + h1 g, h_min)`.
    pub h0: f64,
    pub h1: f64,
    pub h_min: f64,
    pub v_r: f64,
    /// `F(v) = α clamp(f_lo + (f_hi − f_lo) / (1 + exp(−(v − v_half)/slope)), 0, 1)`.
    pub f_lo: f64,
    pub f_hi: f64,
    pub v_half: f64,
    pub slope: f64,
    pub alpha: f64,
}

impl Gate {
    pub fn conductance(&self, g: f64) -> f64 {
        (self.h0 + self.h1 * g).max(self.h_min)
    }

    pub fn drive(&self, v: f64) -> f64 {
        let s = 1.0 / (1.0 + (-(v - self.v_half) / self.slope).exp());
        self.alpha * (self.f_lo + (self.f_hi - self.f_lo) * s).clamp(0.0, 1.0)
    }

    /// Gate with a constant conductance and no dynamics.
    pub fn fixed(h: f64, v_r: f64) -> Self {
        Gate { h0: h, h1: 0.0, h_min: h, v_r, f_lo: 0.0, f_hi: 0.0, v_half: 0.0, slope: 1.0, alpha: 1.0 }
    }
}

/// Classical squid-axon parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HhParams {
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub e_na: f64,
    pub e_k: f64,
    pub e_l: f64,
}

impl Default for HhParams {
    fn default() -> Self {
        HhParams { g_na: 120.0, g_k: 36.0, g_l: 0.3, e_na: 115.0, e_k: -12.0, e_l: 10.613 }
    }
}

/// `x / (exp(x) − 1)` with its limit at 0.
fn exprel_inv(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

impl HhParams {
    /// `(a, b)` opening and closing rates of gates `m, h, n`.
    pub fn rates(&self, v: f64) -> [(f64, f64); 3] {
        let am = exprel_inv((25.0 - v) / 10.0);
        let bm = 4.0 * (-v / 18.0).exp();
        let ah = 0.07 * (-v / 20.0).exp();
        let bh = 1.0 / (((30.0 - v) / 10.0).exp() + 1.0);
        let an = 0.1 * exprel_inv((10.0 - v) / 10.0);
        let bn = 0.125 * (-v / 80.0).exp();
        [(am, bm), (ah, bh), (an, bn)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kinetics {
    Gated(Vec<Gate>),
    HodgkinHuxley(HhParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembraneModel {
    pub kinetics: Kinetics,
    pub c_m: f64,
    /// Initial gating per component as a function of `x1`; `None` means the
    /// resting fixed point `F(0)/α`.
    pub g0: Option<Vec<Expr>>,
}

impl MembraneModel {
    /// One-gate model `H(g) = h0 + h1 g` used for the acceptance runs.
    pub fn linear_gate(gate: Gate, c_m: f64) -> Self {
        MembraneModel { kinetics: Kinetics::Gated(vec![gate]), c_m, g0: None }
    }

    /// `I = β v` with frozen gating.
    pub fn passive(beta: f64, c_m: f64) -> Self {
        Self::linear_gate(Gate::fixed(beta, 0.0), c_m)
    }

    /// Bistable one-gate model: a slow leak toward `v_r = 1` opened by a
    /// sigmoid gate with threshold `0.3`.
    pub fn excitable() -> Self {
        let gate = Gate { h0: 0.01, h1: 5.0, h_min: 0.01, v_r: 1.0, f_lo: 0.0, f_hi: 1.0, v_half: 0.3, slope: 0.03, alpha: 5.0 };
        Self::linear_gate(gate, 1.0)
    }

    pub fn hodgkin_huxley() -> Self {
        MembraneModel { kinetics: Kinetics::HodgkinHuxley(HhParams::default()), c_m: 1.0, g0: None }
    }

    /// Number of gating components.
    pub fn m(&self) -> usize {
        match &self.kinetics {
            Kinetics::Gated(g) => g.len(),
            Kinetics::HodgkinHuxley(_) => 3,
        }
    }

    pub fn validate(&self) -> Result<(), MembraneError> {
        if !(self.c_m > 0.0) {
            return Err(MembraneError::InvalidParameter("c_m must be positive"));
        }
        if let Kinetics::Gated(gates) = &self.kinetics {
            if gates.is_empty() {
                return Err(MembraneError::InvalidParameter("at least one gate"));
            }
            for g in gates {
                if !(g.h_min >= 0.0) {
                    return Err(MembraneError::InvalidParameter("h_min must be nonnegative"));
                }
                if !(g.alpha > 0.0) {
                    return Err(MembraneError::InvalidParameter("alpha must be positive"));
                }
                if !(g.slope > 0.0) {
                    return Err(MembraneError::InvalidParameter("slope must be positive"));
                }
            }
        }
        if let Some(p) = &self.g0 {
            if p.len() != self.m() {
                return Err(MembraneError::InvalidParameter("one initial gating profile per component"));
            }
        }
        Ok(())
    }

    /// Initial gating at `x`, checked to lie in `[0, 1]`.
    pub fn initial_gating(&self, x: f64) -> Result<Vec<f64>, MembraneError> {
        let g = match &self.g0 {
            Some(p) => p.iter().map(|e| e.eval(x)).collect(),
            None => self.equilibrium(0.0),
        };
        check_range(&g)?;
        Ok(g)
    }

    /// `I = G(g) v − S(g)`.
    pub fn split(&self, g: &[f64]) -> (f64, f64) {
        match &self.kinetics {
            Kinetics::Gated(gates) => gates.iter().zip(g).fold((0.0, 0.0), |(c, s), (gate, &gj)| {
                let h = gate.conductance(gj);
                (c + h, s + h * gate.v_r)
            }),
            Kinetics::HodgkinHuxley(p) => {
                let na = p.g_na * g[0].powi(3) * g[1];
                let k = p.g_k * g[2].powi(4);
                (na + k + p.g_l, na * p.e_na + k * p.e_k + p.g_l * p.e_l)
            }
        }
    }

    pub fn i_ion(&self, v: f64, g: &[f64]) -> Result<f64, MembraneError> {
        check_range(g)?;
        let (c, s) = self.split(g);
        Ok(c * v - s)
    }

    /// `(F_j(v), α_j(v))` per component.
    pub fn rates(&self, v: f64) -> Vec<(f64, f64)> {
        match &self.kinetics {
            Kinetics::Gated(gates) => gates.iter().map(|g| (g.drive(v), g.alpha)).collect(),
            Kinetics::HodgkinHuxley(p) => p.rates(v).iter().map(|&(a, b)| (a, a + b)).collect(),
        }
    }

    /// `F(v) − α g`.
    pub fn hh_rhs(&self, v: f64, g: &[f64]) -> Vec<f64> {
        self.rates(v).iter().zip(g).map(|(&(f, a), &gj)| f - a * gj).collect()
    }

    pub fn equilibrium(&self, v: f64) -> Vec<f64> {
        self.rates(v).iter().map(|&(f, a)| f / a).collect()
    }

    /// Exact gating update over `dt` with the drive frozen at `v`.
    pub fn exp_step(&self, g: &mut [f64], v: f64, dt: f64) {
        for (gj, (f, a)) in g.iter_mut().zip(self.rates(v)) {
            let e = (-a * dt).exp();
            *gj = e * *gj + (1.0 - e) * (f / a);
        }
    }

    /// `(L1, L2)`: Lipschitz constants of the conductances in `g` and of the
    /// drive in `v` (gated family only).
    pub fn lipschitz(&self) -> Option<(f64, f64)> {
        let Kinetics::Gated(gates) = &self.kinetics else { return None };
        let l1 = gates.iter().map(|g| g.h1.abs()).fold(0.0, f64::max);
        let l2 = gates.iter().map(|g| g.alpha * (g.f_hi - g.f_lo).abs() / (4.0 * g.slope)).fold(0.0, f64::max);
        Some((l1, l2))
    }

    fn decay_rates(&self) -> Result<Vec<f64>, MembraneError> {
        match &self.kinetics {
            Kinetics::Gated(gates) => Ok(gates.iter().map(|g| g.alpha).collect()),
            Kinetics::HodgkinHuxley(_) => Err(MembraneError::VoltageDependentDecay),
        }
    }
}

fn check_range(g: &[f64]) -> Result<(), MembraneError> {
    for (index, &value) in g.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(MembraneError::GatingOutOfRange { index, value });
        }
    }
    Ok(())
}

/// `g(t) = e^{−αt}(G0 + ∫_0^t F(v(τ)) e^{ατ} dτ)`, integrated with composite
/// Gauss–Legendre on `panels` intervals.
pub fn gating_closed_form(model: &MembraneModel, g0: &[f64], v: &dyn Fn(f64) -> f64, t: f64, panels: usize) -> Result<Vec<f64>, MembraneError> {
    let alphas = model.decay_rates()?;
    let rule = gauss_legendre(8);
    Ok((0..g0.len())
        .map(|j| {
            let a = alphas[j];
            // e^{−α(t−τ)} keeps the integrand bounded
            let integral = composite_gauss(&|tau: f64| model.rates(v(tau))[j].0 * (-a * (t - tau)).exp(), 0.0, t, panels.max(1), &rule);
            (-a * t).exp() * g0[j] + integral
        })
        .collect())
}

/// Same formula with `v` known only at `times`, trapezoidal in time; second
/// order in the largest step.
pub fn gating_from_samples(model: &MembraneModel, g0: &[f64], times: &[f64], v: &[f64]) -> Result<Vec<f64>, MembraneError> {
    let alphas = model.decay_rates()?;
    let t = *times.last().unwrap_or(&0.0);
    let f: Vec<Vec<(f64, f64)>> = v.iter().map(|&vk| model.rates(vk)).collect();
    Ok((0..g0.len())
        .map(|j| {
            let a = alphas[j];
            let mut integral = 0.0;
            for k in 1..times.len() {
                let w0 = f[k - 1][j].0 * (-a * (t - times[k - 1])).exp();
                let w1 = f[k][j].0 * (-a * (t - times[k])).exp();
                integral += 0.5 * (times[k] - times[k - 1]) * (w0 + w1);
            }
            (-a * t).exp() * g0[j] + integral
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn current_is_affine_in_v() {
        let m = MembraneModel::excitable();
        let g = [0.3];
        let i = |v: f64| m.i_ion(v, &g).unwrap();
        let d2 = i(0.7) - 2.0 * i(0.2) + i(-0.3);
        assert!(d2.abs() < 1e-13);
    }

    #[test]
    fn direct_evaluation() {
        let m = MembraneModel::linear_gate(Gate::fixed(2.0, 0.0), 1.0);
        assert_eq!(m.i_ion(3.0, &[0.5]).unwrap(), 6.0);
        let m = MembraneModel::linear_gate(Gate::fixed(2.0, 0.4), 1.0);
        assert_eq!(m.i_ion(0.4, &[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_gating_rejected() {
        let m = MembraneModel::excitable();
        assert!(matches!(m.i_ion(0.0, &[1.5]), Err(MembraneError::GatingOutOfRange { index: 0, .. })));
    }

    #[test]
    fn hh_rates_are_smooth_at_removable_points() {
        let p = HhParams::default();
        let a = p.rates(25.0)[0].0;
        let b = p.rates(25.0 + 1e-6)[0].0;
        assert!((a - 1.0).abs() < 1e-12 && (a - b).abs() < 1e-6);
    }

    #[test]
    fn hh_rest_is_nearly_current_free() {
        let m = MembraneModel::hodgkin_huxley();
        let g = m.equilibrium(0.0);
        // the textbook E_L leaves about -4e-3 at rest
        assert!(m.i_ion(0.0, &g).unwrap().abs() < 1e-2);
    }
}
